"""Single-head autoregressive attention with optional log-n logit scaling."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .numeric import as_matrix, as_vector, child_seeds, seeded_gaussian_matrix, softmax


@dataclass(frozen=True)
class AttentionModel:
    """Fixed projection weights for one attention head.

    Projections use the row-vector convention: ``q = x @ w_q``.
    """

    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    logn_enabled: bool = False
    logn_base: int = 512

    def __post_init__(self):
        d = np.shape(self.w_q)[0] if np.ndim(self.w_q) == 2 else 0
        if d < 1:
            raise ValueError("weights must be d x d with d >= 1")
        for name in ("w_q", "w_k", "w_v"):
            m = as_matrix(getattr(self, name), name)
            if m.shape != (d, d):
                raise ValueError(f"{name} has shape {m.shape}, expected ({d}, {d})")
            m.setflags(write=False)
            object.__setattr__(self, name, m)
        if self.logn_base < 2:
            raise ValueError("logn_base must be >= 2")

    @property
    def d(self) -> int:
        return self.w_q.shape[0]

    @classmethod
    def seeded(cls, d: int, seed: int, logn_enabled: bool = False, logn_base: int = 512):
        """Gaussian weights with std 1/sqrt(d), one derived seed per matrix."""
        sq, sk, sv = child_seeds(seed, 3)
        std = 1.0 / math.sqrt(d)
        return cls(
            seeded_gaussian_matrix(sq, d, d, std),
            seeded_gaussian_matrix(sk, d, d, std),
            seeded_gaussian_matrix(sv, d, d, std),
            logn_enabled=logn_enabled,
            logn_base=logn_base,
        )

    @classmethod
    def identity(cls, d: int, **kw):
        eye = np.eye(d)
        return cls(eye, eye, eye, **kw)


@dataclass
class StepOutput:
    weights: np.ndarray  # A_t, one probability per cached row
    output: np.ndarray  # O_t


def project_token(model: AttentionModel, x) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    x = as_vector(x, "x")
    if x.shape[0] != model.d:
        raise ValueError(f"embedding has length {x.shape[0]}, model expects {model.d}")
    return x @ model.w_q, x @ model.w_k, x @ model.w_v


def project_stream(model: AttentionModel, xs) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorised ``project_token`` over the rows of ``xs``."""
    xs = as_matrix(xs, "embeddings")
    if xs.shape[1] != model.d:
        raise ValueError(f"embeddings have width {xs.shape[1]}, model expects {model.d}")
    return xs @ model.w_q, xs @ model.w_k, xs @ model.w_v


def attention_scale(model: AttentionModel, n: int) -> float:
    """Logit multiplier for a cache of ``n`` rows: 1/sqrt(d), times log_base(n) if enabled."""
    if n < 1:
        raise ValueError("n must be >= 1")
    base = 1.0 / math.sqrt(model.d)
    if not model.logn_enabled:
        return base
    if n < 2:
        raise ValueError("log-n scaling needs at least 2 cached rows")
    return math.log(n) / math.log(model.logn_base) * base


def decode_step(model: AttentionModel, keys, values, q) -> StepOutput:
    keys = np.asarray(keys, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if keys.ndim != 2 or keys.shape[0] == 0:
        raise ValueError("decode_step needs a non-empty cache")
    if keys.shape != values.shape:
        raise ValueError(f"key/value shapes differ: {keys.shape} vs {values.shape}")
    if keys.shape[1] != np.shape(q)[0]:
        raise ValueError("query and key widths differ")
    a = softmax(keys @ q, attention_scale(model, keys.shape[0]))
    return StepOutput(a, a @ values)


@dataclass
class ScoreTracker:
    """Accumulated attention received per tracked token (raw sums)."""

    scores: np.ndarray = field(default_factory=lambda: np.zeros(0))
    steps_observed: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __len__(self) -> int:
        return len(self.scores)

    def add_token(self, score: float = 0.0) -> None:
        self.scores = np.append(self.scores, float(score))
        self.steps_observed = np.append(self.steps_observed, 0)

    def update(self, a_t) -> None:
        a_t = np.asarray(a_t, dtype=np.float64)
        if a_t.shape != self.scores.shape:
            raise ValueError(f"A_t has length {a_t.size}, tracker holds {len(self)} tokens")
        self.scores = self.scores + a_t
        self.steps_observed = self.steps_observed + 1


def update_scores(tracker: ScoreTracker, a_t) -> ScoreTracker:
    tracker.update(a_t)
    return tracker


def dense_trace(model: AttentionModel, xs) -> tuple[np.ndarray, np.ndarray]:
    """Eviction-free decode of a whole stream.

    Returns ``(outputs, weights)`` where ``weights[t, :t+1]`` is A_t and the
    rest of row ``t`` is zero, so column sums up to row ``t`` give the
    accumulated scores after step ``t``.
    """
    q, k, v = project_stream(model, xs)
    n = q.shape[0]
    outputs = np.empty_like(v)
    weights = np.zeros((n, n))
    for t in range(n):
        step = decode_step(model, k[: t + 1], v[: t + 1], q[t])
        weights[t, : t + 1] = step.weights
        outputs[t] = step.output
    return outputs, weights
