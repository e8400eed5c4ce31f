"""Synthetic token streams, synchronized dense-vs-cached decoding, and error reports."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .attention import AttentionModel, decode_step, project_stream
from .cache import KvEntry, ceil_div
from .errors import InvariantError
from .policies import BUZZ_MODES, EvictionOutcome, Policy, mode_strides

SCHEMA_VERSION = 1
WORKLOAD_KINDS = ("uniform", "middle_spike", "skewed_decay")
CSV_HEADER = ("t", "err_abs", "err_rel", "occupancy")

# per-token embedding noise around the shared context vector
_NOISE = {"uniform": 0.25, "middle_spike": 0.25, "skewed_decay": 0.5}


@dataclass(frozen=True)
class Workload:
    """A seeded embedding stream.

    Every stream is ``context + noise * N(0, I)`` per token, with token 0
    planted as an attention sink. ``middle_spike`` also plants one token whose
    key the average later query favours by a logit of ``spike_strength``;
    ``skewed_decay`` instead boosts every token by a random amount that decays
    with position (earlier tokens matter more).
    """

    kind: str = "uniform"
    N: int = 1024
    d: int = 64
    seed: int = 0
    spike_position: int | None = None
    spike_strength: float = 10.0
    sink_strength: float = 6.0

    def __post_init__(self):
        if self.kind not in WORKLOAD_KINDS:
            raise ValueError(f"unknown workload kind {self.kind!r}")
        if self.N < 2 or self.d < 1:
            raise ValueError("need N >= 2 and d >= 1")
        if self.spike_position is not None and not 1 <= self.spike_position < self.N - 1:
            raise ValueError("spike_position must lie strictly inside the stream")

    @property
    def resolved_spike(self) -> int | None:
        if self.kind != "middle_spike":
            return None
        return self.N // 2 if self.spike_position is None else self.spike_position

    def describe(self) -> dict:
        d = asdict(self)
        d["spike_position"] = self.resolved_spike
        return d


def _shift_logit(x, j, delta, qbar, model):
    """Move embedding ``j`` by the smallest step that raises its logit under ``qbar`` by ``delta``."""
    grad = model.w_k @ qbar / math.sqrt(model.d)
    x[j] = x[j] + delta * grad / (grad @ grad)


def _logit(x, j, qbar, model):
    return float(qbar @ (x[j] @ model.w_k)) / math.sqrt(model.d)


def generate_workload(spec: Workload, model: AttentionModel, sink: int = 0, window: int = 0) -> np.ndarray:
    """Embedding stream of shape (N, d).

    ``sink``/``window`` optionally require the spike to sit outside both,
    i.e. in ``[sink + window, N - window)``.
    """
    if model.d != spec.d:
        raise ValueError(f"workload d={spec.d} differs from model d={model.d}")
    spike = spec.resolved_spike
    if spike is not None and (sink or window) and not sink + window <= spike < spec.N - window:
        raise ValueError(f"spike position {spike} not in [{sink + window}, {spec.N - window})")
    rng = np.random.default_rng(spec.seed)
    context = rng.standard_normal(spec.d)
    x = context + _NOISE[spec.kind] * rng.standard_normal((spec.N, spec.d))
    queries = x @ model.w_q
    if spec.kind == "skewed_decay":
        qbar = queries.mean(axis=0)
        boosts = spec.spike_strength / 4 * rng.exponential(size=spec.N) * np.exp(-4 * np.arange(spec.N) / spec.N)
        for j in range(1, spec.N):
            _shift_logit(x, j, boosts[j], qbar, model)
    if spike is not None:
        qbar = queries[spike + 1 :].mean(axis=0)
        _shift_logit(x, spike, spec.spike_strength - _logit(x, spike, qbar, model), qbar, model)
    if spec.sink_strength:
        qbar = queries[1:].mean(axis=0)
        _shift_logit(x, 0, spec.sink_strength - _logit(x, 0, qbar, model), qbar, model)
    return x


# -- experiment ----------------------------------------------------------------

@dataclass
class ApproxReport:
    config: dict
    policy: dict
    workload: dict
    per_step: list[dict]
    summary: dict
    kept_positions: list[int] = field(default_factory=list)
    evictions: list[EvictionOutcome] = field(default_factory=list)

    @property
    def err_rel(self) -> np.ndarray:
        return np.array([r["err_rel"] for r in self.per_step])

    @property
    def err_abs(self) -> np.ndarray:
        return np.array([r["err_abs"] for r in self.per_step])

    @property
    def occupancy(self) -> np.ndarray:
        return np.array([r["occupancy"] for r in self.per_step])

    def as_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "config": self.config,
            "policy": self.policy,
            "workload": self.workload,
            "per_step": self.per_step,
            "summary": self.summary,
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True, indent=2) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for row in self.per_step:
            writer.writerow([row[c] for c in CSV_HEADER])
        return buf.getvalue()


def positional_coverage(kept_positions, N: int, bins: int = 10) -> list[int]:
    """Count of kept positions in each tenth of a stream of length ``N``."""
    hist = [0] * bins
    for p in kept_positions:
        if not 0 <= p < N:
            raise ValueError(f"position {p} outside stream of length {N}")
        hist[p * bins // N] += 1
    return hist


def prompt_entries(model: AttentionModel, q, k, v, prompt_len: int) -> list[KvEntry]:
    """Prompt tokens with scores accumulated under causal attention inside the prompt."""
    scores = np.zeros(prompt_len)
    if prompt_len:
        scores[0] = 1.0
    for j in range(1, prompt_len):
        scores[: j + 1] += decode_step(model, k[: j + 1], v[: j + 1], q[j]).weights
    return [KvEntry(k[j], v[j], j, float(scores[j]), prompt_len - j) for j in range(prompt_len)]


def run_experiment(
    model: AttentionModel,
    policy: Policy,
    workload: Workload,
    prompt_len: int = 0,
    embeddings: np.ndarray | None = None,
    config: dict | None = None,
) -> ApproxReport:
    """Decode ``workload`` twice, with the full cache and with ``policy``, comparing outputs.

    The first ``prompt_len`` tokens are prefilled without producing outputs;
    every later token is one decode step. Per step the report records
    ``||O_hat - O||_2``, the same divided by ``||O||_2``, and the occupancy of
    the policy cache.
    """
    if model.d != workload.d:
        raise ValueError(f"model d={model.d} differs from workload d={workload.d}")
    if not 0 <= prompt_len < workload.N:
        raise ValueError("prompt_len must be in [0, N)")
    if model.logn_enabled and prompt_len < 1:
        raise ValueError("log-n scaling needs prompt_len >= 1 so every decode sees >= 2 rows")
    x = generate_workload(workload, model) if embeddings is None else np.asarray(embeddings, dtype=np.float64)
    if x.shape != (workload.N, workload.d):
        raise ValueError(f"embeddings have shape {x.shape}, expected ({workload.N}, {workload.d})")
    q, k, v = project_stream(model, x)

    cache = policy.new_cache()
    outcomes: list[EvictionOutcome] = []

    def note(evs, t):
        for e in evs:
            e.step = t
        outcomes.extend(evs)

    if prompt_len:
        note(policy.prefill(cache, prompt_entries(model, q, k, v, prompt_len)), prompt_len - 1)
        note(policy.settle(cache), prompt_len - 1)
    cap = policy.capacity
    per_step = []
    for t in range(prompt_len, workload.N):
        note(policy.admit(cache, k[t], v[t], t), t)
        cache.validate()
        occ = len(cache)
        if cap is not None and occ > cap:
            raise InvariantError(f"occupancy {occ} exceeds policy capacity {cap}")
        step = decode_step(model, cache.keys, cache.values, q[t])
        cache.record_attention(step.weights)
        dense = decode_step(model, k[: t + 1], v[: t + 1], q[t]).output
        err = float(np.linalg.norm(step.output - dense))
        norm = float(np.linalg.norm(dense))
        rel = err / norm if norm > 0 else (0.0 if err == 0 else math.inf)
        per_step.append({"t": t, "err_abs": err, "err_rel": rel, "occupancy": occ})
        note(policy.settle(cache), t)

    kept = cache.positions.tolist()
    occs = np.array([r["occupancy"] for r in per_step], dtype=float)
    full_occ = np.arange(prompt_len, workload.N, dtype=float) + 1
    errs = np.array([r["err_abs"] for r in per_step])
    rels = np.array([r["err_rel"] for r in per_step])
    summary = {
        "steps": len(per_step),
        "mean_err": float(errs.mean()) if errs.size else 0.0,
        "max_err": float(errs.max()) if errs.size else 0.0,
        "mean_rel_err": float(rels.mean()) if rels.size else 0.0,
        "max_rel_err": float(rels.max()) if rels.size else 0.0,
        "mean_occupancy": float(occs.mean()) if occs.size else 0.0,
        "max_occupancy": int(occs.max()) if occs.size else 0,
        "budget_pct": float(100 * occs.mean() / full_occ.mean()) if occs.size else 100.0,
        "decile_hist": positional_coverage(kept, workload.N),
        "comparisons": int(sum(e.comparisons for e in outcomes)),
        "evictions": len(outcomes),
        "kept_count": len(kept),
    }
    resolved = {"prompt_len": prompt_len, "d": model.d, "logn": model.logn_enabled, "logn_base": model.logn_base}
    if config:
        resolved.update(config)
    return ApproxReport(resolved, policy.describe(), workload.describe(), per_step, summary, kept, outcomes)


# -- occupancy-only simulation and budget matching ------------------------------

def simulate_occupancy(policy: Policy, N: int, prompt_len: int = 0) -> np.ndarray:
    """Occupancy at each decode step, from region counts alone.

    Eviction sizes do not depend on scores, so this reproduces the occupancy
    trace of ``run_experiment`` without any attention arithmetic.
    """
    kind = policy.kind
    steps = N - prompt_len
    if kind == "full":
        return np.arange(prompt_len, N) + 1
    if kind in ("local_window", "heavy_hitter_topk"):
        cap = policy.w if kind == "local_window" else policy.budget
        return np.minimum(np.arange(prompt_len, N) + 1, cap)
    if kind == "sink_window":
        return np.minimum(np.arange(prompt_len, N) + 1, policy.k + policy.w)

    cfg = policy.config
    old_stride, new_stride, _ = mode_strides(cfg, kind)
    k, w, T = cfg.k, cfg.w, cfg.T
    sink = window = old = buf = 0

    def add():
        nonlocal sink, window, buf
        if sink < k:
            sink += 1
        elif window < w:
            window += 1
        else:
            buf += 1

    if prompt_len > k + T + w:
        sink, window = k, w
        middle = prompt_len - k - w
        first = True
        while middle > T:
            middle = ceil_div(middle, new_stride if first else old_stride)
            first = False
        old = middle
    else:
        for _ in range(prompt_len):
            add()
    while old + buf >= T:
        old, buf = ceil_div(old, old_stride) + ceil_div(buf, new_stride), 0

    out = np.empty(steps, dtype=np.int64)
    for i in range(steps):
        add()
        out[i] = sink + old + buf + window
        while old + buf >= T:
            old, buf = ceil_div(old, old_stride) + ceil_div(buf, new_stride), 0
    return out


def mean_budget_pct(policy: Policy, N: int, prompt_len: int = 0) -> float:
    occ = simulate_occupancy(policy, N, prompt_len)
    return float(100 * occ.mean() / (np.arange(prompt_len, N) + 1).mean())


def match_budget(kind: str, budget_pct: float, N: int, k: int = 4, s: int = 5, prompt_len: int = 0) -> Policy:
    """Policy of ``kind`` whose mean occupancy is closest to ``budget_pct`` of the full cache.

    BUZZ kinds search w with T = round(w * optimal_ratio(s)); window
    baselines search their window; heavy_hitter_topk searches its budget and
    gives half of it to the recent window.
    """
    from .cache import BuzzConfig

    if not 0 < budget_pct <= 100:
        raise ValueError("budget_pct must be in (0, 100]")
    if kind == "full":
        return Policy.full()

    def make(x):
        if kind in BUZZ_MODES:
            return Policy.buzz(BuzzConfig.from_ratio(x, s=s, k=k), kind)
        if kind == "local_window":
            return Policy.local_window(x)
        if kind == "sink_window":
            return Policy.sink_window(k, x)
        if kind == "heavy_hitter_topk":
            return Policy.heavy_hitter(max(1, x // 2), x)
        raise ValueError(f"unknown policy kind {kind!r}")

    best, best_gap = None, math.inf
    x = 1
    while x <= N:
        try:
            p = make(x)
        except ValueError:
            x += 1
            continue
        pct = mean_budget_pct(p, N, prompt_len)
        gap = abs(pct - budget_pct)
        if gap < best_gap:
            best, best_gap = p, gap
        if pct > budget_pct:
            break
        x += 1
    if best is None:
        raise ValueError(f"no {kind} configuration reaches {budget_pct}% budget")
    return best
