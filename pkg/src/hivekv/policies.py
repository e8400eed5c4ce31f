"""Eviction policies: BUZZ, its two ablations, and four baselines.

BUZZ keeps a sink and a sliding window untouched. Tokens leaving the window
collect in a buffer; once old + buffer reaches T, the buffer is cut into
chunks of ``s`` and only each chunk's highest-scoring token survives, while
the surviving old tokens are thinned by keeping every ``s_hat``-th one.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .cache import BuzzConfig, CacheState, KvEntry, ceil_div
from .errors import StateError

BUZZ_MODES = ("buzz", "buzz_swapped_strides", "buzz_no_local_max")
BASELINES = ("full", "local_window", "sink_window", "heavy_hitter_topk")
POLICY_KINDS = BASELINES + BUZZ_MODES


@dataclass
class EvictionOutcome:
    kept_positions: list[int]
    evicted_positions: list[int]
    comparisons: int = 0
    buffer_positions: list[int] = field(default_factory=list)
    step: int | None = None


# -- sampling primitives -------------------------------------------------

def local_max_indices(scores, stride: int) -> tuple[np.ndarray, int]:
    """Index of the max score in each consecutive chunk of ``stride``.

    The last chunk may be short. Ties go to the lowest index. Also returns
    the number of score comparisons made (chunk length - 1 per chunk).
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    scores = np.asarray(scores, dtype=np.float64)
    n = scores.size
    if n == 0:
        return np.zeros(0, dtype=np.int64), 0
    m = ceil_div(n, stride)
    padded = np.full(m * stride, -np.inf)
    padded[:n] = scores
    local = padded.reshape(m, stride).argmax(axis=1)
    return np.arange(m, dtype=np.int64) * stride + local, n - m


def interval_indices(n: int, stride: int) -> np.ndarray:
    """Chunk-start indices 0, stride, 2*stride, ... below ``n``."""
    if stride < 1:
        raise ValueError("stride must be >= 1")
    return np.arange(0, n, stride, dtype=np.int64)


def local_max_sample(stride: int, entries: list[KvEntry]) -> list[KvEntry]:
    idx, _ = local_max_indices([e.score for e in entries], stride)
    return [entries[i] for i in idx]


def interval_sample(stride: int, entries: list[KvEntry]) -> list[KvEntry]:
    return [entries[i] for i in interval_indices(len(entries), stride)]


# -- BUZZ ----------------------------------------------------------------

def mode_strides(config: BuzzConfig, mode: str = "buzz") -> tuple[int, int, bool]:
    """(old stride, new stride, use local max on new tokens) for a BUZZ mode."""
    if mode == "buzz":
        return config.s_hat, config.s, True
    if mode == "buzz_swapped_strides":
        return config.s, config.s_hat, True
    if mode == "buzz_no_local_max":
        return config.s_hat, config.s, False
    raise ValueError(f"unknown BUZZ mode {mode!r}")


def _sample_middle(scores_old, scores_new, config, mode):
    old_stride, new_stride, use_max = mode_strides(config, mode)
    keep_old = interval_indices(len(scores_old), old_stride)
    if use_max:
        keep_new, comparisons = local_max_indices(scores_new, new_stride)
    else:
        keep_new, comparisons = interval_indices(len(scores_new), new_stride), 0
    return np.concatenate([keep_old, len(scores_old) + keep_new]), comparisons


def buzz_evict(cache: CacheState, mode: str = "buzz") -> EvictionOutcome:
    """One BUZZ eviction: thin old tokens, chunk-sample the buffer, clear the buffer."""
    if not cache.eviction_due:
        raise StateError(f"eviction not due: middle holds {cache.middle_size} of {cache.middle_cap}")
    config = cache.config
    if not isinstance(config, BuzzConfig):
        raise StateError("cache was not built from a BuzzConfig")
    lo, mid, hi = cache.n_sink, cache.n_sink + cache.n_old, cache.n_sink + cache.middle_size
    scores = cache.scores
    positions = cache.positions[lo:hi].copy()
    keep, comparisons = _sample_middle(scores[lo:mid], scores[mid:hi], config, mode)
    mask = np.zeros(positions.size, dtype=bool)
    mask[keep] = True
    outcome = EvictionOutcome(
        kept_positions=positions[mask].tolist(),
        evicted_positions=positions[~mask].tolist(),
        comparisons=comparisons,
        buffer_positions=cache.region_positions("buffer"),
    )
    cache.replace_middle(keep)
    cache.epoch += 1
    return outcome


def prefill_compact(cache: CacheState, entries: list[KvEntry], mode: str = "buzz") -> list[EvictionOutcome]:
    """Load a prompt into an empty cache, sampling the middle until it fits under T.

    The first round uses the new-token sampler (local max with ``s`` for plain
    BUZZ); later rounds thin with the old-token sampler. Returns one outcome per
    round; a prompt that already fits in k + T + w is loaded unchanged.
    """
    if len(cache):
        raise StateError("prefill needs an empty cache")
    config = cache.config
    k, w, T = config.k, config.w, config.T
    if len(entries) <= k + T + w:
        for e in entries:
            cache.append_entry(e)
        return []
    sink, middle, window = entries[:k], list(entries[k : len(entries) - w]), entries[len(entries) - w :]
    old_stride, new_stride, use_max = mode_strides(config, mode)
    outcomes = []
    first = True
    while len(middle) > T:
        scores = np.array([e.score for e in middle])
        if first and use_max:
            keep, comparisons = local_max_indices(scores, new_stride)
        else:
            keep, comparisons = interval_indices(len(middle), new_stride if first else old_stride), 0
        kept = set(keep.tolist())
        outcomes.append(
            EvictionOutcome(
                kept_positions=[middle[i].position for i in keep],
                evicted_positions=[e.position for i, e in enumerate(middle) if i not in kept],
                comparisons=comparisons,
                buffer_positions=[e.position for e in middle] if first else [],
            )
        )
        middle = [middle[i] for i in keep]
        first = False
    for e in sink + middle + list(window):
        cache.append_entry(e)
    cache.n_old, cache.n_buffer = cache.n_buffer, 0
    cache.epoch += len(outcomes)
    return outcomes


# -- baselines -------------------------------------------------------------

def _drop_middle(cache: CacheState) -> EvictionOutcome:
    lo, hi = cache.n_sink, cache.n_sink + cache.middle_size
    evicted = cache.positions[lo:hi].tolist()
    buffer = cache.region_positions("buffer")
    cache.replace_middle(np.zeros(0, dtype=np.int64))
    return EvictionOutcome([], evicted, 0, buffer)


def _evict_lowest(cache: CacheState) -> EvictionOutcome:
    lo, hi = cache.n_sink, cache.n_sink + cache.middle_size
    scores = cache.scores[lo:hi]
    victim = int(np.argmin(scores))  # ties: oldest goes first
    positions = cache.positions[lo:hi]
    keep = np.delete(np.arange(hi - lo), victim)
    outcome = EvictionOutcome(
        positions[keep].tolist(), [int(positions[victim])], scores.size - 1, cache.region_positions("buffer")
    )
    cache.replace_middle(keep)
    return outcome


def baseline_evict(policy: Policy, cache: CacheState) -> list[EvictionOutcome]:
    """Bring ``cache`` back within the policy's budget."""
    if policy.kind == "full":
        return []
    if policy.kind in ("local_window", "sink_window"):
        return [_drop_middle(cache)] if cache.middle_size else []
    if policy.kind == "heavy_hitter_topk":
        out = []
        while cache.middle_size > cache.middle_cap:
            out.append(_evict_lowest(cache))
        return out
    raise ValueError(f"{policy.kind!r} is not a baseline policy")


# -- policy object -----------------------------------------------------------

@dataclass(frozen=True)
class Policy:
    """A policy kind plus its parameters.

    BUZZ kinds use k, w, s, T. ``local_window`` keeps the last ``w``;
    ``sink_window`` the first ``k`` and last ``w``; ``heavy_hitter_topk``
    the last ``w`` plus the ``budget - w`` best-scored older tokens.
    """

    kind: str = "buzz"
    k: int = 4
    w: int = 64
    s: int = 5
    T: int = 260
    budget: int | None = None

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}; choose from {', '.join(POLICY_KINDS)}")
        if self.kind in BUZZ_MODES:
            BuzzConfig(self.k, self.w, self.s, self.T)
            old_stride, new_stride, _ = mode_strides(self.config, self.kind)
            if min(old_stride, new_stride) < 2:
                raise ValueError("BUZZ needs s >= 3 so both strides shrink the middle region")
        elif self.kind == "local_window":
            if self.w < 1:
                raise ValueError("local_window needs w >= 1")
        elif self.kind == "sink_window":
            if self.k < 0 or self.w < 1:
                raise ValueError("sink_window needs k >= 0 and w >= 1")
        elif self.kind == "heavy_hitter_topk":
            if self.w < 1:
                raise ValueError("heavy_hitter_topk needs w >= 1")
            if self.budget is None or self.budget < self.w:
                raise ValueError("heavy_hitter_topk needs budget >= w")

    @classmethod
    def full(cls):
        return cls("full", k=0, w=0)

    @classmethod
    def local_window(cls, w: int):
        return cls("local_window", k=0, w=w)

    @classmethod
    def sink_window(cls, k: int, w: int):
        return cls("sink_window", k=k, w=w)

    @classmethod
    def heavy_hitter(cls, w: int, budget: int):
        return cls("heavy_hitter_topk", k=0, w=w, budget=budget)

    @classmethod
    def buzz(cls, config: BuzzConfig, mode: str = "buzz"):
        return cls(mode, k=config.k, w=config.w, s=config.s, T=config.T)

    @property
    def is_buzz(self) -> bool:
        return self.kind in BUZZ_MODES

    @property
    def config(self) -> BuzzConfig | None:
        return BuzzConfig(self.k, self.w, self.s, self.T) if self.is_buzz else None

    @property
    def capacity(self) -> int | None:
        """Largest occupancy the policy can reach at decode time (None if unbounded)."""
        if self.kind == "full":
            return None
        if self.kind == "local_window":
            return self.w
        if self.kind == "sink_window":
            return self.k + self.w
        if self.kind == "heavy_hitter_topk":
            return self.budget
        return self.config.capacity

    def describe(self) -> dict:
        d = asdict(self)
        if self.kind == "full":
            d = {"kind": "full"}
        elif self.kind == "local_window":
            d = {"kind": self.kind, "w": self.w}
        elif self.kind == "sink_window":
            d = {"kind": self.kind, "k": self.k, "w": self.w}
        elif self.kind == "heavy_hitter_topk":
            d = {"kind": self.kind, "w": self.w, "budget": self.budget}
        else:
            d = {"kind": self.kind, "k": self.k, "w": self.w, "s": self.s, "s_hat": self.config.s_hat, "T": self.T}
        return d

    def new_cache(self) -> CacheState:
        if self.is_buzz:
            return CacheState.for_config(self.config)
        if self.kind == "full":
            return CacheState(0, 0, None)
        if self.kind == "heavy_hitter_topk":
            return CacheState(0, self.w, self.budget - self.w)
        k = self.k if self.kind == "sink_window" else 0
        return CacheState(k, self.w, 0)

    def admit(self, cache: CacheState, key, value, position: int) -> list[EvictionOutcome]:
        """Append a token and apply evictions that must precede its decode step."""
        cache.append(key, value, position)
        return [] if self.is_buzz else baseline_evict(self, cache)

    def settle(self, cache: CacheState) -> list[EvictionOutcome]:
        """Evictions that run after a decode step (BUZZ evicts once T is reached)."""
        out = []
        if self.is_buzz:
            while cache.eviction_due:
                out.append(buzz_evict(cache, self.kind))
        return out

    def prefill(self, cache: CacheState, entries: list[KvEntry]) -> list[EvictionOutcome]:
        if self.is_buzz:
            return prefill_compact(cache, entries, self.kind)
        out = []
        for e in entries:
            cache.append_entry(e)
            out.extend(baseline_evict(self, cache))
        return out


def ablation_evict(cache: CacheState, mode: str) -> EvictionOutcome:
    """Run one eviction of an ablation variant (``buzz_swapped_strides`` or ``buzz_no_local_max``)."""
    if mode not in BUZZ_MODES[1:]:
        raise ValueError(f"{mode!r} is not an ablation mode")
    return buzz_evict(cache, mode)
