"""Partitioned KV cache: sink | old | buffer | window.

Every region is a contiguous run of one position-sorted array, so the
attention input (regions concatenated in that order) is just a prefix view.
Tokens enter at the tail: the sink fills first, then the window, and from then
on each arrival pushes the oldest window token into the buffer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvariantError

REGIONS = ("sink", "old", "buffer", "window")


@dataclass(frozen=True)
class BuzzConfig:
    """Parameters of the BUZZ policy.

    k: sink size, w: window size, s: stride for new tokens, T: cap on
    old + buffer. The small stride for old tokens is derived.
    """

    k: int = 4
    w: int = 64
    s: int = 5
    T: int = 260

    def __post_init__(self):
        if self.k < 0:
            raise ValueError("k must be >= 0")
        if self.w < 1:
            raise ValueError("w must be >= 1")
        if self.s < 1:
            raise ValueError("s must be >= 1")
        if self.T < self.s:
            raise ValueError("T must be >= s")

    @property
    def s_hat(self) -> int:
        return (self.s + 1) // 2

    @property
    def capacity(self) -> int:
        """Container size k + T + w, i.e. the cache size C held constant by the ratio rule."""
        return self.k + self.T + self.w

    @classmethod
    def from_ratio(cls, w: int, s: int = 5, k: int = 4, ratio: float | None = None):
        """Config with T = round(w * ratio), defaulting to the optimal T/w for ``s``."""
        if ratio is None:
            from .estimator import optimal_ratio

            ratio = optimal_ratio(s).ratio
        return cls(k=k, w=w, s=s, T=max(s, int(round(w * ratio))))


@dataclass
class KvEntry:
    key: np.ndarray
    value: np.ndarray
    position: int
    score: float = 0.0
    steps: int = 0


class CacheState:
    """Single-owner mutable cache shared by all policies.

    ``middle_cap`` bounds old + buffer; ``None`` means unbounded. Policies
    that keep nothing outside sink and window use a cap of 0.
    """

    def __init__(self, sink_size: int, window_size: int, middle_cap: int | None = None, config=None):
        if sink_size < 0 or window_size < 0:
            raise ValueError("region sizes must be >= 0")
        if middle_cap is not None and middle_cap < 0:
            raise ValueError("middle_cap must be >= 0")
        self.sink_size = sink_size
        self.window_size = window_size
        self.middle_cap = middle_cap
        self.config = config
        self.epoch = 0
        self.n_sink = self.n_old = self.n_buffer = self.n_window = 0
        self._n = 0
        self._d = None
        self._keys = self._values = None
        self._pos = np.zeros(0, dtype=np.int64)
        self._scores = np.zeros(0)
        self._steps = np.zeros(0, dtype=np.int64)
        self._last_pos = -1

    @classmethod
    def for_config(cls, config: BuzzConfig) -> CacheState:
        return cls(config.k, config.w, config.T, config=config)

    # -- storage ---------------------------------------------------------
    def _reserve(self, d: int, extra: int = 1) -> None:
        if self._d is None:
            self._d = d
            cap = 64
            self._keys = np.empty((cap, d))
            self._values = np.empty((cap, d))
            self._pos = np.empty(cap, dtype=np.int64)
            self._scores = np.empty(cap)
            self._steps = np.empty(cap, dtype=np.int64)
        elif d != self._d:
            raise ValueError(f"entry width {d} differs from cache width {self._d}")
        need = self._n + extra
        cap = self._keys.shape[0]
        if need > cap:
            new = max(need, 2 * cap)
            for name in ("_keys", "_values"):
                arr = np.empty((new, d))
                arr[: self._n] = getattr(self, name)[: self._n]
                setattr(self, name, arr)
            for name, dt in (("_pos", np.int64), ("_scores", np.float64), ("_steps", np.int64)):
                arr = np.empty(new, dtype=dt)
                arr[: self._n] = getattr(self, name)[: self._n]
                setattr(self, name, arr)

    def __len__(self) -> int:
        return self._n

    @property
    def keys(self) -> np.ndarray:
        return self._keys[: self._n] if self._n else np.zeros((0, self._d or 0))

    @property
    def values(self) -> np.ndarray:
        return self._values[: self._n] if self._n else np.zeros((0, self._d or 0))

    @property
    def positions(self) -> np.ndarray:
        return self._pos[: self._n]

    @property
    def scores(self) -> np.ndarray:
        return self._scores[: self._n]

    @property
    def steps(self) -> np.ndarray:
        return self._steps[: self._n]

    @property
    def middle_size(self) -> int:
        return self.n_old + self.n_buffer

    @property
    def eviction_due(self) -> bool:
        return self.middle_cap is not None and self.middle_size >= self.middle_cap

    def bounds(self, region: str) -> tuple[int, int]:
        a = self.n_sink
        b = a + self.n_old
        c = b + self.n_buffer
        return {"sink": (0, a), "old": (a, b), "buffer": (b, c), "window": (c, self._n)}[region]

    # -- mutation --------------------------------------------------------
    def append(self, key, value, position: int, score: float = 0.0, steps: int = 0) -> bool:
        """Add one token at the tail; returns whether an eviction is now due."""
        position = int(position)
        if position <= self._last_pos:
            raise ValueError(f"position {position} does not exceed last cached position {self._last_pos}")
        key = np.asarray(key, dtype=np.float64)
        value = np.asarray(value, dtype=np.float64)
        if key.shape != value.shape or key.ndim != 1:
            raise ValueError("key and value must be vectors of equal length")
        self._reserve(key.shape[0])
        i = self._n
        self._keys[i] = key
        self._values[i] = value
        self._pos[i] = position
        self._scores[i] = score
        self._steps[i] = steps
        self._n += 1
        self._last_pos = position
        if self.n_sink < self.sink_size:
            if self._n != self.n_sink + 1:
                raise InvariantError("sink must fill before any other region")
            self.n_sink += 1
        else:
            self.n_window += 1
            if self.n_window > self.window_size:
                # oldest window row sits right after the buffer, so no data moves
                self.n_window -= 1
                self.n_buffer += 1
        return self.eviction_due

    def append_entry(self, entry: KvEntry) -> bool:
        return self.append(entry.key, entry.value, entry.position, entry.score, entry.steps)

    def record_attention(self, a_t) -> None:
        a_t = np.asarray(a_t, dtype=np.float64)
        if a_t.shape != (self._n,):
            raise ValueError(f"A_t has length {a_t.size}, cache holds {self._n} rows")
        self._scores[: self._n] += a_t
        self._steps[: self._n] += 1

    def replace_middle(self, keep: np.ndarray) -> None:
        """Keep only the middle rows at ``keep`` (offsets into old+buffer); all become old."""
        keep = np.asarray(keep, dtype=np.int64)
        m = self.middle_size
        if keep.size and (keep.min() < 0 or keep.max() >= m or np.any(np.diff(keep) <= 0)):
            raise InvariantError("kept middle offsets must be strictly increasing and in range")
        idx = np.concatenate(
            [np.arange(self.n_sink), self.n_sink + keep, np.arange(self.n_sink + m, self._n)]
        )
        for name in ("_keys", "_values", "_pos", "_scores", "_steps"):
            arr = getattr(self, name)
            arr[: idx.size] = arr[idx]
        self._n = idx.size
        self.n_old = keep.size
        self.n_buffer = 0

    # -- views -----------------------------------------------------------
    def entries(self, region: str | None = None) -> list[KvEntry]:
        lo, hi = (0, self._n) if region is None else self.bounds(region)
        return [
            KvEntry(self._keys[i].copy(), self._values[i].copy(), int(self._pos[i]), float(self._scores[i]), int(self._steps[i]))
            for i in range(lo, hi)
        ]

    def region_positions(self, region: str) -> list[int]:
        lo, hi = self.bounds(region)
        return [int(p) for p in self._pos[lo:hi]]

    def concat_regions(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Keys, values and scores ordered sink, old, buffer, window (copies)."""
        return self.keys.copy(), self.values.copy(), self.scores.copy()

    def occupancy(self) -> dict[str, int]:
        return {
            "sink": self.n_sink,
            "old": self.n_old,
            "buffer": self.n_buffer,
            "window": self.n_window,
            "total": self._n,
        }

    def to_debug_dict(self) -> dict[str, list[int]]:
        return {r: self.region_positions(r) for r in REGIONS}

    def validate(self, enforce_cap: bool = True) -> None:
        """Raise ``InvariantError`` if any structural invariant is broken."""
        counts = (self.n_sink, self.n_old, self.n_buffer, self.n_window)
        if min(counts) < 0 or sum(counts) != self._n:
            raise InvariantError(f"region counts {counts} do not sum to {self._n}")
        if self.n_sink > self.sink_size:
            raise InvariantError("sink overfull")
        if self.n_window > self.window_size:
            raise InvariantError("window overfull")
        if np.any(np.diff(self.positions) <= 0):
            raise InvariantError("positions are not strictly increasing")
        if self._n and self.positions[-1] > self._last_pos:
            raise InvariantError("cached position was never appended")
        if np.any(self.scores < 0) or np.any(self.scores > self.steps + 1e-9):
            raise InvariantError("accumulated score outside [0, steps observed]")
        if enforce_cap and self.middle_cap is not None and self.middle_size > self.middle_cap:
            raise InvariantError(f"middle region {self.middle_size} exceeds cap {self.middle_cap}")


def occupancy(cache: CacheState) -> dict[str, int]:
    return cache.occupancy()


def concat_regions(cache: CacheState):
    return cache.concat_regions()


def append_token(cache: CacheState, entry: KvEntry) -> bool:
    return cache.append_entry(entry)


def ceil_div(a: int, b: int) -> int:
    return -(-a // b)


__all__ = [
    "BuzzConfig",
    "CacheState",
    "KvEntry",
    "REGIONS",
    "append_token",
    "ceil_div",
    "concat_regions",
    "occupancy",
]

