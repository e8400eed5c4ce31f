"""Parameter rule for T/w, the old-region size recursion, and the entropy probe."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import StateError
from .numeric import child_seeds, log_softmax

RECURSION_VARIANTS = ("ceil", "floor")


@dataclass(frozen=True)
class RatioPrediction:
    s: int
    ratio: float
    parity: str


def optimal_ratio(s: int) -> RatioPrediction:
    """T/w at which the steady-state old region matches the window size."""
    if s < 1:
        raise ValueError("stride must be >= 1")
    if s % 2:
        return RatioPrediction(s, (s * s + 1) / (s + 1), "odd")
    return RatioPrediction(s, float(s - 1), "even")


def steady_state_coefficient(s: int) -> float:
    """c with c * a = T / s at the fixed point of a -> a/s_hat + (T - a)/s."""
    s_hat = (s + 1) // 2
    return 1.0 - 1.0 / s_hat + 1.0 / s


@dataclass
class RecursionTrace:
    s: int
    T: int
    variant: str
    a: list[int]
    converged: bool
    cycle: list[int] = field(default_factory=list)

    @property
    def converged_value(self) -> int | None:
        """limsup of the sequence: the largest value on its terminal cycle."""
        return max(self.cycle) if self.converged else None

    @property
    def fixed_point(self) -> bool:
        return self.converged and len(self.cycle) == 1

    def as_dict(self) -> dict:
        return {
            "s": self.s,
            "T": self.T,
            "variant": self.variant,
            "a": self.a,
            "converged": self.converged,
            "cycle": self.cycle,
            "converged_value": self.converged_value,
        }


def recursion_step(a: int, s: int, T: int, variant: str = "ceil") -> int:
    """Old-region size after one eviction that started with ``a`` old tokens.

    ``ceil`` counts what the samplers actually keep; ``floor`` is the
    rounding used in the bound derivation.
    """
    s_hat = (s + 1) // 2
    if variant == "ceil":
        return -(-a // s_hat) + -(-(T - a) // s)
    if variant == "floor":
        return a // s_hat + (T - a) // s
    raise ValueError(f"unknown recursion variant {variant!r}")


def simulate_recursion(s: int, T: int, max_steps: int = 100, variant: str = "ceil") -> RecursionTrace:
    if s < 1 or T < s:
        raise ValueError("need T >= s >= 1")
    if max_steps < 1:
        raise ValueError("max_steps must be >= 1")
    a = [T // s]
    seen = {a[0]: 0}
    for _ in range(max_steps - 1):
        nxt = recursion_step(a[-1], s, T, variant)
        if nxt in seen:
            start = seen[nxt]
            return RecursionTrace(s, T, variant, a, True, a[start:])
        seen[nxt] = len(a)
        a.append(nxt)
    return RecursionTrace(s, T, variant, a, False)


@dataclass
class BoundCheck:
    passed: bool
    lower: float
    middle: float
    upper: float
    lower_margin: float
    upper_margin: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def check_limsup_bounds(trace: RecursionTrace) -> BoundCheck:
    """Check the limsup of ``trace`` against its rounding-dependent bracket.

    floor: T/s - 2 < c * limsup <= T/s
    ceil:  T/s <= c * limsup < T/s + 2
    where c = (s^2 + 1)/(s^2 + s) for odd s and (s - 1)/s for even s.
    """
    if not trace.converged:
        raise StateError("recursion trace has not converged")
    s, T = trace.s, trace.T
    mid = steady_state_coefficient(s) * trace.converged_value
    base = T / s
    eps = 1e-9
    if trace.variant == "floor":
        lo, hi = base - 2, base
        ok = lo < mid <= hi + eps
    else:
        lo, hi = base, base + 2
        ok = lo - eps <= mid < hi
    return BoundCheck(ok, lo, mid, hi, mid - lo, hi - mid)


# -- entropy probe -----------------------------------------------------------

SCALE_POLICIES = ("constant", "logn")


def entropy(p) -> float:
    p = np.asarray(p, dtype=np.float64)
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())


def softmax_entropy(scores, scale: float) -> float:
    logp = log_softmax(scores, scale)
    return float(-(np.exp(logp) * logp).sum())


def probe_scale(n: int, policy: str, base: int = 512) -> float:
    if policy == "constant":
        return 1.0
    if policy == "logn":
        return math.log(n) / math.log(base)
    raise ValueError(f"unknown scale policy {policy!r}")


@dataclass
class EntropyProbe:
    n_grid: list[int]
    distribution: str
    trials: int
    seed: int
    entropies: dict[str, list[float]]
    reference_n: int = 512

    def drift(self, policy: str) -> float:
        """max over n of |H(n) - H(reference_n)|, with H at the reference computed on the grid or interpolated in log n."""
        h = np.asarray(self.entropies[policy])
        ref = float(np.interp(math.log(self.reference_n), np.log(self.n_grid), h))
        return float(np.max(np.abs(h - ref)))

    def as_dict(self) -> dict:
        return {
            "n_grid": self.n_grid,
            "distribution": self.distribution,
            "trials": self.trials,
            "seed": self.seed,
            "entropies": self.entropies,
            "drift": {p: self.drift(p) for p in self.entropies},
        }


def entropy_probe(
    n_grid,
    seed: int = 0,
    policies=SCALE_POLICIES,
    trials: int = 100,
    distribution: str = "normal",
    base: int = 512,
) -> EntropyProbe:
    """Mean softmax entropy of i.i.d. scores under constant vs log-n temperature.

    Each (n, trial) pair draws its own scores from a seed derived from the
    root seed, and every policy sees the same draws.
    """
    n_grid = [int(n) for n in n_grid]
    if not n_grid or min(n_grid) < 1:
        raise ValueError("n_grid must hold counts >= 1")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if distribution not in ("normal", "equal"):
        raise ValueError("distribution must be 'normal' or 'equal'")
    for p in policies:
        probe_scale(2, p, base)
    seeds = child_seeds(seed, len(n_grid))
    out = {p: [] for p in policies}
    for n, s in zip(n_grid, seeds):
        rng = np.random.default_rng(s)
        totals = dict.fromkeys(policies, 0.0)
        for _ in range(trials):
            t = rng.standard_normal(n) if distribution == "normal" else np.zeros(n)
            for p in policies:
                totals[p] += softmax_entropy(t, probe_scale(n, p, base))
        for p in policies:
            out[p].append(totals[p] / trials)
    return EntropyProbe(n_grid, distribution, trials, seed, out, base)
