import sys

import numpy as np
import pytest

from hivekv.cache import CacheState


def fill(cache: CacheState, n: int, scores=None, d: int = 2, start: int = 0):
    """Append ``n`` tokens with positions start.. and optional fixed scores."""
    for i in range(n):
        pos = start + i
        s = 0.0 if scores is None else float(scores[i])
        cache.append(np.full(d, float(pos)), np.full(d, -float(pos)), pos, score=s, steps=int(np.ceil(s)))
    return cache


def layout(config, n_old, n_buffer, scores=None):
    """A cache with full sink and window and the requested old/buffer split."""
    cache = CacheState.for_config(config)
    n = config.k + n_old + n_buffer + config.w
    fill(cache, n, scores)
    cache.n_old, cache.n_buffer = n_old, n_buffer
    return cache


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    verdicts = getattr(module, "VERDICTS", None)
    if verdicts:
        terminalreporter.section("acceptance criteria")
        for number in sorted(verdicts):
            terminalreporter.write_line(verdicts[number])
