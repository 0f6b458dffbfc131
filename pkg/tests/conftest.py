import numpy as np
import pytest

from fadcm.model import ModelParams


def enumerate_click_probs(slate, params: ModelParams) -> np.ndarray:
    """Exact per-position click probabilities by walking every browsing branch.

    Each examined position splits into click/skip, then stay/leave; the mass of
    every click branch is credited to its position. Exponential in the slate
    length, and independent of the library's closed-form product.
    """
    slate = list(slate)
    cats = params.catalog.categories
    out = np.zeros(len(slate))

    def walk(p, mass, shown):
        if p == len(slate) or mass == 0.0:
            return
        item = slate[p]
        h = shown.count(cats[item])
        z = params.discount(h) * params.u[item]
        out[p] += mass * z
        shown = shown + [cats[item]]
        walk(p + 1, mass * z * params.g, shown)
        walk(p + 1, mass * (1 - z) * params.q, shown)

    walk(0, 1.0, [])
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
