import mpmath
import pytest

mpmath.mp.dps = 50


def mp_cdf(x):
    return mpmath.ncdf(x)


def mp_ppf(p):
    # Phi^{-1}(p) = -sqrt(2) * erfcinv(2p)
    return -mpmath.sqrt(2) * mpmath.erfinv(1 - 2 * mpmath.mpf(p))


def mp_approx_pp(p, r, alpha):
    r = mpmath.mpf(r)
    num = mp_ppf(1 - mpmath.mpf(p)) - mp_ppf(1 - mpmath.mpf(alpha)) * mpmath.sqrt(r)
    return float(mp_cdf(num / mpmath.sqrt(1 - r)))


@pytest.fixture
def rng():
    import numpy as np

    return np.random.default_rng(20240611)


_ACCEPTANCE_KEY = pytest.StashKey[dict]()


@pytest.fixture
def acceptance(request):
    """Record one summary line per acceptance criterion."""
    lines = request.config.stash.setdefault(_ACCEPTANCE_KEY, {})

    def record(criterion, ok, detail):
        lines[criterion] = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(lines[criterion])
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for key in sorted(lines):
            terminalreporter.write_line(lines[key])
