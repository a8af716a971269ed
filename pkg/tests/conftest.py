import itertools

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from przanowski.manifolds import builtin

settings.register_profile(
    "default", deadline=None, max_examples=25, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

MANIFOLDS = ("s4", "h4", "cp2", "bergmann")


@pytest.fixture(params=MANIFOLDS)
def spec(request):
    return builtin(request.param)


def central_difference(f, point, alpha, h=1e-3, dps=None):
    """d^alpha f at ``point`` (4 complex coordinates) by nested central differences.

    ``f`` takes four complex numbers and is analytic in each, so real steps give
    the complex partial derivatives.  With ``dps`` the differences are taken in
    mpmath at that many digits, which removes rounding error for small steps.
    """
    if dps is not None:
        import mpmath

        with mpmath.workdps(dps):
            pt = [mpmath.mpc(complex(c)) for c in point]
            out = _nested(f, pt, alpha, mpmath.mpf(h))
            return complex(out)
    return _nested(f, [complex(c) for c in point], alpha, h)


def _nested(f, point, alpha, h):
    steps = []
    for d, k in enumerate(alpha):
        steps += [d] * k
    total = 0.0
    for signs in itertools.product((1, -1), repeat=len(steps)):
        p = list(point)
        for d, s in zip(steps, signs):
            p[d] += s * h
        total += np.prod(signs) * f(*p)
    return total / (2 * h) ** len(steps)


def test_functions(n, seed=2024):
    """A fixed pseudo-random family of polynomial/exponential expressions in (w, z, wb, zb)."""
    rng = np.random.default_rng(seed)
    names = ("w", "z", "wb", "zb")
    out = []
    for _ in range(n):
        a, b, c, d = (round(float(x), 3) for x in rng.uniform(0.2, 1.5, 4))
        i, j, k, m = rng.integers(0, 4, 4)
        p = int(rng.integers(2, 4))
        out.append(
            f"{a}*{names[i]}*{names[j]} + {b}*{names[k]}^{p} + {c}*exp({d}*{names[m]}) + {names[(i + 1) % 4]}"
        )
    return out


test_functions.__test__ = False


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
