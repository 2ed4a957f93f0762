import json

import numpy as np
import pytest

import subsup

TWO_PI = 2.0 * np.pi


@pytest.fixture(scope="session")
def icosphere2():
    return subsup.build_icosphere(2)


@pytest.fixture(scope="session")
def icosphere3():
    return subsup.build_icosphere(3)


@pytest.fixture(scope="session")
def torus8():
    """Unit flat 3-torus on an 8x8x8 grid."""
    return subsup.build_flat_torus([(8, 1.0)] * 3)


@pytest.fixture(scope="session")
def torus16_2d():
    return subsup.build_flat_torus([(16, TWO_PI), (16, TWO_PI)])


def make_constant_problem(domain):
    """a = 2, f = h = 1/2, F = t^5, H = sqrt(t), declared n = 3."""
    return subsup.NonlinearProblem(
        domain,
        2.0,
        0.5,
        0.5,
        subsup.ScalarNonlinearity.power(5.0),
        subsup.ScalarNonlinearity.power(0.5),
        n=3,
    )


@pytest.fixture(scope="session")
def torus_problem(torus8):
    return make_constant_problem(torus8)


def scalar_fixed_point():
    """Bisection root of 2c = c^5/2 + sqrt(c)/2 on (0.01, 1).

    Independent of the iteration under test: plain interval halving on
    the scalar residual.
    """

    def g(c):
        return 2.0 * c - 0.5 * c**5 - 0.5 * np.sqrt(c)

    lo, hi = 0.01, 1.0
    assert g(lo) < 0.0 < g(hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if g(mid) >= 0.0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


@pytest.fixture(scope="session")
def c_star():
    return scalar_fixed_point()


@pytest.fixture()
def tmp_scenario(tmp_path):
    """Write a scenario document to disk and return its path."""

    def write(doc, name="scenario.json"):
        path = tmp_path / name
        path.write_text(json.dumps(doc))
        return str(path)

    return write


def base_torus_doc():
    return {
        "domain": {"kind": "flat_torus", "dims": [[8, 1.0], [8, 1.0], [8, 1.0]]},
        "n": 3,
        "coefficients": {"a": 2.0, "f": 0.5, "h": 0.5},
        "nonlinearity": {
            "F": {"kind": "power", "p": 5.0},
            "H": {"kind": "power", "p": 0.5},
        },
        "bracket": {"lower": 0.01, "upper": 1.0},
    }
