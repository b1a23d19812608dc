import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmflow.simplex import SimplexPath, SimplexPoint, barycenter, eval_path, sample_alpha, vertex


class FixedUniform:
    """Generator stand-in whose uniform draws are a constant."""

    def __init__(self, value):
        self.value = value

    def uniform(self, size=None):
        return np.full(size, self.value)

    def integers(self, high, size=None):
        return np.zeros(size, dtype=int)


def test_vertex():
    assert np.array_equal(vertex(0, 1).coords, [1.0, 0.0])
    assert np.array_equal(vertex(2, 3).coords, [0.0, 0.0, 1.0, 0.0])
    with pytest.raises(IndexError):
        vertex(4, 3)


@pytest.mark.parametrize("coords", [[0.5, 0.6], [-0.1, 1.1], [np.nan, 1.0], [1.0]])
def test_simplex_point_rejects_invalid(coords):
    with pytest.raises(ValueError):
        SimplexPoint(coords)


def test_barycenter():
    assert np.allclose(barycenter(3).coords, 0.25)


def test_single_edge_draw():
    alpha = sample_alpha("single-edge(0,1)", 2, FixedUniform(0.3))
    assert np.allclose(alpha, [0.7, 0.3, 0.0])


def test_full_simplex_mean():
    alpha = sample_alpha("full-simplex", 2, np.random.default_rng(0), size=100_000)
    assert np.allclose(alpha.sum(axis=1), 1.0)
    assert np.all(alpha >= 0)
    assert np.allclose(alpha.mean(axis=0), 1 / 3, atol=0.01)


def test_all_edges_support():
    alpha = sample_alpha("all-edges", 2, np.random.default_rng(1), size=5000)
    assert np.all(np.count_nonzero(alpha, axis=1) <= 2)
    # every edge gets visited
    support = {tuple(np.flatnonzero(a)) for a in alpha}
    assert {(0, 1), (0, 2), (1, 2)} <= support


def test_invalid_mode():
    with pytest.raises(ValueError):
        sample_alpha("half-simplex", 2, np.random.default_rng(0))
    with pytest.raises(ValueError):
        sample_alpha("single-edge(0,0)", 2, np.random.default_rng(0))


def test_linear_edge_eval():
    alpha, adot = eval_path(SimplexPath.linear_edge(0, 1, 1), 0.5)
    assert np.array_equal(alpha, [0.5, 0.5])
    assert np.array_equal(adot, [-1.0, 1.0])


def test_zero_fourier_is_linear():
    alpha, adot = eval_path(SimplexPath.fourier(0, 1, 1, N=20), 0.25)
    assert np.allclose(alpha, [0.75, 0.25])
    assert np.allclose(adot, [-1.0, 1.0])


def test_fourier_derivative_matches_finite_difference():
    coeffs = np.zeros((2, 20))
    coeffs[0, 0] = 0.3  # a[0][1]: first harmonic of component 0
    path = SimplexPath.fourier(0, 1, 1, coeffs=coeffs)
    h = 1e-5
    fd = (path(0.4 + h)[0] - path(0.4 - h)[0]) / (2 * h)
    assert np.allclose(path(0.4)[1], fd, atol=1e-6)


def test_t_out_of_range():
    with pytest.raises(ValueError):
        eval_path(SimplexPath.linear_edge(0, 1, 1), 1.2)


def test_constant_path():
    alpha, adot = eval_path(SimplexPath.constant(2, 3), np.linspace(0, 1, 5))
    assert np.all(alpha[:, 2] == 1.0) and not np.any(adot)


def random_paths():
    return st.builds(
        lambda K, N, seed, squared, scale: _path(K, N, seed, squared, scale),
        st.integers(1, 5),
        st.integers(1, 20),
        st.integers(0, 2**31),
        st.booleans(),
        st.floats(0.0, 0.5),
    )


def _path(K, N, seed, squared, scale):
    rng = np.random.default_rng(seed)
    i, j = rng.choice(K + 1, size=2, replace=False)
    if not squared:
        # keeps every unsquared perturbation below 0.4 so the weights cannot all clamp to zero
        scale = min(scale, 0.4 / N)
    coeffs = rng.uniform(-scale, scale, (K + 1, N))
    return SimplexPath.fourier(int(i), int(j), K, coeffs=coeffs, squared=squared)


@settings(max_examples=60, deadline=None)
@given(random_paths())
def test_path_invariants(path):
    ts = np.linspace(0, 1, 101)
    alpha, adot = path(ts)
    assert np.allclose(alpha.sum(axis=1), 1.0, atol=1e-9, rtol=0)
    assert np.all(alpha >= 0)
    assert np.allclose(adot.sum(axis=1), 0.0, atol=1e-7, rtol=0)
    # endpoints are the edge vertices, exactly
    assert np.array_equal(alpha[0], np.eye(path.K + 1)[path.i])
    assert np.array_equal(alpha[-1], np.eye(path.K + 1)[path.j])


@settings(max_examples=40, deadline=None)
@given(random_paths(), st.floats(0.05, 0.95))
def test_quotient_rule_matches_finite_difference(path, t):
    if not path.squared:
        # the clamp at zero is only piecewise smooth
        raw = path._fourier_parts(np.array([t - 1e-4, t, t + 1e-4]))[4]
        if np.any(raw == 0):
            return
    h = 1e-5
    fd = (path(t + h)[0] - path(t - h)[0]) / (2 * h)
    assert np.allclose(path(t)[1], fd, atol=1e-6)


def test_coefficient_jacobian_matches_finite_difference():
    rng = np.random.default_rng(3)
    path = SimplexPath.fourier(1, 2, 2, N=4, coeffs=rng.uniform(-0.5, 0.5, (3, 4)))
    ts = np.array([0.1, 0.5, 0.83])
    _, _, da, dad = path.coeff_jacobian(ts)
    c = path.coeffs.ravel()
    h = 1e-6
    for p in range(c.size):
        up, dn = c.copy(), c.copy()
        up[p] += h
        dn[p] -= h
        au, adu = path.with_coeffs(up)(ts)
        ad, add = path.with_coeffs(dn)(ts)
        m, n = divmod(p, 4)
        assert np.allclose(da[:, :, m, n], (au - ad) / (2 * h), atol=1e-8)
        assert np.allclose(dad[:, :, m, n], (adu - add) / (2 * h), atol=1e-7)


def test_json_round_trip():
    rng = np.random.default_rng(0)
    path = SimplexPath.fourier(0, 1, 2, N=20, coeffs=rng.normal(size=(3, 20)))
    d = json.loads(path.to_json())
    assert d["kind"] == "fourier" and d["N"] == 20 and len(d["coeffs"]) == 3
    back = SimplexPath.from_json(path.to_json())
    assert np.array_equal(back.coeffs, path.coeffs)
    assert back.i == 0 and back.j == 1 and back.K == 2
    assert SimplexPath.from_dict(SimplexPath.linear_edge(2, 0, 3).to_dict()) == SimplexPath.linear_edge(2, 0, 3)
