import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from robust_ode.errors import InputError, MaxIterations, ZeroGamma
from robust_ode.qp import minimize_quadratic_simplex, project_simplex
from robust_ode.weights import (FIG1_GAMMA, FIG1_TARGET, Method, make_weights, plug_in_weights, psd_floor,
                                ridge_weights, select_tolerance, stability_experiment, stabilized_weights)

from oracles import grid_min_norm, grid_minimum, random_psd

psd_seeds = st.integers(0, 2**31 - 1)


def psd(seed, K=None):
    rng = np.random.default_rng(seed)
    return random_psd(rng, K or int(rng.integers(2, 6)))


def assert_simplex(w):
    assert np.all(w >= -1e-10)
    assert abs(w.sum() - 1) <= 1e-10


# --- simplex QP -----------------------------------------------------------------

def test_qp_diagonal():
    # KKT: 2 w1 = 4 w2, w1 + w2 = 1
    res = minimize_quadratic_simplex(np.diag([1.0, 2.0]))
    np.testing.assert_allclose(res.w, [2 / 3, 1 / 3], atol=1e-9)
    assert res.value == pytest.approx(2 / 3, abs=1e-12)
    assert grid_minimum(np.diag([1.0, 2.0]), 1e-4) == pytest.approx(2 / 3, abs=1e-9)


def test_qp_identity():
    res = minimize_quadratic_simplex(np.eye(5))
    np.testing.assert_allclose(res.w, 0.2, atol=1e-9)
    assert res.value == pytest.approx(0.2)


def test_qp_single_source():
    res = minimize_quadratic_simplex(np.array([[3.5]]))
    assert res.w.tolist() == [1.0] and res.value == 3.5


def test_qp_iteration_cap():
    G = psd(7, 5)
    with pytest.raises(MaxIterations) as err:
        minimize_quadratic_simplex(G, tol=0.0, max_iter=3, polish_every=10**9)
    assert err.value.x is not None and err.value.gap is not None


@given(st.lists(st.floats(-50, 50), min_size=1, max_size=8))
def test_projection_lands_on_simplex(v):
    w = project_simplex(v)
    assert_simplex(w)
    # idempotent
    np.testing.assert_allclose(project_simplex(w), w, atol=1e-12)


@given(psd_seeds)
def test_qp_matches_grid(seed):
    G = psd(seed, int(np.random.default_rng(seed).integers(2, 4)))
    res = minimize_quadratic_simplex(G)
    assert_simplex(res.w)
    assert abs(res.value - grid_minimum(G)) <= 1e-6


def test_plug_in_examples():
    np.testing.assert_allclose(plug_in_weights(np.diag([1.0, 2.0])).omega, [2 / 3, 1 / 3], atol=1e-9)
    np.testing.assert_allclose(plug_in_weights(np.eye(5)).omega, 0.2, atol=1e-9)
    w = plug_in_weights(np.array([[2.0]]))
    assert w.omega.tolist() == [1.0] and w.objective == 2.0 and w.method is Method.PLUGIN


# --- ridge ----------------------------------------------------------------------

def test_ridge_diagonal():
    # 2 w1^2 + 3 w2^2 on the simplex: 4 w1 = 6 w2
    np.testing.assert_allclose(ridge_weights(np.diag([1.0, 2.0]), 1.0).omega, [0.6, 0.4], atol=1e-9)


def test_ridge_large_penalty_is_uniform():
    np.testing.assert_allclose(ridge_weights(psd(3, 4), 1e8).omega, 0.25, atol=1e-7)


@given(psd_seeds)
def test_ridge_zero_is_plug_in(seed):
    G = psd(seed)
    assert ridge_weights(G, 0.0).omega.tolist() == plug_in_weights(G).omega.tolist()


def test_ridge_rejects_negative():
    with pytest.raises(InputError):
        ridge_weights(np.eye(2), -1.0)


# --- stabilized weights -----------------------------------------------------------

def test_stable_flat_valley():
    # feasible set at d_n = 0 is {(a, 1 - a, 0)}; least norm at a = 1/2
    w = stabilized_weights(np.diag([0.0, 0.0, 1.0]), 0.0)
    np.testing.assert_allclose(w.omega, [0.5, 0.5, 0.0], atol=1e-9)


@pytest.mark.parametrize("d_n", [0.05, 0.2, 0.6])
def test_stable_flat_valley_positive_tolerance(d_n):
    G = np.diag([0.0, 0.0, 1.0])
    w = stabilized_weights(G, d_n).omega
    # closed form: w3^2 <= d_n, then w1 = w2 = (1 - w3) / 2, least norm at w3 = min(sqrt(d_n), 1/3)
    w3 = min(math.sqrt(d_n), 1 / 3)
    np.testing.assert_allclose(w, [(1 - w3) / 2, (1 - w3) / 2, w3], atol=1e-8)
    assert w @ w <= grid_min_norm(G, d_n) + 1e-8


def test_stable_figure_gamma():
    # w'Gw = (w1 + w2)^2 + 2 (w4 - w5)^2, U = 0; on {w1 = w2 = 0, w4 = w5 = a}: w3 + 2a = 1,
    # least w3^2 + 2 a^2 at w3 = a = 1/3
    w = stabilized_weights(FIG1_GAMMA, 0.0)
    np.testing.assert_allclose(w.omega, FIG1_TARGET, atol=1e-9)
    assert w.diagnostics["U"] == pytest.approx(0.0, abs=1e-12)


def test_stable_vacuous_constraint():
    G = psd(11, 5)
    w = stabilized_weights(G, np.linalg.eigvalsh(G).max())
    np.testing.assert_allclose(w.omega, 0.2, atol=1e-12)


def test_stable_identical_sources():
    np.testing.assert_allclose(stabilized_weights(2.5 * np.ones((4, 4)), 0.0).omega, 0.25, atol=1e-10)


def test_stable_rejects_negative_tolerance():
    with pytest.raises(InputError):
        stabilized_weights(np.eye(2), -1e-3)


def test_stable_floors_indefinite_input():
    G = np.array([[1.0, 0.0], [0.0, -1e-9]])
    w = stabilized_weights(G, 0.0)
    assert w.diagnostics["psd_floored"]
    np.testing.assert_allclose(psd_floor(G), np.diag([1.0, 0.0]), atol=1e-15)


@given(psd_seeds, st.floats(0.0, 0.5))
def test_stable_feasible(seed, d_n):
    G = psd(seed)
    w = stabilized_weights(G, d_n)
    assert_simplex(w.omega)
    assert w.omega @ G @ w.omega <= w.diagnostics["U"] + d_n + 1e-9 * (1 + w.diagnostics["U"] + d_n)


@given(psd_seeds, st.floats(1e-4, 0.3))
def test_stable_beats_random_feasible_points(seed, d_n):
    G = psd(seed)
    w = stabilized_weights(G, d_n)
    bound = w.diagnostics["U"] + d_n
    rng = np.random.default_rng(seed)
    pts = rng.dirichlet(np.full(G.shape[0], 0.5), size=1000)
    feas = pts[np.einsum("ij,jk,ik->i", pts, G, pts) <= bound]
    if feas.size:
        assert w.omega @ w.omega <= np.min(np.sum(feas**2, axis=1)) + 1e-8


@given(psd_seeds, st.floats(0.001, 0.3))
def test_stable_matches_independent_projection(seed, d_n):
    w = stabilized_weights(psd(seed), d_n, certify=True)
    assert abs(w.diagnostics["certificate_norm_gap"]) <= 1e-6


@given(psd_seeds, st.floats(0.0, 0.3), st.floats(0.01, 100))
def test_stable_scale_equivariance(seed, d_n, c):
    G = psd(seed)
    a, b = stabilized_weights(G, d_n), stabilized_weights(c * G, c * d_n)
    assert b.objective == pytest.approx(c * a.objective, rel=1e-6, abs=1e-10 * c)
    np.testing.assert_allclose(b.omega, a.omega, atol=1e-8)


@given(psd_seeds, st.lists(st.floats(0.0, 0.5), min_size=2, max_size=6))
def test_stable_norm_non_increasing_in_tolerance(seed, tols):
    G = psd(seed)
    norms = [np.linalg.norm(stabilized_weights(G, d).omega) for d in sorted(tols)]
    assert all(b <= a + 1e-9 for a, b in zip(norms, norms[1:]))


@given(psd_seeds, st.floats(0.001, 0.2))
def test_stable_norm_against_grid(seed, d_n):
    G = psd(seed, int(np.random.default_rng(seed).integers(2, 4)))
    w = stabilized_weights(G, d_n)
    assert w.omega @ w.omega <= grid_min_norm(G, w.diagnostics["U"] + d_n) + 1e-6


def test_make_weights_dispatch():
    G = np.diag([1.0, 2.0])
    assert make_weights("plugin", G).method is Method.PLUGIN
    assert make_weights("ridge", G, lam=1.0).lam == 1.0
    assert make_weights("stable", G, d_n=0.1).d_n == 0.1
    assert make_weights("oracle", G).method is Method.ORACLE


# --- tolerance ------------------------------------------------------------------

def test_tolerance_equal_halves():
    G = psd(1, 3)
    assert select_tolerance(G, G, G, 40).d_n == 0.0


def test_tolerance_clipped():
    G = np.eye(2)
    tol = select_tolerance(5 * G, -5 * G, G, 40, 0.01)
    assert tol.ratio > 1
    assert tol.d_n == pytest.approx(0.01 * math.log(40))


def test_tolerance_arithmetic():
    G = np.eye(2)
    tol = select_tolerance(G, 0.5 * G, G, 40, 0.01)
    assert tol.ratio == pytest.approx(0.5)
    assert tol.d_n == pytest.approx(0.01844, abs=1e-5)


def test_tolerance_zero_gamma():
    with pytest.raises(ZeroGamma):
        select_tolerance(np.eye(2), np.eye(2), np.zeros((2, 2)), 40)


def test_tolerance_constant_range():
    with pytest.raises(InputError):
        select_tolerance(np.eye(2), np.eye(2), np.eye(2), 40, C_d=2.0)


# --- stability experiment ------------------------------------------------------------

@pytest.fixture(scope="module")
def stability():
    return stability_experiment((100, 20000), seeds=range(20))


def test_log_rule_converges(stability):
    assert stability.median("log(n)/n", 20000) < 0.1
    assert stability.median("log(n)/n", 20000) < stability.median("log(n)/n", 100)


def test_plug_in_does_not_converge(stability):
    assert stability.median("plugin", 20000) > 0.2


def test_slow_rule_plateaus(stability):
    assert stability.median("1/log(n)", 20000) > stability.median("log(n)/n", 20000)


def test_stability_rows_layout(stability):
    rows = list(stability.rows())
    assert {r["rule"] for r in rows} == {"plugin", "1/n^2", "log(n)/n", "1/log(n)", "adaptive"}
    assert all(r["q25"] <= r["median_loss"] <= r["q75"] for r in rows)
