import numpy as np
import pytest
from hypothesis import given, strategies as st

from robust_ode.errors import GridMismatch, InputError
from robust_ode.gamma import estimate_gamma, gram_from_curves, oracle_gamma, split_gamma, split_indices, trim_mask
from robust_ode.ode_models import SimulationConfig, SourceObservations, TimeGrid, generate_sources
from robust_ode.smoothing import SmoothedSource, SmoothingConfig, smooth_sources

from oracles import trapezoid


def fake_source(d_hat, grid):
    d_hat = np.atleast_2d(d_hat)
    z = np.zeros_like(d_hat)
    return SmoothedSource(z, d_hat, z, grid, SmoothingConfig(h=0.1), np.zeros(grid.n, bool), grid.n)


def random_sources(seed, K=4, p=2, m=30):
    rng = np.random.default_rng(seed)
    g = TimeGrid.uniform(m, 3.0)
    return [fake_source(rng.standard_normal((p, m)), g) for _ in range(K)], g


def test_identical_curves_give_rank_one():
    g = TimeGrid.uniform(50, 1.0)
    d = np.vstack([np.sin(3 * g.times), g.times**2])
    G = estimate_gamma([fake_source(d, g), fake_source(d, g)], trim=0.0)
    c = sum(trapezoid(dj**2, g.times) for dj in d)
    np.testing.assert_allclose(G.entries, c * np.ones((2, 2)), rtol=1e-12)


def test_sin_cos_orthogonal():
    g = TimeGrid.uniform(4001, 2 * np.pi)
    G = estimate_gamma([fake_source(np.sin(g.times), g), fake_source(np.cos(g.times), g)], trim=0.0)
    assert abs(G.entries[0, 1]) < 1e-4
    assert G.entries[0, 0] == pytest.approx(np.pi, rel=1e-4)


def test_single_source_energy():
    g = TimeGrid.uniform(21, 2.0)
    G = estimate_gamma([fake_source(np.vstack([g.times, 1 + 0 * g.times]), g)], trim=0.0)
    assert G.entries.shape == (1, 1)
    assert G.entries[0, 0] == pytest.approx(8 / 3 + 2, rel=1e-2)


def test_trim_window():
    g = TimeGrid.uniform(101, 2.0)
    m = trim_mask(g, 0.05)
    assert g.times[m][0] == pytest.approx(0.1) and g.times[m][-1] == pytest.approx(1.9)
    with pytest.raises(InputError):
        trim_mask(g, 0.25)


def test_grid_mismatch():
    a = fake_source(np.ones(10), TimeGrid.uniform(10, 1.0))
    b = fake_source(np.ones(11), TimeGrid.uniform(11, 1.0))
    with pytest.raises(GridMismatch):
        estimate_gamma([a, b])


def test_dimension_mismatch():
    g = TimeGrid.uniform(10, 1.0)
    with pytest.raises(GridMismatch):
        estimate_gamma([fake_source(np.ones((1, 10)), g), fake_source(np.ones((2, 10)), g)])


@given(st.integers(0, 10_000))
def test_symmetric_and_psd(seed):
    sources, _ = random_sources(seed)
    G = estimate_gamma(sources).entries
    assert np.array_equal(G, G.T)
    lam = np.linalg.eigvalsh(G)
    assert lam.min() >= -1e-8 * lam.max()


@given(st.integers(0, 10_000), st.permutations(range(4)))
def test_permutation_equivariance(seed, perm):
    sources, _ = random_sources(seed)
    G = estimate_gamma(sources).entries
    Gp = estimate_gamma([sources[i] for i in perm]).entries
    np.testing.assert_allclose(Gp, G[np.ix_(perm, perm)], rtol=1e-12, atol=1e-12)


@given(st.integers(0, 10_000), st.floats(-10, 10))
def test_quadratic_scaling(seed, c):
    sources, g = random_sources(seed)
    G = estimate_gamma(sources).entries
    scaled = [fake_source(c * s.d_hat, g) for s in sources]
    np.testing.assert_allclose(estimate_gamma(scaled).entries, c * c * G, rtol=1e-10, atol=1e-10)


def test_gram_from_curves_matches_loop():
    rng = np.random.default_rng(3)
    t = np.sort(rng.uniform(0, 1, 15))
    curves = rng.standard_normal((3, 2, 15))
    G = gram_from_curves(curves, t)
    for k in range(3):
        for l in range(3):
            ref = sum(trapezoid(curves[k, j] * curves[l, j], t) for j in range(2))
            assert G[k, l] == pytest.approx(ref, rel=1e-12)


# --- split-sample pair ----------------------------------------------------------

def test_split_indices_sizes():
    a, b = split_indices(41)
    assert (a.size, b.size) == (21, 20)
    assert np.array_equal(np.sort(np.concatenate([a, b])), np.arange(41))


def _zero_noise_split(n):
    obs = generate_sources(SimulationConfig.default("enzyme", K=5, noise_sd=0.0, n=n))
    full = smooth_sources(obs)
    g1, g2 = split_gamma(obs, SmoothingConfig(h=full[0].config.h))
    oracle = oracle_gamma(obs.latent.dX, obs.grid).entries
    return np.linalg.norm(g1.entries - g2.entries, 2), np.linalg.norm(estimate_gamma(full).entries - oracle, 2)


def test_split_zero_noise_within_discretization_error():
    diff, disc = _zero_noise_split(40)
    assert diff <= disc


@pytest.mark.parametrize("n", [80, 160])
def test_split_zero_noise_halves_agree(n):
    assert _zero_noise_split(n)[0] <= 1e-2


@pytest.mark.xfail(strict=True, reason="20-point halves under-resolve the initial transient (measured 0.138)")
def test_split_zero_noise_absolute_bound_at_defaults():
    assert _zero_noise_split(40)[0] <= 1e-2


def test_split_duplicate_sources_rank_deficient():
    obs = generate_sources(SimulationConfig.default("enzyme", K=1, seed=2))
    dup = SourceObservations([obs.Y[0]] * 3, [obs.grid] * 3)
    for G in split_gamma(dup, SmoothingConfig(h=0.1)):
        lam = np.linalg.eigvalsh(G.entries)
        assert lam[0] <= 1e-6 * lam[-1]


def test_split_needs_sixteen_points():
    obs = generate_sources(SimulationConfig.default("enzyme", K=2, n=15))
    with pytest.raises(InputError):
        split_gamma(obs, SmoothingConfig(h=0.3))


def test_estimate_converges_to_oracle():
    def median_error(n):
        errs = []
        for seed in range(50):
            obs = generate_sources(SimulationConfig.default("enzyme", K=5, n=n, seed=seed))
            G = estimate_gamma(smooth_sources(obs))
            errs.append(np.linalg.norm(G.entries - oracle_gamma(obs.latent.dX, obs.grid).entries))
        return np.median(errs)

    assert median_error(160) < median_error(40)
