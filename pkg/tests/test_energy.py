import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fraclab.domain import DomainSpec, GridFunction, build_grid, distance_to_complement
from fraclab.energy import (
    SolveOptions,
    apply_operator,
    discrete_energy,
    energy_change,
    residual,
    seminorm_energy,
    solve,
    torsion,
)
from fraclab.errors import ConfigurationError
from fraclab.kernel import OperatorParams, assemble_weights

INTERVAL = DomainSpec.interval(-1, 1)


def _setup(p, s, n=32, dom=INTERVAL):
    g = build_grid(dom, n)
    return g, assemble_weights(g, OperatorParams(p, s))


def _zero(g):
    return GridFunction(g, np.zeros(g.size))


# ---------------------------------------------------------------------------
# energy and residual


def test_zero_energy():
    g, w = _setup(2.5, 0.4)
    assert discrete_energy(_zero(g), w, GridFunction(g, np.ones(g.size))) == 0.0


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_seminorm_homogeneity(p, rng):
    g, w = _setup(p, 0.5)
    u = GridFunction(g, rng.normal(size=g.size))
    assert seminorm_energy(3.0 * u.values, w) == pytest.approx(3.0**p * seminorm_energy(u, w), rel=1e-13)


@pytest.mark.parametrize("p,s", [(2.0, 0.5), (3.0, 0.3), (1.5, 0.7)])
def test_spike_energy_matches_direct_sum(p, s):
    g, w = _setup(p, s, 24)
    k = 7
    u = np.zeros(g.size)
    u[k] = 1.0
    # direct double loop over the assembled weights
    total = 0.0
    for i in range(g.size):
        for j in range(i + 1, g.size):
            total += 2.0 * w.W[i, j] * abs(u[i] - u[j]) ** p
        total += 2.0 * w.E[i] * abs(u[i]) ** p
    expected = (2.0 * w.W[k].sum() + 2.0 * w.E[k]) / p
    assert total / p == pytest.approx(expected, rel=1e-13)
    assert discrete_energy(GridFunction(g, u), w, _zero(g)) == pytest.approx(expected, rel=1e-13)


def test_residual_of_zero():
    g, w = _setup(2.0, 0.5)
    assert np.all(residual(_zero(g), w, _zero(g)).values == 0.0)


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_operator_homogeneity(p, rng):
    g, w = _setup(p, 0.5)
    u = rng.normal(size=g.size)
    np.testing.assert_allclose(apply_operator(2.0 * u, w), 2.0 ** (p - 1) * apply_operator(u, w),
                               rtol=1e-14, atol=0)


@given(p=st.floats(1.3, 4.0), s=st.floats(0.1, 0.9), seed=st.integers(0, 2**31))
def test_residual_is_gradient(p, s, seed):
    rng = np.random.default_rng(seed)
    g, w = _setup(p, s, 16)
    u = GridFunction(g, rng.normal(size=g.size))
    f = GridFunction(g, rng.normal(size=g.size))
    phi = rng.normal(size=g.size)
    eps = 1e-5
    plus = GridFunction(g, u.values + eps * phi)
    minus = GridFunction(g, u.values - eps * phi)
    fd = (discrete_energy(plus, w, f) - discrete_energy(minus, w, f)) / (2 * eps)
    exact = float(np.dot(residual(u, w, f).values * g.volumes, phi))
    assert fd == pytest.approx(exact, rel=1e-6, abs=1e-9)


@given(p=st.floats(1.2, 4.0), seed=st.integers(0, 2**31))
def test_strict_convexity(p, seed):
    rng = np.random.default_rng(seed)
    g, w = _setup(p, 0.5, 16)
    f = GridFunction(g, rng.normal(size=g.size))
    u, v = rng.normal(size=g.size), rng.normal(size=g.size)
    J = lambda z: discrete_energy(GridFunction(g, z), w, f)
    assert J(0.5 * (u + v)) < 0.5 * (J(u) + J(v))


def test_energy_change_matches_difference(rng):
    g, w = _setup(3.0, 0.4)
    u, d = rng.normal(size=g.size), rng.normal(size=g.size)
    f = GridFunction(g, rng.normal(size=g.size))
    direct = discrete_energy(GridFunction(g, u + d), w, f) - discrete_energy(GridFunction(g, u), w, f)
    assert energy_change(u, d, w, f) == pytest.approx(direct, rel=1e-10)


def test_grid_mismatch():
    g, w = _setup(2.0, 0.5)
    other = build_grid(INTERVAL, 16)
    with pytest.raises(ConfigurationError):
        residual(_zero(other), w, _zero(other))


# ---------------------------------------------------------------------------
# solver


def test_options_validation():
    for kw in [dict(tol=0.0), dict(max_iter=0), dict(step="newton"), dict(fixed_step=-1.0)]:
        with pytest.raises(ConfigurationError):
            SolveOptions(**kw)


def test_zero_source_gives_zero():
    g, w = _setup(2.5, 0.5)
    u, rep = solve(w, _zero(g))
    assert np.all(u.values == 0.0) and rep.converged


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_solver_contract(p):
    g, w = _setup(p, 0.5, 64)
    u, rep = solve(w, GridFunction(g, np.ones(g.size)))
    assert rep.converged and rep.residual <= rep.tolerance
    assert np.max(np.abs(residual(u, w, GridFunction(g, np.ones(g.size))).values)) == pytest.approx(
        rep.residual, rel=1e-12)
    assert np.all(np.diff(rep.trajectory) <= 0)
    assert rep.decrements.size > 0 and np.all(rep.decrements < 0)


def test_solver_is_deterministic():
    g, w = _setup(2.5, 0.6, 64)
    f = GridFunction(g, np.ones(g.size))
    u1, _ = solve(w, f)
    u2, _ = solve(w, f)
    assert np.array_equal(u1.values, u2.values)


def test_solution_homogeneity():
    p, lam = 3.0, 2.0
    g, w = _setup(p, 0.5, 64)
    f = np.cos(g.nodes) + 0.5
    u1, r1 = solve(w, GridFunction(g, f))
    u2, r2 = solve(w, GridFunction(g, lam ** (p - 1) * f))
    np.testing.assert_allclose(u2.values, lam * u1.values, rtol=1e-8)


@pytest.mark.parametrize("step", ["fixed", "reweighted", "adaptive-two-point"])
def test_strategies_agree(step):
    g, w = _setup(2.5, 0.5, 32)
    f = GridFunction(g, np.ones(g.size))
    ref, _ = solve(w, f, SolveOptions(tol=1e-12))
    u, rep = solve(w, f, SolveOptions(tol=1e-12, step=step))
    assert rep.converged and rep.strategy == step
    np.testing.assert_allclose(u.values, ref.values, rtol=1e-8)


def test_iteration_cap_reports_failure():
    g, w = _setup(3.0, 0.5, 64)
    _, rep = solve(w, GridFunction(g, np.ones(g.size)), SolveOptions(max_iter=2))
    assert not rep.converged and rep.message


def test_reference_solution_p2(torsion_cache):
    u, rep, _ = torsion_cache(2.0, 0.5, 512, True)
    x = u.grid.nodes
    assert rep.converged
    assert np.max(np.abs(u.values - np.sqrt(1 - x**2))) <= 5e-3
    centre = np.abs(x) == np.min(np.abs(x))
    assert np.all(np.abs(u.values[centre] - 1.0) <= 5e-3)


@pytest.mark.parametrize("p,s", [(1.5, 0.3), (2.0, 0.5), (3.0, 0.7)])
def test_torsion_positive_and_even(p, s, torsion_cache):
    u, rep, _ = torsion_cache(p, s, 128, False)
    assert rep.converged
    assert np.all(u.values > 0)
    gap = np.max(np.abs(u.values - u.values[::-1]))
    assert gap <= 10 * SolveOptions().tol * u.sup_norm() + 1e-15


def test_torsion_self_convergence(torsion_cache):
    a, _, _ = torsion_cache(3.0, 0.5, 128, False)
    b, _, _ = torsion_cache(3.0, 0.5, 256, False)
    # x = 0 is a cell edge for even n; compare the centre values by their maxima
    assert abs(a.values.max() / b.values.max() - 1) < 0.02


def test_torsion_on_disc():
    u, rep = torsion(DomainSpec.disc(1.0), OperatorParams(2.0, 0.5), 16)
    assert rep.converged and np.all(u.values > 0)
    assert np.all(distance_to_complement(u.grid).values > 0)
