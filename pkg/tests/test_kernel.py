import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fraclab import fields
from fraclab.domain import AnalyticField, DomainSpec, GridFunction, build_grid
from fraclab.errors import (
    ConfigurationError,
    ConvergenceError,
    DivergenceError,
    GeometryError,
    PreconditionError,
    SingularCaseError,
)
from fraclab.kernel import (
    EpsilonSchedule,
    OperatorParams,
    assemble_weights,
    cell_pair_weight,
    eps_limit_series,
    eval_pointwise,
    exterior_weight,
    half_line_closure,
    perturbation_rhs,
    signed_power,
    tail,
)

# Frozen values of independent mpmath quadratures (30 digits, tanh-sinh),
# of the double integrals over the two cells and the radial exterior integral.
SEPARATED_CELLS = 0.287682072451780927439  # [0,1/4] x [1/2,3/4], kernel |x-y|^-2
ADJACENT_CELLS = 1.17157287525380988828  # [0,1/4] x [1/4,1/2], kernel |x-y|^-1.5
DISC_EXTERIOR = 6.28318530717958647693  # int_{|y|>1} |y|^-3 dy


# ---------------------------------------------------------------------------
# parameters and the signed power


def test_params_validation():
    for p, s in [(1.0, 0.5), (0.5, 0.5), (2.0, 0.0), (2.0, 1.0), (math.inf, 0.5)]:
        with pytest.raises(ConfigurationError):
            OperatorParams(p, s)


@pytest.mark.parametrize("p,s,valid", [(2, 0.9, True), (3, 0.99, True), (1.5, 0.6, True),
                                       (1.5, 0.9, False), (1.2, 0.4, False)])
def test_singular_flag(p, s, valid):
    P = OperatorParams(p, s)
    assert P.pointwise_valid is valid
    assert P.pointwise_valid == (p >= 2 or s < 2 * (p - 1) / p)


def test_signed_power_examples():
    assert signed_power(2.0, 2.0) == 4.0
    assert signed_power(-2.0, 2.0) == -4.0
    assert signed_power(0.5, 0.5) == pytest.approx(0.7071067811865476, rel=1e-15)
    assert signed_power(0.0, 0.3) == 0.0


@given(st.floats(-1e6, 1e6), st.floats(0.05, 5.0))
def test_signed_power_is_odd(a, q):
    assert signed_power(-a, q) == -signed_power(a, q)


def test_elementary_inequality(rng):
    # a^(p-1) - (a-b)^(p-1) >= 2^(2-p) b^(p-1) for a >= b >= 0, p >= 2
    for p in (2.0, 2.5, 3.0, 4.0, 5.7):
        a = rng.uniform(0, 10, 10_000)
        b = a * rng.uniform(0, 1, 10_000)
        lhs = signed_power(a, p - 1) - signed_power(a - b, p - 1)
        rhs = 2.0 ** (2 - p) * signed_power(b, p - 1)
        assert np.all(lhs >= rhs * (1 - 1e-12))


# ---------------------------------------------------------------------------
# weights


def test_separated_cells_match_oracle():
    w = cell_pair_weight((0, 0.25), (0.5, 0.75), OperatorParams(2, 0.5))
    assert w == pytest.approx(SEPARATED_CELLS, rel=1e-13)
    assert w == pytest.approx(math.log(4 / 3), rel=1e-13)


def test_adjacent_cells_match_oracle():
    w = cell_pair_weight((0, 0.25), (0.25, 0.5), OperatorParams(2, 0.25))
    assert w == pytest.approx(ADJACENT_CELLS, rel=1e-6)


def test_adjacent_cells_regularised_when_ps_at_least_one():
    # ps = 1: the pair integral over |x - y| > h/2 is ln 2 + (1 - ln 2) = 1
    assert cell_pair_weight((0, 0.25), (0.25, 0.5), OperatorParams(2, 0.5)) == pytest.approx(1.0, rel=1e-13)


def test_overlapping_cells_rejected():
    with pytest.raises(GeometryError):
        cell_pair_weight((0, 0.5), (0.25, 0.75), OperatorParams(2, 0.5))


@pytest.mark.parametrize("lam", [2.0, 0.5])
@pytest.mark.parametrize("p,s", [(2, 0.5), (3, 0.4), (1.5, 0.7)])
def test_pair_weight_dilation(lam, p, s):
    P = OperatorParams(p, s)
    a, b = np.array([0.1, 0.3]), np.array([0.45, 0.65])
    ratio = cell_pair_weight(lam * a, lam * b, P) / cell_pair_weight(a, b, P)
    assert ratio == pytest.approx(lam ** (2 - (1 + P.ps)), rel=1e-12)


def test_exterior_weight_examples():
    P = OperatorParams(2, 0.5)
    assert float(exterior_weight(0.5, DomainSpec.interval(0, 1), P)) == pytest.approx(4.0, rel=1e-15)
    assert float(exterior_weight(np.zeros(2), DomainSpec.disc(1.0), P)) == pytest.approx(DISC_EXTERIOR, rel=1e-10)
    h = 1 / 64
    near, far = exterior_weight(np.array([h / 2, 3 * h / 2]), DomainSpec.interval(0, 1), P)
    assert near > far


def test_exterior_weight_on_boundary_rejected():
    with pytest.raises(GeometryError):
        exterior_weight(0.0, DomainSpec.interval(0, 1), OperatorParams(2, 0.5))


def test_assemble_small_interval():
    g = build_grid(DomainSpec.interval(0, 1), 4, allow_coarse=True)
    w = assemble_weights(g, OperatorParams(2, 0.5))
    assert w.W.shape == (4, 4)
    assert np.array_equal(w.W, w.W.T)
    assert np.all(np.diag(w.W) == 0)


def test_assemble_interval_profile():
    g = build_grid(DomainSpec.interval(-1, 1), 128)
    w = assemble_weights(g, OperatorParams(2, 0.5))
    assert np.all(np.isfinite(w.W)) and np.all(w.W >= 0) and np.all(w.E >= 0)
    half = w.E[64:]
    assert np.all(np.diff(half) > 0)  # increasing toward the right endpoint
    assert np.allclose(w.E, w.E[::-1], rtol=1e-13)


@pytest.mark.parametrize("closure", ["barrier", "midpoint"])
def test_assembly_dilation_1d(closure):
    P = OperatorParams(3, 0.4)
    a = assemble_weights(build_grid(DomainSpec.interval(-1, 1), 16), P, closure)
    b = assemble_weights(build_grid(DomainSpec.interval(-2, 2), 16), P, closure)
    m = a.W > 0
    np.testing.assert_allclose(b.W[m] / a.W[m], 2 ** (1 - P.ps), rtol=1e-12)
    np.testing.assert_allclose(b.E / a.E, 2 ** (1 - P.ps), rtol=1e-12)


def test_assembly_dilation_2d():
    P = OperatorParams(3, 0.4)
    a = assemble_weights(build_grid(DomainSpec.disc(1.0), 8), P)
    b = assemble_weights(build_grid(DomainSpec.disc(2.0), 8), P)
    m = a.W > 0
    np.testing.assert_allclose(b.W[m] / a.W[m], 2 ** (2 - P.ps), rtol=1e-10)
    np.testing.assert_allclose(b.E / a.E, 2 ** (2 - P.ps), rtol=1e-10)


def test_assembly_disc_symmetric_and_deterministic():
    g = build_grid(DomainSpec.disc(1.0), 12)
    P = OperatorParams(2, 0.5)
    w1, w2 = assemble_weights(g, P), assemble_weights(g, P)
    assert np.array_equal(w1.W, w2.W) and np.array_equal(w1.E, w2.E)
    assert np.array_equal(w1.W, w1.W.T)
    assert np.all(np.diag(w1.W) == 0)


def test_barrier_closure_rejected_on_disc():
    with pytest.raises(ConfigurationError):
        assemble_weights(build_grid(DomainSpec.disc(1.0), 8), OperatorParams(2, 0.5), "barrier")


# ---------------------------------------------------------------------------
# tail


def test_tail_examples():
    P = OperatorParams(2, 0.5)
    assert tail(fields.zero(), 0.0, 1.0, P) == 0.0
    assert tail(fields.constant(1.0), 0.0, 1.0, P) == pytest.approx(2.0, rel=1e-10)
    assert tail(fields.indicator(2.0, 3.0), 0.0, 1.0, P) == pytest.approx(1 / 6, rel=1e-10)


@pytest.mark.parametrize("p,s", [(3, 0.5), (1.5, 0.7)])
def test_tail_of_constant_closed_form(p, s):
    P = OperatorParams(p, s)
    expected = (2.0 / P.ps) ** (1.0 / P.q)
    assert tail(fields.constant(1.0), 0.3, 0.7, P) == pytest.approx(expected, rel=1e-9)


@pytest.mark.parametrize("lam", [2.0, 0.5])
def test_tail_dilation_invariance(lam):
    P = OperatorParams(2.5, 0.6)
    u = fields.bump(1.5, 0.5) + fields.bump(-2.0, 0.3, 2.0)
    base = tail(u, 0.2, 1.0, P)
    assert tail(u.dilate(lam), 0.2 * lam, lam, P) == pytest.approx(base, rel=1e-9)


def test_tail_grid_function_ignores_ball():
    g = build_grid(DomainSpec.interval(-1, 1), 64)
    P = OperatorParams(2, 0.5)
    u = GridFunction(g, np.where(np.abs(g.nodes) < 0.5, 7.0, 0.0))
    assert tail(u, 0.0, 0.5, P) == 0.0


def test_tail_growth_divergence():
    P = OperatorParams(2, 0.4)
    with pytest.raises(DivergenceError):
        tail(fields.identity(), 0.0, 1.0, P)


# ---------------------------------------------------------------------------
# pointwise evaluation


@pytest.mark.parametrize("x", [0.25, 0.5, 1.0])
@pytest.mark.parametrize("p,s", [(2, 0.5), (3, 0.5), (3, 0.8), (1.5, 0.4)])
def test_half_line_power_is_harmonic(x, p, s):
    # with the far field pushed to 1e12 the value itself is small, not just within its bar
    r = eval_pointwise(fields.half_line_power(s), x, OperatorParams(p, s), far_cutoff=1e12)
    assert abs(r.value) <= 1e-4
    assert abs(r.value) <= r.error_bar
    assert r.error_bar < 2e-4


def test_ball_profile_value_1d():
    P = OperatorParams.classical(2, 0.5, 1)
    r = eval_pointwise(fields.ball_profile(0.5), 0.0, P)
    assert abs(r.value - 1.0) <= 1e-4
    assert r.tail_exact


@pytest.mark.parametrize("x", [np.zeros(2), np.array([0.3, 0.2])])
def test_ball_profile_value_2d(x):
    P = OperatorParams.classical(2, 0.5, 2)
    r = eval_pointwise(fields.ball_profile(0.5, 1.0, 2), x, P)
    assert abs(r.value - fields.ball_torsion_constant(2, 0.5)) <= 1e-6


def test_constant_field_gives_exact_zero():
    r = eval_pointwise(fields.constant(3.7), 0.2, OperatorParams(3, 0.5))
    assert r.value == 0.0


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_pointwise_homogeneity(p):
    P = OperatorParams(p, 0.4)
    b = fields.bump(0.1, 0.8)
    base = eval_pointwise(b, 0.3, P).value
    assert eval_pointwise(2.0 * b, 0.3, P).value == pytest.approx(2 ** (p - 1) * base, rel=1e-12)


@pytest.mark.parametrize("lam", [2.0, 0.5])
def test_pointwise_dilation(lam):
    P = OperatorParams(2.5, 0.5)
    b = fields.bump(0.1, 0.8)
    base = eval_pointwise(b, 0.3, P).value
    scaled = eval_pointwise(b.dilate(lam), 0.3 * lam, P).value
    assert scaled == pytest.approx(lam ** -P.ps * base, rel=1e-9)


def test_odd_field_gives_zero():
    x0 = 0.3
    odd = AnalyticField(lambda y: np.tanh(y - x0) + 2.0, growth=0.0, growth_const=3.0)
    r = eval_pointwise(odd, x0, OperatorParams(2.5, 0.5))
    assert abs(r.value) <= r.error_bar + 1e-14


def test_singular_case_needs_override():
    P = OperatorParams(1.5, 0.9)
    b = fields.bump(0.0, 0.8)
    with pytest.raises(SingularCaseError):
        eval_pointwise(b, 0.1, P)
    with pytest.raises(ConvergenceError) as info:
        eval_pointwise(b, 0.1, P, override_singular=True)
    assert not info.value.diagnostics.decaying


def test_schedule_validation():
    with pytest.raises(ConfigurationError):
        EpsilonSchedule.geometric(1.0, levels=5)
    with pytest.raises(ConfigurationError):
        EpsilonSchedule([1.0, 0.5, 0.5] + [0.1 * 0.5**k for k in range(12)])
    e = EpsilonSchedule.geometric(1.0)
    assert np.all(np.diff(e.eps) < 0) and np.all(np.asarray(e.eps) > 0)


# ---------------------------------------------------------------------------
# truncated series


def test_series_of_zero():
    ser = eps_limit_series(fields.zero(), 0.5, OperatorParams(2, 0.5))
    assert np.all(ser.values == 0.0) and ser.converged


def test_series_half_line_converges_to_zero():
    P = OperatorParams(2, 0.5)
    ser = eps_limit_series(fields.half_line_power(0.5), 0.5, P, far_cutoff=1e12)
    assert ser.converged and ser.cauchy_tail < 1e-5
    assert abs(ser.limit) < 1e-4
    pv = eval_pointwise(fields.half_line_power(0.5), 0.5, P, far_cutoff=1e12)
    assert ser.limit == pytest.approx(pv.value, abs=pv.error_bar)


def test_series_flags_singular_regime():
    ser = eps_limit_series(fields.bump(0.0, 0.8), 0.1, OperatorParams(1.5, 0.9))
    assert not ser.converged and not ser.decaying


# ---------------------------------------------------------------------------
# perturbation


def test_perturbation_examples():
    U = DomainSpec.interval(-1, 1)
    P = OperatorParams(2, 0.5)
    u = fields.half_line_power(0.5)
    assert perturbation_rhs(u, fields.bump(2.5, 0.5, 0.0), 0.0, P, U) == 0.0
    h = perturbation_rhs(u, fields.indicator(2.0, 3.0), 0.0, P, U)
    assert h == pytest.approx(-1 / 3, rel=1e-12)
    h2 = perturbation_rhs(fields.bump(0.0, 0.9), fields.indicator(2.0, 3.0), 0.0, P, U)
    assert h2 == pytest.approx(-1 / 3, rel=1e-12)  # linear case: independent of u


def test_perturbation_consistency():
    U = DomainSpec.interval(-1, 1)
    P = OperatorParams(3, 0.5)
    u, v = fields.half_line_power(0.5), fields.bump(2.5, 0.5)
    a = eval_pointwise(u + v, 0.5, P, far_cutoff=1e12)
    b = eval_pointwise(u, 0.5, P, far_cutoff=1e12)
    h = perturbation_rhs(u, v, 0.5, P, U)
    assert abs(a.value - b.value - h) <= a.error_bar + b.error_bar


def test_perturbation_support_must_avoid_domain():
    with pytest.raises(PreconditionError):
        perturbation_rhs(fields.zero(), fields.bump(1.0, 0.5), 0.0, OperatorParams(2, 0.5),
                         DomainSpec.interval(-1, 1))


def test_auto_closure_falls_back_where_barrier_fails():
    g = build_grid(DomainSpec.interval(-1, 1), 16)
    with pytest.raises(ConfigurationError):
        half_line_closure(1.75, 0.5)
    w = assemble_weights(g, OperatorParams(1.75, 0.5))
    assert w.closure == "midpoint" and np.all(w.E > 0)
    assert assemble_weights(g, OperatorParams(2.0, 0.5)).closure == "barrier"
