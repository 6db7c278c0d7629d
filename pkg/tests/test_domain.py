import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fraclab import fields
from fraclab.domain import AnalyticField, DomainSpec, GridFunction, build_grid, distance_to_complement, sample
from fraclab.errors import ConfigurationError, EvaluationError


def test_interval_nodes_are_cell_midpoints():
    g = build_grid(DomainSpec.interval(0, 1), 4, allow_coarse=True)
    np.testing.assert_allclose(g.nodes, [0.125, 0.375, 0.625, 0.875], rtol=0, atol=1e-15)
    assert g.h == 0.25


def test_interval_eight_nodes():
    g = build_grid(DomainSpec.interval(-1, 1), 8)
    assert g.size == 8 and g.h == 0.25


def test_disc_nodes_strictly_inside():
    g = build_grid(DomainSpec.disc(1.0), 16)
    assert np.all(np.linalg.norm(g.nodes, axis=1) < 1.0)


def test_small_n_rejected():
    with pytest.raises(ConfigurationError):
        build_grid(DomainSpec.interval(0, 1), 4)


@pytest.mark.parametrize("kw", [dict(kind="interval", a=1.0, b=0.0), dict(kind="disc", radius=-1.0),
                                dict(kind="square")])
def test_bad_domains(kw):
    with pytest.raises(ConfigurationError):
        DomainSpec(**kw)


def test_interval_volumes_exact():
    g = build_grid(DomainSpec.interval(-1, 2), 48)
    assert math.fsum(g.volumes) == pytest.approx(3.0, abs=1e-14)


@pytest.mark.parametrize("n", [8, 16, 32])
def test_disc_volumes_within_two_percent(n):
    g = build_grid(DomainSpec.disc(1.0), n)
    assert abs(g.volumes.sum() / math.pi - 1) < 0.02


def test_distance_examples():
    g = build_grid(DomainSpec.interval(0, 1), 4, allow_coarse=True)
    d = distance_to_complement(g).values
    assert d[0] == 0.125
    g = build_grid(DomainSpec.interval(0, 1), 8)
    # node 0.5 is a cell edge for even n; use an odd count to hit it
    g = build_grid(DomainSpec.interval(0, 1), 9)
    k = int(np.argmin(abs(g.nodes - 0.5)))
    assert distance_to_complement(g).values[k] == pytest.approx(0.5, abs=1e-15)
    assert float(DomainSpec.disc(1.0).distance(np.array([0.6, 0.0]))) == pytest.approx(0.4, abs=1e-15)


@pytest.mark.parametrize("dom,n", [(DomainSpec.interval(-1, 1), 32), (DomainSpec.disc(1.0), 12)])
def test_distance_is_one_lipschitz(dom, n):
    g = build_grid(dom, n)
    d = distance_to_complement(g).values
    x = g.nodes.reshape(g.size, -1)
    gaps = np.linalg.norm(x[:, None, :] - x[None, :, :], axis=-1)
    assert np.all(np.abs(d[:, None] - d[None, :]) <= gaps + 1e-14)
    assert np.all(d > 0)


def test_refinement_nesting():
    dom = DomainSpec.interval(-1, 1)
    coarse, fine = build_grid(dom, 16), build_grid(dom, 32)
    assert fine.h == coarse.h / 2
    # every coarse cell is the union of two fine cells whose midpoints straddle the coarse node
    for x in coarse.nodes:
        assert np.sum(np.abs(fine.nodes - x) == fine.h / 2) == 2


def test_sample_examples():
    g = build_grid(DomainSpec.interval(0, 1), 4, allow_coarse=True)
    assert np.all(sample(fields.zero(), g).values == 0)
    assert sample(fields.identity(), g).values[1] == 0.375
    g = build_grid(DomainSpec.interval(-1, 1), 9)
    k = int(np.argmin(abs(g.nodes)))
    assert sample(fields.ball_profile(0.5), g).values[k] == 1.0


def test_sample_rejects_non_finite():
    g = build_grid(DomainSpec.interval(0, 1), 8)
    bad = AnalyticField(lambda x: np.where(x == g.nodes[3], np.inf, 0.0))
    with pytest.raises(EvaluationError):
        sample(bad, g)


@given(st.floats(-5, 5), st.floats(-5, 5))
def test_sample_is_linear(a, b):
    g = build_grid(DomainSpec.interval(-1, 1), 16)
    f, h = fields.bump(0.2, 0.5), fields.ball_profile(0.3)
    lhs = sample(a * f + b * h, g).values
    rhs = a * sample(f, g).values + b * sample(h, g).values
    # the combined field evaluates a*f(x) + b*h(x) in the same order
    assert np.array_equal(lhs, rhs)


def test_grid_function_checks_length_and_finiteness():
    g = build_grid(DomainSpec.interval(0, 1), 8)
    with pytest.raises(ConfigurationError):
        GridFunction(g, np.zeros(7))
    with pytest.raises((ConfigurationError, EvaluationError)):
        GridFunction(g, np.full(8, np.nan))


def test_dilated_domain_and_field():
    dom = DomainSpec.interval(-1, 2).dilate(2.0)
    assert (dom.a, dom.b) == (-2.0, 4.0)
    f = fields.bump(0.5, 1.0).dilate(2.0)
    assert float(f(1.0)) == pytest.approx(float(fields.bump(0.5, 1.0)(0.5)), rel=1e-15)
