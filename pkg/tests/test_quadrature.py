import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fraclab.quadrature import gauss_legendre, graded_edges, panel_points


@given(order=st.integers(1, 20), degree=st.integers(0, 39))
def test_gauss_exact_for_polynomials(order, degree):
    if degree > 2 * order - 1:
        return
    x, w = gauss_legendre(order)
    assert float(np.sum(w * x**degree)) == pytest.approx(1.0 / (degree + 1), rel=1e-13)


def test_gauss_nodes_are_read_only():
    x, w = gauss_legendre(4)
    with pytest.raises(ValueError):
        x[0] = 0.0


def test_panels_integrate_smooth_function():
    pts, wts = panel_points(np.linspace(0.0, np.pi, 9), 8)
    assert pts.shape == wts.shape == (8, 8)
    assert float(np.sum(wts * np.sin(pts))) == pytest.approx(2.0, rel=1e-14)


def test_graded_edges_structure():
    edges = graded_edges(0.0, 1.0, points=[0.5], levels=10, ratio=0.5)
    assert edges[0] == 0.0 and edges[-1] == 1.0 and 0.5 in edges
    assert np.all(np.diff(edges) > 0)
    # widths shrink geometrically toward the point; the innermost panel equals its neighbour
    k = int(np.searchsorted(edges, 0.5))
    widths = np.diff(edges[k - 5:k + 1])
    np.testing.assert_allclose(widths[1:-1] / widths[:-2], 0.5, rtol=1e-12)
    assert widths[-1] == pytest.approx(widths[-2], rel=1e-12)


def test_graded_edges_resolve_endpoint_singularity():
    # integral of x^(-1/2) on [0, 1] is 2; grading toward 0 captures the singularity
    edges = graded_edges(0.0, 1.0, points=[0.0], levels=60)
    pts, wts = panel_points(edges, 12)
    assert float(np.sum(wts / np.sqrt(pts))) == pytest.approx(2.0, rel=1e-8)


def test_points_outside_range_are_ignored():
    np.testing.assert_array_equal(graded_edges(0.0, 1.0, points=[2.0, -1.0]), [0.0, 1.0])
