import math
from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from evolab import mesh as m
from evolab.errors import CapacityError, DomainError, GeometryError

ICOSA_EDGE = 4 / math.sqrt(10 + 2 * math.sqrt(5))


@pytest.mark.parametrize("level", range(5))
def test_counts(level):
    s = m.build_icosphere(level)
    assert s.n_vertices == 10 * 4**level + 2
    assert s.n_triangles == 20 * 4**level
    assert s.euler_characteristic() == 2


@pytest.mark.parametrize("level", range(5))
def test_vertices_on_sphere(level):
    s = m.build_icosphere(level)
    assert np.max(np.abs(np.linalg.norm(s.vertices, axis=1) - 1)) <= 1e-14


@pytest.mark.parametrize("level", range(4))
def test_closed_every_edge_twice(level):
    s = m.build_icosphere(level)
    t = s.triangles
    directed = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    # consistent orientation: each directed edge once, its reverse once
    keys = {tuple(e) for e in directed}
    assert len(keys) == len(directed)
    assert all((b, a) in keys for a, b in keys)


def test_outward_orientation_and_volume():
    vols = [m.build_icosphere(level).signed_volume() for level in range(6)]
    assert all(v > 0 for v in vols)
    assert all(a < b for a, b in zip(vols, vols[1:]))
    assert vols[-1] < 4 * math.pi / 3
    assert vols[-1] == pytest.approx(4 * math.pi / 3, rel=2e-3)
    s = m.build_icosphere(2)
    _, normals = s.face_geometry()
    assert np.all(np.einsum("fd,fd->f", normals, s.corners().mean(axis=1)) > 0)


def test_level_guard():
    with pytest.raises(CapacityError):
        m.build_icosphere(8)
    with pytest.raises(DomainError):
        m.build_icosphere(-1)


def test_mesh_is_immutable():
    s = m.build_icosphere(0)
    with pytest.raises(ValueError):
        s.vertices[0, 0] = 2.0


def test_level_zero_metrics():
    mt = m.mesh_metrics(m.build_icosphere(0))
    assert mt.h == pytest.approx(ICOSA_EDGE, rel=1e-14)
    assert mt.h == pytest.approx(1.0514622242382672, rel=1e-14)
    assert mt.total_area == pytest.approx(20 * math.sqrt(3) / 4 * ICOSA_EDGE**2, rel=1e-14)
    assert mt.total_area == pytest.approx(9.574541383273937, rel=1e-13)
    assert mt.quasi_uniformity == pytest.approx(1.0, abs=1e-12)


def test_refinement_metrics():
    ms = [m.mesh_metrics(m.build_icosphere(level)) for level in range(6)]
    for a, b in zip(ms, ms[1:]):
        assert b.h < a.h
    for level in range(1, 5):
        assert 1.9 <= ms[level].h / ms[level + 1].h <= 2.1
    assert all(1 <= x.quasi_uniformity <= 1.5 for x in ms)


def test_projection():
    np.testing.assert_array_equal(m.project_to_sphere([2.0, 0, 0]), [1.0, 0, 0])
    u = np.array([0.6, 0.0, 0.8])
    np.testing.assert_allclose(m.project_to_sphere(u), u, rtol=0, atol=1e-16)
    with pytest.raises(GeometryError):
        m.project_to_sphere([0.1, 0.0, 0.0])


def test_projected_centroids_unit_norm():
    c = m.build_icosphere(0).corners().mean(axis=1)
    assert np.max(np.abs(np.linalg.norm(m.project_to_sphere(c), axis=1) - 1)) <= 1e-15


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=3, max_size=3).filter(lambda v: np.linalg.norm(v) >= 0.5))
def test_projection_idempotent(v):
    p = m.project_to_sphere(v)
    assert abs(np.linalg.norm(p) - 1) <= 1e-15
    np.testing.assert_allclose(m.project_to_sphere(p), p, atol=1e-15)


def test_area_quotient_tangent_point():
    tri = np.array([[1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [1.0, 0.0, 1.0]])
    assert m.area_quotient(tri, np.array([1.0, 0.0, 0.0])) == pytest.approx(1.0, abs=1e-15)


def test_area_quotient_errors():
    with pytest.raises(GeometryError):
        m.area_quotient(np.array([[1.0, 0, 0], [1.0, 0, 0], [0, 1.0, 0]]), np.array([1.0, 0, 0]))
    tri = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    with pytest.raises(GeometryError):
        m.area_quotient(tri, np.array([1.0, 1.0, 1.0]))


def test_area_quotient_matches_face_kernel():
    s = m.build_icosphere(1)
    rule = m.reference_quadrature(4)
    pts = m.quadrature_points(s, rule)
    faces = m.face_area_quotients(s, rule)
    for f in (0, 17, 79):
        np.testing.assert_allclose(m.area_quotient(s.corners()[f], pts[f]), faces[f], rtol=1e-14)


def test_area_quotient_rates():
    rule = m.reference_quadrature(4)
    dev = [np.max(np.abs(1 - m.face_area_quotients(m.build_icosphere(level), rule))) for level in range(1, 5)]
    ratios = [a / b for a, b in zip(dev, dev[1:])]
    assert all(3.5 <= r <= 4.5 for r in ratios)


def test_area_quotient_positive_and_integrates_to_sphere_area():
    rule = m.reference_quadrature(4)
    errs = []
    for level in range(1, 5):
        s = m.build_icosphere(level)
        d = m.face_area_quotients(s, rule)
        assert np.all(d > 0)
        areas, _ = s.face_geometry()
        errs.append(abs(np.einsum("f,q,fq->", areas, rule.weights, d) - 4 * math.pi))
    assert errs[-1] < 1e-4
    assert all(b < a for a, b in zip(errs, errs[1:]))


def test_min_area_quotient_tends_to_one():
    rule = m.reference_quadrature(4)
    mins = [m.face_area_quotients(m.build_icosphere(level), rule).min() for level in range(1, 5)]
    assert all(abs(b - 1) < abs(a - 1) for a, b in zip(mins, mins[1:]))


def _monomial_average(a, b, c):
    # average over the triangle of l1^a l2^b l3^c
    return 2 * math.factorial(a) * math.factorial(b) * math.factorial(c) / math.factorial(a + b + c + 2)


@pytest.mark.parametrize("degree", [2, 4])
def test_quadrature_exactness(degree):
    rule = m.reference_quadrature(degree)
    assert rule.weights.sum() == pytest.approx(1.0, abs=1e-15)
    for a, b, c in product(range(degree + 1), repeat=3):
        if a + b + c > degree:
            continue
        got = rule.weights @ (rule.points[:, 0] ** a * rule.points[:, 1] ** b * rule.points[:, 2] ** c)
        assert got == pytest.approx(_monomial_average(a, b, c), rel=1e-14)


def test_degree_two_square_monomial():
    rule = m.reference_quadrature(2)
    assert rule.weights @ rule.points[:, 0] ** 2 == pytest.approx(1 / 6)


def test_degree_four_not_exact_at_six():
    rule = m.reference_quadrature(4)
    got = rule.weights @ rule.points[:, 0] ** 6
    assert abs(got - _monomial_average(6, 0, 0)) > 1e-6


def test_unsupported_quadrature():
    with pytest.raises(DomainError):
        m.reference_quadrature(3)


def test_off_round_trip(tmp_path):
    s = m.build_icosphere(2)
    path = tmp_path / "s.off"
    m.write_off(s, path)
    back = m.read_off(path)
    np.testing.assert_array_equal(back.vertices, s.vertices)
    np.testing.assert_array_equal(back.triangles, s.triangles)
    lines = path.read_text().splitlines()
    assert lines[0] == "OFF" and lines[1] == f"{s.n_vertices} {s.n_triangles} 0"
    assert lines[-1].startswith("3 ")


def test_off_bad_header(tmp_path):
    path = tmp_path / "bad.off"
    path.write_text("PLY\n")
    with pytest.raises(GeometryError):
        m.read_off(path)
