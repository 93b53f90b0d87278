import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial import Delaunay as ScipyDelaunay

from shieldform.builder import FormationSpec, RingSpec, build_formation
from shieldform.delaunay import (
    CapPosition,
    Circumcircle,
    DegenerateTriangleError,
    check_formation,
    circumcenter,
    circumcenter_system_det,
    in_cap_test,
    orientation_det,
    triangle_faces,
    triangle_plane,
)
from shieldform.quadric import semi_ellipsoid, semi_sphere


def det3_cofactor(pa, pb, pc):
    """Independent 3x3 determinant by explicit cofactor expansion."""
    m = np.column_stack([pa, pb, pc])
    return (
        m[0, 0] * (m[1, 1] * m[2, 2] - m[1, 2] * m[2, 1])
        - m[0, 1] * (m[1, 0] * m[2, 2] - m[1, 2] * m[2, 0])
        + m[0, 2] * (m[1, 0] * m[2, 1] - m[1, 1] * m[2, 0])
    )


def random_valid_triple(rng, spread=10.0):
    while True:
        pts = rng.uniform(-spread, spread, size=(3, 3))
        normal = np.cross(pts[1] - pts[0], pts[2] - pts[0])
        if np.linalg.norm(normal) < 1e-3:
            continue
        plane = triangle_plane(*pts)
        if abs(plane.orientation) < 1e-3:  # plane close to the origin
            continue
        return pts


# ---- orientation -------------------------------------------------------------


def test_orientation_unit_axes():
    assert orientation_det([1, 0, 0], [0, 1, 0], [0, 0, 1]) == pytest.approx(1.0)


def test_orientation_collinear_is_zero():
    assert orientation_det([1, 1, 1], [2, 2, 2], [3, 3, 3]) == pytest.approx(0.0, abs=1e-12)


def test_orientation_against_cofactor_expansion():
    rng = np.random.default_rng(3)
    for _ in range(200):
        pts = rng.uniform(-10, 10, size=(3, 3))
        ref = det3_cofactor(*pts)
        val = orientation_det(*pts)
        assert val == pytest.approx(ref, rel=1e-12, abs=1e-9)


# ---- circumcenter --------------------------------------------------------------


def test_circumcenter_equilateral():
    c = math.sqrt(3) / 2
    circ = circumcenter([1, 0, 1], [-0.5, c, 1], [-0.5, -c, 1])
    assert np.allclose(circ.center, [0, 0, 1], atol=1e-12)
    assert circ.radius == pytest.approx(1.0, rel=1e-12)


def test_circumcenter_right_triangle():
    circ = circumcenter([3, 0, 1], [0, 4, 1], [0, 0, 1])
    assert np.allclose(circ.center, [1.5, 2.0, 1.0], atol=1e-12)
    assert circ.radius == pytest.approx(2.5, rel=1e-12)


def test_circumcenter_invariants_random():
    rng = np.random.default_rng(11)
    for _ in range(200):
        pa, pb, pc = random_valid_triple(rng)
        circ = circumcenter(pa, pb, pc)
        dists = [np.linalg.norm(circ.center - p) for p in (pa, pb, pc)]
        assert np.allclose(dists, circ.radius, rtol=1e-9)
        plane = triangle_plane(pa, pb, pc)
        resid = plane.normal @ circ.center - plane.orientation
        assert abs(resid) <= 1e-9 * max(1.0, abs(plane.orientation))
        assert circ.radius**2 == pytest.approx(2 * circ.gamma + circ.center @ circ.center, rel=1e-9)


def test_circumcenter_rejects_collinear():
    with pytest.raises(DegenerateTriangleError):
        circumcenter([0, 0, 1], [1, 0, 1], [2, 0, 1])


# ---- system determinant -----------------------------------------------------------


def test_system_det_hand_example():
    # plane z = 1 has normal (0, 0, 2) for these vertices
    val = circumcenter_system_det([1, 0, 1], [0, 1, 1], [-1, 0, 1])
    assert val == pytest.approx(-4.0, rel=1e-12)


def test_system_det_negative_and_identity():
    rng = np.random.default_rng(5)
    for _ in range(300):
        pa, pb, pc = random_valid_triple(rng)
        det = circumcenter_system_det(pa, pb, pc)
        assert det < 0
        normal = triangle_plane(pa, pb, pc).normal
        assert det == pytest.approx(-(normal @ normal), rel=1e-9)


# ---- in-cap test ---------------------------------------------------------------


def test_in_cap_center_and_boundary():
    rng = np.random.default_rng(29)
    for _ in range(50):
        pa, pb, pc = random_valid_triple(rng)
        circ = circumcenter(pa, pb, pc)
        assert in_cap_test(pa, pb, pc, circ.center) is CapPosition.INSIDE
        in_plane = pa - circ.center
        in_plane /= np.linalg.norm(in_plane)
        on_rim = circ.center + circ.radius * in_plane
        assert in_cap_test(pa, pb, pc, on_rim) is CapPosition.ON_BOUNDARY


def test_in_cap_against_distance_oracle():
    rng = np.random.default_rng(101)
    checked = 0
    for _ in range(1000):
        pa, pb, pc = random_valid_triple(rng)
        pd = rng.uniform(-10, 10, size=3)
        circ = circumcenter(pa, pb, pc)
        gap = np.linalg.norm(pd - circ.center) - circ.radius
        if abs(gap) < 1e-6:  # skip knife-edge cases; boundary handled above
            continue
        expected = CapPosition.INSIDE if gap < 0 else CapPosition.OUTSIDE
        assert in_cap_test(pa, pb, pc, pd) is expected
        checked += 1
    assert checked > 900


def test_in_cap_scale_covariance():
    rng = np.random.default_rng(17)
    for _ in range(100):
        pa, pb, pc = random_valid_triple(rng)
        pd = rng.uniform(-10, 10, size=3)
        base = in_cap_test(pa, pb, pc, pd)
        for lam in (0.01, 0.37, 42.0):
            assert in_cap_test(lam * pa, lam * pb, lam * pc, lam * pd) is base


def test_in_cap_permutation_invariance():
    rng = np.random.default_rng(23)
    for _ in range(30):
        pa, pb, pc = random_valid_triple(rng)
        pd = rng.uniform(-10, 10, size=3)
        base = in_cap_test(pa, pb, pc, pd)
        for perm in itertools.permutations((pa, pb, pc)):
            assert in_cap_test(*perm, pd) is base


@settings(max_examples=60, deadline=None)
@given(st.floats(0.1, 0.95), st.floats(0.0, 2 * math.pi))
def test_in_cap_inside_ball_property(frac, ang):
    pa, pb, pc = np.array([[2.0, 0, 1], [0, 2.0, 1], [-2.0, 0, 1]])
    circ = circumcenter(pa, pb, pc)
    direction = np.array([math.cos(ang), math.sin(ang), 0.0])
    pd = circ.center + frac * circ.radius * direction
    assert in_cap_test(pa, pb, pc, pd) is CapPosition.INSIDE


# ---- formation sweep -------------------------------------------------------------


def five_point_layout():
    pts2d = np.array(
        [[0.0, 0.0], [4.0, 0.0], [2.0, -0.5], [2.0, 4.5], [2.0, 3.0]]
    )  # A, B, C, D, E
    return np.column_stack([pts2d, np.ones(5)])


def spec_from_edges(positions, edges):
    labelled = [
        (i, j, float(np.linalg.norm(positions[i] - positions[j]))) for i, j in edges
    ]
    rings = [RingSpec(0.0, len(positions), 1.0)]
    return FormationSpec(positions=positions, edges=labelled, rings=rings, d_global=1.0)


def test_planar_delaunay_has_no_violations():
    pts = five_point_layout()
    tri = ScipyDelaunay(pts[:, :2])
    edges = set()
    for simplex in tri.simplices:
        for a, b in itertools.combinations(sorted(simplex), 2):
            edges.add((a, b))
    spec = spec_from_edges(pts, sorted(edges))
    report = check_formation(spec)
    assert report.ok
    assert len(report.triangles) == len(tri.simplices)


def test_planar_non_delaunay_flags_offender():
    A, B, C, D, E = range(5)
    pts = five_point_layout()
    edges = [(A, B), (A, C), (B, C), (A, E), (B, E), (A, D), (B, D), (D, E)]
    spec = spec_from_edges(pts, edges)
    report = check_formation(spec)
    assert not report.ok
    offenders = {(face, m) for face, m in report.violations}
    assert ((A, B, E), C) in offenders


def test_built_formations_are_delaunay():
    for surf, n in [(semi_ellipsoid(10.0, 15.0, 12.0), 50), (semi_sphere(1.0, center=(0, 0, 0.8)), 12)]:
        spec = build_formation(surf, n)
        report = check_formation(spec)
        assert report.ok, report.violations


def test_local_check_matches_global_on_built_formations():
    spec = build_formation(semi_sphere(15.0), 20)
    global_report = check_formation(spec, local=False)
    local_report = check_formation(spec, local=True)
    assert global_report.violations == local_report.violations
    assert global_report.triangles == local_report.triangles


def test_face_enumeration_counts_match_surface_euler():
    # one boundary ring: f = 2N - 2 - e_b
    spec = build_formation(semi_sphere(1.0, center=(0, 0, 0.8)), 12)
    faces = triangle_faces(spec)
    assert len(faces) == 2 * 12 - 2 - 7
