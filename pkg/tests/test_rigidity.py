import numpy as np
import pytest

from shieldform.builder import build_formation
from shieldform.quadric import cylinder, semi_ellipsoid, semi_sphere
from shieldform.rigidity import (
    Framework,
    adjacency,
    augmented_jacobian,
    edge_errors,
    incidence_matrix,
    laplacian,
    numerical_rank,
    rigidity_matrix,
    surface_jacobian,
    symmetry_count,
    verify_rank_prediction,
    weighted_edge_laplacian,
)

SPH15 = semi_sphere(15.0)
ELL = semi_ellipsoid(10.0, 15.0, 12.0)


def random_framework(rng, n=8, p_edge=0.5, surface=SPH15):
    edges = [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < p_edge]
    if not edges:
        edges = [(0, 1)]
    return Framework(positions=rng.uniform(-5, 5, size=(n, 3)), edges=edges, surface=surface)


# ---- graph matrices ----------------------------------------------------------


def test_path_graph_laplacian():
    fw = Framework(positions=np.zeros((3, 3)), edges=[(0, 1), (1, 2)], surface=SPH15)
    expected = np.array([[1, -1, 0], [-1, 2, -1], [0, -1, 1]], dtype=float)
    assert np.array_equal(laplacian(fw), expected)


def test_laplacian_is_incidence_product_and_connected_gap():
    rng = np.random.default_rng(2)
    for _ in range(20):
        fw = random_framework(rng)
        h = incidence_matrix(fw)
        assert np.array_equal(laplacian(fw), h @ h.T)
    spec = build_formation(SPH15, 12)
    fw = Framework.from_formation(spec, SPH15)
    eig = np.linalg.eigvalsh(laplacian(fw))
    assert eig[0] == pytest.approx(0.0, abs=1e-9)
    assert eig[1] > 1e-6  # connected graph has a positive spectral gap


def test_adjacency_matches_edges():
    fw = Framework(positions=np.zeros((4, 3)), edges=[(0, 2), (1, 3)], surface=SPH15)
    a = adjacency(fw)
    assert a[0, 2] == a[2, 0] == 1 and a[1, 3] == a[3, 1] == 1
    assert a.sum() == 4


# ---- rigidity matrix -----------------------------------------------------------


def test_rigidity_matrix_single_edge_row():
    fw = Framework(
        positions=np.array([[0.0, 0, 0], [1.0, 0, 0]]), edges=[(0, 1)], surface=SPH15
    )
    assert np.allclose(rigidity_matrix(fw), [[-1, 0, 0, 1, 0, 0]])


def test_rigidity_rows_are_half_the_squared_length_jacobian():
    rng = np.random.default_rng(4)
    fw = random_framework(rng)
    r = rigidity_matrix(fw)
    h = 1e-6
    p = fw.positions.copy()

    def lengths_sq(flat):
        q = flat.reshape(-1, 3)
        return np.array([np.sum((q[i] - q[j]) ** 2) for i, j in fw.edges])

    flat = p.ravel()
    jac = np.zeros_like(r)
    for col in range(flat.size):
        dp = np.zeros_like(flat)
        dp[col] = h
        jac[:, col] = (lengths_sq(flat + dp) - lengths_sq(flat - dp)) / (2 * h)
    assert np.allclose(2.0 * r, jac, rtol=1e-6, atol=1e-6)


def test_rigid_body_motions_in_kernel():
    rng = np.random.default_rng(8)
    fw = random_framework(rng)
    r = rigidity_matrix(fw)
    n = fw.n_agents
    for v0 in np.eye(3):
        assert np.allclose(r @ np.tile(v0, n), 0.0, atol=1e-12)
    for omega in np.eye(3):
        spin = np.cross(omega, fw.positions).ravel()
        assert np.allclose(r @ spin, 0.0, atol=1e-10)


def test_edge_laplacian_identity():
    # R^T e equals the e-weighted graph Laplacian acting on stacked positions
    rng = np.random.default_rng(12)
    fw = random_framework(rng)
    targets = rng.uniform(0.5, 3.0, size=fw.n_edges)
    e = edge_errors(fw, targets)
    lhs = rigidity_matrix(fw).T @ e
    lw = weighted_edge_laplacian(fw, e)
    rhs = np.kron(lw, np.eye(3)) @ fw.positions.ravel()
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-9)


# ---- surface jacobian ------------------------------------------------------------


def test_surface_jacobian_single_block():
    fw = Framework(
        positions=np.array([[1.0, 2.0, 3.0]]), edges=[], surface=semi_sphere(1.0)
    )
    assert np.allclose(surface_jacobian(fw), [[1.0, 2.0, 3.0]])


def test_surface_jacobian_full_rank_on_build():
    spec = build_formation(ELL, 50)
    fw = Framework.from_formation(spec, ELL)
    assert numerical_rank(surface_jacobian(fw)) == 50


def test_surface_product_kron_identity():
    rng = np.random.default_rng(21)
    spec = build_formation(ELL, 23)
    fw = Framework.from_formation(spec, ELL)
    fw.positions = fw.positions + rng.normal(0, 0.3, fw.positions.shape)
    from shieldform.quadric import surface_residual

    fs = surface_residual(ELL, fw.positions)
    lhs = surface_jacobian(fw).T @ fs
    rhs = np.kron(np.diag(fs), ELL.coeff_matrix) @ fw.positions.ravel()
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-12)


def test_sphere_rotations_kill_surface_jacobian():
    spec = build_formation(SPH15, 12)
    fw = Framework.from_formation(spec, SPH15)
    js = surface_jacobian(fw)
    for omega in np.eye(3):
        spin = np.cross(omega, fw.positions).ravel()
        assert np.allclose(js @ spin, 0.0, atol=1e-9)


# ---- augmented jacobian and ranks ---------------------------------------------------


def test_augmented_shape_and_kappa_zero():
    fw = Framework(
        positions=np.array([[0.0, 0, 1], [1.0, 0, 1]]), edges=[(0, 1)], surface=SPH15
    )
    aug = augmented_jacobian(fw, 2.0, 3.0)
    assert aug.matrix.shape == (3, 6)
    r_only = augmented_jacobian(fw, 1.0, 0.0)
    assert numerical_rank(r_only.matrix) == numerical_rank(rigidity_matrix(fw))


def test_augmented_shape_ellipsoid_build():
    spec = build_formation(ELL, 50)
    fw = Framework.from_formation(spec, ELL)
    aug = augmented_jacobian(fw, 0.1, 1000.0)
    assert aug.matrix.shape == (spec.n_edges + 50, 150)


def test_symmetry_count_cases():
    assert symmetry_count(semi_sphere(15.0).coeffs) == 3
    assert symmetry_count(cylinder(2.0, 5.0).coeffs) == 1
    assert symmetry_count(ELL.coeffs) == 0
    assert symmetry_count((1.0, 1.0 + 1e-15, 2.0)) == 1


def test_numerical_rank_basics():
    assert numerical_rank(np.eye(5)) == 5
    v = np.arange(1.0, 5.0)
    assert numerical_rank(np.outer(v, v)) == 1
    assert numerical_rank(np.zeros((3, 3))) == 0


@pytest.mark.parametrize(
    "surface,n,expected_offset",
    [
        (SPH15, 12, 3),      # full rotational symmetry
        (SPH15, 50, 3),
        (ELL, 50, 0),        # no symmetry
        (cylinder(2.0, 5.0), 16, 2),  # axial rotation plus free z-translation
    ],
)
def test_rank_predictions_on_built_formations(surface, n, expected_offset):
    spec = build_formation(surface, n)
    fw = Framework.from_formation(spec, surface)
    assert spec.n_edges >= 2 * n
    report = verify_rank_prediction(fw)
    assert report.predicted == 3 * n - expected_offset
    assert report.measured == report.predicted
    assert report.agrees is True


def test_cone_rank_keeps_only_the_axial_rotation():
    from shieldform.quadric import cone

    surface = cone(3.0, 4.0)
    spec = build_formation(surface, 20)
    fw = Framework.from_formation(spec, surface)
    assert spec.n_edges >= 40
    report = verify_rank_prediction(fw)
    assert report.symmetries == 1 and report.null_axes == 0
    assert report.measured == report.predicted == 3 * 20 - 1


def test_cylinder_z_translation_is_a_common_kernel_vector():
    surface = cylinder(2.0, 5.0)
    spec = build_formation(surface, 16)
    fw = Framework.from_formation(spec, surface)
    v = np.tile([0.0, 0.0, 1.0], 16)
    aug = augmented_jacobian(fw, 1.0, 1.0)
    assert np.allclose(aug.matrix @ v, 0.0, atol=1e-12)


def test_rank_report_below_edge_threshold():
    fw = Framework(
        positions=np.random.default_rng(0).uniform(-3, 3, (5, 3)),
        edges=[(0, 1), (1, 2), (2, 3), (3, 4)],
        surface=SPH15,
    )
    report = verify_rank_prediction(fw)
    assert report.predicted is None
    assert report.agrees is None
    assert report.measured > 0
