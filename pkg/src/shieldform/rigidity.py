"""Graph matrices and rigidity analysis of a framework pinned to a surface.

The augmented Jacobian stacks the distance-constraint rows (rigidity matrix)
with the per-agent surface-constraint rows; its rank governs how many degrees
of freedom the constrained formation retains.  The number of zero directions
contributed by rotations equals the number of equal diagonal coefficients of
the surface form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .builder import FormationSpec
from .quadric import QuadricSurface, surface_gradient, surface_residual


@dataclass
class Framework:
    """Graph realization: positions, oriented edges and the constraint surface."""

    positions: np.ndarray            # (N, 3)
    edges: list[tuple[int, int]]     # tail < head
    surface: QuadricSurface

    @classmethod
    def from_formation(cls, spec: FormationSpec, surface: QuadricSurface) -> "Framework":
        return cls(
            positions=np.asarray(spec.positions, dtype=float),
            edges=[(i, j) for i, j, _ in spec.edges],
            surface=surface,
        )

    @property
    def n_agents(self) -> int:
        return len(self.positions)

    @property
    def n_edges(self) -> int:
        return len(self.edges)


@dataclass
class AugmentedJacobian:
    matrix: np.ndarray     # (N_e + N, 3N)
    kappa1: float
    kappa2: float


def incidence_matrix(fw: Framework) -> np.ndarray:
    """N x N_e incidence; tail gets -1, head +1 (orientation: lower index is tail)."""
    h = np.zeros((fw.n_agents, fw.n_edges))
    for k, (i, j) in enumerate(fw.edges):
        h[i, k] = -1.0
        h[j, k] = 1.0
    return h


def laplacian(fw: Framework) -> np.ndarray:
    h = incidence_matrix(fw)
    return h @ h.T


def adjacency(fw: Framework) -> np.ndarray:
    a = np.zeros((fw.n_agents, fw.n_agents))
    for i, j in fw.edges:
        a[i, j] = a[j, i] = 1.0
    return a


def rigidity_matrix(fw: Framework) -> np.ndarray:
    """Jacobian of the stacked squared edge lengths: one row per edge."""
    n, m = fw.n_agents, fw.n_edges
    r = np.zeros((m, 3 * n))
    p = fw.positions
    for k, (i, j) in enumerate(fw.edges):
        diff = p[i] - p[j]
        r[k, 3 * i : 3 * i + 3] = diff
        r[k, 3 * j : 3 * j + 3] = -diff
    return r


def surface_jacobian(fw: Framework) -> np.ndarray:
    """Block-diagonal N x 3N Jacobian of the stacked surface residuals (halved gradient rows)."""
    n = fw.n_agents
    js = np.zeros((n, 3 * n))
    grads = 0.5 * surface_gradient(fw.surface, fw.positions)  # rows (p_i - center)^T diag(coeffs)
    for i in range(n):
        js[i, 3 * i : 3 * i + 3] = grads[i]
    return js


def augmented_jacobian(fw: Framework, kappa1: float, kappa2: float) -> AugmentedJacobian:
    stack = np.vstack([kappa1 * rigidity_matrix(fw), kappa2 * surface_jacobian(fw)])
    return AugmentedJacobian(matrix=stack, kappa1=kappa1, kappa2=kappa2)


def symmetry_count(coeffs) -> int:
    """Rotational degrees of freedom the surface admits: 0, 1 or 3."""
    q1, q2, q3 = (float(c) for c in coeffs)
    scale = max(abs(q1), abs(q2), abs(q3), 1e-300)
    eq12 = abs(q1 - q2) <= 1e-12 * scale
    eq13 = abs(q1 - q3) <= 1e-12 * scale
    eq23 = abs(q2 - q3) <= 1e-12 * scale
    if eq12 and eq13 and eq23:
        return 3
    if eq12 or eq13 or eq23:
        return 1
    return 0


def numerical_rank(matrix: np.ndarray, rel_tol: float = 1e-8) -> int:
    """Singular values above rel_tol * sigma_max."""
    sv = np.linalg.svd(np.asarray(matrix, dtype=float), compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0:
        return 0
    return int(np.sum(sv > rel_tol * sv[0]))


@dataclass
class RankReport:
    n_agents: int
    n_edges: int
    symmetries: int
    null_axes: int
    predicted: int | None
    measured: int
    agrees: bool | None


def null_axis_count(coeffs) -> int:
    """Coordinate axes the surface form ignores; translations along them cost nothing."""
    scale = max(abs(float(c)) for c in coeffs) or 1.0
    return sum(1 for c in coeffs if abs(float(c)) <= 1e-12 * scale)


def verify_rank_prediction(fw: Framework, kappa1: float = 1.0, kappa2: float = 1.0) -> RankReport:
    """Compare the measured rank of the augmented Jacobian with the symmetry prediction.

    For edge-rich graphs (N_e >= 2N) the prediction is 3N minus one per
    admitted rotation and one per translation axis the surface form does not
    constrain (degenerate forms such as the cylinder keep their axial
    translation for free).  Below that regime only the measured value is
    reported.
    """
    n, m = fw.n_agents, fw.n_edges
    s = symmetry_count(fw.surface.coeffs)
    z = null_axis_count(fw.surface.coeffs)
    measured = numerical_rank(augmented_jacobian(fw, kappa1, kappa2).matrix)
    if m >= 2 * n:
        predicted = 3 * n - s - z
        agrees = measured == predicted
    else:
        predicted = None
        agrees = None
    return RankReport(
        n_agents=n,
        n_edges=m,
        symmetries=s,
        null_axes=z,
        predicted=predicted,
        measured=measured,
        agrees=agrees,
    )


# ---- identities used by the controller -------------------------------------


def edge_errors(fw: Framework, targets: np.ndarray) -> np.ndarray:
    """Signed squared-distance errors per edge."""
    p = fw.positions
    idx = np.array(fw.edges, dtype=int)
    d2 = np.sum((p[idx[:, 0]] - p[idx[:, 1]]) ** 2, axis=1)
    return d2 - np.asarray(targets) ** 2


def weighted_edge_laplacian(fw: Framework, weights: np.ndarray) -> np.ndarray:
    """H diag(w) H^T, the edge-weighted graph Laplacian."""
    h = incidence_matrix(fw)
    return h @ np.diag(np.asarray(weights, dtype=float)) @ h.T
