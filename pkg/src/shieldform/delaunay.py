"""Local Delaunay characterization for triangulations embedded in 3-space.

The predicates work on raw coordinates: plane coefficients from the vertex
matrix, circumcenter/radius from a 4x4 linear system, and an in-spherical-cap
sign test deciding whether a fourth point falls inside a triangle's
circumcircle ball.  ``check_formation`` sweeps the predicate over the 3-cliques
of a designed formation.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .builder import FormationSpec


class DegenerateTriangleError(ValueError):
    """Raised for (near-)collinear vertices, where the predicates are undefined."""


class CapPosition(enum.Enum):
    INSIDE = "inside"
    ON_BOUNDARY = "on_boundary"
    OUTSIDE = "outside"


@dataclass(frozen=True)
class TrianglePlane:
    normal: np.ndarray       # (a, b, c), cross product of two edge vectors
    offset: float            # d in a x + b y + c z + d = 0
    orientation: float       # determinant of the vertex-column matrix


@dataclass(frozen=True)
class Circumcircle:
    center: np.ndarray
    gamma: float
    radius: float


def orientation_det(pa, pb, pc) -> float:
    """Determinant of the matrix whose columns are the three vertices."""
    m = np.column_stack([pa, pb, pc]).astype(float)
    return float(np.linalg.det(m))


def triangle_plane(pa, pb, pc) -> TrianglePlane:
    pa, pb, pc = (np.asarray(p, dtype=float) for p in (pa, pb, pc))
    normal = np.cross(pb - pa, pc - pa)
    o_det = orientation_det(pa, pb, pc)
    return TrianglePlane(normal=normal, offset=-o_det, orientation=o_det)


def _require_nondegenerate(pa, pb, pc) -> TrianglePlane:
    plane = triangle_plane(pa, pb, pc)
    u = np.linalg.norm(np.asarray(pb, dtype=float) - pa)
    w = np.linalg.norm(np.asarray(pc, dtype=float) - pa)
    if np.linalg.norm(plane.normal) <= 1e-12 * max(u * w, 1e-300):
        raise DegenerateTriangleError("collinear vertices")
    return plane


def _system_matrix(pa, pb, pc, plane: TrianglePlane) -> np.ndarray:
    # vertices enter as rows: row i reads  p_i . m + gamma = |p_i|^2 / 2
    lam = np.zeros((4, 4))
    lam[:3, :3] = np.vstack([pa, pb, pc])
    lam[:3, 3] = 1.0
    lam[3, :3] = plane.normal
    return lam


def circumcenter_system_det(pa, pb, pc) -> float:
    """Determinant of the circumcenter system; identically -(a^2 + b^2 + c^2)."""
    plane = _require_nondegenerate(pa, pb, pc)
    return float(np.linalg.det(_system_matrix(pa, pb, pc, plane)))


def circumcenter(pa, pb, pc) -> Circumcircle:
    """Circumcenter and circumradius of a triangle in 3-space.

    Solves the 4x4 system tying the equidistance conditions to the plane
    constraint; the fourth unknown is the auxiliary scalar entering the
    radius as r^2 = 2 gamma + ||m||^2.
    """
    pa, pb, pc = (np.asarray(p, dtype=float) for p in (pa, pb, pc))
    plane = _require_nondegenerate(pa, pb, pc)
    lam = _system_matrix(pa, pb, pc, plane)
    rhs = np.array(
        [pa @ pa, pb @ pb, pc @ pc, 2.0 * plane.orientation]
    )
    sol = np.linalg.solve(lam, 0.5 * rhs)
    center, gamma = sol[:3], float(sol[3])
    radius = float(np.sqrt(max(0.0, 2.0 * gamma + center @ center)))
    return Circumcircle(center=center, gamma=gamma, radius=radius)


def in_cap_test(pa, pb, pc, pd) -> CapPosition:
    """Sign test placing pd relative to the circumcircle ball of (pa, pb, pc).

    Builds the bordered 5x5 determinant directly from coordinates; positive
    means strictly inside, negative strictly outside, near-zero on the
    boundary.  The tolerance scales with the sixth power of the coordinate
    magnitude, matching the determinant's homogeneity degree.
    """
    pa, pb, pc, pd = (np.asarray(p, dtype=float) for p in (pa, pb, pc, pd))
    plane = _require_nondegenerate(pa, pb, pc)
    m = np.zeros((5, 5))
    m[:4, :4] = _system_matrix(pa, pb, pc, plane)
    m[:4, 4] = [pa @ pa, pb @ pb, pc @ pc, 2.0 * plane.orientation]
    m[4, :3] = pd
    m[4, 3] = 1.0
    m[4, 4] = pd @ pd
    det = float(np.linalg.det(m))
    scale = max(1e-12, float(np.max(np.abs([pa, pb, pc, pd]))))
    tol = 1e-9 * scale**6
    if det > tol:
        return CapPosition.INSIDE
    if det < -tol:
        return CapPosition.OUTSIDE
    return CapPosition.ON_BOUNDARY


# ---- formation-level checks -------------------------------------------------


@dataclass
class DelaunayReport:
    triangles: list[tuple[int, int, int]]
    violations: list[tuple[tuple[int, int, int], int]]

    @property
    def ok(self) -> bool:
        return not self.violations


def triangle_faces(spec: FormationSpec) -> list[tuple[int, int, int]]:
    """All 3-cliques of the edge graph (the faces of a designed mesh)."""
    n = spec.n_agents
    adj = [set() for _ in range(n)]
    for i, j, _ in spec.edges:
        adj[i].add(j)
        adj[j].add(i)
    faces = []
    for i in range(n):
        for j in sorted(adj[i]):
            if j <= i:
                continue
            for k in sorted(adj[i] & adj[j]):
                if k > j:
                    faces.append((i, j, k))
    return faces


def check_formation(spec: FormationSpec, local: bool = False) -> DelaunayReport:
    """Empty-circumcircle sweep over every face of the formation.

    With ``local=True`` each face is tested only against nodes within graph
    distance two of its vertices, the information a node can gather from its
    neighbourhood; the global sweep is the reference semantics.
    """
    pts = spec.positions
    faces = triangle_faces(spec)
    nbrs = spec.neighbors()
    violations = []
    for face in faces:
        i, j, k = face
        if local:
            cand = set()
            for v in face:
                cand.add(v)
                for u in nbrs[v]:
                    cand.add(u)
                    cand.update(nbrs[u])
            cand -= set(face)
            candidates = sorted(cand)
        else:
            candidates = [m for m in range(spec.n_agents) if m not in face]
        for m in candidates:
            if in_cap_test(pts[i], pts[j], pts[k], pts[m]) is CapPosition.INSIDE:
                violations.append((face, m))
    return DelaunayReport(triangles=faces, violations=violations)
