"""Shield-formation design: ring ladder, node placement and edge generation.

The ladder works in surface-local heights.  Ring 0 sits on the lowest
boundary; each following height solves an area-balance equation that matches
the remaining lateral area with the area of the equilateral triangles the
remaining nodes would span.  The boundary-edge term of that balance uses the
*adjusted* bottom-ring spacing (the spacing nodes actually get after the
ceiling round), while the triangle term keeps the nominal spacing bound; this
combination reproduces the reference hemisphere configurations.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .quadric import (
    QuadricSurface,
    SurfaceKind,
    section_perimeter,
    section_point,
    section_semi_axes,
    surface_residual,
    area_above,
    boundary_length,
    total_area,
)

SQRT3_4 = math.sqrt(3.0) / 4.0


class EdgeConstructionError(RuntimeError):
    """Raised when edge generation yields a disconnected graph."""


@dataclass(frozen=True)
class RingSpec:
    """One ring of the designed formation (heights are surface-local)."""

    height: float
    count: int
    spacing: float


@dataclass
class FormationSpec:
    """Target formation: node positions, distance-labelled edges, ring layout."""

    positions: np.ndarray            # (N, 3) world coordinates
    edges: list[tuple[int, int, float]]  # (i, j, target distance), i < j
    rings: list[RingSpec]
    d_global: float

    @property
    def n_agents(self) -> int:
        return len(self.positions)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def edge_index_array(self) -> np.ndarray:
        return np.array([(i, j) for i, j, _ in self.edges], dtype=int)

    def target_distances(self) -> np.ndarray:
        return np.array([d for _, _, d in self.edges])

    def neighbors(self) -> list[list[int]]:
        nbrs: list[list[int]] = [[] for _ in range(self.n_agents)]
        for i, j, _ in self.edges:
            nbrs[i].append(j)
            nbrs[j].append(i)
        return nbrs

    def is_connected(self) -> bool:
        if self.n_agents == 0:
            return False
        nbrs = self.neighbors()
        seen = {0}
        stack = [0]
        while stack:
            for j in nbrs[stack.pop()]:
                if j not in seen:
                    seen.add(j)
                    stack.append(j)
        return len(seen) == self.n_agents

    def to_dict(self) -> dict:
        return {
            "positions": [[float(x) for x in p] for p in self.positions],
            "edges": [[int(i), int(j), float(d)] for i, j, d in self.edges],
            "rings": [{"h": r.height, "n": r.count, "d": r.spacing} for r in self.rings],
            "d_global": self.d_global,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FormationSpec":
        return cls(
            positions=np.array(data["positions"], dtype=float),
            edges=[(int(i), int(j), float(d)) for i, j, d in data["edges"]],
            rings=[RingSpec(r["h"], int(r["n"]), r["d"]) for r in data["rings"]],
            d_global=float(data["d_global"]),
        )

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def from_json(cls, path) -> "FormationSpec":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def validate(self, surface: QuadricSurface | None = None):
        """Check the structural invariants; raises AssertionError on failure."""
        n = self.n_agents
        assert sum(r.count for r in self.rings) == n
        assert all(0 <= i < j < n for i, j, _ in self.edges)
        for i, j, dstar in self.edges:
            actual = float(np.linalg.norm(self.positions[i] - self.positions[j]))
            assert abs(actual - dstar) <= 1e-12 * max(1.0, actual)
        ne = self.n_edges
        assert 2 * n - 2 <= ne <= 3 * n - 6, f"edge count {ne} outside [{2*n-2}, {3*n-6}]"
        assert self.is_connected()
        if surface is not None:
            res = surface_residual(surface, self.positions)
            assert np.max(np.abs(res)) <= 1e-9


# ---- scalar design formulas --------------------------------------------


def max_interdistance(n_agents: int, area: float, boundary_len: float) -> float:
    """Largest inter-node spacing for which the triangle mesh still covers the area."""
    if n_agents < 4:
        raise ValueError("at least 4 agents are required (tetrahedron is minimal)")
    disc = boundary_len**2 + (32.0 / math.sqrt(3.0)) * area * (n_agents - 1)
    return (boundary_len + math.sqrt(disc)) / (4.0 * (n_agents - 1))


def boundary_count(boundary_len: float, d: float) -> int:
    """Number of nodes (= edges) on a closed boundary curve at spacing d."""
    if boundary_len <= 0 or d <= 0:
        raise ValueError("boundary length and spacing must be positive")
    return math.ceil(boundary_len / d)


def triangle_count_estimate(n_agents: int, boundary_edges: int) -> int:
    return 2 * n_agents - 2 - boundary_edges


def mesh_area_estimate(n_triangles: int, d: float) -> float:
    """Total area of n equilateral triangles of side d."""
    return n_triangles * SQRT3_4 * d * d


def coverage_error(surface: QuadricSurface, n_agents: int) -> float:
    """Relative gap between the true lateral area and the triangle-mesh estimate."""
    a_s = total_area(surface)
    l_b = boundary_length(surface)
    d = max_interdistance(n_agents, a_s, l_b)
    f = triangle_count_estimate(n_agents, boundary_count(l_b, d))
    return (a_s - mesh_area_estimate(f, d)) / a_s


# ---- ring ladder ---------------------------------------------------------


def solve_ring_height(
    surface: QuadricSurface,
    n_remaining: int,
    d: float,
    h_lower: float,
    boundary_d: float | None = None,
) -> float:
    """Height whose remaining cap area balances the triangles of n_remaining nodes.

    Solves area_above(h) = (2*n - 2 - perimeter(h)/boundary_d) * (sqrt(3)/4) d^2
    by bisection above h_lower.  Returns ``math.inf`` when no root exists in
    the height band.
    """
    if n_remaining < 1:
        raise ValueError("need at least one remaining node")
    dx = d if boundary_d is None else boundary_d

    def g(h: float) -> float:
        rhs = (2 * n_remaining - 2 - section_perimeter(surface, h) / dx) * SQRT3_4 * d * d
        return area_above(surface, h) - rhs

    lo = h_lower + 1e-9
    hi = surface.z_max
    if lo >= hi:
        return math.inf
    g_lo, g_hi = g(lo), g(hi)
    if g_lo <= 0.0:
        return math.inf
    if g_hi > 0.0:
        return math.inf
    if g_hi == 0.0:
        return hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if hi - lo <= 1e-10:
            return mid
        g_mid = g(mid)
        if g_mid > 0.0:
            lo = mid
        else:
            hi = mid
    raise RuntimeError("ring-height bisection did not converge")


def build_shield(surface: QuadricSurface, n_agents: int) -> list[RingSpec]:
    """Ring layout (heights, counts, spacings) for n_agents on the surface."""
    if n_agents < 4:
        raise ValueError("at least 4 agents are required (tetrahedron is minimal)")
    a_s = total_area(surface)
    l_b = boundary_length(surface)
    d = max_interdistance(n_agents, a_s, l_b)
    n_b = min(boundary_count(l_b, d), n_agents)
    d0 = l_b / n_b
    rings = [RingSpec(surface.z_min, n_b, d0)]
    remaining = n_agents - n_b
    h_prev = surface.z_min
    while remaining > 0:
        h = solve_ring_height(surface, remaining, d, h_prev, boundary_d=d0)
        if not h <= surface.z_max:
            rings.append(_fallback_ring(surface, remaining, d, h_prev))
            break
        length = section_perimeter(surface, h)
        n_k = math.ceil(length / d) if length > 0 else 0
        if n_k == 0 or n_k > remaining:
            n_k = remaining
        rings.append(RingSpec(h, n_k, length / n_k))
        remaining -= n_k
        h_prev = h
    return rings


def _fallback_ring(surface: QuadricSurface, remaining: int, d: float, h_prev: float) -> RingSpec:
    # No further balanced height exists: park the leftover nodes on the top
    # section, or -- if the surface tapers to a point -- on the ring where
    # they fit at the nominal spacing.
    top_len = section_perimeter(surface, surface.z_max)
    if top_len > 0 or remaining == 1:
        return RingSpec(surface.z_max, remaining, top_len / remaining)
    target = remaining * d
    lo, hi = h_prev, surface.z_max
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if section_perimeter(surface, mid) > target:
            lo = mid
        else:
            hi = mid
    return RingSpec(lo, remaining, section_perimeter(surface, lo) / remaining)


# ---- node placement ------------------------------------------------------


def place_nodes(surface: QuadricSurface, rings: list[RingSpec]) -> np.ndarray:
    """Node positions: each ring equally spaced along its section curve.

    Consecutive rings are staggered by half a step so the inter-ring triangles
    come out near-isosceles.  On elliptical sections "equally spaced" means
    equal arc length, not equal parameter angle.
    """
    chunks = []
    for k, ring in enumerate(rings):
        phase = 0.5 * (k % 2)
        chunks.append(_ring_points(surface, ring, phase))
    return np.vstack(chunks)


def _ring_points(surface: QuadricSurface, ring: RingSpec, phase: float) -> np.ndarray:
    n = ring.count
    h = ring.height
    alpha, beta = section_semi_axes(surface, h)
    if abs(alpha - beta) <= 1e-12 * max(alpha, beta, 1e-300):
        thetas = 2.0 * math.pi * (np.arange(n) + phase) / n
    else:
        thetas = _equal_arc_parameters(alpha, beta, n, phase)
    return np.array([section_point(surface, h, t) for t in thetas])


def _equal_arc_parameters(alpha: float, beta: float, n: int, phase: float) -> np.ndarray:
    m = max(4096, 256 * n)
    ts = np.linspace(0.0, 2.0 * math.pi, m + 1)
    speed = np.sqrt((alpha * np.sin(ts)) ** 2 + (beta * np.cos(ts)) ** 2)
    arc = np.concatenate([[0.0], np.cumsum(0.5 * (speed[1:] + speed[:-1]) * np.diff(ts))])
    targets = (np.arange(n) + phase) * arc[-1] / n
    return np.interp(targets, arc, ts)


# ---- edge generation -------------------------------------------------------


def default_edge_slack(d: float) -> float:
    """Conservative tolerance added to the nominal spacing for inter-ring links."""
    return (math.sqrt(2.0) - 1.0) * d


def generate_edges(
    positions: np.ndarray,
    rings: list[RingSpec],
    d: float,
    edge_slack: float | None = None,
) -> list[tuple[int, int, float]]:
    """Edge set of the design: ring cycles plus crossing-free inter-ring links."""
    eps = default_edge_slack(d) if edge_slack is None else edge_slack
    offsets = np.cumsum([0] + [r.count for r in rings])
    edges: set[tuple[int, int]] = set()

    # left/right neighbours inside each ring
    for k, ring in enumerate(rings):
        base = offsets[k]
        if ring.count >= 2:
            for a in range(ring.count):
                i, j = base + a, base + (a + 1) % ring.count
                edges.add((min(i, j), max(i, j)))

    # links between consecutive rings, shortest first, projections must not cross
    all_accepted: list[tuple[int, int]] = []
    for k in range(len(rings) - 1):
        lo0, hi0 = offsets[k], offsets[k + 1]
        lo1, hi1 = offsets[k + 1], offsets[k + 2]
        cands = []
        for i in range(lo0, hi0):
            for j in range(lo1, hi1):
                dist = float(np.linalg.norm(positions[i] - positions[j]))
                if dist <= d + eps:
                    cands.append((dist, i, j))
        cands.sort()
        accepted: list[tuple[int, int]] = []
        for _, i, j in cands:
            if any(_projections_cross(positions, i, j, a, b) for a, b in accepted):
                continue
            accepted.append((i, j))
            edges.add((i, j))
        all_accepted.extend(accepted)

    # lid of the last ring: diagonals within the same distance window close a
    # tapering top (a truncated top whose diagonals exceed the window stays open)
    top = rings[-1]
    if top.count >= 4:
        lo, hi = offsets[-2], offsets[-1]
        cands = []
        for i in range(lo, hi):
            for j in range(i + 1, hi):
                if (i, j) in edges:
                    continue
                dist = float(np.linalg.norm(positions[i] - positions[j]))
                if dist <= d + eps:
                    cands.append((dist, i, j))
        cands.sort()
        for _, i, j in cands:
            if any(_projections_cross(positions, i, j, a, b) for a, b in all_accepted):
                continue
            all_accepted.append((i, j))
            edges.add((i, j))

    result = []
    for i, j in sorted(edges):
        result.append((i, j, float(np.linalg.norm(positions[i] - positions[j]))))

    spec = FormationSpec(positions=positions, edges=result, rings=rings, d_global=d)
    if not spec.is_connected():
        raise EdgeConstructionError(
            "edge generation produced a disconnected graph; increase the edge slack"
        )
    return result


def _projections_cross(positions: np.ndarray, i: int, j: int, a: int, b: int) -> bool:
    """Strict interior intersection of the z=0 projections of segments ij and ab."""
    if len({i, j, a, b}) < 4:
        return False
    p = positions[:, :2]

    def orient(u, v, w):
        return (v[0] - u[0]) * (w[1] - u[1]) - (v[1] - u[1]) * (w[0] - u[0])

    o1 = orient(p[i], p[j], p[a])
    o2 = orient(p[i], p[j], p[b])
    o3 = orient(p[a], p[b], p[i])
    o4 = orient(p[a], p[b], p[j])
    return (o1 * o2 < 0.0) and (o3 * o4 < 0.0)


# ---- pipeline ---------------------------------------------------------------


def build_formation(
    surface: QuadricSurface, n_agents: int, edge_slack: float | None = None
) -> FormationSpec:
    """Full design pipeline: rings, placement, edges, target distances."""
    rings = build_shield(surface, n_agents)
    positions = place_nodes(surface, rings)
    a_s = total_area(surface)
    l_b = boundary_length(surface)
    d = max_interdistance(n_agents, a_s, l_b)
    edges = generate_edges(positions, rings, d, edge_slack)
    spec = FormationSpec(positions=positions, edges=edges, rings=rings, d_global=d)
    spec.validate(surface)
    return spec
