"""Distributed gradient control law driving agents onto the designed shield.

Every agent descends a shared potential: quartic distance mismatch with its
graph neighbours, quadratic surface mismatch, plus a reciprocal barrier that
keeps trajectories above the ground plane (and optionally below a cap) when
the shield is a truncated surface.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .builder import FormationSpec
from .quadric import QuadricSurface, surface_gradient, surface_residual


class BarrierDomainError(RuntimeError):
    """State left the admissible half-space of the barrier potential."""


@dataclass(frozen=True)
class ControlGains:
    kappa1: float
    kappa2: float
    kappa3: float = 0.0
    barrier_eps: float = 0.05
    z_upper: float | None = None

    def __post_init__(self):
        if self.kappa1 <= 0 or self.kappa2 <= 0:
            raise ValueError("kappa1 and kappa2 must be positive")
        if self.kappa3 < 0:
            raise ValueError("kappa3 must be nonnegative")
        if self.barrier_eps <= 0:
            raise ValueError("barrier_eps must be positive")


def default_gains(
    surface: QuadricSurface,
    kappa1: float,
    kappa2: float,
    kappa3: float = 0.0,
    z_upper: float | None = None,
) -> ControlGains:
    """Gains with the barrier threshold set to a small fraction of the height."""
    return ControlGains(
        kappa1=kappa1,
        kappa2=kappa2,
        kappa3=kappa3,
        barrier_eps=0.05 * surface.height,
        z_upper=z_upper,
    )


@dataclass(frozen=True)
class PotentialParts:
    w1: float          # distance-mismatch share
    w2: float          # surface-mismatch share
    barrier: float     # repulsive shares (ground plane and optional cap)

    @property
    def w(self) -> float:
        return self.w1 + self.w2

    @property
    def total(self) -> float:
        """Quantity the closed loop actually descends."""
        return self.w1 + self.w2 + self.barrier


def edge_error_vector(spec: FormationSpec, positions: np.ndarray) -> np.ndarray:
    """Stacked signed errors (squared distance minus squared target) per edge."""
    p = np.asarray(positions, dtype=float)
    idx = spec.edge_index_array()
    d2 = np.sum((p[idx[:, 0]] - p[idx[:, 1]]) ** 2, axis=1)
    return d2 - spec.target_distances() ** 2


def _barrier_energy(p_z: np.ndarray, gains: ControlGains) -> float:
    if gains.kappa3 == 0.0:
        return 0.0
    eps = gains.barrier_eps
    if np.any(p_z <= 0.0):
        raise BarrierDomainError("agent height reached the ground plane")
    total = 0.0
    low = p_z[p_z <= eps]
    total += 0.5 * gains.kappa3 * np.sum((1.0 / low - 1.0 / eps) ** 2)
    if gains.z_upper is not None:
        gap = gains.z_upper - p_z
        if np.any(gap <= 0.0):
            raise BarrierDomainError("agent height reached the upper cap")
        high = gap[gap <= eps]
        total += 0.5 * gains.kappa3 * np.sum((1.0 / high - 1.0 / eps) ** 2)
    return float(total)


def repulsive_term(p_z: float, gains: ControlGains) -> float:
    """Vertical barrier force on an agent at height p_z (z-component of -grad U)."""
    if gains.kappa3 == 0.0:
        return 0.0
    eps = gains.barrier_eps
    if p_z <= 0.0:
        raise BarrierDomainError("agent height reached the ground plane")
    force = 0.0
    if p_z <= eps:
        force += gains.kappa3 * (1.0 / p_z - 1.0 / eps) / p_z**2
    if gains.z_upper is not None:
        gap = gains.z_upper - p_z
        if gap <= 0.0:
            raise BarrierDomainError("agent height reached the upper cap")
        if gap <= eps:
            force -= gains.kappa3 * (1.0 / gap - 1.0 / eps) / gap**2
    return float(force)


def potential(
    spec: FormationSpec,
    surface: QuadricSurface,
    positions: np.ndarray,
    gains: ControlGains,
) -> PotentialParts:
    p = np.asarray(positions, dtype=float)
    e = edge_error_vector(spec, p)
    fs = surface_residual(surface, p)
    w1 = 0.25 * gains.kappa1 * float(e @ e)
    w2 = 0.25 * gains.kappa2 * float(np.asarray(fs) @ np.asarray(fs))
    return PotentialParts(w1=w1, w2=w2, barrier=_barrier_energy(p[:, 2], gains))


def control_input(
    i: int,
    positions: np.ndarray,
    spec: FormationSpec,
    surface: QuadricSurface,
    gains: ControlGains,
    neighbors: list[list[int]] | None = None,
    targets: dict[tuple[int, int], float] | None = None,
) -> np.ndarray:
    """Control of one agent from its own state and relative neighbour vectors."""
    p = np.asarray(positions, dtype=float)
    if targets is None:
        targets = {(a, b): d for a, b, d in spec.edges}
    if neighbors is None:
        nbrs = [b for a, b, _ in spec.edges if a == i] + [a for a, b, _ in spec.edges if b == i]
    else:
        nbrs = neighbors[i]
    u = np.zeros(3)
    for j in nbrs:
        dstar = targets.get((i, j)) or targets.get((j, i))
        diff = p[i] - p[j]
        u -= gains.kappa1 * (diff @ diff - dstar**2) * diff
    fs_i = surface_residual(surface, p[i])
    u -= 0.5 * gains.kappa2 * fs_i * surface_gradient(surface, p[i])
    if gains.kappa3 > 0.0:
        u[2] += repulsive_term(p[i, 2], gains)
    return u


def control_stack(
    positions: np.ndarray,
    spec: FormationSpec,
    surface: QuadricSurface,
    gains: ControlGains,
) -> np.ndarray:
    """All agents' control inputs at once (same law, vectorized)."""
    p = np.asarray(positions, dtype=float)
    n = len(p)
    idx = spec.edge_index_array()
    e = edge_error_vector(spec, p)
    diffs = p[idx[:, 0]] - p[idx[:, 1]]
    contrib = gains.kappa1 * e[:, None] * diffs
    u = np.zeros((n, 3))
    np.subtract.at(u, idx[:, 0], contrib)
    np.add.at(u, idx[:, 1], contrib)
    fs = surface_residual(surface, p)
    u -= 0.5 * gains.kappa2 * fs[:, None] * surface_gradient(surface, p)
    if gains.kappa3 > 0.0:
        eps = gains.barrier_eps
        pz = p[:, 2]
        if np.any(pz <= 0.0):
            raise BarrierDomainError("agent height reached the ground plane")
        low = pz <= eps
        u[low, 2] += gains.kappa3 * (1.0 / pz[low] - 1.0 / eps) / pz[low] ** 2
        if gains.z_upper is not None:
            gap = gains.z_upper - pz
            if np.any(gap <= 0.0):
                raise BarrierDomainError("agent height reached the upper cap")
            high = gap <= eps
            u[high, 2] -= gains.kappa3 * (1.0 / gap[high] - 1.0 / eps) / gap[high] ** 2
    return u


def suggest_kappa2(spec: FormationSpec, surface: QuadricSurface, kappa1: float) -> float:
    """Surface-term gain putting both potential shares on a similar scale."""
    avg_degree = 2.0 * spec.n_edges / spec.n_agents
    q_norm = max(abs(c) for c in surface.coeffs)
    return avg_degree * spec.d_global**2 / q_norm * kappa1
