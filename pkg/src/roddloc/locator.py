"""Range extraction and convex multilateration.

A decoded link amplitude converts to a range by inverting the path-loss law
with the (assumed known) fading power gain.  Position then comes from
minimizing a sum of one-sided quadratic penalties: each range defines a disc
around the reporting neighbor, and a candidate point pays only for the discs
it lies outside of.

That hinge objective is the exact partial minimum of the conic-program form
of the problem: with the position fixed, the optimal slack for constraint i
is ``max(0, ||z - z_i||^2 - r_i^2)``, so eliminating the slacks analytically
leaves an unconstrained convex function whose minimum value and minimizers
coincide with the conic program's.  It is minimized by a normalized
subgradient pass followed by a deterministic simplex polish on the same
convex objective (inside every disc the function is flat, so minimizers are
generally a region, not a point).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

__all__ = [
    "RangeConstraint",
    "LocationEstimate",
    "estimate_distance",
    "hinge_objective",
    "consistency_error",
    "solve_location",
]

MIN_RANGE_M = 0.01


def estimate_distance(u_mag: float, fading_gain: float, alpha: float, theta: float) -> float:
    """Invert |U| = sqrt(g) * r**(-alpha/2) for the link distance.

    ``fading_gain`` is the power gain |h|^2, assumed known to the receiver
    (e.g. from training).  The raw inverse (g / u^2)**(1/alpha) is clamped
    into [MIN_RANGE_M, (g/theta)**(1/alpha)]: an amplitude overestimate
    cannot produce a nonphysical near-zero range, and an underestimate
    cannot place a neighbor beyond the farthest distance at which the
    threshold test could have passed.
    """
    if u_mag <= 0:
        raise ValueError("amplitude magnitude must be positive")
    if fading_gain <= 0:
        raise ValueError("fading power gain must be positive")
    if theta <= 0:
        raise ValueError("theta must be positive")
    raw = (fading_gain / (u_mag * u_mag)) ** (1.0 / alpha)
    r_max = max((fading_gain / theta) ** (1.0 / alpha), MIN_RANGE_M)
    return min(max(raw, MIN_RANGE_M), r_max)


@dataclass(frozen=True)
class RangeConstraint:
    """A neighbor's reported position and the estimated distance to it."""

    center: tuple[float, float]
    radius: float
    source: str = "anchor"  # "anchor" | "client"

    def center_array(self) -> np.ndarray:
        return np.asarray(self.center, dtype=float)


@dataclass
class LocationEstimate:
    position: np.ndarray
    objective_value: float
    constraint_count: int
    confidence: str  # "determined" (>= 3 constraints) | "underdetermined"


def _stack(constraints) -> tuple[np.ndarray, np.ndarray]:
    centers = np.array([c.center for c in constraints], dtype=float)
    radii = np.array([c.radius for c in constraints], dtype=float)
    return centers, radii


def hinge_objective(z, constraints) -> float:
    """Sum of max(0, ||z - z_i||^2 - r_i^2) over the constraints (m^2).

    Convex in z: each term is a hinge of a convex quadratic.  Equals zero
    exactly on the intersection of all range discs.
    """
    centers, radii = _stack(constraints)
    z = np.asarray(z, dtype=float)
    d2 = np.sum((centers - z) ** 2, axis=1)
    return float(np.sum(np.maximum(0.0, d2 - radii**2)))


def consistency_error(z, constraints) -> float:
    """Sum of |  ||z - z_i||^2 - r_i^2 | — the unrelaxed two-sided objective.

    Used for evaluation and diagnostics only; it is not convex and the
    solver never touches it unless explicitly asked to.
    """
    centers, radii = _stack(constraints)
    z = np.asarray(z, dtype=float)
    d2 = np.sum((centers - z) ** 2, axis=1)
    return float(np.sum(np.abs(d2 - radii**2)))


def solve_location(
    constraints,
    init=None,
    polish_nonconvex: bool = False,
    max_steps: int = 500,
    stall_window: int = 20,
    stall_tol: float = 1e-9,
) -> LocationEstimate:
    """Minimize the hinge objective; returns the best point found.

    Normalized subgradient descent with step c/sqrt(t), c = half the mean
    range, from ``init`` (default: centroid of the constraint centers),
    keeping the best iterate; stops early once the best value improves by
    less than ``stall_tol`` over ``stall_window`` consecutive steps.  A
    deterministic Nelder-Mead pass on the same convex objective then
    finishes the flat tail of the schedule.  With ``polish_nonconvex=True``
    an extra pass runs on :func:`consistency_error` (off by default: that
    objective is not convex and can move the solution off the relaxation's
    optimum).
    """
    constraints = list(constraints)
    if not constraints:
        raise ValueError("at least one range constraint is required")
    centers, radii = _stack(constraints)

    z = np.asarray(init, dtype=float).copy() if init is not None else centers.mean(axis=0)
    step_scale = max(0.5 * float(radii.mean()), 1e-9)

    def objective(p: np.ndarray) -> float:
        d2 = np.sum((centers - p) ** 2, axis=1)
        return float(np.sum(np.maximum(0.0, d2 - radii**2)))

    best_z = z.copy()
    best_f = objective(z)
    last_improve = 0
    for t in range(1, max_steps + 1):
        d2 = np.sum((centers - z) ** 2, axis=1)
        active = d2 > radii**2
        if not np.any(active):
            best_z, best_f = z.copy(), 0.0
            break
        grad = 2.0 * np.sum(z - centers[active], axis=0)
        gnorm = float(np.hypot(*grad))
        if gnorm < 1e-15:
            break
        z = z - (step_scale / math.sqrt(t)) * grad / gnorm
        f = objective(z)
        if f < best_f - stall_tol:
            best_f, best_z = f, z.copy()
            last_improve = t
        elif f < best_f:
            best_f, best_z = f, z.copy()
        if t - last_improve >= stall_window:
            break

    if best_f > 0.0:
        res = optimize.minimize(
            objective,
            best_z,
            method="Nelder-Mead",
            options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 600},
        )
        if res.fun <= best_f:
            best_z, best_f = np.asarray(res.x, dtype=float), float(res.fun)

    if polish_nonconvex:
        res = optimize.minimize(
            lambda p: consistency_error(p, constraints),
            best_z,
            method="Nelder-Mead",
            options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 600},
        )
        best_z = np.asarray(res.x, dtype=float)
        best_f = objective(best_z)

    return LocationEstimate(
        position=best_z,
        objective_value=best_f,
        constraint_count=len(constraints),
        confidence="determined" if len(constraints) >= 3 else "underdetermined",
    )
