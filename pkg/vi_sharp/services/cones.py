"""Polar-cone elements and the unit-norm sharp penalty mapping.

For a point x outside X the sharp penalty returns a unit vector p with
p.(x - y) >= 0 for every y in X; beyond the eps-shell the element is also
eps-strong, i.e. p.(x - y) >= eps for every y in X.
"""
from __future__ import annotations

import threading
import weakref
from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np
from loguru import logger
from numpy.typing import ArrayLike, NDArray

from vi_sharp.core.config import settings
from vi_sharp.core.exceptions import (
    InsideSet,
    NoInteriorPoint,
    SlaterViolation,
    ZeroSubgradient,
)
from vi_sharp.models.schemas import PenaltyKind, PenaltyMethod, Zone
from vi_sharp.services.geometry import (
    ConvexSet,
    ExpandedSet,
    LevelSet,
    Vector,
    as_vector,
    minkowski_gauge,
)

SampleCache = Dict[Tuple[float, int, int], NDArray]

_expansion_samples: "weakref.WeakKeyDictionary[ConvexSet, SampleCache]" = (
    weakref.WeakKeyDictionary()
)
_expansion_lock = threading.Lock()


@dataclass(frozen=True)
class PenaltyValue:
    """Selected element of the sharp penalty mapping at one point."""

    direction: Vector
    zone: Zone
    strong: bool


def has_exact_projection(feasible_set: ConvexSet) -> bool:
    return not isinstance(feasible_set, LevelSet)


def _gauge_boundary_subgradient(feasible_set: ConvexSet, x: Vector) -> Vector:
    center = feasible_set.interior_point()
    if center is None:
        raise NoInteriorPoint("the Minkowski construction needs an interior point")
    if not np.any(x - center):
        raise InsideSet("x coincides with the interior point")
    mu = minkowski_gauge(feasible_set, x, center)
    if mu < 1.0:
        raise InsideSet(f"x is interior (gauge {mu:.6g} < 1)")
    boundary = center + (x - center) / mu
    return feasible_set.constraint().grad(boundary)


def polar_cone_element(
    feasible_set: ConvexSet, x: ArrayLike, method: PenaltyMethod
) -> Vector:
    """Unnormalised p with p.(x - y) >= 0 for all y in the set.

    Args:
        feasible_set: The convex set X.
        x: A point outside the interior of X.
        method: Projection (x - P(x)), Subgradient (g_h(x)) or Minkowski
            (g_h at the gauge boundary point on the ray from the interior point).

    Raises:
        InsideSet: x is strictly interior, so the cone is {0}.
        SlaterViolation: Subgradient method with h(x) <= 0 and no interior point.
        ZeroSubgradient: the selected subgradient vanished.
    """
    return _polar_cone_element(feasible_set, as_vector(x, feasible_set.dim), method)


def _polar_cone_element(feasible_set: ConvexSet, x: Vector, method: PenaltyMethod) -> Vector:
    kind = method.method

    if kind is PenaltyKind.PROJECTION and has_exact_projection(feasible_set):
        p = x - feasible_set._project(x)
        if np.linalg.norm(p) <= settings.TOL_PROJ:
            raise InsideSet("x lies in the set; x - P(x) vanishes")
        return p

    if kind is PenaltyKind.SUBGRADIENT:
        h = feasible_set.constraint()
        hx = h(x)
        if hx < 0.0:
            raise InsideSet(f"h(x) = {hx:.6g} < 0")
        if hx <= 0.0 and feasible_set.interior_point() is None:
            raise SlaterViolation("h(x) <= 0 and no point with h < 0 is known")
        g = h.grad(x)
    else:
        # Minkowski, and Projection on sets whose projection is only approximate
        g = _gauge_boundary_subgradient(feasible_set, x)

    if not np.any(g):
        raise ZeroSubgradient(f"zero subgradient selected at {x.tolist()}")
    return g


def _expansion_sample(feasible_set: ConvexSet, eps: float) -> NDArray:
    """Sampled points of X + eps*B, cached per set, eps, sample count and seed."""
    key = (eps, settings.CERTIFY_SAMPLES, settings.SAMPLING_SEED)
    with _expansion_lock:
        cache = _expansion_samples.setdefault(feasible_set, {})
        if key not in cache:
            rng = np.random.default_rng(settings.SAMPLING_SEED)
            cache[key] = ExpandedSet(feasible_set, eps).sample(
                settings.CERTIFY_SAMPLES, rng, boundary_fraction=0.5
            )
        return cache[key]


def _strong_certificate(
    feasible_set: ConvexSet, x: Vector, direction: Vector, eps: float
) -> bool:
    worst = float(np.min((x - _expansion_sample(feasible_set, eps)) @ direction))
    if worst < -settings.CERTIFY_TOL:
        logger.warning(
            f"eps-strong certificate failed at {x.tolist()}: "
            f"min p.(x - y') = {worst:.3e} over X + {eps:g}B"
        )
        return False
    return True


def sharp_penalty(
    feasible_set: ConvexSet,
    x: ArrayLike,
    method: PenaltyMethod,
    certify: bool = True,
) -> PenaltyValue:
    """Evaluate the eps-sharp penalty mapping at ``x``.

    Zones are classified by d = distance(X, x): inside (direction 0), shell
    (0 < d <= eps, a unit polar-cone element) and outside (d > eps, a unit element
    that is eps-strong). Projection elements are strong by construction; the other
    constructions are certified by sampling X + eps*B when ``certify`` is set.
    """
    return penalty_at(feasible_set, as_vector(x, feasible_set.dim), method, certify)


def penalty_at(
    feasible_set: ConvexSet, x: Vector, method: PenaltyMethod, certify: bool = False
) -> PenaltyValue:
    """sharp_penalty for an already validated float64 vector of the set's dimension."""
    tol = settings.TOL_PROJ
    eps = method.epsilon

    if method.method is PenaltyKind.PROJECTION and has_exact_projection(feasible_set):
        offset = x - feasible_set._project(x)
        gap = float(np.sqrt(offset @ offset))
        if gap <= tol:
            return PenaltyValue(np.zeros_like(x), Zone.INSIDE, False)
        if gap <= eps:
            return PenaltyValue(offset / gap, Zone.SHELL, False)
        return PenaltyValue(offset / gap, Zone.OUTSIDE, True)

    offset = x - feasible_set._project(x)
    gap = float(np.sqrt(offset @ offset))
    if gap <= tol:
        return PenaltyValue(np.zeros_like(x), Zone.INSIDE, False)
    p = _polar_cone_element(feasible_set, x, method)
    direction = p / np.linalg.norm(p)
    if gap <= eps:
        return PenaltyValue(direction, Zone.SHELL, False)
    strong = _strong_certificate(feasible_set, x, direction, eps) if certify else False
    return PenaltyValue(direction, Zone.OUTSIDE, strong)
