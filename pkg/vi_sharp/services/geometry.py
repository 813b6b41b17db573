"""Convex feasible sets: projections, distances, membership and the Minkowski gauge.

All sets are immutable after construction and every method is a pure function of
its arguments, so a set may be shared between threads.
"""
from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.optimize import bisect, linprog

from vi_sharp.core.config import settings
from vi_sharp.core.exceptions import (
    CenterNotInterior,
    DidNotConverge,
    DimensionMismatch,
    GeometryError,
    MissingLipschitzBound,
    NoInteriorPoint,
    NonPositiveArgument,
    UnboundedSet,
)

Vector = NDArray[np.float64]


def as_vector(x: ArrayLike, dim: Optional[int] = None, name: str = "x") -> Vector:
    """Coerce ``x`` to a finite 1-D float64 array, optionally checking its dimension."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1 or arr.size == 0:
        raise GeometryError(f"{name} must be a non-empty 1-D vector")
    if not np.all(np.isfinite(arr)):
        raise GeometryError(f"{name} has non-finite coordinates")
    if dim is not None and arr.size != dim:
        raise DimensionMismatch(dim, arr.size, name)
    return arr


def _frozen(x: ArrayLike) -> Vector:
    arr = np.array(x, dtype=np.float64)
    arr.setflags(write=False)
    return arr


def _unit_directions(n: int, dim: int, rng: np.random.Generator) -> NDArray:
    g = rng.standard_normal((n, dim))
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return g / norms


@dataclass(frozen=True)
class ConstraintFunction:
    """A convex function h with a subgradient selection; the set is {h <= 0}."""

    value: Callable[[Vector], float]
    subgradient: Callable[[Vector], Vector]
    lipschitz_bound: Optional[float] = None

    def __call__(self, x: Vector) -> float:
        return float(self.value(x))

    def grad(self, x: Vector) -> Vector:
        g = np.asarray(self.subgradient(x), dtype=np.float64)
        if not np.all(np.isfinite(g)):
            raise GeometryError(f"subgradient is not finite at {x}")
        return g

    def shifted(self, delta: float) -> "ConstraintFunction":
        """Return h - delta (same subgradients)."""
        value = self.value
        return ConstraintFunction(
            value=lambda x: value(x) - delta,
            subgradient=self.subgradient,
            lipschitz_bound=self.lipschitz_bound,
        )


def _ray_exit(
    h: ConstraintFunction,
    origin: Vector,
    direction: Vector,
    rtol: float,
    t_max: Optional[float] = None,
) -> float:
    """Largest t with h(origin + t*direction) <= 0, assuming h(origin) < 0.

    With ``t_max`` the search is confined to [0, t_max] and ``t_max`` itself is
    returned when the whole segment is feasible.
    """

    def g(t: float) -> float:
        return h(origin + t * direction)

    max_steps = settings.BRACKET_MAX_STEPS
    if t_max is not None:
        if g(t_max) <= 0.0:
            return t_max
        lo, hi = 0.0, t_max
    else:
        t = 1.0
        if g(t) > 0.0:
            for _ in range(max_steps):
                t /= 2.0
                if g(t) <= 0.0:
                    break
            else:
                raise DidNotConverge("could not bracket the boundary along the ray")
            lo, hi = t, 2.0 * t
        else:
            for _ in range(max_steps):
                t *= 2.0
                if g(t) > 0.0:
                    break
            else:
                raise UnboundedSet("ray never leaves the set; is it bounded?")
            lo, hi = t / 2.0, t
    xtol = max(rtol * max(lo, hi * 1e-3), 1e-300)
    root = bisect(g, lo, hi, xtol=xtol, rtol=max(rtol, 4 * np.finfo(float).eps))
    # stay on the feasible side of the root
    while root > 0.0 and g(root) > 0.0:
        root -= xtol
    return max(root, 0.0)


class ConvexSet(ABC):
    """Closed bounded convex set in R^dim."""

    dim: int

    # -- required by subclasses -------------------------------------------------

    @abstractmethod
    def _project(self, x: Vector) -> Vector:
        ...

    @abstractmethod
    def constraint(self) -> ConstraintFunction:
        """A convex h with the set equal to {h <= 0}."""

    @abstractmethod
    def bounding_box(self) -> Tuple[Vector, Vector]:
        ...

    # -- shared behaviour -------------------------------------------------------

    def interior_point(self) -> Optional[Vector]:
        return None

    def project(self, x: ArrayLike) -> Vector:
        return self._project(as_vector(x, self.dim))

    def distance(self, x: ArrayLike) -> float:
        x = as_vector(x, self.dim)
        return float(np.linalg.norm(x - self._project(x)))

    def contains(self, x: ArrayLike, tol: float = 0.0) -> bool:
        return self.distance(x) <= tol

    def project_batch(self, points: NDArray) -> NDArray:
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return np.array([self._project(p) for p in points])

    def contains_batch(self, points: NDArray, tol: float = 0.0) -> NDArray:
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        gaps = np.linalg.norm(points - self.project_batch(points), axis=1)
        return gaps <= tol

    def norm_bound(self) -> float:
        """Upper bound on sup{||x||: x in set}."""
        lower, upper = self.bounding_box()
        return float(np.sqrt(np.sum(np.maximum(lower**2, upper**2))))

    def boundary_along(self, direction: Vector) -> Vector:
        """Point where the ray from the interior point along ``direction`` exits."""
        center = self.interior_point()
        if center is None:
            raise NoInteriorPoint("set has no known interior point")
        t = _ray_exit(self.constraint(), center, direction, settings.TOL_GAUGE)
        return center + t * direction

    def sample(
        self, n: int, rng: np.random.Generator, boundary_fraction: float = 0.0
    ) -> NDArray:
        """Draw ``n`` points of the set; a ``boundary_fraction`` share lies on its boundary.

        The default draws rays from the interior point, which covers the set but is
        not uniform; subclasses with a closed form override it.
        """
        center = self.interior_point()
        if center is None:
            raise NoInteriorPoint("sampling needs an interior point")
        dirs = _unit_directions(n, self.dim, rng)
        n_boundary = int(round(n * boundary_fraction))
        scales = rng.random(n) ** (1.0 / self.dim)
        scales[:n_boundary] = 1.0
        out = np.empty((n, self.dim))
        h = self.constraint()
        for i in range(n):
            t = _ray_exit(h, center, dirs[i], settings.TOL_GAUGE)
            out[i] = center + scales[i] * t * dirs[i]
        return out


class Ball(ConvexSet):
    def __init__(self, center: ArrayLike, radius: float):
        self.center = _frozen(as_vector(center, name="center"))
        if not radius > 0:
            raise GeometryError(f"radius must be positive, got {radius}")
        self.radius = float(radius)
        self.dim = self.center.size

    def __repr__(self) -> str:
        return f"Ball(center={self.center.tolist()}, radius={self.radius})"

    def _project(self, x: Vector) -> Vector:
        offset = x - self.center
        norm = np.linalg.norm(offset)
        if norm <= self.radius:
            return x
        return self.center + offset * (self.radius / norm)

    def project_batch(self, points: NDArray) -> NDArray:
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        offset = points - self.center
        norms = np.linalg.norm(offset, axis=1, keepdims=True)
        scale = np.minimum(1.0, self.radius / np.maximum(norms, 1e-300))
        return self.center + offset * scale

    def constraint(self) -> ConstraintFunction:
        center, radius = self.center, self.radius

        def grad(x: Vector) -> Vector:
            offset = x - center
            norm = np.linalg.norm(offset)
            return offset / norm if norm > 0 else np.zeros_like(x)

        return ConstraintFunction(
            value=lambda x: float(np.linalg.norm(x - center) - radius),
            subgradient=grad,
            lipschitz_bound=1.0,
        )

    def interior_point(self) -> Vector:
        return self.center

    def bounding_box(self) -> Tuple[Vector, Vector]:
        return self.center - self.radius, self.center + self.radius

    def norm_bound(self) -> float:
        return float(np.linalg.norm(self.center) + self.radius)

    def sample(
        self, n: int, rng: np.random.Generator, boundary_fraction: float = 0.0
    ) -> NDArray:
        dirs = _unit_directions(n, self.dim, rng)
        radii = self.radius * rng.random(n) ** (1.0 / self.dim)
        radii[: int(round(n * boundary_fraction))] = self.radius
        return self.center + dirs * radii[:, None]


class Box(ConvexSet):
    def __init__(self, lower: ArrayLike, upper: ArrayLike):
        lower = as_vector(lower, name="lower")
        upper = as_vector(upper, lower.size, name="upper")
        if np.any(lower > upper):
            raise GeometryError("box bounds must satisfy lower <= upper")
        self.lower = _frozen(lower)
        self.upper = _frozen(upper)
        self.dim = lower.size

    def __repr__(self) -> str:
        return f"Box(lower={self.lower.tolist()}, upper={self.upper.tolist()})"

    def _project(self, x: Vector) -> Vector:
        return np.minimum(np.maximum(x, self.lower), self.upper)

    def project_batch(self, points: NDArray) -> NDArray:
        return np.clip(np.atleast_2d(points), self.lower, self.upper)

    def constraint(self) -> ConstraintFunction:
        lower, upper, dim = self.lower, self.upper, self.dim

        def value(x: Vector) -> float:
            return float(max(np.max(lower - x), np.max(x - upper)))

        def grad(x: Vector) -> Vector:
            i = int(np.argmax(np.concatenate([lower - x, x - upper])))
            g = np.zeros(dim)
            if i < dim:
                g[i] = -1.0
            else:
                g[i - dim] = 1.0
            return g

        return ConstraintFunction(value=value, subgradient=grad, lipschitz_bound=1.0)

    def interior_point(self) -> Optional[Vector]:
        if np.all(self.lower < self.upper):
            return (self.lower + self.upper) / 2.0
        return None

    def bounding_box(self) -> Tuple[Vector, Vector]:
        return self.lower, self.upper

    def sample(
        self, n: int, rng: np.random.Generator, boundary_fraction: float = 0.0
    ) -> NDArray:
        points = self.lower + rng.random((n, self.dim)) * (self.upper - self.lower)
        n_boundary = int(round(n * boundary_fraction))
        if n_boundary:
            axes = rng.integers(0, self.dim, n_boundary)
            sides = rng.random(n_boundary) < 0.5
            rows = np.arange(n_boundary)
            points[rows, axes] = np.where(sides, self.lower[axes], self.upper[axes])
        return points


class Halfspaces(ConvexSet):
    """Bounded polyhedron {x: a_i . x <= b_i}; projection by Dykstra's algorithm."""

    def __init__(self, normals: ArrayLike, offsets: ArrayLike):
        normals = np.atleast_2d(np.asarray(normals, dtype=np.float64))
        offsets = np.asarray(offsets, dtype=np.float64).reshape(-1)
        if normals.shape[0] != offsets.size:
            raise GeometryError("need one offset per normal")
        if not (np.all(np.isfinite(normals)) and np.all(np.isfinite(offsets))):
            raise GeometryError("half-space data must be finite")
        scale = np.linalg.norm(normals, axis=1)
        if np.any(scale == 0.0):
            raise GeometryError("half-space normals must be non-zero")
        self.normals = _frozen(normals)
        self.offsets = _frozen(offsets)
        self.dim = normals.shape[1]
        self._unit_normals = _frozen(normals / scale[:, None])
        self._unit_offsets = _frozen(offsets / scale)
        self._check_axis_rays()
        self._bbox = self._solve_bounding_box()
        self._center = self._chebyshev_center()

    def __repr__(self) -> str:
        return f"Halfspaces(m={self.normals.shape[0]}, dim={self.dim})"

    def _check_axis_rays(self) -> None:
        # a recession direction d has a_i . d <= 0 for every i
        for j in range(self.dim):
            for sign in (1.0, -1.0):
                if np.all(sign * self.normals[:, j] <= 0.0):
                    axis = "+" if sign > 0 else "-"
                    raise UnboundedSet(f"half-spaces are unbounded along {axis}e_{j}")

    def _solve_bounding_box(self) -> Tuple[Vector, Vector]:
        lower = np.empty(self.dim)
        upper = np.empty(self.dim)
        for j in range(self.dim):
            for sign, out in ((1.0, lower), (-1.0, upper)):
                c = np.zeros(self.dim)
                c[j] = sign
                res = linprog(
                    c,
                    A_ub=self.normals,
                    b_ub=self.offsets,
                    bounds=[(None, None)] * self.dim,
                    method="highs",
                )
                if res.status == 3:
                    raise UnboundedSet(f"half-spaces are unbounded along axis {j}")
                if res.status == 2:
                    raise GeometryError("half-spaces have an empty intersection")
                if res.status != 0:
                    raise GeometryError(f"bounding box LP failed: {res.message}")
                out[j] = res.x[j]
        return _frozen(lower), _frozen(upper)

    def _chebyshev_center(self) -> Optional[Vector]:
        m = self.normals.shape[0]
        c = np.zeros(self.dim + 1)
        c[-1] = -1.0
        a_ub = np.hstack([self._unit_normals, np.ones((m, 1))])
        res = linprog(
            c,
            A_ub=a_ub,
            b_ub=self._unit_offsets,
            bounds=[(None, None)] * self.dim + [(0.0, None)],
            method="highs",
        )
        if res.status != 0 or res.x[-1] <= settings.TOL_PROJ:
            return None
        return _frozen(res.x[:-1])

    def _project(self, x: Vector) -> Vector:
        a, b = self._unit_normals, self._unit_offsets
        tol = settings.TOL_PROJ
        if np.max(a @ x - b) <= 0.0:
            return x
        y = x.copy()
        corrections = np.zeros((a.shape[0], self.dim))
        for _ in range(settings.PROJ_MAX_ITERS):
            y_prev = y
            for i in range(a.shape[0]):
                z = y + corrections[i]
                violation = a[i] @ z - b[i]
                y = z - violation * a[i] if violation > 0.0 else z
                corrections[i] = z - y
            if np.linalg.norm(y - y_prev) <= tol and np.max(a @ y - b) <= tol:
                return y
        raise DidNotConverge(
            f"Dykstra projection did not reach {tol:g} in {settings.PROJ_MAX_ITERS} cycles"
        )

    def constraint(self) -> ConstraintFunction:
        a, b = self._unit_normals, self._unit_offsets
        return ConstraintFunction(
            value=lambda x: float(np.max(a @ x - b)),
            subgradient=lambda x: a[int(np.argmax(a @ x - b))].copy(),
            lipschitz_bound=1.0,
        )

    def contains(self, x: ArrayLike, tol: float = 0.0) -> bool:
        x = as_vector(x, self.dim)
        if np.max(self._unit_normals @ x - self._unit_offsets) <= 0.0:
            return True
        return super().contains(x, tol)

    def interior_point(self) -> Optional[Vector]:
        return self._center

    def bounding_box(self) -> Tuple[Vector, Vector]:
        return self._bbox


class LevelSet(ConvexSet):
    """{x: h(x) <= 0} for a convex h.

    Projection is approximate: the boundary point on the segment from the
    interior point to x, found by bisection.
    """

    def __init__(
        self,
        h: ConstraintFunction,
        dim: int,
        interior_point: Optional[ArrayLike] = None,
    ):
        if dim < 1:
            raise GeometryError("dimension must be positive")
        self.h = h
        self.dim = int(dim)
        self._center: Optional[Vector] = None
        if interior_point is not None:
            center = as_vector(interior_point, self.dim, "interior_point")
            if not h(center) < 0.0:
                raise CenterNotInterior(
                    f"h(interior_point) = {h(center):g} must be negative"
                )
            self._center = _frozen(center)
        self._bbox: Optional[Tuple[Vector, Vector]] = None

    def __repr__(self) -> str:
        return f"LevelSet(dim={self.dim}, interior_point={self._center})"

    @property
    def lipschitz_bound(self) -> Optional[float]:
        return self.h.lipschitz_bound

    def _project(self, x: Vector) -> Vector:
        if self.h(x) <= 0.0:
            return x
        if self._center is None:
            raise NoInteriorPoint(
                "projection onto a level set needs an interior point when h(x) > 0"
            )
        direction = x - self._center
        t = _ray_exit(self.h, self._center, direction, settings.TOL_PROJ, t_max=1.0)
        return self._center + t * direction

    def contains(self, x: ArrayLike, tol: float = 0.0) -> bool:
        x = as_vector(x, self.dim)
        return self.h(x) <= tol * max(1.0, self.h.lipschitz_bound or 1.0)

    def contains_batch(self, points: NDArray, tol: float = 0.0) -> NDArray:
        return np.array([self.contains(p, tol) for p in np.atleast_2d(points)])

    def constraint(self) -> ConstraintFunction:
        return self.h

    def interior_point(self) -> Optional[Vector]:
        return self._center

    def bounding_box(self) -> Tuple[Vector, Vector]:
        # Boundary points along the axes and a fan of fixed directions, padded.
        if self._bbox is None:
            if self._center is None:
                raise NoInteriorPoint("bounding box of a level set needs an interior point")
            rng = np.random.default_rng(settings.SAMPLING_SEED)
            eye = np.eye(self.dim)
            dirs = np.vstack([eye, -eye, _unit_directions(64 * self.dim, self.dim, rng)])
            pts = np.array([self.boundary_along(d) for d in dirs])
            lower, upper = pts.min(axis=0), pts.max(axis=0)
            pad = 0.1 * (upper - lower) + settings.TOL_PROJ
            self._bbox = (_frozen(lower - pad), _frozen(upper + pad))
        return self._bbox


class ExpandedSet(ConvexSet):
    """The Minkowski sum X + eps*B of a convex set with a Euclidean ball."""

    def __init__(self, base: ConvexSet, eps: float):
        if not eps > 0:
            raise NonPositiveArgument(f"eps must be positive, got {eps}")
        self.base = base
        self.eps = float(eps)
        self.dim = base.dim

    def __repr__(self) -> str:
        return f"ExpandedSet({self.base!r}, eps={self.eps})"

    def _project(self, x: Vector) -> Vector:
        p = self.base._project(x)
        gap = np.linalg.norm(x - p)
        if gap <= self.eps:
            return x
        return p + (x - p) * (self.eps / gap)

    def constraint(self) -> ConstraintFunction:
        base, eps = self.base, self.eps

        def grad(x: Vector) -> Vector:
            offset = x - base._project(x)
            norm = np.linalg.norm(offset)
            return offset / norm if norm > 0 else np.zeros_like(x)

        return ConstraintFunction(
            value=lambda x: float(np.linalg.norm(x - base._project(x)) - eps),
            subgradient=grad,
            lipschitz_bound=1.0,
        )

    def interior_point(self) -> Optional[Vector]:
        center = self.base.interior_point()
        if center is not None:
            return center
        lower, upper = self.base.bounding_box()
        return self.base.project((lower + upper) / 2.0)

    def bounding_box(self) -> Tuple[Vector, Vector]:
        lower, upper = self.base.bounding_box()
        return lower - self.eps, upper + self.eps

    def norm_bound(self) -> float:
        return self.base.norm_bound() + self.eps

    def sample(
        self, n: int, rng: np.random.Generator, boundary_fraction: float = 0.0
    ) -> NDArray:
        core = self.base.sample(n, rng, boundary_fraction)
        dirs = _unit_directions(n, self.dim, rng)
        radii = self.eps * rng.random(n) ** (1.0 / self.dim)
        radii[: int(round(n * boundary_fraction))] = self.eps
        return core + dirs * radii[:, None]


# Module-level operations


def project(feasible_set: ConvexSet, x: ArrayLike) -> Vector:
    """Euclidean projection of ``x`` onto the set (approximate for level sets)."""
    return feasible_set.project(x)


def distance(feasible_set: ConvexSet, x: ArrayLike) -> float:
    return feasible_set.distance(x)


def contains(feasible_set: ConvexSet, x: ArrayLike, tol: float = 0.0) -> bool:
    return feasible_set.contains(x, tol)


def minkowski_gauge(feasible_set: ConvexSet, x: ArrayLike, center: ArrayLike) -> float:
    """Minkowski function mu = inf{theta >= 0: center + (x - center)/theta in set}.

    Computed by bisection on the ray from ``center`` through ``x`` to relative
    tolerance ``settings.TOL_GAUGE``; mu <= 1 exactly when x lies in the set.

    Raises:
        CenterNotInterior: ``center`` is not strictly inside the set.
        DidNotConverge: the boundary could not be bracketed.
    """
    x = as_vector(x, feasible_set.dim)
    center = as_vector(center, feasible_set.dim, "center")
    h = feasible_set.constraint()
    if not h(center) < 0.0:
        raise CenterNotInterior(f"center {center.tolist()} is not strictly interior")
    direction = x - center
    if not np.any(direction):
        raise GeometryError("the gauge is undefined at the center itself")
    t = _ray_exit(h, center, direction, settings.TOL_GAUGE)
    if t <= 0.0:
        raise DidNotConverge("gauge bisection collapsed onto the center")
    return 1.0 / t


def expand(feasible_set: ConvexSet, eps: float) -> ConvexSet:
    """Representation of X + eps*B.

    Balls grow their radius, level sets relax to {h <= L*eps} (an outer
    approximation), every other set is wrapped in :class:`ExpandedSet`.
    """
    if not eps > 0:
        raise NonPositiveArgument(f"eps must be positive, got {eps}")
    if isinstance(feasible_set, Ball):
        return Ball(feasible_set.center, feasible_set.radius + eps)
    if isinstance(feasible_set, LevelSet):
        lipschitz = feasible_set.lipschitz_bound
        if lipschitz is None:
            raise MissingLipschitzBound(
                "expanding a level set needs the Lipschitz bound of h"
            )
        return LevelSet(
            feasible_set.h.shifted(lipschitz * eps),
            feasible_set.dim,
            feasible_set.interior_point(),
        )
    return ExpandedSet(feasible_set, eps)


def product_box(boxes: Sequence[Box]) -> Box:
    """Cartesian product of boxes, as one box."""
    return Box(
        np.concatenate([b.lower for b in boxes]),
        np.concatenate([b.upper for b in boxes]),
    )
