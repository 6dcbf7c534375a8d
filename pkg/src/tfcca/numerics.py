"""Uniform-grid function arithmetic: quadrature, differentiation,
interpolation and warping on [0,1].

All functions are sampled on the closed uniform grid t_k = k/(n-1). Closed
(circle-domain) functions carry periodic=True and store the identified
endpoint twice, so values[0] == values[-1] by convention.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GridMismatchError, NonMonotoneWarpError, ValidationError

DEFAULT_PDF_GRID = 1000
DEFAULT_CURVE_GRID = 200


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform grid on [0,1] with n_points samples, spacing 1/(n_points-1)."""

    n_points: int

    def __post_init__(self):
        if self.n_points < 3:
            raise ValidationError(f"grid needs >= 3 points, got {self.n_points}")

    @property
    def spacing(self) -> float:
        return 1.0 / (self.n_points - 1)

    @property
    def points(self) -> np.ndarray:
        t = np.linspace(0.0, 1.0, self.n_points)
        t.flags.writeable = False
        return t

    def __eq__(self, other):
        return isinstance(other, Grid) and self.n_points == other.n_points

    def __hash__(self):
        return hash(self.n_points)


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class DiscreteFunction:
    """Scalar or plane-valued function sampled on a Grid.

    values has shape (n,) for scalar functions or (n, 2) for planar ones.
    Instances are immutable; all operations return new objects.
    """

    grid: Grid
    values: np.ndarray
    periodic: bool = False

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim not in (1, 2) or (v.ndim == 2 and v.shape[1] != 2):
            raise ValidationError(f"values must be (n,) or (n,2), got {v.shape}")
        if v.shape[0] != self.grid.n_points:
            raise ValidationError(
                f"values length {v.shape[0]} != grid size {self.grid.n_points}"
            )
        if not np.all(np.isfinite(v)):
            raise ValidationError("values contain non-finite entries")
        object.__setattr__(self, "values", _freeze(v))

    @property
    def is_planar(self) -> bool:
        return self.values.ndim == 2

    @property
    def dimension(self) -> str:
        return "planar" if self.is_planar else "scalar"

    def with_values(self, values: np.ndarray) -> "DiscreteFunction":
        return DiscreteFunction(self.grid, values, self.periodic)

    # Pointwise arithmetic keeps the grid and periodicity of the left operand.
    def __add__(self, other):
        _check_compatible(self, other)
        return self.with_values(self.values + other.values)

    def __sub__(self, other):
        _check_compatible(self, other)
        return self.with_values(self.values - other.values)

    def __mul__(self, scalar):
        return self.with_values(self.values * float(scalar))

    __rmul__ = __mul__

    def __neg__(self):
        return self.with_values(-self.values)


def _check_compatible(a: DiscreteFunction, b: DiscreteFunction):
    if not isinstance(b, DiscreteFunction):
        raise GridMismatchError(f"expected DiscreteFunction, got {type(b).__name__}")
    if a.grid != b.grid:
        raise GridMismatchError(
            f"grid mismatch: {a.grid.n_points} vs {b.grid.n_points} points"
        )
    if a.is_planar != b.is_planar:
        raise GridMismatchError(f"dimension mismatch: {a.dimension} vs {b.dimension}")


def trapezoid_weights(n: int) -> np.ndarray:
    """Quadrature weights for the uniform trapezoidal rule on [0,1]."""
    h = 1.0 / (n - 1)
    w = np.full(n, h)
    w[0] = w[-1] = h / 2.0
    return w


def inner_product(a: DiscreteFunction, b: DiscreteFunction) -> float:
    """L2 inner product over [0,1] by trapezoidal quadrature.

    For planar functions the integrand is the pointwise Euclidean inner
    product of the two 2-vectors.
    """
    _check_compatible(a, b)
    prod = a.values * b.values
    if a.is_planar:
        prod = prod.sum(axis=1)
    return float(trapezoid_weights(a.grid.n_points) @ prod)


def norm(a: DiscreteFunction) -> float:
    """L2 norm, sqrt(inner_product(a, a))."""
    return float(np.sqrt(max(inner_product(a, a), 0.0)))


def derivative(a: DiscreteFunction) -> DiscreteFunction:
    """Differentiate by central differences.

    Interior points use the symmetric stencil. Periodic functions wrap
    (values[-1] identifies with values[0]); open-domain functions fall back
    to one-sided differences at the endpoints.
    """
    v = a.values
    h = a.grid.spacing
    d = np.empty_like(v)
    d[1:-1] = (v[2:] - v[:-2]) / (2 * h)
    if a.periodic:
        # values[-2] is the sample preceding the identified endpoint
        d[0] = (v[1] - v[-2]) / (2 * h)
        d[-1] = d[0]
    else:
        d[0] = (v[1] - v[0]) / h
        d[-1] = (v[-1] - v[-2]) / h
    return a.with_values(d)


def _interp_columns(x: np.ndarray, xp: np.ndarray, fp: np.ndarray) -> np.ndarray:
    if fp.ndim == 1:
        return np.interp(x, xp, fp)
    return np.stack([np.interp(x, xp, fp[:, j]) for j in range(fp.shape[1])], axis=1)


def resample(a: DiscreteFunction, new_grid: Grid) -> DiscreteFunction:
    """Linearly interpolate onto new_grid (identity when grids coincide)."""
    if new_grid == a.grid:
        return a
    vals = _interp_columns(new_grid.points, a.grid.points, a.values)
    return DiscreteFunction(new_grid, vals, a.periodic)


def evaluate(a: DiscreteFunction, x: np.ndarray) -> np.ndarray:
    """Evaluate a at arbitrary points by linear interpolation.

    Periodic functions accept any real x (reduced mod 1); open-domain
    functions require x in [0,1] up to rounding slack.
    """
    x = np.asarray(x, dtype=float)
    if a.periodic:
        x = np.mod(x, 1.0)
    else:
        if x.min() < -1e-9 or x.max() > 1 + 1e-9:
            raise ValidationError(
                f"evaluation points outside [0,1] for a non-periodic function "
                f"(range [{x.min():.3g}, {x.max():.3g}])"
            )
        x = np.clip(x, 0.0, 1.0)
    return _interp_columns(x, a.grid.points, a.values)


def check_warp(gamma: DiscreteFunction, periodic: bool):
    """Validate a warping function.

    Open domain: nondecreasing with gamma(0)=0 and gamma(1)=1. Circle domain:
    nondecreasing degree-1 map, gamma(1) = gamma(0) + 1 (values unwrapped,
    a seed offset is allowed).
    """
    g = gamma.values
    if g.ndim != 1:
        raise NonMonotoneWarpError("warp must be scalar-valued")
    if np.any(np.diff(g) < -1e-12):
        raise NonMonotoneWarpError("warp is not monotone nondecreasing")
    if periodic:
        if abs((g[-1] - g[0]) - 1.0) > 1e-8:
            raise NonMonotoneWarpError(
                f"circle warp must have winding 1, got {g[-1] - g[0]:.6g}"
            )
    else:
        if abs(g[0]) > 1e-8 or abs(g[-1] - 1.0) > 1e-8:
            raise NonMonotoneWarpError(
                f"warp endpoints ({g[0]:.6g}, {g[-1]:.6g}) != (0, 1)"
            )


def compose_warp(a: DiscreteFunction, gamma: DiscreteFunction) -> DiscreteFunction:
    """Evaluate a(gamma(t)) on gamma's grid by linear interpolation."""
    check_warp(gamma, a.periodic)
    vals = evaluate(a, gamma.values)
    return DiscreteFunction(gamma.grid, vals, a.periodic)
