"""Geometry of the unit Hilbert sphere in L2([0,1]).

All quantities are available in closed form: geodesic distance is
arccos of the inner product, the exponential map is
exp_p(v) = cos(|v|) p + sin(|v|) v/|v|, and its inverse is
log_p(q) = (d / sin d)(q - cos(d) p). The Karcher mean is computed by
gradient descent on the variance functional using these maps.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import AntipodeError, ValidationError
from .numerics import DiscreteFunction, inner_product, norm

ANTIPODE_MARGIN = 1e-6


@dataclass(frozen=True, eq=False)
class SpherePoint:
    """Unit-norm function on the sphere; renormalized on construction."""

    f: DiscreteFunction

    def __post_init__(self):
        n = norm(self.f)
        if n < 1e-12:
            raise ValidationError("cannot project the zero function to the sphere")
        if abs(n - 1.0) > 1e-12:
            object.__setattr__(self, "f", self.f * (1.0 / n))

    @property
    def grid(self):
        return self.f.grid


@dataclass(frozen=True, eq=False)
class TangentVector:
    """Function v attached to a base sphere point, with <v, base> = 0."""

    base: SpherePoint
    v: DiscreteFunction

    def __post_init__(self):
        ip = inner_product(self.v, self.base.f)
        if abs(ip) > 1e-6:
            raise ValidationError(
                f"tangent vector not orthogonal to base (<v,p> = {ip:.3g})"
            )

    @property
    def length(self) -> float:
        return norm(self.v)


@dataclass(frozen=True)
class KarcherMeanResult:
    mean: SpherePoint
    iterations: int
    final_gradient_norm: float
    converged: bool
    variance_trace: tuple = field(default=())


def _clamped_ip(p1: SpherePoint, p2: SpherePoint) -> float:
    return float(np.clip(inner_product(p1.f, p2.f), -1.0, 1.0))


def geodesic_distance(p1: SpherePoint, p2: SpherePoint) -> float:
    """Great-circle distance arccos(<p1, p2>), in [0, pi]."""
    return float(np.arccos(_clamped_ip(p1, p2)))


def exp_map(base: SpherePoint, v: TangentVector) -> SpherePoint:
    """Follow the geodesic from base with initial velocity v for unit time."""
    if v.base is not base and norm(v.base.f - base.f) > 1e-8:
        raise ValidationError("tangent vector is attached to a different base point")
    L = v.length
    if L < 1e-12:
        return base
    vals = np.cos(L) * base.f.values + (np.sin(L) / L) * v.v.values
    return SpherePoint(DiscreteFunction(base.f.grid, vals, base.f.periodic))


def log_map(base: SpherePoint, target: SpherePoint) -> TangentVector:
    """Inverse exponential map; undefined near the antipode of base."""
    c = _clamped_ip(base, target)
    d = float(np.arccos(c))
    if d >= np.pi - ANTIPODE_MARGIN:
        raise AntipodeError(f"antipode: d(base, target) = {d:.8f} >= pi - 1e-6")
    if d < 1e-14:
        return TangentVector(base, base.f.with_values(np.zeros_like(base.f.values)))
    scale = d / np.sin(d)
    vals = scale * (target.f.values - c * base.f.values)
    # remove quadrature-level drift along the base direction
    w = base.f.with_values(vals)
    drift = inner_product(w, base.f)
    vals = vals - drift * base.f.values
    return TangentVector(base, base.f.with_values(vals))


def tangent_at(base: SpherePoint, values: np.ndarray) -> TangentVector:
    """Build a tangent vector at base, projecting out any base component."""
    w = base.f.with_values(np.asarray(values, dtype=float))
    drift = inner_product(w, base.f)
    return TangentVector(base, w.with_values(w.values - drift * base.f.values))


def karcher_mean(
    points: list,
    step: float = 0.5,
    tol: float = 1e-6,
    max_iter: int = 100,
) -> KarcherMeanResult:
    """Karcher (Frechet) mean on the sphere by tangent-space averaging.

    Iterates p <- exp_p(step * mean_i log_p(p_i)) from the renormalized
    extrinsic average until the gradient norm drops below tol. Non-convergence
    is flagged in the result rather than raised.
    """
    if not points:
        raise ValidationError("karcher_mean needs at least one point")
    if len(points) == 1:
        return KarcherMeanResult(points[0], 0, 0.0, True, (0.0,))

    proto = points[0].f
    stack = np.stack([p.f.values for p in points])
    mean = SpherePoint(DiscreteFunction(proto.grid, stack.mean(axis=0), proto.periodic))

    variance_trace = []
    grad_norm = np.inf
    iterations = 0
    for iterations in range(1, max_iter + 1):
        logs = [log_map(mean, p) for p in points]
        variance_trace.append(float(np.mean([t.length ** 2 for t in logs])))
        avg = np.mean([t.v.values for t in logs], axis=0)
        direction = tangent_at(mean, avg)
        grad_norm = direction.length
        if grad_norm <= tol:
            return KarcherMeanResult(
                mean, iterations, grad_norm, True, tuple(variance_trace)
            )
        mean = exp_map(mean, TangentVector(mean, direction.v * step))
    return KarcherMeanResult(mean, iterations, grad_norm, False, tuple(variance_trace))


def parallel_transport(
    v: TangentVector, source: SpherePoint, target: SpherePoint
) -> TangentVector:
    """Transport v along the geodesic from source to target.

    Uses the standard sphere formula
        v - (<u, v> / d^2) (u + log_target(source)),   u = log_source(target),
    which preserves norms and pairwise inner products.
    """
    d = geodesic_distance(source, target)
    if d < 1e-12:
        return TangentVector(target, v.v)
    if d >= np.pi - ANTIPODE_MARGIN:
        raise AntipodeError("cannot transport to the antipode")
    u = log_map(source, target)
    u_back = log_map(target, source)
    coef = inner_product(u.v, v.v) / (d * d)
    vals = v.v.values - coef * (u.v.values + u_back.v.values)
    return tangent_at(target, vals)
