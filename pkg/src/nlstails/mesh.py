"""Uniform space-time mesh, one-sided difference operators and weighted norms.

Conventions used throughout the package:

* spatial nodes are ``x_n = n*h`` for ``n = -n_side .. n_side``, so the mesh
  spans ``[-half_width, half_width]`` exactly;
* time levels are ``t_j = j*k`` for ``j = 0 .. n_steps``;
* a scalar mesh function is an ndarray of shape ``(n_nodes,)``, a two
  component (real/imaginary split) mesh function is an ndarray of shape
  ``(2, n_nodes)``.  All difference operators act along the last axis;
* the mesh is truncated: values beyond the stored index range are taken to
  be zero ("zero ghost" convention).  Forward/backward differences at the
  ends therefore see a zero neighbour.

All reductions use ``np.sum``, which accumulates float arrays pairwise, so
long sums do not lose accuracy to naive left-to-right accumulation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Mesh",
    "bracket",
    "d_plus",
    "d_minus",
    "shift",
    "d_t_plus",
    "inner_l2h",
    "norm_l2h",
    "energy_inner",
    "energy_norm",
    "schwartz_seminorm",
    "as_pair",
]

#: relative slack allowed when checking that half_width/h and horizon/k are
#: whole numbers
_ALIGN_TOL = 1e-9


@dataclass(frozen=True)
class Mesh:
    """Uniform grid on ``[-half_width, half_width] x [0, horizon]``.

    ``h`` and ``k`` are the space and time steps.  Construction fails unless
    ``0 < h <= 1``, ``0 < k <= 1`` and both ``half_width/h`` and ``horizon/k``
    are whole numbers (so the stated endpoints are actual grid points).
    """

    h: float
    k: float
    half_width: float
    horizon: float

    def __post_init__(self):
        if not (0.0 < self.h <= 1.0):
            raise ValueError(f"space step h must lie in (0, 1], got {self.h}")
        if not (0.0 < self.k <= 1.0):
            raise ValueError(f"time step k must lie in (0, 1], got {self.k}")
        if self.half_width <= 0.0:
            raise ValueError("half_width must be positive")
        if self.horizon <= 0.0:
            raise ValueError("horizon must be positive")
        for name, span, step in (
            ("half_width", self.half_width, self.h),
            ("horizon", self.horizon, self.k),
        ):
            ratio = span / step
            if abs(ratio - round(ratio)) > _ALIGN_TOL * max(1.0, ratio):
                raise ValueError(
                    f"{name}={span} is not a whole number of steps {step}"
                )

    @property
    def n_side(self) -> int:
        return int(round(self.half_width / self.h))

    @property
    def n_nodes(self) -> int:
        return 2 * self.n_side + 1

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.k))

    def nodes(self) -> np.ndarray:
        """Spatial nodes ``n*h`` (exact products, not cumulative sums)."""
        return np.arange(-self.n_side, self.n_side + 1, dtype=float) * self.h

    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1, dtype=float) * self.k

    def time(self, j: int) -> float:
        return j * self.k


def as_pair(mesh: Mesh, u1=None, u2=None) -> np.ndarray:
    """Build a (2, n_nodes) two-component mesh function, zero by default."""
    out = np.zeros((2, mesh.n_nodes))
    if u1 is not None:
        out[0] = u1
    if u2 is not None:
        out[1] = u2
    return out


def bracket(x):
    """Smooth weight sqrt(x**2 + 1) (the Japanese bracket of x)."""
    return np.sqrt(x * x + 1.0)


def d_plus(u: np.ndarray, h: float) -> np.ndarray:
    """Forward difference (u(x+h) - u(x))/h with a zero ghost on the right."""
    out = np.empty_like(u)
    out[..., :-1] = (u[..., 1:] - u[..., :-1]) / h
    out[..., -1] = -u[..., -1] / h
    return out


def d_minus(u: np.ndarray, h: float) -> np.ndarray:
    """Backward difference (u(x) - u(x-h))/h with a zero ghost on the left."""
    out = np.empty_like(u)
    out[..., 1:] = (u[..., 1:] - u[..., :-1]) / h
    out[..., 0] = u[..., 0] / h
    return out


def shift(u: np.ndarray) -> np.ndarray:
    """Shift operator (Eu)(x) = u(x+h), zero ghost on the right."""
    out = np.empty_like(u)
    out[..., :-1] = u[..., 1:]
    out[..., -1] = 0.0
    return out


def d_t_plus(u_next: np.ndarray, u_now: np.ndarray, k: float) -> np.ndarray:
    """Forward time difference between two consecutive levels."""
    return (u_next - u_now) / k


def inner_l2h(u: np.ndarray, v: np.ndarray, step: float) -> float:
    """Step-weighted l2 inner product; sums over every axis, so a
    two-component function contributes both components."""
    return step * float(np.sum(u * v))


def norm_l2h(u: np.ndarray, step: float) -> float:
    return float(np.sqrt(step * np.sum(u * u)))


def energy_inner(mesh: Mesh, u: np.ndarray, v: np.ndarray) -> float:
    """Weighted discrete Sobolev inner product.

    Per component: bracket-weighted values, bracket-weighted forward
    differences and unweighted second forward differences, each in the
    h-weighted l2 pairing.  This is the norm the implicit marching scheme is
    coercive in.
    """
    w = bracket(mesh.nodes())
    du = d_plus(u, mesh.h)
    dv = d_plus(v, mesh.h)
    ddu = d_plus(du, mesh.h)
    ddv = d_plus(dv, mesh.h)
    total = (
        np.sum((w * u) * (w * v))
        + np.sum((w * du) * (w * dv))
        + np.sum(ddu * ddv)
    )
    return mesh.h * float(total)


def energy_norm(mesh: Mesh, u: np.ndarray) -> float:
    return float(np.sqrt(max(energy_inner(mesh, u, u), 0.0)))


def schwartz_seminorm(mesh: Mesh, u: np.ndarray, weight_power: int, diff_order: int) -> float:
    """Decay seminorm: l2h norm of bracket(x)**N * (d_plus^n u).

    Finite for every mesh function on the truncated grid; on refinement it
    stays bounded exactly when u decays faster than any polynomial.  Accepts
    scalar or two-component functions (the latter combine in quadrature).
    """
    if weight_power < 0 or diff_order < 0:
        raise ValueError("weight_power and diff_order must be nonnegative")
    v = u
    for _ in range(diff_order):
        v = d_plus(v, mesh.h)
    w = bracket(mesh.nodes()) ** weight_power
    return norm_l2h(w * v, mesh.h)
