"""Smooth background profiles with prescribed power-law behaviour.

The profile assembles the one-sided formal series into a globally smooth
function of (x, t): each series term is damped by a smooth one-sided cutoff
that switches on between radius R and 2R on its own side, so the profile
follows the truncated series in the far field and vanishes (or equals the
shared constant term) in the middle.  Radii increase with the term index
fast enough that the k-th term never exceeds 2**-k where its cutoff is
partially on, keeping the sum tame uniformly in the truncation depth.

The defect  g = i f_t + f_xx + mu |f|^2 f  measures how far the profile is
from an exact solution; by construction it inherits the rapid decay of the
first dropped power, which `schwartz_check` quantifies through weighted
seminorms.  Exact plane-wave and soliton solutions are provided as
backgrounds with (numerically) zero defect for calibration runs.

Conventions: `eval(x, t, dx, dt)` supports dx <= 2, dt <= 1, one of them at
a time; x and t broadcast against each other.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .mesh import Mesh, schwartz_seminorm
from .series import FormalSeries

__all__ = [
    "smooth_step",
    "choose_radii",
    "AsymptoticProfile",
    "make_profile",
    "ZeroBackground",
    "PlaneWaveBackground",
    "SolitonBackground",
    "DefectField",
    "compute_defect",
    "schwartz_check",
    "initial_correction",
]


def smooth_step(s, order: int = 0):
    """C^inf step: 0 for s <= 0, 1 for s >= 1, monotone in between.

    sigma = B(s) / (B(s) + B(1-s)) with the bump B(s) = exp(-1/s).  ``order``
    in {0, 1, 2} selects the value or an exact derivative (no differencing).
    """
    if order not in (0, 1, 2):
        raise ValueError("smooth_step supports order 0, 1, 2")
    scalar = np.ndim(s) == 0
    s = np.atleast_1d(np.asarray(s, dtype=float))
    out = np.zeros(s.shape)
    if order == 0:
        out[s >= 1.0] = 1.0
    mid = (s > 0.0) & (s < 1.0)
    if np.any(mid):
        sm = s[mid]
        u = np.exp(-1.0 / sm)
        v = np.exp(-1.0 / (1.0 - sm))
        d = u + v
        if order == 0:
            out[mid] = u / d
        else:
            du = u / sm ** 2
            dv = -v / (1.0 - sm) ** 2
            w = du * v - u * dv
            if order == 1:
                out[mid] = w / d ** 2
            else:
                ddu = u * (1.0 / sm ** 4 - 2.0 / sm ** 3)
                ddv = v * (1.0 / (1.0 - sm) ** 4 - 2.0 / (1.0 - sm) ** 3)
                dw = ddu * v - u * ddv
                dd = du + dv
                out[mid] = (dw * d - 2.0 * w * dd) / d ** 3
    return float(out[0]) if scalar else out


def choose_radii(series: FormalSeries, min_radius: float = 1.0) -> np.ndarray:
    """Nondecreasing activation radii satisfying the damping rule.

    For the k-th term (0-based, exponent gamma_k < 0) the radius is large
    enough that sup_t |c_k| * R_k**gamma_k <= 2**-k; a zero exponent has no
    damping requirement and takes the running radius.
    """
    path = series.path
    es = series.exponent_set
    sup_c = np.max(np.hypot(path.a, path.b), axis=0)
    radii = np.empty(len(es.exact))
    prev = max(1.0, float(min_radius))
    for k, gamma in enumerate(es.values):
        r = prev
        if gamma < 0 and sup_c[k] > 0:
            r = max(r, (sup_c[k] * 2.0 ** k) ** (1.0 / (-gamma)))
        radii[k] = r
        prev = r
    return radii


def _validate_radii(series: FormalSeries, radii) -> np.ndarray:
    es = series.exponent_set
    radii = np.asarray(radii, dtype=float)
    if radii.shape != (len(es.exact),):
        raise ValueError(
            f"need one radius per retained exponent ({len(es.exact)}), got {radii.shape}"
        )
    if radii[0] < 1.0:
        raise ValueError(f"radii must start at >= 1, got {radii[0]}")
    if np.any(np.diff(radii) < 0):
        raise ValueError("radii must be nondecreasing")
    sup_c = np.max(np.hypot(series.path.a, series.path.b), axis=0)
    for k, gamma in enumerate(es.values):
        if gamma < 0:
            bound = sup_c[k] * radii[k] ** gamma
            if bound > 2.0 ** (-k) * (1.0 + 1e-12):
                raise ValueError(
                    f"radius {radii[k]} leaves term {k} (exponent {gamma}) at "
                    f"size {bound:.3g} > 2**-{k} where its cutoff activates"
                )
    return radii


class AsymptoticProfile:
    """Smooth (x, t) profile following one formal series on each side."""

    def __init__(self, right, left, radii_right, radii_left, global_constant):
        self.right = right
        self.left = left
        self.radii = {}
        if right is not None:
            self.radii[1] = radii_right
        if left is not None:
            self.radii[-1] = radii_left
        self.global_constant = global_constant
        mus = {s.mu for s in (right, left) if s is not None}
        if len(mus) != 1:
            raise ValueError("the two sides must share the nonlinearity sign mu")
        self.mu = mus.pop()

    def eval(self, x, t, dx: int = 0, dt: int = 0):
        """Profile value or derivative, broadcasting x against t.

        dx in {0,1,2}, dt in {0,1}, not both positive (mixed derivatives are
        never needed: the defect and the residual use f, f_t, f_x, f_xx).
        """
        if dx not in (0, 1, 2) or dt not in (0, 1):
            raise ValueError("eval supports dx <= 2 and dt <= 1")
        if dx > 0 and dt > 0:
            raise ValueError("mixed x/t derivatives are not supported")
        xb, tb = np.broadcast_arrays(np.asarray(x, dtype=float),
                                     np.asarray(t, dtype=float))
        shape = xb.shape
        xf = xb.reshape(-1)
        tf = tb.reshape(-1)
        out = np.zeros(xf.shape, dtype=complex)
        for side in (1, -1):
            series = self.right if side == 1 else self.left
            if series is None:
                continue
            path = series.path
            a_row, b_row = (path.eval(tf) if dt == 0 else path.eval_deriv(tf))
            if a_row.ndim == 1:
                a_row = a_row[None, :]
                b_row = b_row[None, :]
            es = series.exponent_set
            z = side * xf
            radii = self.radii[side]
            for k, gamma in enumerate(es.values):
                coef = a_row[:, k] + 1j * b_row[:, k]
                if not np.any(coef):
                    continue
                if gamma == 0.0 and self.global_constant:
                    if side == -1:
                        continue  # identical constant already added once
                    out += coef if dx == 0 else 0.0
                    continue
                r = radii[k]
                live = z > r
                if not np.any(live):
                    continue
                zl = z[live]
                s = zl / r - 1.0
                sig = smooth_step(s, 0)
                p0 = zl ** gamma
                if dx == 0:
                    spatial = sig * p0
                elif dx == 1:
                    spatial = smooth_step(s, 1) / r * p0 + sig * gamma * zl ** (gamma - 1.0)
                else:
                    spatial = (
                        smooth_step(s, 2) / r ** 2 * p0
                        + 2.0 * smooth_step(s, 1) / r * gamma * zl ** (gamma - 1.0)
                        + sig * gamma * (gamma - 1.0) * zl ** (gamma - 2.0)
                    )
                out[live] += coef[live] * spatial * side ** dx
        out = out.reshape(shape)
        return out if shape else complex(out)


def make_profile(right: FormalSeries | None = None,
                 left: FormalSeries | None = None,
                 radii=None,
                 cutoff_constant="auto",
                 min_radius: float = 1.0) -> AsymptoticProfile:
    """Assemble a profile, choosing radii and the constant-term treatment.

    ``cutoff_constant=False`` keeps a zero-exponent term global (exact in x);
    this needs both sides to carry the same constant coefficient path.  With
    True every term is damped one-sidedly.  "auto" globalizes the constant
    exactly when that is valid.  ``radii`` overrides the automatic choice
    (one radius per retained exponent, validated against the damping rule).
    """
    if right is None and left is None:
        raise ValueError("a profile needs at least one side")
    if right is not None and right.side != 1:
        raise ValueError("right must be a side=+1 series")
    if left is not None and left.side != -1:
        raise ValueError("left must be a side=-1 series")

    def constant_paths_match():
        if right is None or left is None:
            return False
        zr = right.exponent_set.index.get(Fraction(0))
        zl = left.exponent_set.index.get(Fraction(0))
        if zr is None or zl is None:
            return False
        tr = right.path.times
        ar = right.path.a[:, zr] + 1j * right.path.b[:, zr]
        al = np.interp(tr, left.path.times, left.path.a[:, zl]) + 1j * np.interp(
            tr, left.path.times, left.path.b[:, zl])
        return bool(np.max(np.abs(ar - al)) <= 1e-12 * max(1.0, np.max(np.abs(ar))))

    has_constant = any(
        s is not None and Fraction(0) in s.exponent_set.index for s in (right, left)
    )
    if cutoff_constant == "auto":
        global_constant = has_constant and constant_paths_match()
    elif cutoff_constant is False:
        if has_constant and not constant_paths_match():
            raise ValueError(
                "a global constant term needs matching zero-exponent "
                "coefficients on both sides; use cutoff_constant=True"
            )
        global_constant = has_constant
    elif cutoff_constant is True:
        global_constant = False
    else:
        raise ValueError("cutoff_constant must be True, False or 'auto'")

    sides = {}
    for side, series in ((1, right), (-1, left)):
        if series is None:
            sides[side] = None
            continue
        if radii is None:
            sides[side] = choose_radii(series, min_radius)
        else:
            sides[side] = _validate_radii(series, radii)
    return AsymptoticProfile(right, left, sides[1], sides[-1], global_constant)


# ------------------------------------------------------------ exact backends


@dataclass(frozen=True)
class ZeroBackground:
    """Trivial background f = 0 (pure correction runs)."""

    mu: float = 1.0

    def eval(self, x, t, dx: int = 0, dt: int = 0):
        xb, tb = np.broadcast_arrays(np.asarray(x, dtype=float),
                                     np.asarray(t, dtype=float))
        out = np.zeros(xb.shape, dtype=complex)
        return out if out.shape else 0j


@dataclass(frozen=True)
class PlaneWaveBackground:
    """Exact spatially uniform solution  alpha * exp(i mu |alpha|^2 t)."""

    amplitude: complex = 1.0
    mu: float = 1.0

    def eval(self, x, t, dx: int = 0, dt: int = 0):
        if dx > 0 and dt > 0:
            raise ValueError("mixed x/t derivatives are not supported")
        xb, tb = np.broadcast_arrays(np.asarray(x, dtype=float),
                                     np.asarray(t, dtype=float))
        rate = self.mu * abs(self.amplitude) ** 2
        val = self.amplitude * np.exp(1j * rate * tb)
        if dx > 0:
            out = np.zeros(xb.shape, dtype=complex)
        elif dt == 1:
            out = 1j * rate * val
        else:
            out = val + 0j * xb
        return out if out.shape else complex(out)


@dataclass(frozen=True)
class SolitonBackground:
    """Exact focusing soliton sqrt(2) eta sech(eta(x - 2 xi t - x0)) e^{i phase}.

    phase = xi x + (eta^2 - xi^2) t + phi0; requires mu = +1.
    """

    eta: float = 1.0
    xi: float = 0.0
    x0: float = 0.0
    phi0: float = 0.0

    @property
    def mu(self) -> float:
        return 1.0

    def eval(self, x, t, dx: int = 0, dt: int = 0):
        if dx > 0 and dt > 0:
            raise ValueError("mixed x/t derivatives are not supported")
        xb, tb = np.broadcast_arrays(np.asarray(x, dtype=float),
                                     np.asarray(t, dtype=float))
        theta = self.eta * (xb - 2.0 * self.xi * tb - self.x0)
        phase = self.xi * xb + (self.eta ** 2 - self.xi ** 2) * tb + self.phi0
        w = np.sqrt(2.0) * self.eta / np.cosh(theta) * np.exp(1j * phase)
        th = np.tanh(theta)
        if dt == 1:
            out = w * (2.0 * self.xi * self.eta * th
                       + 1j * (self.eta ** 2 - self.xi ** 2))
        elif dx == 0:
            out = w
        elif dx == 1:
            out = w * (-self.eta * th + 1j * self.xi)
        else:
            out = w * ((-self.eta * th + 1j * self.xi) ** 2
                       - self.eta ** 2 / np.cosh(theta) ** 2)
        return out if out.shape else complex(out)


# ------------------------------------------------------------------ defect


@dataclass(frozen=True)
class DefectField:
    """g = i f_t + f_xx + mu |f|^2 f for a background f, sampled lazily."""

    background: object
    mesh: Mesh

    @property
    def mu(self) -> float:
        return self.background.mu

    def eval(self, x, t):
        """Complex defect values at arbitrary points."""
        f = self.background.eval(x, t)
        ft = self.background.eval(x, t, dt=1)
        fxx = self.background.eval(x, t, dx=2)
        return 1j * ft + fxx + self.mu * np.abs(f) ** 2 * f

    def level(self, j: int) -> np.ndarray:
        """(2, n_nodes) real/imag parts at time level j."""
        g = self.eval(self.mesh.nodes(), self.mesh.time(j))
        return np.stack([g.real, g.imag])


def compute_defect(background, mesh: Mesh) -> DefectField:
    """Defect of a background on a mesh (values come from analytic derivatives)."""
    return DefectField(background, mesh)


def schwartz_check(defect: DefectField, weight_max: int = 3, diff_max: int = 3,
                   n_time_samples: int = 21) -> np.ndarray:
    """Weighted decay seminorms sup_t || <x>^N D_+^n g ||, N <= weight_max.

    Returns an array S with S[N, n]; all entries finite (and stable under
    domain enlargement) certifies rapid decay of the defect in practice.
    """
    mesh = defect.mesh
    levels = np.unique(np.linspace(0, mesh.n_steps, n_time_samples).astype(int))
    out = np.zeros((weight_max + 1, diff_max + 1))
    for j in levels:
        g = defect.level(int(j))
        for big_n in range(weight_max + 1):
            for small_n in range(diff_max + 1):
                s1 = schwartz_seminorm(mesh, g[0], big_n, small_n)
                s2 = schwartz_seminorm(mesh, g[1], big_n, small_n)
                val = np.hypot(s1, s2)
                if val > out[big_n, small_n]:
                    out[big_n, small_n] = val
    return out


def initial_correction(background, w0, mesh: Mesh) -> np.ndarray:
    """Correction initial data u0 = w0 - f(., 0) as a (2, n_nodes) pair.

    ``w0`` is a callable returning the prescribed complex initial state.
    """
    x = mesh.nodes()
    diff = np.asarray(w0(x), dtype=complex) - background.eval(x, 0.0)
    return np.stack([diff.real, diff.imag])
