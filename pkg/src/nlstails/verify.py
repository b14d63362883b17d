"""End-to-end verification of constructed solutions.

Three independent consistency gates:

* continuum residuals — plug the assembled solution (background profile plus
  interpolated correction) into the governing equation with analytic kernel
  derivatives, never re-differencing, so the measured residual reflects the
  marching scheme and not post-processing;
* refinement ladders — sup-norm errors over a fixed compact window against an
  exact formula or a finer run, with observed reduction ratios;
* difference experiments — exponential (Gronwall-type) envelopes for the gap
  between two runs, and cross-pipeline comparison of the full solution under
  different cutoff radii choices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .background import (
    ZeroBackground,
    compute_defect,
    initial_correction,
    make_profile,
)
from .mesh import Mesh, norm_l2h, schwartz_seminorm
from .sincinterp import combined_interp
from .stepper import extend_time, march

__all__ = [
    "ResidualReport",
    "CombinedSolution",
    "complex_residual",
    "pde_residual",
    "gnls_residual",
    "ConvergenceTable",
    "convergence_study",
    "UniquenessReport",
    "uniqueness_experiment",
    "IndependenceReport",
    "profile_independence_check",
    "gronwall_constant",
    "schwartz_observable",
]

#: levels below this absolute size are treated as rounding noise and excluded
#: from exponential-rate fits
FIT_FLOOR = 1e2 * np.finfo(float).eps


def _eval_complex(field, xs, ts, dx=0, dt=0):
    """Evaluate a solution-like object on the lattice -> complex (nt, nx).

    Accepts space-time interpolants and combined solutions (via
    ``eval_grid`` returning a real pair) as well as profile/exact-backend
    objects (via broadcasting ``eval``).
    """
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    if hasattr(field, "eval_grid"):
        pair = field.eval_grid(xs, ts, dx, dt)
        return pair[0] + 1j * pair[1]
    out = np.asarray(field.eval(xs[None, :], ts[:, None], dx, dt))
    if np.iscomplexobj(out):
        return np.broadcast_to(out, (ts.size, xs.size)).copy()
    return out[0] + 1j * out[1]


@dataclass(frozen=True)
class CombinedSolution:
    """Full solution w = f + (interpolated correction), grid-evaluable."""

    background: object
    interp: object  # SpaceTimeInterpolant

    def eval_grid(self, xs, ts, dx: int = 0, dt: int = 0):
        pair = self.interp.eval_grid(xs, ts, dx, dt)
        f = _eval_complex(self.background, xs, ts, dx, dt)
        return pair + np.stack([f.real, f.imag])


@dataclass(frozen=True)
class ResidualReport:
    """Pointwise residual magnitudes on an evaluation lattice."""

    equation: str  # "full" or "correction"
    xs: np.ndarray
    ts: np.ndarray
    magnitudes: np.ndarray  # (len(ts), len(xs))

    @property
    def max_residual(self) -> float:
        return float(np.max(self.magnitudes)) if self.magnitudes.size else 0.0

    @property
    def l2_residual(self) -> float:
        """Lattice-normalized root mean square of the residual."""
        if not self.magnitudes.size:
            return 0.0
        return float(np.sqrt(np.mean(self.magnitudes**2)))


def complex_residual(solution, mu: float, xs, ts) -> np.ndarray:
    """i w_t + w_xx + mu |w|^2 w on the lattice, as a complex (nt, nx) array."""
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    w = _eval_complex(solution, xs, ts, 0, 0)
    wt = _eval_complex(solution, xs, ts, 0, 1)
    wxx = _eval_complex(solution, xs, ts, 2, 0)
    return 1j * wt + wxx + mu * np.abs(w) ** 2 * w


def pde_residual(solution, mu: float, xs, ts) -> ResidualReport:
    """Residual of  i w_t + w_xx + mu |w|^2 w  on the lattice ts x xs.

    ``solution`` may be an exact backend, a profile, an interpolant, or a
    CombinedSolution; it must supply second space and first time derivatives
    analytically.
    """
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    res = complex_residual(solution, mu, xs, ts)
    return ResidualReport("full", xs, ts, np.abs(res))


def gnls_residual(correction, background, mu: float, xs, ts,
                  defect=None) -> ResidualReport:
    """Residual of the correction equation driven by background f and defect g:

        i u_t + u_xx + mu (u^2 conj(u) + u^2 conj(f) + f^2 conj(u)
                           + 2 u conj(u) f + 2 u f conj(f)) + g = 0.

    With g the defect of f this residual coincides identically with the full
    equation's residual at w = f + u.
    """
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    u = _eval_complex(correction, xs, ts, 0, 0)
    ut = _eval_complex(correction, xs, ts, 0, 1)
    uxx = _eval_complex(correction, xs, ts, 2, 0)
    f = _eval_complex(background, xs, ts, 0, 0)
    cubic = (u**2 * np.conj(u) + u**2 * np.conj(f) + f**2 * np.conj(u)
             + 2.0 * u * np.conj(u) * f + 2.0 * u * f * np.conj(f))
    res = 1j * ut + uxx + mu * cubic
    if defect is not None:
        x_grid, t_grid = np.meshgrid(xs, ts)
        res = res + defect.eval(x_grid, t_grid)
    return ResidualReport("correction", xs, ts, np.abs(res))


# --------------------------------------------------------------- refinement


@dataclass(frozen=True)
class ConvergenceTable:
    """Rows of (h, k, sup error on the window, ratio to previous row)."""

    rows: tuple
    window: float

    def errors(self) -> np.ndarray:
        return np.array([r[2] for r in self.rows])

    def ratios(self) -> np.ndarray:
        return np.array([r[3] for r in self.rows])


def _window_error(mesh, result, background, exact, window):
    """sup over stored levels and nodes |x| <= window of |w_run - w_ref|."""
    nodes = mesh.nodes()
    mask = np.abs(nodes) <= window + 1e-12
    xs = nodes[mask]
    worst = 0.0
    for row, j in enumerate(result.stored_steps):
        t = mesh.time(int(j))
        w = result.levels[row][0][mask] + 1j * result.levels[row][1][mask]
        if background is not None:
            w = w + _eval_complex(background, xs, [t])[0]
        ref = _eval_complex(exact, xs, [t])[0]
        worst = max(worst, float(np.max(np.abs(w - ref))))
    return worst


def convergence_study(w0, ladder, *, mu: float, half_width: float,
                      horizon: float, window: float = 5.0, exact=None,
                      series=None, cutoff_constant="auto",
                      store_every: int = 1) -> ConvergenceTable:
    """Run the pipeline on each (h, k) rung and report sup-norm errors.

    ``w0`` is the prescribed initial state (callable of x).  When ``series``
    (a (right, left) pair of formal solutions) is given, each rung builds a
    profile and marches the correction; otherwise the background is zero and
    the correction is the whole solution.  ``exact`` is a complex-valued
    reference backend; if None, a reference run at half the finest rung's
    steps stands in for it.
    """
    ladder = list(ladder)
    if len(ladder) < 2:
        raise ValueError("a refinement ladder needs at least 2 rungs")

    if exact is None:
        h_f, k_f = ladder[-1]
        ref_mesh = Mesh(h=h_f / 2, k=k_f / 2, half_width=half_width,
                        horizon=horizon)
        ref_bg, ref_res = _run_rung(w0, ref_mesh, mu, series, cutoff_constant, 1)
        ref_interp = combined_interp(extend_time(ref_res))
        exact = CombinedSolution(ref_bg, ref_interp) if ref_bg is not None \
            else ref_interp

    rows = []
    prev = None
    for h, k in ladder:
        mesh = Mesh(h=h, k=k, half_width=half_width, horizon=horizon)
        background, result = _run_rung(w0, mesh, mu, series, cutoff_constant,
                                       store_every)
        err = _window_error(mesh, result, background, exact, window)
        ratio = float("nan") if prev is None or err == 0.0 else prev / err
        rows.append((h, k, err, ratio))
        prev = err
    return ConvergenceTable(tuple(rows), window)


def _run_rung(w0, mesh, mu, series, cutoff_constant, store_every):
    if series is None:
        if w0 is None:
            u0 = np.zeros((2, mesh.n_nodes))
        else:
            vals = np.asarray(w0(mesh.nodes()), dtype=complex)
            u0 = np.stack([vals.real, vals.imag])
        result = march(mesh, u0, background=ZeroBackground(mu),
                       store_every=store_every)
        return None, result
    right, left = series
    profile = make_profile(right, left, cutoff_constant=cutoff_constant)
    defect = compute_defect(profile, mesh)
    if w0 is None:
        u0 = np.zeros((2, mesh.n_nodes))  # data prescribed as the profile trace
    else:
        u0 = initial_correction(profile, w0, mesh)
    result = march(mesh, u0, background=profile, defect=defect,
                   store_every=store_every)
    return profile, result


# ----------------------------------------------------------- run differences


@dataclass(frozen=True)
class UniquenessReport:
    """Gap evolution between two runs and its exponential envelope."""

    times: np.ndarray
    q_norms: np.ndarray
    q0_norm: float
    rate: float  # fitted exponent C-hat (0 when nothing to fit)
    tol: float
    envelope_ok: bool
    n_fitted: int

    @property
    def amplification(self) -> float:
        return self.q_norms[-1] / self.q0_norm if self.q0_norm > 0 else 0.0


def uniqueness_experiment(u0_a, u0_b, *, mesh: Mesh, background=None,
                          defect=None, tol: float = 0.05,
                          store_every: int = 1) -> UniquenessReport:
    """March both data and check  |q_j| <= e^{C t_j} |q_0| (1 + tol).

    The rate is least squares on log |q_j| over levels above FIT_FLOOR.
    """
    res_a = march(mesh, u0_a, background=background, defect=defect,
                  store_every=store_every)
    res_b = march(mesh, u0_b, background=background, defect=defect,
                  store_every=store_every)
    times = np.array([mesh.time(int(j)) for j in res_a.stored_steps])
    gaps = res_a.levels - res_b.levels
    q_norms = np.array([norm_l2h(g, mesh.h) for g in gaps])
    q0 = float(q_norms[0])

    usable = q_norms > FIT_FLOOR
    if int(usable.sum()) >= 2:
        slope, _ = np.polyfit(times[usable], np.log(q_norms[usable]), 1)
        rate = float(slope)
    else:
        rate = 0.0

    envelope = np.exp(rate * times) * q0 * (1.0 + tol)
    ok = bool(np.all(q_norms <= envelope + FIT_FLOOR))
    return UniquenessReport(times, q_norms, q0, rate, tol, ok,
                            int(usable.sum()))


@dataclass(frozen=True)
class IndependenceReport:
    """Gap between full solutions built with two different cutoff choices."""

    h: float
    k: float
    window: float
    sup_difference: float


def profile_independence_check(w0, right, left, radii_a, radii_b, *,
                               mesh: Mesh, cutoff_constant=True,
                               window: float = 5.0,
                               store_every: int = 1) -> IndependenceReport:
    """Run the pipeline twice with different radii; compare w = f + u.

    The comparison is the sup over stored levels and window nodes, where the
    interpolated correction coincides with its samples.
    """
    nodes = mesh.nodes()
    mask = np.abs(nodes) <= window + 1e-12
    solutions = []
    for radii in (radii_a, radii_b):
        profile = make_profile(right, left, radii=np.asarray(radii, float),
                               cutoff_constant=cutoff_constant)
        defect = compute_defect(profile, mesh)
        u0 = initial_correction(profile, w0, mesh)
        result = march(mesh, u0, background=profile, defect=defect,
                       store_every=store_every)
        w_levels = []
        for row, j in enumerate(result.stored_steps):
            f = _eval_complex(profile, nodes[mask], [mesh.time(int(j))])[0]
            w_levels.append(result.levels[row][0][mask]
                            + 1j * result.levels[row][1][mask] + f)
        solutions.append(np.array(w_levels))
    sup = float(np.max(np.abs(solutions[0] - solutions[1])))
    return IndependenceReport(mesh.h, mesh.k, window, sup)


# ------------------------------------------------------- run-shape observables


def gronwall_constant(result) -> float:
    """Smallest C with (e_{j+1}-e_j)/k <= C[(e_j^2+1) e_{j+1} + e_j + 1].

    e_j is the energy-norm column of the march ledger.  Growth steps fix C;
    a run whose energy never grows reports 0.
    """
    eta = np.asarray(result.ledger["energy"], dtype=float)
    if eta.size < 2:
        return 0.0
    num = np.diff(eta) / result.mesh.k
    den = (eta[:-1] ** 2 + 1.0) * eta[1:] + eta[:-1] + 1.0
    return float(max(0.0, np.max(num / den)))


def schwartz_observable(result, weight_max: int = 3,
                        diff_max: int = 3) -> np.ndarray:
    """max_j of the decay seminorms |<x>^N D_+^n u_j| over stored levels.

    Returns a (weight_max+1, diff_max+1) array; uniform boundedness of these
    entries across mesh refinement is the discrete trace of rapid decay.
    """
    out = np.zeros((weight_max + 1, diff_max + 1))
    for level in result.levels:
        for big_n in range(weight_max + 1):
            for n in range(diff_max + 1):
                val = schwartz_seminorm(result.mesh, level, big_n, n)
                out[big_n, n] = max(out[big_n, n], val)
    return out
