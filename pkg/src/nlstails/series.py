"""Formal power-law series for the cubic Schrodinger equation.

A prescribed behaviour at infinity is a finite list of leading exponents
(all <= 0) with complex amplitudes.  Substituting a series

    w(x, t) ~ sum_j (a_j(t) + i b_j(t)) x**gamma_j

into ``i w_t + w_xx + mu |w|^2 w = 0`` closes on an exponent lattice: every
gamma is a sum of one or more leading exponents minus an even nonnegative
integer.  Matching the coefficient of each power x**gamma_j gives a coupled
ODE system for the coefficient functions:

    a_j' = -mu * sum_{(l,m,n): g_l+g_m+g_n = g_j}
               (-a_l a_m b_n + a_l a_n b_m + a_n a_m b_l + b_l b_m b_n)
           - sum_{p: g_p - 2 = g_j} b_p g_p (g_p - 1)

    b_j' = +mu * sum_{(l,m,n): g_l+g_m+g_n = g_j}
               (a_l a_m a_n + a_l b_n b_m + b_n a_m b_l - b_l b_m a_n)
           + sum_{p: g_p - 2 = g_j} a_p g_p (g_p - 1)

with the triple sums running over ordered index triples.  For a positive
leading exponent no formal solution exists (the top power forces the leading
amplitude to vanish), which is reported as :class:`PositiveLeadingExponent`.

Exponent identities are decided with exact rational arithmetic
(``fractions.Fraction``); floating point only enters when coefficients are
integrated in time.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

__all__ = [
    "PositiveLeadingExponent",
    "ExponentSet",
    "CoefficientPath",
    "FormalSeries",
    "reject_positive_beta",
    "build_exponent_set",
    "coefficient_rhs",
    "solve_coefficients",
    "formal_residual",
    "evaluate_series",
]

DEFAULT_ODE_SAMPLES = 10000


class PositiveLeadingExponent(ValueError):
    """No formal series solution exists for a positive leading exponent.

    Matching the largest power produced by the cubic term forces the squared
    modulus of the leading amplitude to vanish, so any request with
    beta_0 > 0 is rejected before any construction work happens.
    """


def _to_fraction(value) -> Fraction:
    """Canonicalize an exponent to an exact rational.

    Floats go through their shortest decimal repr, so config values like
    -0.5 mean the exact rational -1/2.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(repr(value))
    raise TypeError(f"cannot interpret exponent {value!r}")


def reject_positive_beta(generators) -> None:
    """Raise PositiveLeadingExponent when the leading exponent is positive."""
    gens = [_to_fraction(g) for g in generators]
    if not gens:
        raise ValueError("at least one leading exponent is required")
    beta0 = max(gens)
    if beta0 > 0:
        raise PositiveLeadingExponent(
            f"leading exponent {beta0} > 0: the cubic term forces the leading "
            "amplitude to vanish, no formal series solution exists"
        )


class ExponentSet:
    """Exponent lattice truncated at a floor.

    ``exponents`` is strictly decreasing, starts at the largest generator and
    keeps every lattice point >= -floor.  The list is closed within the
    floor: any sum of three members that stays above the floor is again a
    member, and so is gamma - 2 for any member gamma >= -floor + 2.
    """

    def __init__(self, generators, floor, exponents):
        self.generators = tuple(generators)
        self.floor = floor
        self.exact = tuple(exponents)
        self.values = np.array([float(g) for g in exponents])
        self.index = {g: i for i, g in enumerate(self.exact)}
        self._triples = None
        self._linear = None

    def __len__(self):
        return len(self.exact)

    def __repr__(self):
        gens = ", ".join(str(g) for g in self.generators)
        return f"ExponentSet([{gens}], floor={self.floor}, n={len(self)})"

    # -- index tables -----------------------------------------------------

    def _build_tables(self):
        """Ordered-triple and second-derivative source tables.

        triple_* are flat arrays over all ordered triples (l, m, n) whose
        exponents sum to a retained exponent; triple_owner holds the index
        that the triple feeds.  linear_* lists pairs (p, j) with
        gamma_p - 2 = gamma_j together with the factor gamma_p*(gamma_p-1).
        """
        E = len(self.exact)
        tl, tm, tn, towner = [], [], [], []
        for l in range(E):
            for m in range(E):
                s2 = self.exact[l] + self.exact[m]
                for n in range(E):
                    j = self.index.get(s2 + self.exact[n])
                    if j is not None:
                        tl.append(l)
                        tm.append(m)
                        tn.append(n)
                        towner.append(j)
        lp, lowner, lcoef = [], [], []
        for p in range(E):
            j = self.index.get(self.exact[p] - 2)
            if j is not None:
                g = self.values[p]
                lp.append(p)
                lowner.append(j)
                lcoef.append(g * (g - 1.0))
        self._triples = (
            np.array(tl, dtype=np.intp),
            np.array(tm, dtype=np.intp),
            np.array(tn, dtype=np.intp),
            np.array(towner, dtype=np.intp),
        )
        self._linear = (
            np.array(lp, dtype=np.intp),
            np.array(lowner, dtype=np.intp),
            np.array(lcoef, dtype=float),
        )

    @property
    def triples(self):
        if self._triples is None:
            self._build_tables()
        return self._triples

    @property
    def linear_sources(self):
        if self._linear is None:
            self._build_tables()
        return self._linear


def build_exponent_set(generators, floor) -> ExponentSet:
    """Close the given leading exponents under triple sums and -2 steps.

    The lattice is { sum of >=1 generators (repeats allowed) - 2*l } kept
    above -floor.  Generators must all be <= 0 (see reject_positive_beta);
    the closure is then finite because every step moves downward.
    """
    reject_positive_beta(generators)
    gens = sorted({_to_fraction(g) for g in generators}, reverse=True)
    bound = -_to_fraction(floor)
    if bound >= gens[0]:
        raise ValueError(
            f"floor {floor} does not retain the leading exponent {gens[0]}"
        )
    seen = set()
    frontier = [g for g in gens if g >= bound]
    while frontier:
        nxt = []
        for v in frontier:
            if v in seen:
                continue
            seen.add(v)
            for g in gens:
                w = v + g
                if w >= bound and w not in seen:
                    nxt.append(w)
            w = v - 2
            if w >= bound and w not in seen:
                nxt.append(w)
        frontier = nxt
    exponents = sorted(seen, reverse=True)
    out = ExponentSet(gens, _to_fraction(floor), exponents)
    _check_closure(out)
    return out


def _check_closure(es: ExponentSet, sample_cap: int = 50_000) -> None:
    """Verify closure within the floor (exhaustively when affordable)."""
    E = len(es.exact)
    bound = -es.floor
    members = set(es.exact)
    if E ** 3 <= sample_cap:
        triples = (
            (a, b, c)
            for a in es.exact
            for b in es.exact
            for c in es.exact
        )
        for a, b, c in triples:
            s = a + b + c
            if s >= bound and s not in members:
                raise AssertionError(f"lattice not closed: {a}+{b}+{c}={s} missing")
    else:
        rng = np.random.default_rng(12345)
        idx = rng.integers(0, E, size=(sample_cap, 3))
        for a, b, c in idx:
            s = es.exact[a] + es.exact[b] + es.exact[c]
            if s >= bound and s not in members:
                raise AssertionError(f"lattice not closed at sampled triple sum {s}")
    for g in es.exact:
        s = g - 2
        if s >= bound and s not in members:
            raise AssertionError(f"lattice not closed under -2 step at {g}")


def coefficient_rhs(es: ExponentSet, mu: float, a: np.ndarray, b: np.ndarray):
    """Right-hand side of the coefficient ODE system at one time.

    ``a`` and ``b`` are the current coefficient vectors (one entry per
    retained exponent).  Returns (da, db).
    """
    tl, tm, tn, towner = es.triples
    lp, lowner, lcoef = es.linear_sources
    E = len(es.exact)
    da = np.zeros(E)
    db = np.zeros(E)
    if len(towner):
        al, am, an = a[tl], a[tm], a[tn]
        bl, bm, bn = b[tl], b[tm], b[tn]
        s_a = -al * am * bn + al * an * bm + an * am * bl + bl * bm * bn
        s_b = al * am * an + al * bn * bm + bn * am * bl - bl * bm * an
        da -= mu * np.bincount(towner, weights=s_a, minlength=E)
        db += mu * np.bincount(towner, weights=s_b, minlength=E)
    if len(lowner):
        da -= np.bincount(lowner, weights=lcoef * b[lp], minlength=E)
        db += np.bincount(lowner, weights=lcoef * a[lp], minlength=E)
    return da, db


@dataclass
class CoefficientPath:
    """Coefficient functions sampled densely on a uniform time grid.

    ``a``/``b`` hold the values, ``da``/``db`` the ODE right-hand side at
    the same samples (so profile time-derivatives never difference the
    samples numerically).  Shape: (n_samples+1, n_exponents).
    """

    exponent_set: ExponentSet
    mu: float
    times: np.ndarray
    a: np.ndarray
    b: np.ndarray
    da: np.ndarray
    db: np.ndarray

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    def _interp(self, table: np.ndarray, t) -> np.ndarray:
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        if t_arr.min() < self.times[0] - 1e-12 or t_arr.max() > self.times[-1] + 1e-12:
            raise ValueError(
                f"time {t} outside the solved range [0, {self.horizon}]"
            )
        out = np.empty((t_arr.size, table.shape[1]))
        for j in range(table.shape[1]):
            out[:, j] = np.interp(t_arr, self.times, table[:, j])
        return out if np.ndim(t) else out[0]

    def eval(self, t):
        """Linearly interpolated (a, b) rows at time(s) t."""
        return self._interp(self.a, t), self._interp(self.b, t)

    def eval_deriv(self, t):
        """Linearly interpolated (a', b') rows at time(s) t."""
        return self._interp(self.da, t), self._interp(self.db, t)


def _initial_vector(es: ExponentSet, initial_data):
    a0 = np.zeros(len(es.exact))
    b0 = np.zeros(len(es.exact))
    for key, val in dict(initial_data).items():
        frac = _to_fraction(key)
        if frac not in es.index:
            raise ValueError(f"initial coefficient given at {key}, not a retained exponent")
        c = complex(val)
        a0[es.index[frac]] = c.real
        b0[es.index[frac]] = c.imag
    return a0, b0


def solve_coefficients(es: ExponentSet, initial_data, mu: float, horizon: float,
                       dt: float | None = None) -> CoefficientPath:
    """Integrate the coefficient system with the classical 4th order scheme.

    ``initial_data`` maps exponents (typically the generators) to complex
    amplitudes at t=0; every other retained exponent starts at zero.  When
    the leading exponent is negative the system is lower triangular in the
    exponent ordering and the one-step method reproduces the exact
    polynomial quadrature; when it is zero the leading pair is a nonlinear
    rotation and the lower modes are linear in themselves.
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    if dt is None:
        dt = horizon / DEFAULT_ODE_SAMPLES
    n = int(round(horizon / dt))
    if n < 1 or abs(n * dt - horizon) > 1e-9 * max(1.0, horizon):
        raise ValueError(f"horizon {horizon} is not a whole number of ode steps {dt}")

    a0, b0 = _initial_vector(es, initial_data)
    E = len(es.exact)
    a = np.empty((n + 1, E))
    b = np.empty((n + 1, E))
    da = np.empty((n + 1, E))
    db = np.empty((n + 1, E))
    a[0], b[0] = a0, b0

    def rhs(av, bv):
        return coefficient_rhs(es, mu, av, bv)

    for i in range(n):
        av, bv = a[i], b[i]
        k1a, k1b = rhs(av, bv)
        k2a, k2b = rhs(av + 0.5 * dt * k1a, bv + 0.5 * dt * k1b)
        k3a, k3b = rhs(av + 0.5 * dt * k2a, bv + 0.5 * dt * k2b)
        k4a, k4b = rhs(av + dt * k3a, bv + dt * k3b)
        a[i + 1] = av + (dt / 6.0) * (k1a + 2 * k2a + 2 * k3a + k4a)
        b[i + 1] = bv + (dt / 6.0) * (k1b + 2 * k2b + 2 * k3b + k4b)
        da[i], db[i] = k1a, k1b
    da[n], db[n] = rhs(a[n], b[n])

    times = np.arange(n + 1, dtype=float) * dt
    return CoefficientPath(es, mu, times, a, b, da, db)


def formal_residual(path: CoefficientPath, n_terms: int | None = None) -> np.ndarray:
    """Max-abs residual of the coefficient ODEs, per retained exponent.

    The time derivative is recomputed from the stored samples with a 4th
    order central difference (independent of the stored right-hand sides),
    and compared with the recursion right-hand side rebuilt from the stored
    values.  For a solved path every reported entry is at rounding level;
    tampering with any coefficient function shows up immediately.
    """
    es = path.exponent_set
    E = len(es.exact) if n_terms is None else min(n_terms, len(es.exact))
    a, b, dt = path.a, path.b, path.dt
    n = a.shape[0] - 1
    if n < 4:
        raise ValueError("need at least 5 samples for the residual check")
    # 4th order central difference on the interior samples
    dda = (-a[4:] + 8 * a[3:-1] - 8 * a[1:-3] + a[:-4]) / (12.0 * dt)
    ddb = (-b[4:] + 8 * b[3:-1] - 8 * b[1:-3] + b[:-4]) / (12.0 * dt)
    worst = np.zeros(E)
    for i, row in enumerate(range(2, n - 1)):
        ra, rb = coefficient_rhs(es, path.mu, a[row], b[row])
        res_a = dda[i, :E] - ra[:E]
        res_b = ddb[i, :E] - rb[:E]
        worst = np.maximum(worst, np.maximum(np.abs(res_a), np.abs(res_b)))
    return worst


@dataclass(frozen=True)
class FormalSeries:
    """One-sided formal solution: coefficients plus the side it describes."""

    side: int  # +1 for x -> +infinity, -1 for x -> -infinity
    path: CoefficientPath

    def __post_init__(self):
        if self.side not in (-1, 1):
            raise ValueError("side must be +1 or -1")

    @property
    def exponent_set(self) -> ExponentSet:
        return self.path.exponent_set

    @property
    def mu(self) -> float:
        return self.path.mu


def evaluate_series(series: FormalSeries, x, t, n_terms: int | None = None):
    """Evaluate the truncated series at points on its own side.

    Requires side*x >= 1 everywhere (the power-law terms are only meaningful
    away from the origin); coefficients are linearly interpolated in t.
    Returns complex values with the shape of x.
    """
    x_arr = np.asarray(x, dtype=float)
    sx = series.side * x_arr
    if np.any(sx < 1.0):
        raise ValueError(
            "series evaluation requires side*x >= 1 (got a point with "
            f"side*x = {float(np.min(sx))})"
        )
    es = series.exponent_set
    E = len(es.exact) if n_terms is None else min(n_terms, len(es.exact))
    a_row, b_row = series.path.eval(t)
    out = np.zeros(x_arr.shape, dtype=complex)
    for j in range(E):
        out = out + (a_row[j] + 1j * b_row[j]) * sx ** es.values[j]
    return out if x_arr.shape else complex(out)
