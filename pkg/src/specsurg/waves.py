"""Matrix wave solutions on the half line.

All second-order solves go through scipy's adaptive Runge-Kutta with dense
output. The decaying solution f(k, .) is integrated backward from an
effective infinity in the reduced variable m = e^{-ikx} f (which is O(1)
everywhere), with asymptotic initial data that carries a first-order tail
correction so slowly decaying potentials remain accurate at the truncation
point. The regular solution is integrated forward from the boundary data,
optionally in the reduced variable u = e^{-kappa x} phi for spectral
parameter k = i kappa. The growing solution is integrated backward over the
outer part of the range only, where contamination by decaying columns stays
negligible.
"""

from __future__ import annotations

import numpy as np
from scipy.integrate import solve_ivp

from .problems import Potential

TAIL_TOL = 1e-12
X_CAP = 200.0
DEFAULT_RTOL = 1e-10
DEFAULT_ATOL = 1e-12


class SolverDivergedError(RuntimeError):
    """The adaptive integrator failed or produced non-finite values."""


class UnsupportedAtZeroError(ValueError):
    """k = 0 requested for a potential without a first decay moment."""


def x_infinity(potential: Potential, k: complex | None = None) -> float:
    """Effective infinity: smallest x with a negligible absolute tail, capped."""
    cap = max(X_CAP, getattr(potential, "x_inf_floor", 0.0))
    x = max(10.0, min(potential.extent, cap) if np.isfinite(potential.extent) else 10.0)
    x = max(x, getattr(potential, "x_inf_floor", 0.0))
    while x < cap and potential.abs_tail(x) > TAIL_TOL:
        x = min(2.0 * x, cap)
    return float(x)


def _integrate_second_order(potential, coeff, x0, x1, Y0, Yp0, rtol, atol=DEFAULT_ATOL):
    """Solve Y'' + coeff * Y' = V(x) Y from x0 to x1, dense output.

    coeff is the constant first-order coefficient (2ik for the decaying
    solution, 2 kappa for reduced regular/growing solutions, 0 for physical
    solves).
    """
    n = potential.n
    nn = n * n

    def rhs(x, y):
        Y = y[:nn].reshape(n, n)
        Yp = y[nn:].reshape(n, n)
        Ypp = potential(x) @ Y - coeff * Yp
        return np.concatenate([Yp.ravel(), Ypp.ravel()])

    y0 = np.concatenate([
        np.asarray(Y0, dtype=complex).ravel(),
        np.asarray(Yp0, dtype=complex).ravel(),
    ])
    sol = solve_ivp(
        rhs, (x0, x1), y0, method="RK45",
        rtol=rtol, atol=atol, dense_output=True,
    )
    if not sol.success or not np.all(np.isfinite(sol.y)):
        raise SolverDivergedError(
            f"integration from {x0:g} to {x1:g} failed: {sol.message}"
        )
    return sol


def _eval_dense(sol, n, x):
    y = sol.sol(x)
    nn = n * n
    return y[:nn].reshape(n, n), y[nn:].reshape(n, n)


class JostSolution:
    """Decaying solution f(k, .), normalized to e^{ikx} I at infinity.

    Stored in the reduced variable m = e^{-ikx} f; ``value_at``/``deriv_at``
    return the physical solution (which may over/underflow for large
    |Im k| x -- use ``reduced_at`` in scaled computations).
    """

    def __init__(self, potential: Potential, k: complex, sol, x_inf: float):
        self.potential = potential
        self.k = complex(k)
        self._sol = sol
        self.x_inf = float(x_inf)
        self.n = potential.n

    def reduced_at(self, x: float):
        """(m, m') with m = e^{-ikx} f."""
        if x <= self.x_inf:
            return _eval_dense(self._sol, self.n, x)
        return _tail_reduced(self.potential, self.k, x)

    def value_at(self, x: float) -> np.ndarray:
        m, _ = self.reduced_at(x)
        return np.exp(1j * self.k * x) * m

    def deriv_at(self, x: float) -> np.ndarray:
        m, mp = self.reduced_at(x)
        return np.exp(1j * self.k * x) * (1j * self.k * m + mp)

    def pair_at(self, x: float):
        m, mp = self.reduced_at(x)
        ph = np.exp(1j * self.k * x)
        return ph * m, ph * (1j * self.k * m + mp)


def _tail_reduced(potential, k, x):
    """Asymptotic (m, m') beyond the integration range, first-order accurate."""
    n = potential.n
    I = np.eye(n, dtype=complex)
    T0 = potential.tail_integral(x)
    if abs(k) < 1e-12:
        M1 = _first_moment(potential, x)
        return I + M1, -T0
    Tm = potential.tail_moment(k, x)
    return I + (Tm - T0) / (2j * k), -Tm


def _first_moment(potential, x):
    from .problems import _complex_quad
    hi = potential.extent if np.isfinite(potential.extent) else x + 200.0
    if x >= hi:
        return np.zeros((potential.n, potential.n), dtype=complex)
    return _complex_quad(lambda t: (t - x) * potential(t), x, hi)


def _second_order_tail(potential, k, x):
    """Next iterate of the tail integral equation, for slowly decaying V.

    Correction to (m, m') at the truncation point, with the first iterate
    m1(t) - I = (T_m(t) - T_0(t)) / (2ik) inserted back into
    m(x) = I + int_x^inf D_k(t-x) V(t) m(t) dt, D_k(y) = (e^{2iky}-1)/(2ik).
    """
    from .problems import _complex_quad
    k = complex(k)
    # the first iterate only needs tail moments of the dominant slow part;
    # surgery-perturbed potentials expose it so the correction stays cheap
    moments = getattr(potential, "moment_source", potential)

    def first(t):
        Tm = moments.tail_moment(k, t)
        T0 = moments.tail_integral(t)
        return (Tm - T0) / (2j * k)

    def dm_int(t):
        y = t - x
        Dk = (np.exp(2j * k * y) - 1.0) / (2j * k)
        return Dk * (moments(t) @ first(t))

    def dmp_int(t):
        return -np.exp(2j * k * (t - x)) * (moments(t) @ first(t))

    dm = _complex_quad(dm_int, x, np.inf, epsabs=1e-15, epsrel=1e-9)
    dmp = _complex_quad(dmp_int, x, np.inf, epsabs=1e-15, epsrel=1e-9)
    return dm, dmp


def solve_jost(potential: Potential, k: complex, rtol: float = DEFAULT_RTOL,
               x_inf: float | None = None) -> JostSolution:
    """Decaying solution for Im k >= 0, integrated backward to x = 0.

    ``x_inf`` overrides the automatic truncation point; a larger value keeps
    the solution densely accurate further out, which matters when it feeds a
    transformation kernel for a slowly decaying potential.
    """
    k = complex(k)
    if abs(k) < 1e-12 and not potential.meets("L1_1"):
        raise UnsupportedAtZeroError(
            "k = 0 needs a potential with a finite first decay moment"
        )
    if x_inf is None:
        x_inf = x_infinity(potential, k)
    m_inf, mp_inf = _tail_reduced(potential, k, x_inf)
    if abs(k) > 1e-12 and potential.abs_tail(x_inf) > 1e-9:
        dm, dmp = _second_order_tail(potential, k, x_inf)
        m_inf = m_inf + dm
        mp_inf = mp_inf + dmp
    sol = _integrate_second_order(
        potential, 2j * k, x_inf, 0.0, m_inf, mp_inf, rtol
    )
    return JostSolution(potential, k, sol, x_inf)


class RegularChain:
    """Regular-type solution integrated forward from x = 0, extendable.

    In reduced mode (kappa > 0) the stored variable is u = e^{-kappa x} Y,
    so the physical solution is recoverable without overflow only while
    e^{kappa x} is representable; scaled computations should use
    ``reduced_at``.
    """

    def __init__(self, potential: Potential, Y0, Yp0, k: complex,
                 rtol: float = DEFAULT_RTOL, reduced: bool = False):
        self.potential = potential
        self.k = complex(k)
        self.n = potential.n
        self.rtol = rtol
        self.reduced = bool(reduced)
        if reduced:
            kappa = self.k.imag
            if abs(self.k.real) > 1e-12 or kappa <= 0:
                raise ValueError("reduced regular solve needs k = i kappa, kappa > 0")
            self.kappa = kappa
            Y0 = np.asarray(Y0, dtype=complex)
            Yp0 = np.asarray(Yp0, dtype=complex) - kappa * Y0
        else:
            self.kappa = 0.0
        self._coeff = 2.0 * self.kappa if reduced else 0.0
        self._segments = []
        self._x_hi = 0.0
        self._Y = np.asarray(Y0, dtype=complex)
        self._Yp = np.asarray(Yp0, dtype=complex)
        self._tip = (self._Y.copy(), self._Yp.copy())

    def _shifted_potential(self):
        # physical mode solves Y'' = (V - k^2) Y; reduced mode u'' + 2k u' = V u
        if self.reduced:
            return self.potential
        pot, k2 = self.potential, self.k ** 2
        n = self.n

        class _Shifted:
            def __init__(s):
                s.n = n

            def __call__(s, x):
                return pot(x) - k2 * np.eye(n, dtype=complex)

        return _Shifted()

    def extend(self, x_max: float):
        if x_max <= self._x_hi:
            return
        sol = _integrate_second_order(
            self._shifted_potential(), self._coeff,
            self._x_hi, x_max, self._tip[0], self._tip[1], self.rtol,
        )
        self._segments.append((self._x_hi, x_max, sol))
        Y, Yp = _eval_dense(sol, self.n, x_max)
        self._tip = (Y, Yp)
        self._x_hi = x_max

    def reduced_at(self, x: float):
        """(u, u') in the stored variable."""
        if x < 0:
            raise ValueError("x must be >= 0")
        if x == 0.0:
            return self._Y, self._Yp
        self.extend(x)
        for lo, hi, sol in self._segments:
            if lo <= x <= hi:
                return _eval_dense(sol, self.n, x)
        raise SolverDivergedError("dense segment lookup failed")

    def pair_at(self, x: float):
        """(Y, Y') in physical variables."""
        u, up = self.reduced_at(x)
        if not self.reduced:
            return u, up
        e = np.exp(self.kappa * x)
        return e * u, e * (up + self.kappa * u)

    def value_at(self, x: float) -> np.ndarray:
        return self.pair_at(x)[0]

    def deriv_at(self, x: float) -> np.ndarray:
        return self.pair_at(x)[1]


def solve_regular(potential: Potential, A, B, k: complex,
                  rtol: float = DEFAULT_RTOL, reduced: bool = False) -> RegularChain:
    """Solution with Y(0) = A, Y'(0) = B."""
    return RegularChain(potential, A, B, k, rtol=rtol, reduced=reduced)


class GrowingSolution:
    """Growing solution g(i kappa, .) over an outer window [x_low, x_inf].

    Stored reduced: h = e^{-kappa x} g with h -> I at infinity. g is unique
    only modulo decaying columns; the window is kept short enough that the
    contamination stays far below the fit tolerances downstream.
    """

    def __init__(self, potential: Potential, kappa: float, sol, x_low, x_inf):
        self.potential = potential
        self.kappa = float(kappa)
        self._sol = sol
        self.x_low = float(x_low)
        self.x_inf = float(x_inf)
        self.n = potential.n

    def reduced_at(self, x: float):
        if not (self.x_low <= x <= self.x_inf):
            raise ValueError(f"x={x:g} outside window [{self.x_low:g}, {self.x_inf:g}]")
        return _eval_dense(self._sol, self.n, x)


def solve_growing(potential: Potential, kappa: float,
                  x_low: float | None = None,
                  rtol: float = DEFAULT_RTOL) -> GrowingSolution:
    kappa = float(kappa)
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    x_inf = x_infinity(potential, 1j * kappa)
    if x_low is None:
        x_low = 0.65 * x_inf
    n = potential.n
    I = np.eye(n, dtype=complex)
    sol = _integrate_second_order(
        potential, 2.0 * kappa, x_inf, x_low, I, np.zeros((n, n), dtype=complex), rtol
    )
    return GrowingSolution(potential, kappa, sol, x_low, x_inf)


def ode_residual(potential: Potential, k: complex, value_at, x: float,
                 h: float = 1e-4) -> float:
    """|| -Y'' + V Y - k^2 Y || via central differences, for diagnostics."""
    Ym = value_at(x - h)
    Y0 = value_at(x)
    Yp = value_at(x + h)
    second = (Yp - 2.0 * Y0 + Ym) / (h * h)
    return float(np.linalg.norm(-second + potential(x) @ Y0 - (complex(k) ** 2) * Y0))
