"""Jost matrix, scattering matrix, bound states, and the spectral measure.

The bound-state scan samples det J(i kappa) on a log grid. The determinant
has a constant phase along the positive imaginary axis for selfadjoint
boundary conditions, but boundary-gauge transforms rotate it; the scan
therefore normalizes the phase against the largest sample and asserts (not
assumes) that the residual imaginary part is negligible. Simple zeros come
from sign-change bracketing plus secant polishing; even-order zeros are
spotted as dips of |det| without a sign change, pinned down by minimizing
the smallest singular value of J(i kappa) (linear in the offset where det
is only quadratic), and confirmed by the numerical nullity of J(i kappa),
which is also what defines the multiplicity.

All per-state normalization integrals reduce to one Gram matrix
F = int_0^inf f(i kappa, x)^dagger f(i kappa, x) dx, because the decaying
part of the regular solution is represented as phi(i kappa, x) Q =
f(i kappa, x) beta with a constant matrix beta solved from the boundary
values. The quadrature runs on the reduced variable m = e^{kappa x} f, so
nothing over- or underflows.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad_vec
from scipy.optimize import brentq

from .linalg import (
    OrthProjection,
    herm_sqrt_inv,
    hermitize,
    kernel_projector,
    pinv,
)
from .problems import ProblemSpec
from .waves import JostSolution, solve_jost

DEFAULT_KAPPA_MIN = 1e-3
DEFAULT_KAPPA_MAX = 50.0
DEFAULT_SCAN_POINTS = 400
SCAN_RTOL = 1e-6
ACCURATE_RTOL = 1e-10


class ExceptionalPointError(ValueError):
    """J(k) is singular at a real k where the scattering matrix was requested."""


class UnresolvedRootError(RuntimeError):
    """Root polishing failed; carries the bracketing interval."""

    def __init__(self, message, bracket):
        super().__init__(message)
        self.bracket = tuple(bracket)


class InconsistentBoundStateError(ValueError):
    """Normalization data of a claimed bound state is not positive."""


class DependencyUnresolvedError(RuntimeError):
    """No probe point yielded a consistent dependency matrix."""


# ---------------------------------------------------------------------------
# Jost and scattering matrices
# ---------------------------------------------------------------------------


def _fsol(spec: ProblemSpec, k: complex, rtol: float) -> JostSolution:
    key = ("fsol", complex(k), float(rtol))
    sol = spec.cache.get(key)
    if sol is None:
        sol = solve_jost(spec.potential, k, rtol=rtol)
        spec.cache[key] = sol
    return sol


def jost_matrix(spec: ProblemSpec, k: complex, rtol: float = ACCURATE_RTOL) -> np.ndarray:
    """J(k) = f(-conj(k), 0)^dagger B - f'(-conj(k), 0)^dagger A."""
    kc = -np.conj(complex(k))
    fsol = _fsol(spec, kc, rtol)
    f0, fp0 = fsol.pair_at(0.0)
    return f0.conj().T @ spec.B - fp0.conj().T @ spec.A


def scattering_matrix(spec: ProblemSpec, k: float, rtol: float = ACCURATE_RTOL) -> np.ndarray:
    """S(k) = -J(-k) J(k)^{-1} for real nonzero k."""
    k = float(k)
    if k == 0.0:
        raise ValueError("scattering matrix needs real nonzero k")
    Jk = jost_matrix(spec, k, rtol)
    Jmk = jost_matrix(spec, -k, rtol)
    if np.linalg.cond(Jk) > 1e12:
        raise ExceptionalPointError(f"J(k) singular at real k = {k:g}")
    return -Jmk @ np.linalg.inv(Jk)


def physical_solution(spec: ProblemSpec, k: float, rtol: float = ACCURATE_RTOL):
    """Psi(k, x) = f(-k, x) + f(k, x) S(k) for real nonzero k.

    Returns a pair of closures (value, derivative) in x.
    """
    k = float(k)
    S = scattering_matrix(spec, k, rtol)
    fp = _fsol(spec, k, rtol)
    fm = _fsol(spec, -k, rtol)

    def value(x: float) -> np.ndarray:
        return fm.value_at(x) + fp.value_at(x) @ S

    def deriv(x: float) -> np.ndarray:
        return fm.deriv_at(x) + fp.deriv_at(x) @ S

    return value, deriv


def rho_density(spec: ProblemSpec, lam: float, rtol: float = ACCURATE_RTOL) -> np.ndarray:
    """Continuous spectral density (sqrt(lam)/pi) (J^dagger J)^{-1} at lam > 0."""
    if lam <= 0:
        raise ValueError("continuous density is defined for lam > 0")
    k = float(np.sqrt(lam))
    J = jost_matrix(spec, k, rtol)
    return hermitize((k / np.pi) * np.linalg.inv(J.conj().T @ J))


# ---------------------------------------------------------------------------
# bound-state scan
# ---------------------------------------------------------------------------


def state_kernels(spec: ProblemSpec, kappa: float, rtol: float = ACCURATE_RTOL):
    """(Q, P) kernel projectors of J(i kappa) and J(i kappa)^dagger.

    At a full-multiplicity state the whole matrix J(i kappa) vanishes, so a
    cut relative to its own largest singular value sees an empty kernel;
    the norm is therefore compared against J evaluated at a nearby kappa.
    """
    kappa = float(kappa)
    J = jost_matrix(spec, 1j * kappa, rtol)
    n = J.shape[0]
    ref = np.linalg.norm(jost_matrix(spec, 1j * kappa * 1.05, rtol))
    if np.linalg.norm(J) <= 1e-6 * max(ref, 1.0):
        eye = OrthProjection(np.eye(n, dtype=complex), n)
        return eye, eye
    return kernel_projector(J), kernel_projector(J.conj().T)


def _det_j_imag_axis(spec, rtol):
    def det(kappa):
        return complex(np.linalg.det(jost_matrix(spec, 1j * float(kappa), rtol)))
    return det


def find_bound_states(
    spec: ProblemSpec,
    kappa_max: float = DEFAULT_KAPPA_MAX,
    kappa_min: float = DEFAULT_KAPPA_MIN,
    npts: int = DEFAULT_SCAN_POINTS,
    scan_rtol: float = SCAN_RTOL,
    rtol: float = ACCURATE_RTOL,
):
    """All zeros of det J(i kappa) in [kappa_min, kappa_max] as (kappa, m)."""
    if not spec.potential.meets("L1_1"):
        warnings.warn(
            "potential decays too slowly for guaranteed finiteness of the "
            "bound-state count; scanning anyway",
            UserWarning,
        )
    det_fast = _det_j_imag_axis(spec, scan_rtol)
    det_slow = _det_j_imag_axis(spec, rtol)

    grid = np.geomspace(kappa_min, kappa_max, npts)
    vals = np.array([det_fast(kp) for kp in grid])
    mags = np.abs(vals)
    scale = mags.max()
    if scale == 0.0:
        raise UnresolvedRootError("det J vanishes identically on the scan grid",
                                  (kappa_min, kappa_max))

    # gauge-robust phase normalization, then assert realness on accurate samples
    phase = vals[int(np.argmax(mags))]
    phase /= abs(phase)
    order = np.argsort(mags)[::-1]
    for idx in order[:3]:
        d = det_slow(grid[idx]) / phase
        if abs(d.imag) > 1e-8 * scale:
            raise UnresolvedRootError(
                "det J(i kappa) is not real (up to a constant phase) on the "
                f"imaginary axis: residual {d.imag:.3e} at kappa={grid[idx]:g}",
                (kappa_min, kappa_max),
            )
    r = (vals / phase).real

    roots = []

    def real_det_fast(kp):
        return (det_fast(kp) / phase).real

    def real_det_slow(kp):
        return (det_slow(kp) / phase).real

    # odd-order zeros: sign changes
    for j in range(len(grid) - 1):
        if r[j] == 0.0:
            roots.append(grid[j])
            continue
        if r[j] * r[j + 1] < 0.0:
            try:
                x0 = brentq(real_det_fast, grid[j], grid[j + 1],
                            xtol=1e-12, rtol=8.9e-16)
                x0 = _secant_polish(real_det_slow, x0)
            except (RuntimeError, ValueError) as exc:
                raise UnresolvedRootError(
                    f"root polishing failed: {exc}", (grid[j], grid[j + 1])
                ) from exc
            roots.append(x0)

    # even-order zeros: local minima of |det| without a sign change. The
    # determinant is quadratic around such a zero, so locating it through
    # det alone is noise-limited; the smallest singular value of J(i kappa)
    # vanishes linearly instead and pins the root to full accuracy.
    from scipy.optimize import minimize_scalar

    def sigma_min(kp, tol):
        return np.linalg.svd(jost_matrix(spec, 1j * kp, tol), compute_uv=False)[-1]

    for j in range(1, len(grid) - 1):
        if mags[j] <= mags[j - 1] and mags[j] <= mags[j + 1] \
                and mags[j] < 0.5 * max(mags[j - 1], mags[j + 1]) \
                and r[j - 1] * r[j + 1] > 0.0:
            res = minimize_scalar(
                lambda kp: sigma_min(kp, scan_rtol),
                bounds=(grid[j - 1], grid[j + 1]), method="bounded",
                options={"xatol": 1e-10},
            )
            cand = float(res.x)
            # narrow refinement on accurate solves; the coarse stage is
            # limited by the scan tolerance
            width = max(1e-4 * cand, 10.0 * scan_rtol * cand)
            res = minimize_scalar(
                lambda kp: sigma_min(kp, rtol),
                bounds=(cand - width, cand + width), method="bounded",
                options={"xatol": 1e-12},
            )
            cand = float(res.x)
            if state_kernels(spec, cand, rtol)[0].rank >= 1:
                roots.append(cand)

    # deduplicate and attach multiplicities
    roots = sorted(roots)
    merged = []
    for x in roots:
        if merged and abs(x - merged[-1]) <= 1e-7 * max(1.0, x):
            continue
        merged.append(x)
    out = []
    for x in merged:
        m = state_kernels(spec, x, rtol)[0].rank
        if m >= 1:
            out.append((float(x), int(m)))
    return out


def _secant_polish(fun, x0, tol=1e-12, maxiter=25):
    x1 = x0 * (1.0 + 1e-7)
    f0, f1 = fun(x0), fun(x1)
    for _ in range(maxiter):
        if f1 == f0:
            break
        x2 = x1 - f1 * (x1 - x0) / (f1 - f0)
        if x2 <= 0:
            break
        if abs(x2 - x1) <= tol * max(1.0, abs(x2)):
            return x2
        x0, f0, x1, f1 = x1, f1, x2, fun(x2)
    return x1


# ---------------------------------------------------------------------------
# per-state normalization data
# ---------------------------------------------------------------------------


def gram_infinity(fsol: JostSolution, rtol: float = 1e-11) -> np.ndarray:
    """F = int_0^inf f(i kappa)^dagger f(i kappa) dx via reduced quadrature."""
    kappa = fsol.k.imag
    if kappa <= 0:
        raise ValueError("Gram integral needs k = i kappa, kappa > 0")
    extent = fsol.potential.extent
    X = 40.0 / kappa + (min(extent, 100.0) if np.isfinite(extent) else 100.0)

    def integrand(x):
        m, _ = fsol.reduced_at(x)
        return np.exp(-2.0 * kappa * x) * (m.conj().T @ m)

    val, _ = quad_vec(integrand, 0.0, X, epsabs=1e-14, epsrel=rtol, limit=500)
    mX, _ = fsol.reduced_at(X)
    tail = np.exp(-2.0 * kappa * X) * (mX.conj().T @ mX) / (2.0 * kappa)
    return hermitize(val + tail)


def beta_from_boundary(fsol: JostSolution, A, B, Q) -> np.ndarray:
    """Constant beta with phi(i kappa, x) Q = f(i kappa, x) beta.

    Solved from the boundary values as a stacked least-squares system; the
    residual must vanish because the Q-columns of phi are genuinely decaying.
    """
    f0, fp0 = fsol.pair_at(0.0)
    Qm = Q.matrix if isinstance(Q, OrthProjection) else np.asarray(Q)
    lhs = np.vstack([f0, fp0])
    rhs = np.vstack([A @ Qm, B @ Qm])
    beta, *_ = np.linalg.lstsq(lhs, rhs, rcond=None)
    resid = np.linalg.norm(lhs @ beta - rhs)
    scale = max(1.0, float(np.linalg.norm(rhs)))
    if resid > 1e-6 * scale:
        raise InconsistentBoundStateError(
            f"decaying representation of phi Q failed (residual {resid:.3e})"
        )
    return beta


def marchenko_data(spec: ProblemSpec, kappa: float, P,
                   fsol: JostSolution | None = None,
                   F_inf: np.ndarray | None = None):
    """Normalization matrix M and the wave x -> f(i kappa, x) M."""
    if fsol is None:
        fsol = _fsol(spec, 1j * float(kappa), ACCURATE_RTOL)
    if F_inf is None:
        F_inf = gram_infinity(fsol)
    Pm = P.matrix if isinstance(P, OrthProjection) else np.asarray(P)
    A_g = hermitize(Pm @ F_inf @ Pm)
    B_g = hermitize(np.eye(spec.n) - Pm + A_g)
    try:
        _, B_inv_root = herm_sqrt_inv(B_g)
    except Exception as exc:
        raise InconsistentBoundStateError(str(exc)) from exc
    M = hermitize(B_inv_root @ Pm)

    def Psi_j(x):
        return fsol.value_at(x) @ M

    return M, Psi_j


def gl_data(spec: ProblemSpec, kappa: float, Q,
            fsol: JostSolution | None = None,
            F_inf: np.ndarray | None = None,
            beta: np.ndarray | None = None):
    """Normalization matrix C and the wave x -> phi(i kappa, x) C."""
    if fsol is None:
        fsol = _fsol(spec, 1j * float(kappa), ACCURATE_RTOL)
    if F_inf is None:
        F_inf = gram_infinity(fsol)
    Qm = Q.matrix if isinstance(Q, OrthProjection) else np.asarray(Q)
    if beta is None:
        beta = beta_from_boundary(fsol, spec.A, spec.B, Qm)
    G_g = hermitize(beta.conj().T @ F_inf @ beta)
    H_g = hermitize(np.eye(spec.n) - Qm + G_g)
    try:
        _, H_inv_root = herm_sqrt_inv(H_g)
    except Exception as exc:
        raise InconsistentBoundStateError(str(exc)) from exc
    C = hermitize(H_inv_root @ Qm)

    R = beta @ C  # phi C = f R

    def Phi_j(x):
        return fsol.value_at(x) @ R

    return C, Phi_j


def dependency_matrix(Psi_j, Phi_j, M, f_slice: JostSolution,
                      fallback_deriv: bool = True,
                      probes=(0.0, 1.0), tol: float = 1e-6):
    """D with Phi_j = Psi_j D, probed at fixed x and checked for x-independence."""
    candidates = []
    for x in probes:
        Psi = Psi_j(x)
        Phi = Phi_j(x)
        if np.linalg.norm(Psi) == 0.0:
            continue
        candidates.append(pinv(Psi) @ Phi)
    if len(candidates) >= 2:
        dev = np.linalg.norm(candidates[0] - candidates[1])
        scl = max(1.0, np.linalg.norm(candidates[0]))
        if dev <= tol * scl:
            return candidates[0]
    if fallback_deriv:
        # derivative form: D = M^+ f'(i kappa, x)^{-1} Phi_j'(x)
        h = 1e-6
        for x in (0.5, 1.5):
            fp = f_slice.deriv_at(x)
            if np.linalg.cond(fp) > 1e12:
                continue
            dPhi = (Phi_j(x + h) - Phi_j(x - h)) / (2.0 * h)
            return pinv(M) @ np.linalg.inv(fp) @ dPhi
    raise DependencyUnresolvedError("no probe point yielded a consistent D")


# ---------------------------------------------------------------------------
# full report
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class BoundState:
    kappa: float
    m: int
    Q: OrthProjection
    P: OrthProjection
    M: np.ndarray
    C: np.ndarray
    D: np.ndarray
    beta: np.ndarray
    R: np.ndarray
    F_inf: np.ndarray
    fsol: JostSolution = field(repr=False)

    def psi_at(self, x: float) -> np.ndarray:
        return self.fsol.value_at(x) @ self.M

    def phi_at(self, x: float) -> np.ndarray:
        return self.fsol.value_at(x) @ self.R


@dataclass(eq=False)
class SpectrumReport:
    spec: ProblemSpec
    states: list
    generic: bool
    rtol: float = ACCURATE_RTOL

    @property
    def N(self) -> int:
        return len(self.states)

    @property
    def total_N(self) -> int:
        return sum(s.m for s in self.states)

    def jost_at(self, k: complex) -> np.ndarray:
        return jost_matrix(self.spec, k, self.rtol)

    def smatrix_at(self, k: float) -> np.ndarray:
        return scattering_matrix(self.spec, k, self.rtol)

    def rho_density_at(self, lam: float) -> np.ndarray:
        return rho_density(self.spec, lam, self.rtol)

    def state_at(self, kappa: float, tol: float = 1e-5) -> BoundState:
        for s in self.states:
            if abs(s.kappa - kappa) <= tol * max(1.0, kappa):
                return s
        raise KeyError(f"no bound state near kappa = {kappa:g}")

    def to_dict(self):
        from .problems import _matrix_to_json
        return {
            "N": self.N,
            "total_N": self.total_N,
            "generic": bool(self.generic),
            "states": [
                {
                    "kappa": s.kappa,
                    "multiplicity": s.m,
                    "Q": _matrix_to_json(s.Q.matrix),
                    "P": _matrix_to_json(s.P.matrix),
                    "M": _matrix_to_json(s.M),
                    "C": _matrix_to_json(s.C),
                    "D": _matrix_to_json(s.D),
                }
                for s in self.states
            ],
        }


def build_bound_state(spec: ProblemSpec, kappa: float,
                      rtol: float = ACCURATE_RTOL) -> BoundState:
    fsol = _fsol(spec, 1j * float(kappa), rtol)
    Q, P = state_kernels(spec, float(kappa), rtol)
    if Q.rank == 0 or Q.rank != P.rank:
        raise InconsistentBoundStateError(
            f"kernel ranks disagree at kappa={kappa:g}: {Q.rank} vs {P.rank}"
        )
    F_inf = gram_infinity(fsol)
    beta = beta_from_boundary(fsol, spec.A, spec.B, Q)
    M, Psi_j = marchenko_data(spec, kappa, P, fsol=fsol, F_inf=F_inf)
    C, Phi_j = gl_data(spec, kappa, Q, fsol=fsol, F_inf=F_inf, beta=beta)
    D = dependency_matrix(Psi_j, Phi_j, M, fsol)
    return BoundState(
        kappa=float(kappa), m=Q.rank, Q=Q, P=P, M=M, C=C, D=D,
        beta=beta, R=beta @ C, F_inf=F_inf, fsol=fsol,
    )


def assemble_spectrum(
    spec: ProblemSpec,
    kappa_max: float = DEFAULT_KAPPA_MAX,
    kappa_min: float = DEFAULT_KAPPA_MIN,
    npts: int = DEFAULT_SCAN_POINTS,
    scan_rtol: float = SCAN_RTOL,
    rtol: float = ACCURATE_RTOL,
) -> SpectrumReport:
    key = ("spectrum", kappa_min, kappa_max, npts, scan_rtol, rtol)
    cached = spec.cache.get(key)
    if cached is not None:
        return cached
    found = find_bound_states(
        spec, kappa_max=kappa_max, kappa_min=kappa_min,
        npts=npts, scan_rtol=scan_rtol, rtol=rtol,
    )
    states = [build_bound_state(spec, kp, rtol=rtol) for kp, _ in found]
    states.sort(key=lambda s: -s.kappa)
    generic = True
    if spec.potential.meets("L1_1"):
        try:
            J0 = jost_matrix(spec, 0.0, rtol)
            generic = bool(np.linalg.cond(J0) < 1e10)
        except Exception:
            generic = True
    report = SpectrumReport(spec=spec, states=states, generic=generic, rtol=rtol)
    spec.cache[key] = report
    return report
