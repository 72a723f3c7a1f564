"""Potentials, boundary pairs, and problem specifications.

A Potential wraps a matrix-valued evaluator V(x) together with tail
information used by the wave solvers:

* ``abs_tail(x)``      -- upper estimate of the remaining absolute integral
                          of ||V|| beyond x,
* ``tail_integral(x)`` -- the matrix integral of V over [x, inf),
* ``tail_moment(k, x)``-- the matrix integral of e^{2ik(t-x)} V(t) over
                          [x, inf) for Im k >= 0.

The moment integrals feed the corrected asymptotic initial conditions of the
decaying solution; for the rational (inverse-square) family they are exact
via the exponential integral, for everything else they are evaluated
numerically over the effective support.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad_vec
from scipy.special import exp1

from .linalg import LinAlgInputError, as_square, is_hermitian

# Ordering of decay classes by integrability of (1+x)^p |V|.
CLASS_ORDER = {"L1": 0, "L1_1": 1, "L1_2": 2, "L1_3": 3, "compact": 4}


class NonSelfadjointBoundaryError(ValueError):
    """The boundary matrices violate -B^†A + A^†B = 0."""


class DegenerateBoundaryError(ValueError):
    """A^†A + B^†B is not positive definite."""


class InvalidPotentialError(ValueError):
    """Invalid potential parameters or samples."""


def _complex_quad(fun, a, b, epsabs=1e-13, epsrel=1e-11):
    val, _ = quad_vec(fun, a, b, epsabs=epsabs, epsrel=epsrel, limit=400)
    return val


class Potential:
    """Matrix-valued potential on the half line."""

    def __init__(
        self,
        evaluate,
        n: int,
        decl_class: str,
        extent: float,
        abs_tail=None,
        tail_integral=None,
        tail_moment=None,
        jost_oracle=None,
        meta=None,
    ):
        if decl_class not in CLASS_ORDER:
            raise InvalidPotentialError(f"unknown decay class {decl_class!r}")
        self._evaluate = evaluate
        self.n = int(n)
        self.decl_class = decl_class
        self.extent = float(extent)
        self._abs_tail = abs_tail
        self._tail_integral = tail_integral
        self._tail_moment = tail_moment
        self.jost_oracle = jost_oracle
        self.meta = meta

    def __call__(self, x: float) -> np.ndarray:
        return np.asarray(self._evaluate(float(x)), dtype=complex).reshape(self.n, self.n)

    def meets(self, min_class: str) -> bool:
        return CLASS_ORDER[self.decl_class] >= CLASS_ORDER[min_class]

    # --- tail information -------------------------------------------------

    def abs_tail(self, x: float) -> float:
        if self._abs_tail is not None:
            return float(self._abs_tail(x))
        hi = self.extent if np.isfinite(self.extent) else x + 200.0
        if x >= hi:
            return 0.0
        val = _complex_quad(lambda t: np.linalg.norm(self(t)), x, hi)
        return float(abs(val))

    def tail_integral(self, x: float) -> np.ndarray:
        if self._tail_integral is not None:
            return np.asarray(self._tail_integral(x), dtype=complex).reshape(self.n, self.n)
        hi = self.extent if np.isfinite(self.extent) else x + 200.0
        if x >= hi:
            return np.zeros((self.n, self.n), dtype=complex)
        return _complex_quad(lambda t: self(t), x, hi)

    def tail_moment(self, k: complex, x: float) -> np.ndarray:
        if self._tail_moment is not None:
            return np.asarray(self._tail_moment(k, x), dtype=complex).reshape(self.n, self.n)
        hi = self.extent if np.isfinite(self.extent) else x + 200.0
        if k.imag > 1e-6:
            # the exponential factor decays; cut where it is negligible
            hi = min(hi, x + 40.0 / k.imag)
        if x >= hi:
            return np.zeros((self.n, self.n), dtype=complex)
        k = complex(k)
        return _complex_quad(lambda t: np.exp(2j * k * (t - x)) * self(t), x, hi)

    # --- sanity probe -----------------------------------------------------

    def check_hermitian(self, xs=None, tol=1e-10) -> bool:
        if xs is None:
            hi = min(self.extent, 50.0) if np.isfinite(self.extent) else 50.0
            xs = np.linspace(0.0, max(hi, 1.0), 25)
        return all(is_hermitian(self(x), tol) for x in xs)


@dataclass(frozen=True)
class BoundaryPair:
    """Validated boundary matrices (A, B) of a selfadjoint condition."""

    A: np.ndarray
    B: np.ndarray
    min_eig: float = 0.0

    @property
    def n(self) -> int:
        return self.A.shape[0]


def validate_boundary(A, B, tol: float = 1e-10) -> BoundaryPair:
    """Check -B^†A + A^†B = 0 and A^†A + B^†B > 0."""
    A = as_square(A)
    B = as_square(B)
    if A.shape != B.shape:
        raise LinAlgInputError("boundary matrices must have equal shape")
    scale = max(1.0, float(np.linalg.norm(A)), float(np.linalg.norm(B)))
    resid = np.linalg.norm(-B.conj().T @ A + A.conj().T @ B)
    if resid > tol * scale * scale:
        raise NonSelfadjointBoundaryError(
            f"-B^†A + A^†B = 0 violated (residual {resid:.3e})"
        )
    G = A.conj().T @ A + B.conj().T @ B
    w = np.linalg.eigvalsh(0.5 * (G + G.conj().T))
    if w.min() <= 1e-12 * max(w.max(), 1e-300):
        raise DegenerateBoundaryError(
            f"A^†A + B^†B is not positive definite (min eigenvalue {w.min():.3e})"
        )
    return BoundaryPair(A=A, B=B, min_eig=float(w.min()))


@dataclass(eq=False)
class ProblemSpec:
    """A half-line operator: potential + boundary pair."""

    potential: Potential
    boundary: BoundaryPair
    cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.potential.n != self.boundary.n:
            raise LinAlgInputError("potential and boundary dimensions disagree")

    @property
    def n(self) -> int:
        return self.boundary.n

    @property
    def A(self) -> np.ndarray:
        return self.boundary.A

    @property
    def B(self) -> np.ndarray:
        return self.boundary.B


# ---------------------------------------------------------------------------
# potential families
# ---------------------------------------------------------------------------


def zero_potential(n: int = 1) -> Potential:
    Z = np.zeros((n, n), dtype=complex)
    return Potential(
        evaluate=lambda x: Z,
        n=n,
        decl_class="compact",
        extent=0.0,
        abs_tail=lambda x: 0.0,
        tail_integral=lambda x: Z,
        tail_moment=lambda k, x: Z,
        jost_oracle=lambda k, x: (
            np.exp(1j * k * x) * np.eye(n, dtype=complex),
            1j * k * np.exp(1j * k * x) * np.eye(n, dtype=complex),
        ),
        meta={"family": "zero", "params": {"n": n}},
    )


def family_exponential(alpha: float, epsilon: float, beta: float) -> Potential:
    """Scalar reflectionless-type potential with exponential decay.

    V(x) = -8 a e b^2 e^{2bx} / (a + e e^{2bx})^2, with the exact decaying
    solution e^{ikx} [1 - 2iab / ((k+ib)(a + e e^{2bx}))].
    """
    if alpha <= 0 or epsilon <= 0 or beta <= 0:
        raise InvalidPotentialError("family parameters must be positive")
    a, e, b = float(alpha), float(epsilon), float(beta)

    def u_inv(x):
        # 1 / (a + e e^{2bx}) computed overflow-safe
        d = np.exp(-2.0 * b * x)
        return d / (a * d + e)

    def evaluate(x):
        d = np.exp(-2.0 * b * x)
        v = -8.0 * a * e * b * b * d / (a * d + e) ** 2
        return np.array([[v]], dtype=complex)

    def abs_tail(x):
        return 4.0 * a * b * u_inv(x)

    def tail_integral(x):
        return np.array([[-4.0 * a * b * u_inv(x)]], dtype=complex)

    # effective support: |V| < 1e-16 * scale beyond this point
    extent = max(5.0, np.log(8.0 * a * b * b / (e * 1e-16) + 1.0) / (2.0 * b))

    def oracle(k, x):
        k = complex(k)
        w = 2j * a * b * u_inv(x) / (k + 1j * b)
        d = np.exp(-2.0 * b * x)
        # derivative of 1/(a + e e^{2bx}) = -2 b e e^{2bx}/(...)^2
        dw = 2j * a * b / (k + 1j * b) * (-2.0 * b * e * d / (a * d + e) ** 2)
        ph = np.exp(1j * k * x)
        f = ph * (1.0 - w)
        fp = ph * (1j * k * (1.0 - w) - dw)
        return np.array([[f]]), np.array([[fp]])

    return Potential(
        evaluate=evaluate,
        n=1,
        decl_class="L1_3",
        extent=extent,
        abs_tail=abs_tail,
        tail_integral=tail_integral,
        jost_oracle=oracle,
        meta={"family": "exponential", "params": {"alpha": a, "epsilon": e, "beta": b}},
    )


def family_inverse_square(a: float) -> Potential:
    """Scalar rational potential V(x) = 2/(x+a)^2 (integrable, slow tail)."""
    if a <= 0:
        raise InvalidPotentialError("parameter a must be positive")
    a = float(a)

    def evaluate(x):
        return np.array([[2.0 / (x + a) ** 2]], dtype=complex)

    def abs_tail(x):
        return 2.0 / (x + a)

    def tail_integral(x):
        return np.array([[2.0 / (x + a)]], dtype=complex)

    def _scaled_e1(w):
        # e^w E1(w); asymptotic series for large |w| avoids overflow of e^w
        if abs(w) > 50.0:
            term = 1.0 / w
            total = term
            for j in range(1, 14):
                term *= -j / w
                total += term
            return total
        return np.exp(w) * exp1(w)

    def tail_moment(k, x):
        k = complex(k)
        z = x + a
        if abs(k) < 1e-12:
            return np.array([[2.0 / z]], dtype=complex)
        w = -2j * k * z  # Re w >= 0 for Im k >= 0
        return np.array([[2.0 / z + 4j * k * _scaled_e1(w)]], dtype=complex)

    def oracle(k, x):
        k = complex(k)
        if abs(k) < 1e-12:
            raise ZeroDivisionError("decaying solution undefined at k=0 for this family")
        z = x + a
        ph = np.exp(1j * k * x)
        f = ph * (1.0 + 1j / (k * z))
        fp = ph * (1j * k + 1.0j * 1j / z - 1j / (k * z * z))
        return np.array([[f]]), np.array([[fp]])

    return Potential(
        evaluate=evaluate,
        n=1,
        decl_class="L1",
        extent=np.inf,
        abs_tail=abs_tail,
        tail_integral=tail_integral,
        tail_moment=tail_moment,
        jost_oracle=oracle,
        meta={"family": "inverse_square", "params": {"a": a}},
    )


def combine_scalar_to_matrix(p1: Potential, p2: Potential, mode: str = "real") -> Potential:
    """Build a 2x2 potential from two scalar ones.

    real mode:    V = 1/2 [[v1+v2, v1-v2], [v1-v2, v1+v2]]
    complex mode: V = 1/2 [[v1+v2, i(v1-v2)], [-i(v1-v2), v1+v2]]

    The decaying-solution oracle combines the scalar oracles with the same
    pattern.
    """
    if p1.n != 1 or p2.n != 1:
        raise InvalidPotentialError("combine expects scalar potentials")
    if mode not in ("real", "complex"):
        raise InvalidPotentialError("mode must be 'real' or 'complex'")

    def mix(s1, s2):
        s1 = complex(s1)
        s2 = complex(s2)
        sm, df = 0.5 * (s1 + s2), 0.5 * (s1 - s2)
        if mode == "real":
            return np.array([[sm, df], [df, sm]], dtype=complex)
        return np.array([[sm, 1j * df], [-1j * df, sm]], dtype=complex)

    def evaluate(x):
        return mix(p1(x)[0, 0], p2(x)[0, 0])

    oracle = None
    if p1.jost_oracle is not None and p2.jost_oracle is not None:
        def oracle(k, x):
            f1, fp1 = p1.jost_oracle(k, x)
            f2, fp2 = p2.jost_oracle(k, x)
            return mix(f1[0, 0], f2[0, 0]), mix(fp1[0, 0], fp2[0, 0])

    decl = min((p1.decl_class, p2.decl_class), key=lambda c: CLASS_ORDER[c])
    meta = None
    if p1.meta is not None and p2.meta is not None:
        meta = {"combine": {"mode": mode, "first": p1.meta, "second": p2.meta}}
    return Potential(
        evaluate=evaluate,
        n=2,
        decl_class=decl,
        extent=max(p1.extent, p2.extent),
        abs_tail=lambda x: p1.abs_tail(x) + p2.abs_tail(x),
        tail_integral=lambda x: mix(p1.tail_integral(x)[0, 0], p2.tail_integral(x)[0, 0]),
        tail_moment=lambda k, x: mix(p1.tail_moment(k, x)[0, 0], p2.tail_moment(k, x)[0, 0]),
        jost_oracle=oracle,
        meta=meta,
    )


def tabulated_potential(samples, interpolation: str = "linear") -> Potential:
    """Potential interpolated from (x, matrix) samples; zero beyond the grid."""
    xs = np.array([float(x) for x, _ in samples])
    if xs.size < 1 or xs[0] != 0.0 or np.any(np.diff(xs) <= 0):
        raise InvalidPotentialError("grid must be strictly increasing and start at 0")
    mats = [np.asarray(M, dtype=complex) for _, M in samples]
    n = mats[0].shape[0]
    for M in mats:
        if M.shape != (n, n):
            raise InvalidPotentialError("inconsistent sample shapes")
        if not is_hermitian(M, tol=1e-10):
            raise InvalidPotentialError("non-hermitian potential sample")
    data = np.stack(mats)  # (npts, n, n)

    if xs.size == 1:
        def evaluate(x):
            return np.zeros((n, n), dtype=complex) if x > 0 else data[0]
        interp = None
    elif interpolation == "cubic" and xs.size >= 4:
        from scipy.interpolate import CubicSpline
        interp = CubicSpline(xs, data, axis=0)
    elif interpolation in ("linear", "cubic"):
        from scipy.interpolate import interp1d
        interp = interp1d(xs, data, axis=0, kind="linear")
    else:
        raise InvalidPotentialError("interpolation must be 'linear' or 'cubic'")

    if xs.size > 1:
        def evaluate(x):
            if x > xs[-1]:
                return np.zeros((n, n), dtype=complex)
            return np.asarray(interp(x))

    # reversed cumulative trapezoid of ||V|| for the tail estimate
    norms = np.array([np.linalg.norm(M) for M in mats])
    rev = np.zeros_like(norms)
    if xs.size > 1:
        seg = 0.5 * (norms[1:] + norms[:-1]) * np.diff(xs)
        rev[:-1] = seg[::-1].cumsum()[::-1]

    def abs_tail(x):
        if x >= xs[-1]:
            return 0.0
        return float(np.interp(x, xs, rev))

    return Potential(
        evaluate=evaluate,
        n=n,
        decl_class="compact",
        extent=float(xs[-1]),
        abs_tail=abs_tail,
        meta={"tabulated": {
            "grid": xs.tolist(),
            "matrices": [_matrix_to_json(M) for M in mats],
            "interpolation": interpolation,
        }},
    )


# ---------------------------------------------------------------------------
# JSON problem files
# ---------------------------------------------------------------------------


def _matrix_to_json(M):
    M = np.asarray(M, dtype=complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in M]


def _matrix_from_json(obj):
    return np.array([[complex(c[0], c[1]) for c in row] for row in obj], dtype=complex)


def potential_from_json(obj) -> Potential:
    if "family" in obj:
        name = obj["family"]
        params = obj.get("params", {})
        if name == "zero":
            return zero_potential(int(params.get("n", 1)))
        if name == "exponential":
            return family_exponential(params["alpha"], params["epsilon"], params["beta"])
        if name == "inverse_square":
            return family_inverse_square(params["a"])
        raise InvalidPotentialError(f"unknown potential family {name!r}")
    if "combine" in obj:
        c = obj["combine"]
        return combine_scalar_to_matrix(
            potential_from_json(c["first"]),
            potential_from_json(c["second"]),
            mode=c.get("mode", "real"),
        )
    if "tabulated" in obj:
        t = obj["tabulated"]
        samples = [
            (x, _matrix_from_json(m)) for x, m in zip(t["grid"], t["matrices"])
        ]
        return tabulated_potential(samples, t.get("interpolation", "linear"))
    raise InvalidPotentialError("potential must declare 'family', 'combine' or 'tabulated'")


def potential_to_json(p: Potential):
    if p.meta is None:
        raise InvalidPotentialError("potential is not serializable (no construction record)")
    return p.meta


def spec_from_json(obj) -> ProblemSpec:
    n = int(obj["n"])
    potential = potential_from_json(obj["potential"])
    A = _matrix_from_json(obj["boundary"]["A"])
    B = _matrix_from_json(obj["boundary"]["B"])
    if potential.n != n or A.shape != (n, n):
        raise InvalidPotentialError("declared n disagrees with matrices")
    return ProblemSpec(potential=potential, boundary=validate_boundary(A, B))


def spec_to_json(spec: ProblemSpec):
    return {
        "n": spec.n,
        "potential": potential_to_json(spec.potential),
        "boundary": {
            "A": _matrix_to_json(spec.A),
            "B": _matrix_to_json(spec.B),
        },
    }


def load_spec(path) -> ProblemSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return spec_from_json(json.load(fh))
