"""Classical oscillator y'' + (sigma/m) y = 0 and the coefficient functions
a1, a2, A that drive the propagator factorization.

The basis is always stored in the normalized form

    y1 = zeta1,    y2 = -zeta2 / m,    W = 1/m,

where (zeta1, zeta2) is the canonical pair with zeta1(0)=1, zeta1'(0)=0,
zeta2(0)=0, zeta2'(0)=1.  With this choice y1(0)^2 + y2(0)^2 = m W and
y1 y1' + y2 y2' = 0 at t=0, i.e. a1(0) = 1/m and a2(0) = 0.  Any other
pair meeting those two conditions differs by a rotation, under which
a1, a2 and A are invariant.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional

import numpy as np
from scipy.integrate import solve_ivp
from scipy.special import hyp2f1


class ClassicalSolveError(RuntimeError):
    """The ODE integrator failed (step-size underflow, bad normalization)."""


class AssumptionViolation(ValueError):
    """A model's solutions do not have the required power-law asymptotics."""


@dataclass(frozen=True)
class CoefficientModel:
    sigma: Callable[[np.ndarray], np.ndarray]
    m: float
    lam: float
    name: str = "custom"
    params: dict = field(default_factory=dict)
    analytic_y1: Optional[Callable] = None
    analytic_y2: Optional[Callable] = None
    analytic_A: Optional[Callable] = None
    # False for fixtures such as the constant oscillator
    satisfies_assumption: bool = True

    def __post_init__(self):
        if not self.m > 0:
            raise ValueError(f"mass m must be positive, got {self.m}")
        if self.satisfies_assumption and not 0 <= self.lam < 0.5:
            raise ValueError(f"decay index lambda must lie in [0, 1/2), got {self.lam}")

    def label(self) -> str:
        inner = ", ".join(f"{k}={v:g}" for k, v in self.params.items())
        return f"{self.name}({inner})"


def free_model(m: float = 1.0) -> CoefficientModel:
    """sigma = 0.  Closed forms: a1 = m/(m^2+t^2), A = arctan(t/m)."""
    m = float(m)
    return CoefficientModel(
        sigma=lambda t: np.zeros_like(np.asarray(t, dtype=float)),
        m=m,
        lam=0.0,
        name="free",
        params={"m": m},
        analytic_y1=lambda t: np.ones_like(np.asarray(t, dtype=float)),
        analytic_y2=lambda t: -np.asarray(t, dtype=float) / m,
        analytic_A=lambda t: np.arctan(np.asarray(t, dtype=float) / m),
    )


def _profile_phase(t, lam, m):
    # (1/m) * int_0^t (1+u^2)^(lam-1) du
    t = np.asarray(t, dtype=float)
    return t * hyp2f1(0.5, 1.0 - lam, 1.5, -t * t) / m


def model_from_profile(lam: float, m: float = 1.0) -> CoefficientModel:
    """Model whose normalized solutions have amplitude (1+t^2)^((1-lam)/2).

    Writing y1 + i y2 = rho * exp(-i A) with rho = (1+t^2)^((1-lam)/2) and
    A' = W/rho^2, the ODE holds iff

        sigma/m = W^2/rho^4 - rho''/rho,   W = 1/m.

    Hence a1 = (1+t^2)^(lam-1)/m exactly and y1, y2 grow like |t|^(1-lam)
    and |t|^lam after rotating onto the asymptotic direction -A(+-inf).
    """
    lam = float(lam)
    m = float(m)
    if not 0 <= lam < 0.5:
        raise ValueError(f"decay index lambda must lie in [0, 1/2), got {lam}")
    p = 0.5 * (1.0 - lam)

    def sigma(t):
        t2 = np.asarray(t, dtype=float) ** 2
        return m * ((1 + t2) ** (-4 * p) / m**2 - (1 - lam) * (1 - lam * t2) / (1 + t2) ** 2)

    def rho(t):
        return (1 + np.asarray(t, dtype=float) ** 2) ** p

    return CoefficientModel(
        sigma=sigma,
        m=m,
        lam=lam,
        name="profile",
        params={"lambda": lam, "m": m},
        analytic_y1=lambda t: rho(t) * np.cos(_profile_phase(t, lam, m)),
        analytic_y2=lambda t: -rho(t) * np.sin(_profile_phase(t, lam, m)),
        analytic_A=lambda t: _profile_phase(t, lam, m),
    )


def constant_model(omega: float = 1.0, m: float = 1.0) -> CoefficientModel:
    """Time-independent oscillator sigma = m omega^2 (fixture only; it
    violates the decay assumption because A grows linearly)."""
    omega = float(omega)
    m = float(m)
    return CoefficientModel(
        sigma=lambda t: np.full_like(np.asarray(t, dtype=float), m * omega**2),
        m=m,
        lam=0.0,
        name="constant",
        params={"omega": omega, "m": m},
        analytic_y1=lambda t: np.cos(omega * np.asarray(t, dtype=float)),
        analytic_y2=lambda t: -np.sin(omega * np.asarray(t, dtype=float)) / (m * omega),
        analytic_A=None,
        satisfies_assumption=False,
    )


@dataclass(frozen=True)
class FactorValues:
    a1: float
    a2: float
    A: float


@dataclass(frozen=True)
class TailFit:
    exponent: float
    constant: float
    r2: float

    def integral_beyond(self, T: float) -> float:
        """int_T^inf c tau^k dtau, infinite when k >= -1."""
        k = self.exponent
        if k >= -1:
            return np.inf
        return self.constant * T ** (k + 1) / (-(k + 1))


def _loglog_fit(t, y):
    x = np.log(t)
    z = np.log(y)
    slope, icept = np.polyfit(x, z, 1)
    resid = z - (slope * x + icept)
    ss_tot = np.sum((z - z.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss_tot if ss_tot > 0 else float("nan")
    return float(slope), float(np.exp(icept)), float(r2)


class ClassicalBasis:
    """Dense-output normalized solution pair on [-T_ode, T_ode].

    State vector: (zeta1, zeta1', zeta2, zeta2', A); the phase A is carried
    as an extra ODE component so its quadrature shares the integrator's
    error control and dense output.
    """

    def __init__(self, model: CoefficientModel, T_ode: float, tol: float, pos, neg):
        self.model = model
        self.T_ode = float(T_ode)
        self.tol = float(tol)
        self._pos = pos
        self._neg = neg
        self.W = 1.0 / model.m

    @property
    def m(self) -> float:
        return self.model.m

    @property
    def A_table(self):
        """Integrator nodes and the accumulated phase there, sorted in t."""
        t = np.concatenate([self._neg.ts[::-1], self._pos.ts[1:]])
        return t, self.A(t)

    def _check_span(self, t):
        if np.any(np.abs(t) > self.T_ode * (1 + 1e-12)):
            bad = t[np.abs(t) > self.T_ode][0] if t.ndim else t
            raise ValueError(f"t={float(bad):g} outside solved span [-{self.T_ode:g}, {self.T_ode:g}]")

    def state(self, t) -> np.ndarray:
        """Raw state (zeta1, zeta1', zeta2, zeta2', A) at t, shape (5,) + t.shape."""
        t = np.asarray(t, dtype=float)
        self._check_span(t)
        flat = np.atleast_1d(t).ravel()
        out = np.empty((5, flat.size))
        pos = flat >= 0
        if pos.any():
            out[:, pos] = self._pos(flat[pos])
        if (~pos).any():
            out[:, ~pos] = self._neg(flat[~pos])
        return out.reshape((5,) + t.shape)

    def y(self, t):
        """(y1, y1', y2, y2') at t."""
        z1, dz1, z2, dz2, _ = self.state(t)
        m = self.m
        return z1, dz1, -z2 / m, -dz2 / m

    def zeta(self, t):
        """Canonical pair (zeta1, zeta1', zeta2, zeta2') at t."""
        z1, dz1, z2, dz2, _ = self.state(t)
        return z1, dz1, z2, dz2

    def wronskian(self, t):
        y1, dy1, y2, dy2 = self.y(t)
        return dy1 * y2 - y1 * dy2

    def a1(self, t):
        y1, _, y2, _ = self.y(t)
        return self.W / (y1 * y1 + y2 * y2)

    def a2(self, t):
        y1, dy1, y2, dy2 = self.y(t)
        return -(dy1 * y1 + dy2 * y2) / (y1 * y1 + y2 * y2)

    def A(self, t):
        return self.state(t)[4]

    def factors(self, t):
        """Vectorized (a1, a2, A)."""
        z1, dz1, z2, dz2, A = self.state(t)
        m = self.m
        y1, dy1, y2, dy2 = z1, dz1, -z2 / m, -dz2 / m
        r2 = y1 * y1 + y2 * y2
        return self.W / r2, -(dy1 * y1 + dy2 * y2) / r2, A

    # asymptotic tails --------------------------------------------------
    def _tail_fit(self, sign: int) -> TailFit:
        T = self.T_ode
        t = np.geomspace(T / 10, T, 200)
        slope, c, r2 = _loglog_fit(t, self.a1(sign * t))
        return TailFit(slope, c, r2)

    @cached_property
    def tail_plus(self) -> TailFit:
        return self._tail_fit(+1)

    @cached_property
    def tail_minus(self) -> TailFit:
        return self._tail_fit(-1)

    @cached_property
    def A_inf_plus(self) -> float:
        return float(self.A(self.T_ode)) + self.tail_plus.integral_beyond(self.T_ode)

    @cached_property
    def A_inf_minus(self) -> float:
        return float(self.A(-self.T_ode)) - self.tail_minus.integral_beyond(self.T_ode)

    def A_extended(self, t):
        """A(t) for any real t (tail power law beyond the span); +-inf allowed."""
        t = np.asarray(t, dtype=float)
        T = self.T_ode
        out = np.empty(t.shape)
        inside = np.abs(t) <= T
        out[inside] = self.A(t[inside])
        for sign, tail, ainf in ((1, self.tail_plus, self.A_inf_plus), (-1, self.tail_minus, self.A_inf_minus)):
            sel = (sign * t > T)
            if sel.any():
                tt = np.abs(t[sel])
                rest = np.array([tail.integral_beyond(x) for x in tt])
                out[sel] = ainf - sign * rest
        return out if out.ndim else float(out)


def solve_classical(model: CoefficientModel, T_ode: float = 1e3, tol: float = 1e-11) -> ClassicalBasis:
    """Integrate the canonical pair (and the phase A) on [-T_ode, T_ode].

    DOP853 with dense output; ``tol`` is the relative local error target.
    """
    if not 0 < tol <= 1e-3:
        raise ValueError(f"tol must lie in (0, 1e-3], got {tol}")
    if T_ode < 1:
        raise ValueError(f"T_ode must be >= 1, got {T_ode}")
    m = model.m
    sig = model.sigma

    def rhs(t, s):
        k = sig(t) / m
        return [s[1], -k * s[0], s[3], -k * s[2], m / (m * m * s[0] * s[0] + s[2] * s[2])]

    y0 = [1.0, 0.0, 0.0, 1.0, 0.0]
    sols = []
    for end in (T_ode, -T_ode):
        res = solve_ivp(rhs, (0.0, end), y0, method="DOP853", rtol=tol, atol=tol * 1e-2, dense_output=True)
        if res.status != 0:
            raise ClassicalSolveError(f"integration failed at t={res.t[-1]:.6g}: {res.message}")
        sols.append(res.sol)
    basis = ClassicalBasis(model, T_ode, tol, sols[0], sols[1])
    w0 = float(basis.wronskian(0.0))
    if not abs(w0 - basis.W) <= 1e-9 * basis.W:
        raise ClassicalSolveError(f"normalization failure: Wronskian {w0} != {basis.W}")
    return basis


def factors_at(basis: ClassicalBasis, t: float) -> FactorValues:
    a1, a2, A = basis.factors(float(t))
    return FactorValues(float(a1), float(a2), float(A))


@dataclass(frozen=True)
class AsymptoticsReport:
    window: tuple
    a1_slope: float
    a1_r2: float
    lambda_fit: float
    c_m: float
    c_M: float
    c1_plus: float
    c1_minus: float
    c2_plus: float
    c2_minus: float
    c0: float
    C_A: float
    A_inf_plus: float
    A_inf_minus: float

    def as_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


def rotated_components(basis: ClassicalBasis, t, sign: int):
    """Dominant and recessive components of (y1, y2) at the +-inf end.

    Since arg(y1 + i y2) = -A(t) in the normalized basis, rotating by the
    limiting angle A(+-inf) aligns the growing solution with the real axis.
    """
    y1, _, y2, _ = basis.y(t)
    ainf = basis.A_inf_plus if sign > 0 else basis.A_inf_minus
    z = (y1 + 1j * y2) * np.exp(1j * ainf)
    return z.real, z.imag


def verify_asymptotics(basis: ClassicalBasis, window=(1e2, 1e3), min_r2: float = 0.99) -> AsymptoticsReport:
    lo, hi = window
    if basis.T_ode < hi:
        raise ValueError(f"span {basis.T_ode:g} does not reach the fit window end {hi:g}")
    t = np.geomspace(lo, hi, 400)
    slopes = []
    for sign in (1, -1):
        slope, _, r2 = _loglog_fit(t, basis.a1(sign * t))
        slopes.append((slope, r2))
    slope = 0.5 * (slopes[0][0] + slopes[1][0])
    r2 = min(slopes[0][1], slopes[1][1])
    if not (r2 >= min_r2) or slope >= -1.0:
        raise AssumptionViolation(
            f"{basis.model.label()}: a1 log-log fit slope={slope:.4f}, R^2={r2:.4f} "
            "does not decay like t^(2 lambda - 2) with lambda < 1/2"
        )
    lam = 0.5 * (slope + 2.0)
    tt = np.geomspace(lo, basis.T_ode, 400)
    scaled = np.concatenate([basis.a1(s * tt) * tt ** (2 - 2 * lam) for s in (1, -1)])
    consts = {}
    for sign, key in ((1, "plus"), (-1, "minus")):
        dom, rec = rotated_components(basis, sign * basis.T_ode, sign)
        consts["c1_" + key] = float(dom / basis.T_ode ** (1 - lam))
        consts["c2_" + key] = float(rec / basis.T_ode**lam)
    core = np.linspace(-lo, lo, 4001)
    y1, _, y2, _ = basis.y(core)
    return AsymptoticsReport(
        window=(lo, hi),
        a1_slope=slope,
        a1_r2=r2,
        lambda_fit=lam,
        c_m=float(scaled.min()),
        c_M=float(scaled.max()),
        c0=float(np.max(1.0 / (y1 * y1 + y2 * y2))),
        C_A=float(max(basis.A_inf_plus, -basis.A_inf_minus)),
        A_inf_plus=basis.A_inf_plus,
        A_inf_minus=basis.A_inf_minus,
        **consts,
    )


MODEL_REGISTRY = {
    "free": (free_model, ("m",)),
    "profile": (model_from_profile, ("lambda", "m")),
    "constant": (constant_model, ("omega", "m")),
}


def build_model(name: str, params: dict) -> CoefficientModel:
    """Look up a registered model; every listed parameter is required."""
    if name not in MODEL_REGISTRY:
        raise KeyError(f"unknown model {name!r}; known: {sorted(MODEL_REGISTRY)}")
    factory, keys = MODEL_REGISTRY[name]
    missing = [k for k in keys if k not in params]
    if missing:
        raise KeyError(f"model {name!r} missing parameter(s): {', '.join(missing)}")
    extra = set(params) - set(keys)
    if extra:
        raise KeyError(f"model {name!r} got unknown parameter(s): {', '.join(sorted(extra))}")
    args = [params[k] for k in keys]
    return factory(*args)
