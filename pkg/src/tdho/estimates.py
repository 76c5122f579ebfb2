"""Dispersive, resonance and weighted Strichartz checks.

All constants C of the inequalities are existential, so what is measured
here are ratios against the explicit coefficient of the bound, log-log
decay exponents, and the stability of finite ratios under refinement.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import integrate, optimize

from tdho.classical import AssumptionViolation, ClassicalBasis, _loglog_fit, rotated_components, verify_asymptotics
from tdho.grid import GridSpec, WaveField
from tdho.propagator import EPS_RES, GaussianState, evolve, evolve_adjoint, propagate, resample

DELTA_DEFAULT = np.pi / 8

OMEGA0_PLUS = "Omega0_plus"
OMEGA0_MINUS = "Omega0_minus"
OMEGAL_PLUS = "OmegaLambda_plus"
OMEGAL_MINUS = "OmegaLambda_minus"
CORE_SQUARE = "CoreSquare"
RESONANT = "ResonantN"
REGULAR = "Regular"
CROSSING = "Crossing"
KINDS = (OMEGA0_PLUS, OMEGA0_MINUS, OMEGAL_PLUS, OMEGAL_MINUS, CORE_SQUARE, RESONANT, REGULAR, CROSSING)


class InsufficientSamples(RuntimeError):
    """Too few usable samples for a fit."""


def _map(fn, items, workers):
    items = list(items)
    if workers is None or workers <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


# norms -----------------------------------------------------------------
@dataclass(frozen=True)
class NormSpec:
    """Exponents of the space L^{q,r}_lambda and the derived theta.

    With ``strict`` the pair must be admissible in dimension ``dim``:
    1/q + dim/(2r) = dim/4, q > 2, r >= 2.
    """

    q: float
    r: float
    lambda_w: float = 0.0
    dim: int = 1
    strict: bool = True

    def __post_init__(self):
        if not self.q >= 1 or not self.r >= 1:
            raise ValueError(f"exponents must be >= 1, got q={self.q}, r={self.r}")
        if self.strict:
            if not (self.q > 2 and self.r >= 2):
                raise ValueError(f"admissible pairs need q > 2, r >= 2; got ({self.q}, {self.r})")
            if not self.admissible():
                raise ValueError(
                    f"(q, r) = ({self.q}, {self.r}) is not admissible in dimension {self.dim}: "
                    f"1/q + n/(2r) = {1 / self.q + self.dim / (2 * self.r):.6g} != {self.dim / 4:g}"
                )

    def admissible(self, dim: int = None) -> bool:
        n = self.dim if dim is None else dim
        return abs(1.0 / self.q + n / (2.0 * self.r) - n / 4.0) <= 1e-12

    @property
    def theta(self) -> float:
        return (1.0 - self.lambda_w) * (0.5 - 1.0 / self.r)

    @staticmethod
    def _conj(p: float) -> float:
        if np.isinf(p):
            return 1.0
        if p == 1:
            return np.inf
        return p / (p - 1.0)

    @property
    def q_conj(self) -> float:
        return self._conj(self.q)

    @property
    def r_conj(self) -> float:
        return self._conj(self.r)

    def dual(self) -> "NormSpec":
        """(q', r') with the opposite weight, the Duhamel data space."""
        return NormSpec(self.q_conj, self.r_conj, -self.lambda_w, self.dim, strict=False)


def time_norm(times, rnorms, q: float, lambda_w: float = 0.0, T: float = None):
    """(int (1+t^2)^(-lambda/2) g(t)^q dt)^(1/q) by composite Simpson.

    ``times`` must be uniform with an odd count (after restriction to
    |t| <= T) so the half-resolution rule exists for the Richardson
    estimate (I_h - I_2h)/15.  Returns (value, error estimate).
    """
    t = np.asarray(times, dtype=float)
    g = np.asarray(rnorms, dtype=float)
    if T is not None:
        sel = np.abs(t) <= T * (1 + 1e-12)
        t, g = t[sel], g[sel]
    if t.size < 5 or t.size % 2 == 0:
        raise ValueError(f"need an odd number (>= 5) of uniform time samples, got {t.size}")
    dt = np.diff(t)
    if np.ptp(dt) > 1e-9 * abs(dt.mean()):
        raise ValueError("time samples must be uniform")
    if np.isinf(q):
        return float(np.max((1 + t * t) ** (-0.5 * lambda_w) * g)), 0.0
    integrand = (1 + t * t) ** (-0.5 * lambda_w) * g**q
    fine = integrate.simpson(integrand, x=t)
    if t.size % 4 == 1:
        coarse = integrate.simpson(integrand[::2], x=t[::2])
        err_int = abs(fine - coarse) / 15.0
    else:
        err_int = float("nan")
    val = fine ** (1.0 / q) if fine > 0 else 0.0
    # propagate the integral error through the 1/q power
    err = val * err_int / (q * fine) if fine > 0 else 0.0
    return float(val), float(err)


def weighted_strichartz_norm(trajectory, spec: NormSpec, T: float, return_error: bool = False):
    """||F||_{q,r,lambda} for a sampled trajectory ``(times, fields)``.

    Spatial L^r is a grid Riemann sum (max for r = inf); the time
    integral is composite Simpson over |t| <= T.
    """
    times, fields = trajectory
    rn = np.array([f.norm(spec.r) for f in fields])
    val, err = time_norm(times, rn, spec.q, spec.lambda_w, T)
    return (val, err) if return_error else val


# reports ---------------------------------------------------------------
@dataclass
class ScanSample:
    t: float
    s: float
    label: str
    lhs: float
    rhs: float
    ratio: float
    accepted: bool = True


@dataclass
class ScanReport:
    name: str
    samples: list = field(default_factory=list)
    fitted_slope: float = float("nan")
    fitted_constant: float = float("nan")
    fit_r2: float = float("nan")
    expected: float = float("nan")
    tolerance: float = float("nan")
    status: str = "ok"
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        if self.status != "ok":
            return False
        ok = np.isfinite(self.fitted_slope)
        if np.isfinite(self.expected) and np.isfinite(self.tolerance):
            ok = ok and abs(self.fitted_slope - self.expected) <= self.tolerance
        if "min_r2" in self.extra:
            ok = ok and self.fit_r2 >= self.extra["min_r2"]
        return bool(ok)

    def sorted_samples(self):
        return sorted(self.samples, key=lambda x: (x.t, x.s))

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "s", "label", "lhs", "rhs", "ratio", "accepted"])
        for x in self.sorted_samples():
            w.writerow([repr(float(x.t)), repr(float(x.s)), x.label, repr(float(x.lhs)), repr(float(x.rhs)),
                        repr(float(x.ratio)), int(x.accepted)])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def summary(self) -> dict:
        return {
            "name": self.name,
            "status": self.status,
            "samples": len(self.samples),
            "accepted": sum(1 for x in self.samples if x.accepted),
            "fitted_slope": self.fitted_slope,
            "fitted_constant": self.fitted_constant,
            "fit_r2": self.fit_r2,
            "expected": self.expected,
            "tolerance": self.tolerance,
            "passed": self.passed,
            **self.extra,
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True, default=float)


# r0 and regions --------------------------------------------------------
def _lambda_of(basis: ClassicalBasis) -> float:
    if basis.model.satisfies_assumption and basis.model.lam is not None:
        return float(basis.model.lam)
    return verify_asymptotics(basis).lambda_fit


def r0_conditions(basis: ClassicalBasis, r: float, factor: float = 2.0, samples: int = 400) -> dict:
    """Margins of the two defining conditions of r0 at a candidate r.

    ``envelope_margin`` is min over |t| in [r, T] of the distance of
    |component| / (c |t|^p) to the band [1/factor, factor] in log units
    (positive inside); ``tail_margin`` is pi/2 minus the larger tail
    phase int_{+-r}^{+-inf} a1.
    """
    lam = _lambda_of(basis)
    T = basis.T_ode
    t = np.geomspace(max(r, 1e-6), T, samples)
    env = np.inf
    for sign in (1, -1):
        dom, rec = rotated_components(basis, sign * t, sign)
        c1 = dom[-1] / T ** (1 - lam)
        c2 = rec[-1] / T**lam
        for comp, c, p in ((dom, c1, 1 - lam), (rec, c2, lam)):
            if c == 0:
                continue
            q = np.log(np.abs(comp) / (abs(c) * t**p))
            env = min(env, float(np.min(np.log(factor) - np.abs(q))))
    tail = max(basis.A_inf_plus - float(basis.A(r)), float(basis.A(-r)) - basis.A_inf_minus)
    return {"r": float(r), "envelope_margin": env, "tail_margin": float(0.5 * np.pi - tail), "lambda": lam}


def compute_r0(basis: ClassicalBasis, factor: float = 2.0, r_floor: float = 1.0, samples: int = 4000) -> float:
    """Smallest r (>= r_floor) with the factor-2 envelopes on both rotated
    solution components for |t| >= r and tail phase < pi/2 beyond +-r."""
    if not basis.model.satisfies_assumption:
        raise AssumptionViolation(f"{basis.model.label()} is a fixture outside the decay assumption; r0 undefined")
    lam = _lambda_of(basis)
    T = basis.T_ode
    t = np.geomspace(r_floor, T, samples)
    r_env = r_floor
    for sign in (1, -1):
        dom, rec = rotated_components(basis, sign * t, sign)
        for comp, p in ((dom, 1 - lam), (rec, lam)):
            c = comp[-1] / T**p
            if c == 0:
                continue
            ratio = np.abs(comp) / (abs(c) * t**p)
            bad = np.nonzero((ratio < 1.0 / factor) | (ratio > factor))[0]
            if bad.size:
                r_env = max(r_env, float(t[min(bad[-1] + 1, t.size - 1)]))
    r_tail = r_floor
    for sign, ainf in ((1, basis.A_inf_plus), (-1, basis.A_inf_minus)):
        def g(r, sign=sign, ainf=ainf):
            return abs(ainf - float(basis.A(sign * r))) - 0.5 * np.pi

        if g(r_floor) >= 0:
            if g(T) >= 0:
                raise ValueError("span too short to certify the tail condition")
            r_tail = max(r_tail, optimize.brentq(g, r_floor, T, xtol=1e-10))
    r0 = max(r_env, r_tail * (1 + 1e-9))
    if 10 * r0 > T:
        raise ValueError(f"span {T:g} is shorter than 10 r0 = {10 * r0:g}; increase T_ode")
    return float(r0)


def n_tilde(basis: ClassicalBasis, rtol: float = 1e-6) -> int:
    """Largest N with N pi < total phase (tail-extended when the decay
    assumption holds, the solved span otherwise)."""
    if basis.model.satisfies_assumption:
        total = basis.A_inf_plus - basis.A_inf_minus
    else:
        total = float(basis.A(basis.T_ode) - basis.A(-basis.T_ode))
    # relative slack absorbs the tail-fit error when the total is an exact
    # multiple of pi (free particle: total = pi, N~ = 0)
    return max(0, int(math.ceil(total / np.pi - rtol)) - 1)


@dataclass(frozen=True)
class RegionLabel:
    kind: str
    N: int = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown region kind {self.kind!r}")
        if (self.kind == RESONANT) != (self.N is not None):
            raise ValueError("N is given exactly for resonant labels")

    def __str__(self):
        return f"{RESONANT}({self.N})" if self.kind == RESONANT else self.kind


def classify_region(t: float, s: float, r0: float, delta_t: float = DELTA_DEFAULT, basis=None,
                    n_max: int = None) -> RegionLabel:
    """Label (t, s).

    Outside the core: Omega0 when |t|/2 <= |s| <= 2|t|, OmegaLambda
    otherwise (same sign, both |.| >= r0).  Pairs of opposite sign with
    both outside are ``Crossing``; pairs with one coordinate inside
    (-r0, r0) and one outside are ``CoreSquare``.  Inside the core the
    phase difference decides ResonantN(N) (within delta_t of N pi, N <=
    n_max) or Regular.
    """
    at, as_ = abs(t), abs(s)
    if at >= r0 and as_ >= r0:
        if t * s < 0:
            return RegionLabel(CROSSING)
        plus = t > 0
        if at / 2 <= as_ <= 2 * at:
            return RegionLabel(OMEGA0_PLUS if plus else OMEGA0_MINUS)
        return RegionLabel(OMEGAL_PLUS if plus else OMEGAL_MINUS)
    if at >= r0 or as_ >= r0:
        return RegionLabel(CORE_SQUARE)
    if basis is None:
        raise ValueError("classifying core points needs the basis (phase A)")
    d = abs(float(basis.A(t)) - float(basis.A(s)))
    N = int(np.round(d / np.pi))
    if abs(d - N * np.pi) <= delta_t and (n_max is None or N <= n_max):
        return RegionLabel(RESONANT, N)
    return RegionLabel(REGULAR)


# dispersive ratios -----------------------------------------------------
def sup_norm(f: WaveField, oversample: int = 8, levels: int = 3) -> float:
    """Max modulus refined by band-limited interpolation on successively
    finer patches around the current maximum (the chirp has unit modulus,
    so the envelope suffices)."""
    g = f.grid
    src = WaveField(g, f.envelope)
    env = np.abs(f.envelope)
    best = float(env.max())
    k = np.unravel_index(int(np.argmax(env)), env.shape)
    centre = [g.origin[a] + k[a] * g.spacing[a] for a in range(f.dim)]
    half = list(g.spacing)
    pts = 2 * oversample
    for _ in range(levels):
        origin = tuple(centre[a] - half[a] for a in range(f.dim))
        spacing = tuple(2 * half[a] / (pts - 1) for a in range(f.dim))
        patch = GridSpec((pts,) * f.dim, spacing, origin)
        loc = np.abs(resample(src, patch).envelope)
        j = np.unravel_index(int(np.argmax(loc)), loc.shape)
        best = max(best, float(loc[j]))
        centre = [origin[a] + j[a] * spacing[a] for a in range(f.dim)]
        half = list(spacing)
    return best


def bound_coefficient(basis: ClassicalBasis, t: float, s: float, n: int = 1) -> float:
    """|a1(t) a1(s)|^(n/4) / |sin(A(t) - A(s))|^(n/2); inf at resonance."""
    a1t, _, At = basis.factors(float(t))
    a1s, _, As = basis.factors(float(s))
    sn = abs(np.sin(float(At) - float(As)))
    if sn == 0:
        return np.inf
    return float((a1t * a1s) ** (0.25 * n) / sn ** (0.5 * n))


def _is_resonant(beta: float, eps_res: float) -> bool:
    # near N pi with N >= 1; small phase differences (N = 0, t != s) are
    # resolved exactly by the merged flow and keep a finite coefficient
    N = int(np.round(abs(beta) / np.pi))
    return N >= 1 and abs(abs(beta) - N * np.pi) < eps_res


def dispersive_ratio(basis: ClassicalBasis, t: float, s: float, f: WaveField, eps_res: float = EPS_RES):
    """(lhs, rhs): lhs = ||U(t,0) U(s,0)^* f||_inf / ||f||_1 and rhs the
    bound coefficient without C.

    At t = s, or when A(t) - A(s) lies within eps_res of a nonzero
    multiple of pi, the pair is resonant: rhs is returned as inf (so
    lhs/rhs = 0) and callers exclude it from fits.
    """
    n = f.dim
    l1 = f.norm(1)
    if l1 == 0:
        raise ValueError("f has zero L^1 norm")
    if t == s:
        return sup_norm(f) / l1, np.inf
    lhs = sup_norm(propagate(basis, f, t, s)) / l1
    _, _, At = basis.factors(float(t))
    _, _, As = basis.factors(float(s))
    if _is_resonant(float(At) - float(As), eps_res):
        return lhs, np.inf
    return lhs, bound_coefficient(basis, t, s, n)


def lp_ratio(basis: ClassicalBasis, t: float, s: float, f: WaveField, r: float, eps_res: float = EPS_RES):
    """(lhs, rhs) for the L^{r'} -> L^r bound: lhs = ||U(t,0) U(s,0)^* f||_r
    / ||f||_{r'} and rhs the interpolated coefficient (dispersive one to
    the power 1 - 2/r); rhs is inf at resonant pairs."""
    if np.isinf(r):
        return dispersive_ratio(basis, t, s, f, eps_res)
    if r < 2:
        raise ValueError(f"need r >= 2, got {r}")
    rc = r / (r - 1.0)
    lhs = propagate(basis, f, t, s).norm(r) / f.norm(rc)
    _, _, At = basis.factors(float(t))
    _, _, As = basis.factors(float(s))
    if t == s or _is_resonant(float(At) - float(As), eps_res):
        return lhs, np.inf
    return lhs, bound_coefficient(basis, t, s, f.dim) ** (1.0 - 2.0 / r)


def expected_slope(kind: str, n: int, lam: float) -> float:
    if kind in (OMEGA0_PLUS, OMEGA0_MINUS):
        return -0.5 * n
    if kind in (OMEGAL_PLUS, OMEGAL_MINUS):
        return -0.5 * n * (1.0 - lam)
    raise ValueError(f"no decay law for region {kind!r}")


def region_pairs(kind: str, r0: float, t_max: float, samples: int, rng: np.random.Generator,
                 tau_min: float = 10.0):
    """Sample pairs in an outer region, log-spread in |t - s|.

    Omega0: |t - s| = tau log-uniform, t = kappa tau with s = t - tau
    (kappa in [2, 8]) or s = t + tau (kappa in [1, 4]); both orientations
    alternate.  OmegaLambda: one time pinned in [r0, 1.1 r0], the other
    log-uniform in [20 r0, t_max]; orientations alternate.  Negative
    regions mirror the positive ones.
    """
    sign = 1.0 if kind.endswith("plus") else -1.0
    out = []
    if kind in (OMEGA0_PLUS, OMEGA0_MINUS):
        lo = max(tau_min, r0)
        hi = t_max / 8.0
        if hi <= lo:
            raise InsufficientSamples(f"span {t_max:g} too short for Omega0 with r0={r0:g}")
        taus = np.geomspace(lo, hi, samples)
        for i, tau in enumerate(taus):
            if i % 2 == 0:
                t = tau * rng.uniform(2.0, 8.0)
                s = t - tau
            else:
                t = tau * rng.uniform(1.0, 4.0)
                s = t + tau
            if s < r0 or t < r0:
                continue
            out.append((sign * t, sign * s))
    elif kind in (OMEGAL_PLUS, OMEGAL_MINUS):
        lo = 20.0 * r0
        if t_max <= 2 * lo:
            raise InsufficientSamples(f"span {t_max:g} too short for OmegaLambda with r0={r0:g}")
        far = np.geomspace(lo, t_max, samples)
        for i, x in enumerate(far):
            near = r0 * rng.uniform(1.0, 1.1)
            t, s = (x, near) if i % 2 == 0 else (near, x)
            out.append((sign * t, sign * s))
    else:
        raise ValueError(f"slope scans need an outer region, got {kind!r}")
    return out


def _unit_probe(n: int) -> GaussianState:
    return GaussianState.normalized((0.0,) * n, (0.0,) * n, (1j,) * n)


def _scan_fit(report: ScanReport, min_samples: int) -> ScanReport:
    acc = [x for x in report.samples if x.accepted and np.isfinite(x.rhs) and x.lhs > 0]
    if len(acc) < min_samples:
        report.status = f"insufficient samples ({len(acc)} < {min_samples})"
        return report
    d = np.array([abs(x.t - x.s) for x in acc])
    y = np.array([x.lhs for x in acc])
    report.fitted_slope, report.fitted_constant, report.fit_r2 = _loglog_fit(d, y)
    return report


def decay_slope_scan(basis: ClassicalBasis, region: str, n: int = 1, samples: int = 64, seed: int = 0,
                     r0: float = None, t_max: float = None, points: int = 256, refine_check: bool = True,
                     refine_tol: float = 0.02, tolerance: float = 0.05, min_r2: float = 0.98,
                     min_samples: int = 50, workers: int = None, r: float = np.inf) -> ScanReport:
    """Log-log slope of the dispersive lhs against |t - s| within a region.

    The probe is a unit Gaussian on a natural ``points``-grid (dimension
    ``n``).  With ``refine_check`` each sample is recomputed with twice the
    points and rejected when the lhs moves by more than ``refine_tol``.
    The default r = inf is the L^1 -> L^inf endpoint; finite r >= 2 scans
    the L^{r'} -> L^r ratio, whose expected slope carries a factor 1 - 2/r.
    """
    rng = np.random.default_rng(seed)
    r0 = compute_r0(basis) if r0 is None else r0
    t_max = basis.T_ode if t_max is None else min(t_max, basis.T_ode)
    pairs = region_pairs(region, r0, t_max, samples, rng)
    probe = _unit_probe(n)
    f = probe.sample(GridSpec.natural(points, n))
    f2 = probe.sample(GridSpec.natural(2 * points, n)) if refine_check else None
    lam = _lambda_of(basis)

    def one(pair):
        t, s = pair
        lab = classify_region(t, s, r0)
        lhs, rhs = lp_ratio(basis, t, s, f, r)
        ok = np.isfinite(rhs) and str(lab) == region
        if ok and refine_check:
            lhs2, _ = lp_ratio(basis, t, s, f2, r)
            ok = abs(lhs2 - lhs) <= refine_tol * lhs
        return ScanSample(t, s, str(lab), lhs, rhs, lhs / rhs if np.isfinite(rhs) else 0.0, bool(ok))

    report = ScanReport(
        name=f"dispersive/{basis.model.label()}/{region}" + ("" if np.isinf(r) else f"/r={r:g}"),
        samples=_map(one, pairs, workers),
        expected=expected_slope(region, n, lam) * (1.0 if np.isinf(r) else 1.0 - 2.0 / r),
        tolerance=tolerance,
        extra={"r0": r0, "min_r2": min_r2, "dimension": n, "lambda": lam, "r": float(r)},
    )
    return _scan_fit(report, min_samples)


# resonance structure ---------------------------------------------------
BLOW_UP = math.inf


def resonance_offsets(basis: ClassicalBasis, N: int, s: float, n_max: int = None) -> float:
    """omega_N(s) >= 0 with int_s^{s+omega} a1 = N pi, or BLOW_UP (inf)
    when the remaining phase int_s^inf a1 does not exceed N pi."""
    if N < 0:
        raise ValueError("N must be non-negative")
    n_max = n_tilde(basis) if n_max is None else n_max
    if N > n_max:
        raise ValueError(f"N={N} exceeds N~={n_max}")
    if N == 0:
        return 0.0
    As = float(basis.A(s))
    target = As + N * np.pi
    T = basis.T_ode
    if float(basis.A(T)) >= target:
        g = lambda w: float(basis.A(s + w)) - target  # noqa: E731
        return float(optimize.brentq(g, 0.0, T - s, xtol=1e-13, rtol=4 * np.finfo(float).eps, maxiter=200))
    if not basis.model.satisfies_assumption or basis.A_inf_plus <= target:
        if basis.model.satisfies_assumption:
            return BLOW_UP
        raise ValueError(f"span {T:g} too short to reach phase {N} pi from s={s:g}")
    g = lambda w: float(basis.A_extended(s + w)) - target  # noqa: E731
    hi = 2 * (T - s)
    while g(hi) < 0:
        hi *= 2
    return float(optimize.brentq(g, T - s, hi, xtol=1e-12 * hi, maxiter=200))


def blow_up_point(basis: ClassicalBasis, N: int) -> float:
    """s* with int_{s*}^inf a1 = N pi (-inf when the total phase is short)."""
    if N == 0:
        return math.inf
    target = basis.A_inf_plus - N * np.pi
    if target <= basis.A_inf_minus:
        return -math.inf
    g = lambda x: float(basis.A_extended(x)) - target  # noqa: E731
    lo = -basis.T_ode
    while g(lo) > 0:
        lo *= 2
    hi = basis.T_ode
    while g(hi) < 0:
        hi *= 2
    return float(optimize.brentq(g, lo, hi, xtol=1e-12))


def _time_at_phase(basis: ClassicalBasis, phase: float, lo: float, hi: float) -> float:
    return float(optimize.brentq(lambda x: float(basis.A(x)) - phase, lo, hi, xtol=1e-13, rtol=4 * np.finfo(float).eps))


@dataclass
class ResonanceReport:
    N: int
    n_tilde: int
    r0: float
    delta: float
    rows: list
    min_ratio: float
    min_ratio_mirrored: float
    phase_max_residual: float
    offset_slope_max_error: float
    monotone: bool

    def summary(self) -> dict:
        d = asdict(self)
        d.pop("rows")
        d["samples"] = len(self.rows)
        return d


def phase_residual(basis: ClassicalBasis, t: float, s: float, N: int) -> float:
    """|A(t) - A(s) - N pi - int_{s+omega_N(s)}^t a1| with the integral by
    adaptive quadrature of a1, independent of the phase table."""
    w = resonance_offsets(basis, N, s)
    if not np.isfinite(w):
        raise ValueError(f"omega_{N}({s:g}) blows up")
    lhs = float(basis.A(t)) - float(basis.A(s)) - N * np.pi
    rhs, _ = integrate.quad(lambda x: float(basis.a1(x)), s + w, t, epsabs=1e-13, epsrel=1e-13, limit=200)
    return abs(lhs - rhs)


def offset_slope_error(basis: ClassicalBasis, N: int, s: float, h: float = 1e-4) -> float:
    """Relative error of the central difference of s + omega_N(s) against
    a1(s) / a1(s + omega_N(s))."""
    w = resonance_offsets(basis, N, s)
    wp = resonance_offsets(basis, N, s + h)
    wm = resonance_offsets(basis, N, s - h)
    fd = 1.0 + (wp - wm) / (2 * h)
    exact = float(basis.a1(s)) / float(basis.a1(s + w))
    return abs(fd - exact) / abs(exact)


def sine_lower_bound_check(basis: ClassicalBasis, N: int, samples: int = 100, seed: int = 0, r0: float = None,
                           delta: float = DELTA_DEFAULT, fd_step: float = 1e-4) -> ResonanceReport:
    """Sample Omega_res,N in the core square, both orientations.

    For t > s the ratio |sin(A(t)-A(s))| / |t - s - omega_N(s)| is
    recorded; for t <= s the mirrored |t + omega_N(t) - s|.  Every
    sample also carries the closed-interval identity residual and the
    finite-difference check of 1 + omega_N' = a1(s)/a1(s + omega_N).
    """
    rng = np.random.default_rng(seed)
    if r0 is None:
        r0 = compute_r0(basis) if basis.model.satisfies_assumption else basis.T_ode
    nt = n_tilde(basis)
    if N > nt:
        raise ValueError(f"N={N} exceeds N~={nt}")
    lo, hi = -r0, r0
    A_lo, A_hi = float(basis.A(lo)), float(basis.A(hi))
    rows = []
    tries = 0
    while len(rows) < samples and tries < 50 * samples:
        tries += 1
        mirrored = len(rows) % 2 == 1
        d = rng.uniform(-delta, delta)
        # the earlier time x carries the offset; the later one sits at phase + N pi + d
        x = rng.uniform(lo, hi)
        phase = float(basis.A(x)) + N * np.pi + d
        if not A_lo < phase < A_hi or (N == 0 and d <= 0):
            continue
        w = resonance_offsets(basis, N, x, n_max=nt)
        if not np.isfinite(w) or x - fd_step < lo:
            continue
        y = _time_at_phase(basis, phase, lo, hi)
        if y <= x or abs(y - x - w) == 0:
            continue
        t, s = (x, y) if mirrored else (y, x)
        ratio = abs(np.sin(float(basis.A(t)) - float(basis.A(s)))) / abs(y - x - w)
        res_phase = phase_residual(basis, y, x, N)
        slope_err = offset_slope_error(basis, N, x, fd_step) if N >= 1 else 0.0
        mono = float(basis.a1(x)) / float(basis.a1(x + w)) > 0
        rows.append({"t": t, "s": s, "N": N, "mirrored": mirrored, "omega": w, "ratio": ratio,
                     "phase_residual": res_phase, "offset_slope_error": slope_err, "monotone": mono})
    if not rows:
        raise InsufficientSamples(f"no resonant samples for N={N} in [-{r0:g}, {r0:g}]")
    direct = [r["ratio"] for r in rows if not r["mirrored"]]
    mirror = [r["ratio"] for r in rows if r["mirrored"]]
    return ResonanceReport(
        N=N, n_tilde=nt, r0=r0, delta=delta, rows=rows,
        min_ratio=float(min(direct)) if direct else float("nan"),
        min_ratio_mirrored=float(min(mirror)) if mirror else float("nan"),
        phase_max_residual=float(max(r["phase_residual"] for r in rows)),
        offset_slope_max_error=float(max(r["offset_slope_error"] for r in rows)),
        monotone=all(r["monotone"] for r in rows),
    )


# Strichartz ------------------------------------------------------------
def time_grid(T: float, dt: float) -> np.ndarray:
    """Uniform grid on [-T, T] with a point count = 1 mod 4 (so both the
    Simpson rule and its half-resolution partner are defined) and t = 0
    included."""
    k = int(np.ceil(T / dt))
    k += (-k) % 2  # 2k + 1 = 1 mod 4
    return np.linspace(-T, T, 2 * k + 1)


def gaussian_family(count: int, seed: int, n: int = 1):
    """Seeded Gaussians: centres in [-2, 2], momenta in [-1, 1], widths
    (standard deviations) in [0.5, 2]."""
    rng = np.random.default_rng(seed)
    fam = []
    for _ in range(count):
        c = rng.uniform(-2, 2, n)
        p = rng.uniform(-1, 1, n)
        w = rng.uniform(0.5, 2.0, n)
        fam.append(GaussianState.normalized(c, p, 1j / w**2))
    return fam


def homogeneous_norms(basis: ClassicalBasis, f0: WaveField, times, r: float) -> np.ndarray:
    """||U0(t,0) f0||_r along ``times``."""
    return np.array([evolve(basis, f0, t).norm(r) for t in times])


def strichartz_homogeneous_check(basis: ClassicalBasis, spec: NormSpec, family, T: float, dt: float = 0.1,
                                 growth_tol: float = 0.05, workers: int = None) -> ScanReport:
    """max over the family of ||U0(.,0) phi||_{q,r,lambda} / ||phi||_2 on
    [-T, T] and on [-2T, 2T]; the report's slope field holds the
    relative growth under the doubling."""
    if not spec.admissible():
        raise ValueError("non-admissible pair; construct NormSpec(strict=False) and call time_norm directly")
    times = time_grid(2 * T, dt)

    def one(f0):
        rn = homogeneous_norms(basis, f0, times, spec.r)
        v1, e1 = time_norm(times, rn, spec.q, spec.lambda_w, T)
        v2, e2 = time_norm(times, rn, spec.q, spec.lambda_w, 2 * T)
        n2 = f0.norm(2)
        return v1 / n2, v2 / n2, max(e1, e2) / n2

    res = _map(one, family, workers)
    r1 = max(x[0] for x in res)
    r2 = max(x[1] for x in res)
    growth = r2 / r1 - 1.0
    rows = [ScanSample(T, 2 * T, f"member{i}", x[1], x[0], x[1] / x[0]) for i, x in enumerate(res)]
    rep = ScanReport(
        name=f"strichartz/{basis.model.label()}/q={spec.q:g},r={spec.r:g}",
        samples=rows, fitted_slope=growth, fitted_constant=r2, fit_r2=float("nan"),
        expected=0.0, tolerance=growth_tol,
        extra={"ratio_T": r1, "ratio_2T": r2, "growth": growth, "quad_error": max(x[2] for x in res),
               "T": T, "dt": dt, "lambda_w": spec.lambda_w},
    )
    if not (np.isfinite(r1) and np.isfinite(r2)):
        rep.status = "non-finite ratio"
    elif growth >= growth_tol:
        rep.status = f"growth {growth:.3g} >= {growth_tol}"
    return rep


@dataclass(frozen=True)
class SpacetimeForcing:
    """F(s, x) = exp(-(s - s0)^2 / (2 w^2)) phi(x), truncated to |s - s0| <= cut w."""

    phi: GaussianState
    s0: float = 1.0
    width: float = 0.5
    cut: float = 8.0

    def profile(self, s):
        s = np.asarray(s, dtype=float)
        g = np.exp(-0.5 * ((s - self.s0) / self.width) ** 2)
        return np.where(np.abs(s - self.s0) <= self.cut * self.width, g, 0.0)

    @property
    def support(self):
        return self.s0 - self.cut * self.width, self.s0 + self.cut * self.width


def duhamel_trajectory(basis: ClassicalBasis, forcing: SpacetimeForcing, times, grid: GridSpec):
    """Samples of int_0^t U0(t,0) U0(s,0)^* F(s) ds at ``times``.

    V(t) = int_0^t U0(s,0)^* F(s) ds is accumulated by the trapezoid rule
    on the time grid after resampling every U0(s,0)^* F(s) to ``grid``;
    then LHS(t) = U0(t,0) V(t).
    """
    times = np.asarray(times, dtype=float)
    phi = forcing.phi.sample(grid)
    prof = forcing.profile(times)
    j0 = int(np.argmin(np.abs(times)))
    if abs(times[j0]) > 1e-12:
        raise ValueError("time grid must contain t = 0")
    pulled = np.zeros((times.size,) + grid.shape, dtype=complex)
    for j in np.nonzero(prof)[0]:
        g = evolve_adjoint(basis, phi, times[j])
        pulled[j] = prof[j] * resample(g, grid).samples
    V = np.zeros_like(pulled)
    dt = np.diff(times)
    bshape = (-1,) + (1,) * grid.dim
    inc = 0.5 * (pulled[1:] + pulled[:-1]) * dt.reshape(bshape)
    V[j0 + 1:] = np.cumsum(inc[j0:], axis=0)
    V[:j0] = -np.cumsum(inc[:j0][::-1], axis=0)[::-1]
    out = []
    for j, t in enumerate(times):
        out.append(evolve(basis, WaveField(grid, V[j]), t))
    return out


def duhamel_check(basis: ClassicalBasis, spec: NormSpec, forcing: SpacetimeForcing, T: float, grid: GridSpec,
                  dt: float = 0.05, growth_tol: float = 0.05) -> ScanReport:
    """||Duhamel term||_{q,r,lambda} / ||F||_{q',r',-lambda} on [-T, T]
    and [-2T, 2T].  The exact factorization has no singular s-samples,
    so the excluded resonant measure is reported as 0."""
    times = time_grid(2 * T, dt)
    traj = duhamel_trajectory(basis, forcing, times, grid)
    lhs_rn = np.array([f.norm(spec.r) for f in traj])
    dual = spec.dual()
    phi = forcing.phi.sample(grid)
    F_rn = forcing.profile(times) * phi.norm(dual.r)
    out = {}
    for tag, TT in (("T", T), ("2T", 2 * T)):
        num, e_num = time_norm(times, lhs_rn, spec.q, spec.lambda_w, TT)
        den, e_den = time_norm(times, F_rn, dual.q, dual.lambda_w, TT)
        out[tag] = (num / den, num, den, e_num, e_den)
    r1, r2 = out["T"][0], out["2T"][0]
    growth = r2 / r1 - 1.0
    rows = [ScanSample(float(t), float(t), "duhamel", float(a), float(b), float(a / b) if b > 0 else 0.0)
            for t, a, b in zip(times[:: max(1, times.size // 200)], lhs_rn[:: max(1, times.size // 200)],
                               F_rn[:: max(1, times.size // 200)])]
    rep = ScanReport(
        name=f"duhamel/{basis.model.label()}/q={spec.q:g},r={spec.r:g}",
        samples=rows, fitted_slope=growth, fitted_constant=r2, expected=0.0, tolerance=growth_tol,
        extra={"ratio_T": r1, "ratio_2T": r2, "growth": growth, "lhs_norm_2T": out["2T"][1],
               "forcing_norm_2T": out["2T"][2], "quad_error": out["2T"][3], "excluded_measure": 0.0,
               "T": T, "dt": dt},
    )
    if not (np.isfinite(r1) and np.isfinite(r2)):
        rep.status = "non-finite ratio"
    elif growth >= growth_tol:
        rep.status = f"growth {growth:.3g} >= {growth_tol}"
    return rep
