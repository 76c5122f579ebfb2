"""Exact propagator U0(t,0) for H0(t) = -Laplacian/(2m) + sigma(t) x^2/2.

U0(t,0) = M(-1/(m a2)) i^{n/2} D(1/sqrt(m a1)) exp(-i A (-Laplacian + x^2)/2)

with the harmonic flow evaluated as a chirp-FFT-chirp product
M(tan a) D(sin a) F M(tan a).  Dilations and chirps only touch grid
metadata (see ``tdho.grid``), so the FFT is the only step that needs
resolved samples.

Conventions: F is the unitary transform (2 pi)^(-n/2) int e^{-i k.y} g(y) dy;
M(tau) multiplies by e^{i x^2/(2 tau)}; D(tau) f(x) = (i tau)^(-n/2) f(x/tau)
with the principal branch.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.fft as sfft

from tdho.grid import GridSpec, WaveField

EPS_RES = 1e-3
EPS_DEG = 1e-8
LEAK_TOL = 1e-18


class BoundaryOverflow(RuntimeError):
    """Significant mass reached the edge of a fixed grid."""


def _axes(f: WaveField, axes):
    return tuple(range(f.dim)) if axes is None else tuple(axes)


# elementary factors ----------------------------------------------------
def chirp(f: WaveField, coeff: float, axes=None) -> WaveField:
    """Multiply by exp(i coeff |x|^2 / 2) over ``axes`` (metadata only)."""
    if coeff == 0.0:
        return f
    ch = list(f.chirp)
    for a in _axes(f, axes):
        ch[a] += coeff
    return replace(f, chirp=tuple(ch))


def modulate(f: WaveField, tau: float, axes=None) -> WaveField:
    """M(tau): pointwise exp(i x^2/(2 tau))."""
    if f.space != "position":
        raise ValueError("modulate acts on position-space fields")
    if tau == 0:
        raise ValueError("M(tau) undefined at tau=0; use chirp(f, -1/tau) style coefficients")
    if np.isinf(tau):
        return f
    return chirp(f, 1.0 / tau, axes)


def _scale(f: WaveField, tau: float, axes=None) -> WaveField:
    """Unitary dilation g(x) = |tau|^(-n/2) f(x/tau), on grid metadata."""
    if tau == 0:
        raise ValueError("dilation by tau=0")
    axes = _axes(f, axes)
    g = f.grid
    shape, spacing, origin = list(g.shape), list(g.spacing), list(g.origin)
    ch = list(f.chirp)
    env = f.envelope
    for a in axes:
        if tau > 0:
            origin[a] = tau * origin[a]
        else:
            origin[a] = tau * (origin[a] + (shape[a] - 1) * spacing[a])
            env = np.flip(env, axis=a)
        spacing[a] = abs(tau) * spacing[a]
        ch[a] = ch[a] / (tau * tau)
    env = env * abs(tau) ** (-0.5 * len(axes))
    return WaveField(GridSpec(tuple(shape), tuple(spacing), tuple(origin)), env, tuple(ch), f.space)


def _dilation_phase(tau: float, n: int) -> complex:
    # (i tau)^(-n/2) * |tau|^(n/2), principal branch
    return complex(np.power(1j * tau, -0.5 * n) * abs(tau) ** (0.5 * n))


def dilate(f: WaveField, tau: float, axes=None) -> WaveField:
    """D(tau) f(x) = (i tau)^(-n/2) f(x/tau)."""
    if f.space != "position":
        raise ValueError("dilate acts on position-space fields")
    axes = _axes(f, axes)
    g = _scale(f, tau, axes)
    return replace(g, envelope=g.envelope * _dilation_phase(tau, len(axes)))


def parity(f: WaveField, axes=None) -> WaveField:
    """f(x) -> f(-x) over ``axes``; exact on any grid."""
    axes = _axes(f, axes)
    g = f.grid
    origin = list(g.origin)
    env = f.envelope
    for a in axes:
        origin[a] = -(g.origin[a] + (g.shape[a] - 1) * g.spacing[a])
        env = np.flip(env, axis=a)
    return WaveField(GridSpec(g.shape, g.spacing, tuple(origin)), env, f.chirp, f.space)


def _materialize_axes(f: WaveField, axes, extra: float = 0.0) -> np.ndarray:
    ph = 0.0
    for a in axes:
        c = f.chirp[a] + extra
        if c != 0.0:
            ph = ph + 0.5 * c * f.grid.broadcast_axis(a) ** 2
    if np.ndim(ph) == 0:
        return f.envelope
    return f.envelope * np.exp(1j * ph)


def _fourier_env(env: np.ndarray, grid: GridSpec, axes, inverse: bool):
    """Grid-aware unitary continuous transform of the samples ``env``.

    Output frequency grid per axis is symmetric about 0 with spacing
    2 pi/(N h); origin offsets of the input are folded in analytically.
    """
    sgn = 1.0 if inverse else -1.0
    shape, spacing, origin = list(grid.shape), list(grid.spacing), list(grid.origin)
    out = env
    for a in axes:
        n, h, y0 = shape[a], spacing[a], origin[a]
        dk = 2 * np.pi / (n * h)
        k0 = -0.5 * (n - 1) * dk
        idx = np.arange(n)
        bshape = [1] * env.ndim
        bshape[a] = n
        pre = np.exp(sgn * 1j * k0 * idx * h).reshape(bshape)
        post = (h / np.sqrt(2 * np.pi)) * np.exp(sgn * 1j * (k0 + idx * dk) * y0)
        if inverse:
            out = sfft.ifft(out * pre, axis=a) * n
        else:
            out = sfft.fft(out * pre, axis=a)
        out = out * post.reshape(bshape)
        spacing[a], origin[a] = dk, k0
    return out, GridSpec(tuple(shape), tuple(spacing), tuple(origin))


def fourier(f: WaveField, axes=None, inverse: bool = False) -> WaveField:
    """Unitary continuous Fourier transform over ``axes`` via FFT."""
    axes = _axes(f, axes)
    env = _materialize_axes(f, axes)
    out, grid = _fourier_env(env, f.grid, axes, inverse)
    ch = list(f.chirp)
    for a in axes:
        ch[a] = 0.0
    space = f.space
    if len(axes) == f.dim:
        space = "frequency" if f.space == "position" else "position"
    return WaveField(grid, out, tuple(ch), space)


def _spectral_leak(G: np.ndarray, axes, band: float = 0.125) -> float:
    """Fraction of |G|^2 in the outer ``band`` of the frequency box."""
    p = np.abs(G) ** 2
    tot = p.sum()
    if tot == 0:
        return 0.0
    mask = np.zeros(p.shape, bool)
    for a in axes:
        n = p.shape[a]
        w = max(1, int(band * n))
        sl = [slice(None)] * p.ndim
        sl[a] = slice(0, w)
        mask[tuple(sl)] = True
        sl[a] = slice(n - w, n)
        mask[tuple(sl)] = True
    return float(p[mask].sum() / tot)


def _mdfm_step(f: WaveField, alpha: float, axes):
    """One chirp-FFT-dilate-chirp step, valid for sin(alpha) != 0.

    Returns the field and the spectral leak of the chirped input, which
    flags aliasing when the chirp is not resolved by the grid.
    """
    if alpha == 0.5 * np.pi:
        s, cot = 1.0, 0.0
    elif alpha == -0.5 * np.pi:
        s, cot = -1.0, 0.0
    else:
        s, cot = np.sin(alpha), np.cos(alpha) / np.sin(alpha)
    env = _materialize_axes(f, axes, extra=cot)
    G, kgrid = _fourier_env(env, f.grid, axes, inverse=False)
    leak = _spectral_leak(G, axes)
    ch = list(f.chirp)
    for a in axes:
        ch[a] = 0.0
    g = WaveField(kgrid, G, tuple(ch), f.space)
    g = dilate(g, s, axes)
    return chirp(g, cot, axes), leak


def harmonic_flow(
    f: WaveField,
    alpha: float,
    axes=None,
    eps_res: float = EPS_RES,
    eps_deg: float = EPS_DEG,
    leak_tol: float = LEAK_TOL,
) -> WaveField:
    """exp(-i alpha (-Laplacian + |x|^2)/2) over ``axes``.

    alpha is split as N pi + beta with |beta| <= pi/2; exp(-i pi H) is the
    exact parity map times exp(-i n pi/2).  The remainder uses one MDFM
    step when it resolves cleanly; when |sin beta| < eps_res or the
    one-step chirp aliases, the two-step route through pi/2 is also
    computed (through sign(beta) pi/2) and whichever has less spectral
    leakage is returned.
    """
    if f.space != "position":
        raise ValueError("harmonic_flow acts on position-space fields")
    axes = _axes(f, axes)
    n = len(axes)
    N = int(np.round(alpha / np.pi))
    beta = alpha - N * np.pi
    base = f
    if N % 2:
        base = parity(base, axes)
    if N:
        base = replace(base, envelope=base.envelope * np.exp(-0.5j * n * np.pi * N))
    if abs(beta) <= eps_deg:
        return base
    direct, leak = _mdfm_step(base, beta, axes)
    if abs(np.sin(beta)) >= eps_res and leak <= leak_tol:
        return direct
    quarter = np.copysign(0.5 * np.pi, beta)
    half, leak1 = _mdfm_step(base, quarter, axes)
    if abs(beta - quarter) <= eps_deg:
        split, leak2 = half, 0.0
    else:
        split, leak2 = _mdfm_step(half, beta - quarter, axes)
    return direct if leak <= max(leak1, leak2) else split


def mehler_quadrature(f: WaveField, alpha: float, points: np.ndarray) -> np.ndarray:
    """Direct O(N^2) Riemann sum of the Mehler kernel (1-D), evaluated at
    ``points``; independent of the FFT path."""
    if f.dim != 1:
        raise ValueError("mehler_quadrature is 1-D only")
    y = f.grid.axis(0)
    x = np.asarray(points, dtype=float)[:, None]
    s, c = np.sin(alpha), np.cos(alpha)
    kern = np.exp(1j * (c * (x * x + y * y) - 2 * x * y) / (2 * s))
    pref = np.power(2j * np.pi * s, -0.5)
    return pref * (kern @ f.samples) * f.grid.spacing[0]


# propagator ------------------------------------------------------------
def _lens_in(f: WaveField, a1: float, a2: float, m: float, axes) -> WaveField:
    """Inverse of M(-1/(m a2)) i^{n/2} D(1/sqrt(m a1))."""
    n = len(axes)
    tau = 1.0 / np.sqrt(m * a1)
    g = chirp(f, m * a2, axes)
    g = _scale(g, 1.0 / tau, axes)
    c = (1j) ** (0.5 * n) * _dilation_phase(tau, n)
    return replace(g, envelope=g.envelope / c)


def _lens_out(g: WaveField, a1: float, a2: float, m: float, axes) -> WaveField:
    n = len(axes)
    g = dilate(g, 1.0 / np.sqrt(m * a1), axes)
    g = replace(g, envelope=g.envelope * (1j) ** (0.5 * n))
    # exp(-i m a2 x^2/2) applied directly; never through 1/a2
    return chirp(g, -m * a2, axes)


def evolve(basis, f0: WaveField, t: float, axes=None, **flow_kw) -> WaveField:
    """U0(t,0) f0."""
    axes = _axes(f0, axes)
    a1, a2, A = basis.factors(float(t))
    g = harmonic_flow(f0, float(A), axes, **flow_kw)
    return _lens_out(g, float(a1), float(a2), basis.m, axes)


def evolve_adjoint(basis, f: WaveField, s: float, axes=None, **flow_kw) -> WaveField:
    """U0(s,0)^* f: inverted factors in reverse order."""
    axes = _axes(f, axes)
    a1, a2, A = basis.factors(float(s))
    g = _lens_in(f, float(a1), float(a2), basis.m, axes)
    return harmonic_flow(g, -float(A), axes, **flow_kw)


def propagate(basis, f: WaveField, t: float, s: float, axes=None, **flow_kw) -> WaveField:
    """U0(t,0) U0(s,0)^* f with the two harmonic flows merged into one
    flow by A(t) - A(s) (no intermediate physical-space samples)."""
    axes = _axes(f, axes)
    a1s, a2s, As = basis.factors(float(s))
    a1t, a2t, At = basis.factors(float(t))
    g = _lens_in(f, float(a1s), float(a2s), basis.m, axes)
    g = harmonic_flow(g, float(At) - float(As), axes, **flow_kw)
    return _lens_out(g, float(a1t), float(a2t), basis.m, axes)


def free_evolve(f0: WaveField, t: float, m: float = 1.0, axes=None, **flow_kw) -> WaveField:
    """exp(i t Laplacian/(2m)) over ``axes`` through the same factorization
    with the closed-form free factors a1 = m/(m^2+t^2), a2 = -t/(m^2+t^2),
    A = arctan(t/m); no ODE basis needed."""
    axes = _axes(f0, axes)
    t = float(t)
    d = m * m + t * t
    g = harmonic_flow(f0, float(np.arctan(t / m)), axes, **flow_kw)
    return _lens_out(g, m / d, -t / d, m, axes)


# comparison helpers ----------------------------------------------------
def _interp_matrix(n: int, h: float, o: float, x: np.ndarray) -> np.ndarray:
    """Rows evaluate the trigonometric interpolant of n (even) samples at x,
    Nyquist term split symmetrically: periodic sinc sin(pi u)/(n tan(pi u/n))."""
    y = o + h * np.arange(n)
    u = (np.asarray(x, dtype=float)[:, None] - y[None, :]) / h
    den = n * np.tan(np.pi * u / n)
    with np.errstate(invalid="ignore", divide="ignore"):
        M = np.sin(np.pi * u) / den
    M[np.abs(u - np.round(u)) < 1e-12] = 0.0
    M[np.abs(u) < 1e-12] = 1.0
    lo, hi = o - 0.5 * h, o + (n - 0.5) * h
    M[(x < lo) | (x > hi)] = 0.0
    return M


def resample(f: WaveField, grid: GridSpec) -> WaveField:
    """Band-limited interpolation of the envelope onto ``grid``; the pending
    chirp is evaluated exactly at the new points."""
    if grid.dim != f.dim:
        raise ValueError("dimension mismatch")
    out = f.envelope
    for a in range(f.dim):
        M = _interp_matrix(f.grid.shape[a], f.grid.spacing[a], f.grid.origin[a], grid.axis(a))
        out = np.moveaxis(np.tensordot(M, np.moveaxis(out, a, 0), axes=(1, 0)), 0, a)
    return WaveField(grid, out, f.chirp, f.space)


def same_grid(g1: GridSpec, g2: GridSpec, rtol: float = 1e-9) -> bool:
    if g1.shape != g2.shape:
        return False
    return all(
        abs(h1 - h2) <= rtol * h1 and abs(o1 - o2) <= rtol * max(h1, abs(o1))
        for h1, h2, o1, o2 in zip(g1.spacing, g2.spacing, g1.origin, g2.origin)
    )


def l2_distance(f: WaveField, g, fit_phase: bool = False) -> float:
    """L^2 distance on f's grid; ``g`` is a field on the same grid or an
    array of samples.  With ``fit_phase`` one global phase is removed."""
    a = f.samples
    if isinstance(g, WaveField):
        if not same_grid(f.grid, g.grid):
            raise ValueError("fields live on different grids; resample first")
        b = g.samples
    else:
        b = np.asarray(g)
    if fit_phase:
        ip = np.vdot(b, a)
        if abs(ip) > 0:
            b = b * ip / abs(ip)
    return float(np.sqrt(np.sum(np.abs(a - b) ** 2) * f.grid.cell))


# reference integrator --------------------------------------------------
def split_step_reference(model, f0: WaveField, t: float, dt: float, edge_tol: float = 1e-10) -> WaveField:
    """Strang splitting on a fixed grid: half potential, kinetic, half
    potential, with sigma sampled at step midpoints."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    nsteps = max(1, int(np.ceil(abs(t) / dt - 1e-9)))
    h = t / nsteps
    g = f0.grid
    psi = f0.samples.copy()
    r2 = g.radius2()
    k2 = 0.0
    for a in range(g.dim):
        kshape = [1] * g.dim
        kshape[a] = g.shape[a]
        k2 = k2 + (2 * np.pi * np.fft.fftfreq(g.shape[a], g.spacing[a])).reshape(kshape) ** 2
    kin = np.exp(-0.5j * h * k2 / model.m)
    mids = (np.arange(nsteps) + 0.5) * h
    sig = np.asarray(model.sigma(mids), dtype=float)
    for k in range(nsteps):
        half = np.exp(-0.25j * sig[k] * h * r2)
        psi = half * sfft.ifftn(kin * sfft.fftn(half * psi))
    out = WaveField(g, psi)
    em = out.edge_mass()
    if em > edge_tol:
        raise BoundaryOverflow(f"edge mass {em:.2e} exceeds {edge_tol:.0e}; enlarge the grid for t={t:g}")
    return out


# Gaussian oracle -------------------------------------------------------
@dataclass(frozen=True)
class GaussianState:
    """c * exp(sum_a i G_a (x_a-q_a)^2/2 + i p_a (x_a-q_a)), Im G_a > 0."""

    center: tuple
    momentum: tuple
    width: tuple
    amplitude: complex

    def __post_init__(self):
        if any(np.imag(w) <= 0 for w in self.width):
            raise ValueError("imaginary part of the complex width must be positive")

    @classmethod
    def normalized(cls, center, momentum, width):
        center = tuple(float(c) for c in np.atleast_1d(center))
        momentum = tuple(float(p) for p in np.atleast_1d(momentum))
        width = tuple(complex(w) for w in np.atleast_1d(width))
        amp = np.prod([(np.imag(w) / np.pi) ** 0.25 for w in width])
        return cls(center, momentum, width, complex(amp))

    def __call__(self, *xs):
        expo = 0.0
        for x, q, p, w in zip(xs, self.center, self.momentum, self.width):
            d = x - q
            expo = expo + 0.5j * w * d * d + 1j * p * d
        return self.amplitude * np.exp(expo)

    def sample(self, grid: GridSpec) -> WaveField:
        return WaveField.from_function(grid, self)


def gaussian_oracle(basis, g0: GaussianState, t: float, branch_samples: int = 4097) -> GaussianState:
    """Exact Gaussian evolution via the canonical pair zeta1, zeta2.

    Per axis Q = zeta1 + (G0/m) zeta2 gives G = m Q'/Q; the centre follows
    q0 zeta1 + (p0/m) zeta2; amplitude gains Q^(-1/2) (continuous branch)
    and the classical action (p q - p0 q0)/2.
    """
    m = basis.m
    z1, dz1, z2, dz2 = basis.zeta(float(t))
    ts = np.linspace(0.0, float(t), branch_samples)
    Z1, _, Z2, _ = basis.zeta(ts)
    centers, moms, widths = [], [], []
    amp = complex(g0.amplitude)
    for q0, p0, w0 in zip(g0.center, g0.momentum, g0.width):
        Q = z1 + (w0 / m) * z2
        dQ = dz1 + (w0 / m) * dz2
        path = Z1 + (w0 / m) * Z2
        arg = np.unwrap(np.angle(path))[-1]
        q = q0 * z1 + (p0 / m) * z2
        p = m * (q0 * dz1 + (p0 / m) * dz2)
        amp *= abs(Q) ** -0.5 * np.exp(-0.5j * arg) * np.exp(0.5j * (p * q - p0 * q0))
        centers.append(float(q))
        moms.append(float(p))
        widths.append(complex(m * dQ / Q))
    return GaussianState(tuple(centers), tuple(moms), tuple(widths), amp)


def free_gaussian(g0: GaussianState, t: float, m: float = 1.0) -> GaussianState:
    """Closed-form free evolution exp(i t Laplacian/(2m)) of a Gaussian."""
    centers, moms, widths = [], [], []
    amp = complex(g0.amplitude)
    for q0, p0, w0 in zip(g0.center, g0.momentum, g0.width):
        Q = 1 + w0 * t / m
        amp *= Q**-0.5 * np.exp(0.5j * p0 * p0 * t / m)
        centers.append(q0 + p0 * t / m)
        moms.append(p0)
        widths.append(w0 / Q)
    return GaussianState(tuple(centers), tuple(moms), tuple(widths), amp)
