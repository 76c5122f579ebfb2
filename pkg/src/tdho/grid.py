"""Rectangular grids and sampled wave fields.

A ``WaveField`` stores an *envelope* on a uniform grid plus a per-axis
quadratic phase ("pending chirp") so that the represented function is

    f(x) = envelope(x) * exp(i/2 * sum_a chirp[a] * x_a^2).

Chirps and dilations therefore act on metadata only and stay exact even
when exp(i c x^2/2) would be badly under-sampled; the envelope is the
band-limited part that FFT-based operations and interpolation act on.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

MAX_POINTS = 1 << 24


def _is_pow2(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class GridSpec:
    shape: tuple
    spacing: tuple
    origin: tuple

    def __post_init__(self):
        object.__setattr__(self, "shape", tuple(int(n) for n in self.shape))
        object.__setattr__(self, "spacing", tuple(float(h) for h in self.spacing))
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))
        if not 1 <= len(self.shape) <= 3:
            raise ValueError(f"dimension must be 1, 2 or 3, got {len(self.shape)}")
        if not len(self.shape) == len(self.spacing) == len(self.origin):
            raise ValueError("shape, spacing and origin must have equal length")
        for n in self.shape:
            if not _is_pow2(n):
                raise ValueError(f"points per axis must be a power of two, got {n}")
        if any(not h > 0 for h in self.spacing):
            raise ValueError(f"spacing must be positive, got {self.spacing}")
        if int(np.prod(self.shape)) > MAX_POINTS:
            raise ValueError(f"grid of {int(np.prod(self.shape))} points exceeds cap {MAX_POINTS}")

    @classmethod
    def centered(cls, points: int, extent: float, dim: int = 1) -> "GridSpec":
        """Grid symmetric about 0 covering [-extent/2, extent/2]."""
        h = extent / points
        o = -0.5 * (points - 1) * h
        return cls((points,) * dim, (h,) * dim, (o,) * dim)

    @classmethod
    def natural(cls, points: int, dim: int = 1, scale: float = 1.0) -> "GridSpec":
        """Symmetric grid whose position and frequency boxes coincide
        (spacing sqrt(2 pi / N)), optionally stretched by ``scale``."""
        return cls.centered(points, scale * np.sqrt(2 * np.pi * points), dim)

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def cell(self) -> float:
        return float(np.prod(self.spacing))

    def axis(self, i: int) -> np.ndarray:
        return self.origin[i] + self.spacing[i] * np.arange(self.shape[i])

    def axes(self):
        return [self.axis(i) for i in range(self.dim)]

    def mesh(self):
        return np.meshgrid(*self.axes(), indexing="ij")

    def broadcast_axis(self, i: int) -> np.ndarray:
        shp = [1] * self.dim
        shp[i] = self.shape[i]
        return self.axis(i).reshape(shp)

    def radius2(self, axes=None) -> np.ndarray:
        axes = range(self.dim) if axes is None else axes
        r2 = 0.0
        for i in axes:
            r2 = r2 + self.broadcast_axis(i) ** 2
        return r2

    def is_symmetric(self, tol: float = 1e-9) -> bool:
        return all(
            abs(o + 0.5 * (n - 1) * h) <= tol * h for n, h, o in zip(self.shape, self.spacing, self.origin)
        )


@dataclass(frozen=True)
class WaveField:
    grid: GridSpec
    envelope: np.ndarray
    chirp: tuple = None
    space: str = "position"

    def __post_init__(self):
        env = np.asarray(self.envelope, dtype=complex)
        if env.shape != self.grid.shape:
            raise ValueError(f"samples shape {env.shape} does not match grid {self.grid.shape}")
        object.__setattr__(self, "envelope", env)
        ch = (0.0,) * self.grid.dim if self.chirp is None else tuple(float(c) for c in self.chirp)
        if len(ch) != self.grid.dim:
            raise ValueError("one chirp coefficient per axis required")
        object.__setattr__(self, "chirp", ch)
        if self.space not in ("position", "frequency"):
            raise ValueError(f"unknown space tag {self.space!r}")

    @classmethod
    def from_function(cls, grid: GridSpec, func) -> "WaveField":
        return cls(grid, func(*grid.mesh()))

    @property
    def dim(self) -> int:
        return self.grid.dim

    def chirp_phase(self) -> np.ndarray:
        ph = 0.0
        for i, c in enumerate(self.chirp):
            if c != 0.0:
                ph = ph + 0.5 * c * self.grid.broadcast_axis(i) ** 2
        return np.exp(1j * ph) if np.ndim(ph) else np.ones(1)

    @property
    def samples(self) -> np.ndarray:
        """Materialized values f(x_k) on the grid."""
        if not any(self.chirp):
            return self.envelope
        return self.envelope * self.chirp_phase()

    def materialize(self) -> "WaveField":
        if not any(self.chirp):
            return self
        return replace(self, envelope=self.samples, chirp=None)

    def with_envelope(self, env, grid=None, chirp=None, space=None) -> "WaveField":
        return WaveField(
            self.grid if grid is None else grid,
            env,
            self.chirp if chirp is None else chirp,
            self.space if space is None else space,
        )

    # norms ------------------------------------------------------------
    def norm(self, p: float = 2.0) -> float:
        a = np.abs(self.envelope)
        if np.isinf(p):
            return float(a.max())
        return float((np.sum(a**p) * self.grid.cell) ** (1.0 / p))

    def edge_mass(self, width: int = 4) -> float:
        """Fraction of L^2 mass within ``width`` cells of any boundary."""
        a2 = np.abs(self.envelope) ** 2
        mask = np.zeros(a2.shape, bool)
        for i, n in enumerate(self.grid.shape):
            sl = [slice(None)] * self.dim
            sl[i] = slice(0, width)
            mask[tuple(sl)] = True
            sl[i] = slice(n - width, n)
            mask[tuple(sl)] = True
        tot = a2.sum()
        return float(a2[mask].sum() / tot) if tot > 0 else 0.0

    # serialization ----------------------------------------------------
    _MAGIC = b"TDHOWF01"

    def to_bytes(self) -> bytes:
        """Binary container: magic, dim, per-axis (points, spacing, origin),
        then interleaved re/im float64 samples in C order."""
        buf = io.BytesIO()
        buf.write(self._MAGIC)
        buf.write(struct.pack("<I", self.dim))
        for n, h, o in zip(self.grid.shape, self.grid.spacing, self.grid.origin):
            buf.write(struct.pack("<Qdd", n, h, o))
        data = np.empty(self.envelope.size * 2, dtype="<f8")
        vals = self.samples.ravel()
        data[0::2] = vals.real
        data[1::2] = vals.imag
        buf.write(data.tobytes())
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, raw: bytes) -> "WaveField":
        if raw[:8] != cls._MAGIC:
            raise ValueError("not a wave-field container")
        (dim,) = struct.unpack_from("<I", raw, 8)
        off = 12
        shape, spacing, origin = [], [], []
        for _ in range(dim):
            n, h, o = struct.unpack_from("<Qdd", raw, off)
            off += 24
            shape.append(n)
            spacing.append(h)
            origin.append(o)
        data = np.frombuffer(raw, dtype="<f8", offset=off)
        vals = (data[0::2] + 1j * data[1::2]).reshape(shape)
        return cls(GridSpec(tuple(shape), tuple(spacing), tuple(origin)), vals)

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "WaveField":
        return cls.from_bytes(Path(path).read_bytes())

    def to_csv(self, path) -> None:
        cols = [x.ravel() for x in self.grid.mesh()]
        vals = self.samples.ravel()
        names = [f"x{i + 1}" for i in range(self.dim)] + ["re", "im"]
        table = np.column_stack(cols + [vals.real, vals.imag])
        np.savetxt(path, table, delimiter=",", header=",".join(names), comments="", fmt="%.17g")
