"""Periodic matrix-valued coefficients stored as grid samples plus a generator.

Fourier coefficients are normalized as cell averages,
``v(x) = sum_kappa c_kappa exp(i <b_kappa, x>)`` with
``c_kappa = mean(v exp(-i <b_kappa, x>))``, so ``mean(v) = c_0``.

Every field carries a generator: a vectorized callable mapping Cartesian
points of shape (P, d) to matrices of shape (P, rows, cols). Resampling a
field on a finer grid re-evaluates the generator, which is exact for trigonometric
polynomials and for the closed-form profiles of the gallery.
"""

from __future__ import annotations

from functools import cached_property
from typing import Callable, Mapping, Sequence

import numpy as np

from .lattice import Lattice

Generator = Callable[[np.ndarray], np.ndarray]


class AliasingError(ValueError):
    """A requested Fourier index does not fit below the grid Nyquist bound."""


class SingularSampleError(ValueError):
    """A pointwise inverse hit a singular sample."""


def default_grid_shape(dim: int, bandwidth: int | None) -> tuple[int, ...]:
    n = 32 if bandwidth is None else max(32, 4 * int(bandwidth))
    n += n % 2
    return (n,) * dim


def grid_points(lattice: Lattice, grid_shape: Sequence[int]) -> np.ndarray:
    """Cartesian grid points x = sum (n_i / N_i) a_i, shape grid_shape + (d,)."""
    axes = [np.arange(N) / N for N in grid_shape]
    frac = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    return frac @ lattice.basis


def _as_stack(values, npts: int, rows: int, cols: int) -> np.ndarray:
    v = np.asarray(values, dtype=complex)
    if v.ndim == 1 and rows == cols == 1:
        v = v[:, None, None]
    if v.shape == (rows, cols):
        v = np.broadcast_to(v, (npts, rows, cols))
    return v.reshape(npts, rows, cols)


class PeriodicMatrixField:
    """A Gamma-periodic ``rows x cols`` matrix function sampled on a tensor grid."""

    def __init__(
        self,
        lattice: Lattice,
        func: Generator,
        shape: tuple[int, int],
        grid_shape: Sequence[int] | None = None,
        bandwidth: int | None = None,
        name: str = "",
    ):
        self.lattice = lattice
        self.func = func
        self.rows, self.cols = int(shape[0]), int(shape[1])
        self.bandwidth = bandwidth
        self.name = name
        if grid_shape is None:
            grid_shape = default_grid_shape(lattice.dim, bandwidth)
        grid_shape = tuple(int(n) for n in grid_shape)
        if len(grid_shape) != lattice.dim:
            raise ValueError("grid_shape must have one entry per lattice dimension")
        if bandwidth is not None and any(n <= 2 * bandwidth for n in grid_shape):
            raise AliasingError(
                f"bandwidth {bandwidth} does not fit below the Nyquist bound of grid {grid_shape}"
            )
        self.grid_shape = grid_shape
        pts = grid_points(lattice, grid_shape).reshape(-1, lattice.dim)
        vals = _as_stack(func(pts), len(pts), self.rows, self.cols)
        self.samples = vals.reshape(grid_shape + (self.rows, self.cols)).copy()
        self.samples.setflags(write=False)

    # ----------------------------------------------------------------- build
    @classmethod
    def from_function(cls, func: Generator, lattice: Lattice, shape=(1, 1), grid_shape=None,
                      bandwidth: int | None = None, name: str = "") -> "PeriodicMatrixField":
        return cls(lattice, func, shape, grid_shape, bandwidth, name)

    @classmethod
    def constant(cls, value, lattice: Lattice, grid_shape=None, name: str = "") -> "PeriodicMatrixField":
        c = np.atleast_2d(np.asarray(value, dtype=complex))
        return cls(lattice, lambda x: np.broadcast_to(c, (len(x),) + c.shape), c.shape,
                   grid_shape, 0, name)

    @classmethod
    def from_fourier(cls, coeffs: Mapping[tuple, object], lattice: Lattice, grid_shape=None,
                     name: str = "") -> "PeriodicMatrixField":
        """Trigonometric polynomial from a ``{kappa: matrix}`` dictionary."""
        if not coeffs:
            raise ValueError("empty coefficient dictionary")
        kap = np.array([tuple(k) for k in coeffs], dtype=int).reshape(len(coeffs), lattice.dim)
        mats = np.array([np.atleast_2d(np.asarray(v, dtype=complex)) for v in coeffs.values()])
        bw = int(np.abs(kap).max())
        vecs = kap @ lattice.dual_basis

        def func(x):
            phase = np.exp(1j * (x @ vecs.T))
            return np.einsum("pk,krc->prc", phase, mats)

        return cls(lattice, func, mats.shape[1:], grid_shape, bw, name)

    @classmethod
    def from_samples(cls, samples, lattice: Lattice, name: str = "") -> "PeriodicMatrixField":
        """Field defined by grid samples; the generator is trigonometric interpolation."""
        s = np.asarray(samples, dtype=complex)
        d = lattice.dim
        if s.ndim == d:
            s = s[..., None, None]
        grid_shape = s.shape[:d]
        coef = np.fft.fftn(s, axes=tuple(range(d))) / np.prod(grid_shape)
        kap = np.stack(np.meshgrid(*[np.fft.fftfreq(n, 1.0 / n) for n in grid_shape],
                                   indexing="ij"), axis=-1).reshape(-1, d)
        # split each Nyquist coefficient symmetrically so real data interpolates to real values
        kap_all = kap
        c_all = coef.reshape(-1, *s.shape[d:])
        for ax, n in enumerate(grid_shape):
            if n % 2 == 0:
                nyq = kap_all[:, ax] == -n // 2
                mirrored = kap_all[nyq].copy()
                mirrored[:, ax] = n // 2
                half = 0.5 * c_all[nyq]
                c_all = c_all.copy()
                c_all[nyq] = half
                kap_all = np.concatenate([kap_all, mirrored])
                c_all = np.concatenate([c_all, half])
        vecs = kap_all @ lattice.dual_basis

        def func(x):
            return np.einsum("pk,krc->prc", np.exp(1j * (x @ vecs.T)), c_all)

        out = cls.__new__(cls)
        out.lattice, out.func = lattice, func
        out.rows, out.cols = s.shape[d], s.shape[d + 1]
        out.bandwidth, out.name, out.grid_shape = None, name, tuple(grid_shape)
        out.samples = s.copy()
        out.samples.setflags(write=False)
        return out

    # ------------------------------------------------------------ resampling
    def resample(self, grid_shape: Sequence[int]) -> "PeriodicMatrixField":
        grid_shape = tuple(int(n) for n in grid_shape)
        if grid_shape == self.grid_shape:
            return self
        return PeriodicMatrixField(self.lattice, self.func, (self.rows, self.cols), grid_shape,
                                   self.bandwidth, self.name)

    def at_least(self, grid_shape: Sequence[int]) -> "PeriodicMatrixField":
        return self.resample(tuple(max(a, int(b)) for a, b in zip(self.grid_shape, grid_shape)))

    # --------------------------------------------------------------- fourier
    @property
    def ntot(self) -> int:
        return int(np.prod(self.grid_shape))

    @cached_property
    def fourier(self) -> np.ndarray:
        """Full DFT array in numpy FFT ordering, normalized as cell averages."""
        d = self.lattice.dim
        out = np.fft.fftn(self.samples, axes=tuple(range(d))) / self.ntot
        out.setflags(write=False)
        return out

    def coefficients(self, kappa) -> np.ndarray:
        """Fourier coefficients at integer coordinates ``kappa`` (shape (..., d))."""
        kap = np.asarray(kappa, dtype=int)
        lead = kap.shape[:-1]
        kap = kap.reshape(-1, self.lattice.dim)
        N = np.asarray(self.grid_shape)
        if kap.size and np.any(2 * np.abs(kap) >= N[None, :]):
            raise AliasingError(
                f"Fourier index up to {np.abs(kap).max()} requested on grid {self.grid_shape}"
            )
        idx = tuple((kap % N[None, :]).T)
        return self.fourier[idx].reshape(lead + (self.rows, self.cols))

    def coefficient(self, kappa) -> np.ndarray:
        return self.coefficients(np.asarray(kappa)[None, :])[0]

    def effective_bandwidth(self, rel_tol: float = 1e-13) -> int:
        """Largest |kappa_i| among DFT coefficients above ``rel_tol`` times the largest."""
        mag = np.linalg.norm(self.fourier.reshape(self.grid_shape + (-1,)), axis=-1)
        thresh = rel_tol * max(mag.max(), 1e-300)
        kap = np.stack(np.meshgrid(*[np.fft.fftfreq(n, 1.0 / n) for n in self.grid_shape],
                                   indexing="ij"), axis=-1)
        sig = np.abs(kap[mag > thresh])
        return int(sig.max()) if sig.size else 0

    # ------------------------------------------------------------ reductions
    def mean(self) -> np.ndarray:
        return self.samples.reshape(-1, self.rows, self.cols).mean(axis=0)

    def harmonic_mean(self) -> np.ndarray:
        return np.linalg.inv(self.inverse().mean())

    def sup_norm(self) -> float:
        s = np.linalg.svd(self.samples.reshape(-1, self.rows, self.cols), compute_uv=False)
        return float(s[:, 0].max())

    def min_eigenvalue(self) -> float:
        """Smallest eigenvalue over the grid of the Hermitian part."""
        s = self.samples.reshape(-1, self.rows, self.cols)
        return float(np.linalg.eigvalsh(0.5 * (s + s.conj().transpose(0, 2, 1)))[:, 0].min())

    def argmin_eigenvalue(self) -> tuple[int, ...]:
        s = self.samples.reshape(-1, self.rows, self.cols)
        ev = np.linalg.eigvalsh(0.5 * (s + s.conj().transpose(0, 2, 1)))[:, 0]
        return tuple(int(i) for i in np.unravel_index(int(np.argmin(ev)), self.grid_shape))

    @property
    def hermitian_flag(self) -> bool:
        if self.rows != self.cols:
            return False
        s = self.samples
        scale = max(np.abs(s).max(), 1.0)
        return bool(np.abs(s - np.swapaxes(s, -1, -2).conj()).max() <= 1e-12 * scale)

    @property
    def real_flag(self) -> bool:
        return bool(np.abs(self.samples.imag).max() <= 1e-12 * max(np.abs(self.samples).max(), 1.0))

    def is_constant(self, tol: float = 1e-12) -> bool:
        s = self.samples.reshape(-1, self.rows, self.cols)
        return bool(np.abs(s - s.mean(axis=0)).max() <= tol * max(np.abs(s).max(), 1.0))

    # ------------------------------------------------------------- algebra
    def inverse(self) -> "PeriodicMatrixField":
        if self.rows != self.cols:
            raise ValueError("pointwise inverse needs a square field")
        s = self.samples.reshape(-1, self.rows, self.cols)
        smin = np.linalg.svd(s, compute_uv=False)[:, -1]
        if np.any(smin <= 1e-14 * max(np.abs(s).max(), 1e-300)):
            bad = int(np.argmin(smin))
            raise SingularSampleError(
                f"field {self.name or '<unnamed>'} is singular at grid index "
                f"{np.unravel_index(bad, self.grid_shape)}"
            )
        return pointwise_map(np.linalg.inv, self, name=f"inv({self.name})")

    def adjoint(self) -> "PeriodicMatrixField":
        return pointwise_map(lambda a: np.swapaxes(a, -1, -2).conj(), self,
                             bandwidth=self.bandwidth, name=f"{self.name}*")

    def sqrt_psd(self) -> "PeriodicMatrixField":
        """Pointwise Hermitian square root of a positive semidefinite field."""

        def op(a):
            w, v = np.linalg.eigh(0.5 * (a + np.swapaxes(a, -1, -2).conj()))
            return (v * np.sqrt(np.clip(w, 0.0, None))[:, None, :]) @ np.swapaxes(v, -1, -2).conj()

        return pointwise_map(op, self, name=f"sqrt({self.name})")

    def __matmul__(self, other: "PeriodicMatrixField") -> "PeriodicMatrixField":
        return product(self, other)

    def scaled(self, c) -> "PeriodicMatrixField":
        return pointwise_map(lambda a: c * a, self, bandwidth=self.bandwidth, name=self.name)

    def __repr__(self) -> str:
        return (f"PeriodicMatrixField({self.name!r}, {self.rows}x{self.cols}, "
                f"grid={self.grid_shape}, bandwidth={self.bandwidth})")


def pointwise_map(op: Callable[..., np.ndarray], *fields: PeriodicMatrixField,
                  grid_shape=None, bandwidth: int | None = None, name: str = "") -> PeriodicMatrixField:
    """Apply a vectorized matrix operation sample-wise.

    ``op`` receives stacks of shape (P, rows, cols), one per field. The result
    lives on a grid at least as fine as every input; when ``bandwidth`` is
    given (products of trigonometric polynomials) the grid is further enlarged
    to hold it without aliasing.
    """
    if not fields:
        raise ValueError("pointwise_map needs at least one field")
    lat = fields[0].lattice
    if any(f.lattice is not lat and not np.array_equal(f.lattice.basis, lat.basis) for f in fields):
        raise ValueError("fields live on different lattices")
    if grid_shape is None:
        grid_shape = tuple(max(f.grid_shape[i] for f in fields) for i in range(lat.dim))
        if bandwidth is not None:
            need = 2 * bandwidth + 2
            grid_shape = tuple(max(n, need + need % 2) for n in grid_shape)
    funcs = [f.func for f in fields]

    def func(x):
        return op(*[_as_stack(g(x), len(x), f.rows, f.cols) for g, f in zip(funcs, fields)])

    probe = op(*[f.samples.reshape(-1, f.rows, f.cols)[:1] for f in fields])
    probe = np.asarray(probe)
    shape = probe.shape[-2:] if probe.ndim >= 2 else (1, 1)
    return PeriodicMatrixField(lat, func, shape, grid_shape, bandwidth, name)


def product(a: PeriodicMatrixField, b: PeriodicMatrixField, name: str = "") -> PeriodicMatrixField:
    if a.cols != b.rows:
        raise ValueError(f"shape mismatch {a.rows}x{a.cols} @ {b.rows}x{b.cols}")
    bw = None if a.bandwidth is None or b.bandwidth is None else a.bandwidth + b.bandwidth
    return pointwise_map(np.matmul, a, b, bandwidth=bw, name=name or f"{a.name}{b.name}")


def block_diag_field(*blocks: PeriodicMatrixField, name: str = "") -> PeriodicMatrixField:
    rows = sum(b.rows for b in blocks)
    cols = sum(b.cols for b in blocks)

    def op(*arrs):
        out = np.zeros((arrs[0].shape[0], rows, cols), dtype=complex)
        r = c = 0
        for a in arrs:
            out[:, r:r + a.shape[1], c:c + a.shape[2]] = a
            r += a.shape[1]
            c += a.shape[2]
        return out

    bws = [b.bandwidth for b in blocks]
    bw = None if any(w is None for w in bws) else max(bws)
    return pointwise_map(op, *blocks, bandwidth=bw, name=name)


def scalar_field(func: Callable[[np.ndarray], np.ndarray], lattice: Lattice, grid_shape=None,
                 bandwidth: int | None = None, name: str = "") -> PeriodicMatrixField:
    """Wrap a scalar profile ``func(x) -> (P,)`` as a 1x1 field."""
    return PeriodicMatrixField(lattice, lambda x: np.asarray(func(x), dtype=complex)[:, None, None],
                               (1, 1), grid_shape, bandwidth, name)


def field_to_records(field: PeriodicMatrixField, rel_tol: float = 1e-14) -> list[dict]:
    """Fourier records ``{kappa, value}`` for a band-limited field (config encoding)."""
    if field.bandwidth is None:
        raise ValueError("only trigonometric-polynomial fields have a finite record list")
    out = []
    rng = range(-field.bandwidth, field.bandwidth + 1)
    import itertools

    scale = max(np.abs(field.fourier).max(), 1e-300)
    for kap in itertools.product(rng, repeat=field.lattice.dim):
        c = field.coefficient(np.array(kap))
        if np.abs(c).max() > rel_tol * scale:
            out.append({"kappa": list(kap), "value": [[[float(z.real), float(z.imag)] for z in row]
                                                      for row in c]})
    return out


def field_from_records(records: Sequence[Mapping], lattice: Lattice, grid_shape=None,
                       name: str = "") -> PeriodicMatrixField:
    coeffs = {}
    for rec in records:
        val = np.asarray(rec["value"], dtype=float)
        if val.ndim >= 1 and val.shape[-1] == 2 and val.ndim == 3:
            val = val[..., 0] + 1j * val[..., 1]
        coeffs[tuple(int(k) for k in rec["kappa"])] = np.atleast_2d(val)
    return PeriodicMatrixField.from_fourier(coeffs, lattice, grid_shape, name)
