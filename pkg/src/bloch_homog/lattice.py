"""Lattice geometry: dual basis, inscribed radius, frequency sets and k-grids."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


class DegenerateLatticeError(ValueError):
    """Raised when the lattice basis is singular."""


def dual_basis(basis) -> np.ndarray:
    """Return the dual basis as rows, normalized so that <b^i, a_j> = 2 pi delta_ij."""
    a = np.atleast_2d(np.asarray(basis, dtype=float))
    if a.shape[0] != a.shape[1]:
        raise DegenerateLatticeError(f"basis must be square, got shape {a.shape}")
    # condition-number test rather than det == 0, so nearly flat cells are rejected too
    if not np.all(np.isfinite(a)) or np.linalg.cond(a) > 1e12:
        raise DegenerateLatticeError("lattice basis vectors are linearly dependent")
    return 2.0 * np.pi * np.linalg.inv(a).T


@dataclass(frozen=True, eq=False)
class Lattice:
    """Periodicity lattice spanned by the rows of ``basis``."""

    basis: np.ndarray

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.basis, dtype=float)).copy()
        a.setflags(write=False)
        object.__setattr__(self, "basis", a)
        dual = dual_basis(a)
        dual.setflags(write=False)
        object.__setattr__(self, "dual_basis", dual)

    dual_basis: np.ndarray = field(init=False, repr=False)

    @classmethod
    def cubic(cls, dim: int, period: float = 2.0 * np.pi) -> "Lattice":
        return cls(period * np.eye(dim))

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    @property
    def cell_volume(self) -> float:
        return float(abs(np.linalg.det(self.basis)))

    @property
    def dual_cell_volume(self) -> float:
        return float(abs(np.linalg.det(self.dual_basis)))

    @cached_property
    def r0(self) -> float:
        return r0(self)

    def dual_vectors(self, kappa) -> np.ndarray:
        """Cartesian dual vectors for integer coordinates ``kappa`` (shape (..., d))."""
        return np.asarray(kappa, dtype=float) @ self.dual_basis

    def to_dict(self) -> dict:
        return {"basis": self.basis.tolist()}


def r0(lattice: Lattice) -> float:
    """Half the length of the shortest nonzero dual-lattice vector.

    Shells max|kappa_i| = R are scanned outward. Every vector in shell R has
    length at least sigma_min(B) * R, so the scan stops once that lower bound
    exceeds the best length found so far.
    """
    B = lattice.dual_basis
    d = lattice.dim
    smin = np.linalg.svd(B, compute_uv=False).min()
    best = np.inf
    R = 1
    while smin * R <= best:
        rng = range(-R, R + 1)
        for kappa in itertools.product(rng, repeat=d):
            if max(abs(c) for c in kappa) != R:
                continue
            best = min(best, float(np.linalg.norm(np.asarray(kappa) @ B)))
        R += 1
    return 0.5 * best


@dataclass(frozen=True, eq=False)
class FrequencySet:
    """Dual-lattice vectors with integer coordinates in [-K, K]^d, lexicographic order."""

    lattice: Lattice
    cutoff: int

    def __post_init__(self):
        if self.cutoff < 0:
            raise ValueError("cutoff must be nonnegative")
        rng = range(-self.cutoff, self.cutoff + 1)
        kappa = np.array(list(itertools.product(rng, repeat=self.lattice.dim)), dtype=int)
        kappa = kappa.reshape(-1, self.lattice.dim)
        kappa.setflags(write=False)
        object.__setattr__(self, "kappa", kappa)
        object.__setattr__(self, "_index", {tuple(int(c) for c in row): i for i, row in enumerate(kappa)})

    kappa: np.ndarray = field(init=False, repr=False)
    _index: dict = field(init=False, repr=False)

    def __len__(self) -> int:
        return self.kappa.shape[0]

    @property
    def vectors(self) -> np.ndarray:
        return self.lattice.dual_vectors(self.kappa)

    @property
    def zero_index(self) -> int:
        return self._index[(0,) * self.lattice.dim]

    def index(self, kappa) -> int:
        return self._index[tuple(int(c) for c in kappa)]

    def __contains__(self, kappa) -> bool:
        return tuple(int(c) for c in kappa) in self._index

    def difference_table(self) -> np.ndarray:
        """Integer coordinates kappa_a - kappa_b for all pairs, shape (F, F, d)."""
        return self.kappa[:, None, :] - self.kappa[None, :, :]


def frequency_set(lattice: Lattice, K: int) -> FrequencySet:
    if K < 1:
        raise ValueError("K must be at least 1")
    return FrequencySet(lattice, int(K))


def k_grid(lattice: Lattice, N: int) -> tuple[np.ndarray, np.ndarray]:
    """Midpoint grid of N^d points in the dual parallelepiped centred at 0.

    Returns ``(points, weights)`` with points of shape (N^d, d); the weights
    are all |dual cell| / N^d.
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    d = lattice.dim
    frac = (np.arange(N) + 0.5) / N - 0.5
    coords = np.array(list(itertools.product(frac, repeat=d))).reshape(-1, d)
    pts = coords @ lattice.dual_basis
    w = np.full(len(pts), lattice.dual_cell_volume / N**d)
    return pts, w


def reduced_coordinates(lattice: Lattice, k) -> np.ndarray:
    """Coordinates of ``k`` in the dual basis."""
    return np.asarray(k, dtype=float) @ np.linalg.inv(lattice.dual_basis)


def in_parallelepiped(lattice: Lattice, k, tol: float = 1e-12) -> np.ndarray:
    c = reduced_coordinates(lattice, k)
    return np.all(np.abs(c) <= 0.5 + tol, axis=-1)


def sphere_directions(d: int, n: int) -> np.ndarray:
    """Deterministic unit vectors on S^{d-1}.

    d=1 gives the two signs, d=2 equally spaced angles, d=3 a Fibonacci
    spiral, and higher d an unscrambled Halton sequence pushed through the
    normal quantile function.
    """
    if d == 1:
        return np.array([[1.0], [-1.0]])
    if d == 2:
        phi = 2.0 * np.pi * np.arange(n) / n
        return np.stack([np.cos(phi), np.sin(phi)], axis=1)
    if d == 3:
        i = np.arange(n) + 0.5
        z = 1.0 - 2.0 * i / n
        rho = np.sqrt(1.0 - z * z)
        phi = np.pi * (1.0 + 5.0**0.5) * i
        return np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=1)
    from scipy.stats import norm, qmc

    u = qmc.Halton(d, scramble=False).random(2 * n + 1)[1:]
    v = norm.ppf(np.clip(u, 1e-9, 1 - 1e-9))
    v = v[np.linalg.norm(v, axis=1) > 1e-6][:n]
    return v / np.linalg.norm(v, axis=1, keepdims=True)
