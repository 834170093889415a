"""Operator triple (b, g, f), standing-assumption checks and threshold parameters."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .fields import PeriodicMatrixField, product
from .lattice import Lattice, sphere_directions

RANK_TOL = 1e-10


class ModelValidationError(ValueError):
    """The operator triple violates a standing assumption."""

    def __init__(self, report: "ValidationReport"):
        super().__init__("; ".join(report.failures))
        self.report = report


@dataclass(frozen=True, eq=False)
class MatrixSymbol:
    """First-order constant symbol b(xi) = sum_l xi_l b_l with b_l of shape (m, n)."""

    mats: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.mats, dtype=complex)
        if b.ndim != 3:
            raise ValueError("symbol must be given as d matrices of shape (m, n)")
        b = b.copy()
        b.setflags(write=False)
        object.__setattr__(self, "mats", b)

    @property
    def dim(self) -> int:
        return self.mats.shape[0]

    @property
    def m(self) -> int:
        return self.mats.shape[1]

    @property
    def n(self) -> int:
        return self.mats.shape[2]

    def __call__(self, xi) -> np.ndarray:
        """Evaluate at ``xi`` of shape (..., d); returns (..., m, n)."""
        return np.tensordot(np.asarray(xi, dtype=float), self.mats, axes=([-1], [0]))

    def rotated(self, U) -> "MatrixSymbol":
        """Apply a constant change of basis ``U`` on the m-space to every b_l."""
        return MatrixSymbol(np.einsum("ij,ljk->lik", np.asarray(U), self.mats))


def alpha_bounds(b: MatrixSymbol, n_theta: int | None = None) -> tuple[float, float]:
    """Sampled extrema of the eigenvalues of b(theta)* b(theta) over the unit sphere."""
    if n_theta is None:
        n_theta = {1: 2, 2: 512, 3: 2048}.get(b.dim, 4096)
    if b.dim > 1 and n_theta < 64:
        raise ValueError("use at least 64 sphere samples")
    th = sphere_directions(b.dim, n_theta)
    bt = b(th)
    ev = np.linalg.eigvalsh(np.swapaxes(bt, -1, -2).conj() @ bt)
    return float(ev[:, 0].min()), float(ev[:, -1].max())


@dataclass
class ValidationReport:
    passed: bool
    failures: list[str] = field(default_factory=list)
    witnesses: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "failures": list(self.failures), "witnesses": self.witnesses}


@dataclass(frozen=True)
class ThresholdParams:
    c_star: float
    delta: float
    t0: float
    c_star_hat: float
    delta_hat: float
    t0_hat: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _hermitian_power(M: np.ndarray, p: float, floor: float = 1e-12) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (M + M.conj().T))
    if w.min() <= floor * max(abs(w).max(), 1.0):
        raise ValueError(f"matrix is not positive definite (smallest eigenvalue {w.min():.3e})")
    return (v * w**p) @ v.conj().T


@dataclass(frozen=True, eq=False)
class OperatorModel:
    """A = f* b(D)* g b(D) f on L2(R^d; C^n) with Gamma-periodic g and f."""

    lattice: Lattice
    symbol: MatrixSymbol
    g: PeriodicMatrixField
    f: PeriodicMatrixField | None = None
    name: str = ""
    n_theta: int | None = None

    @property
    def dim(self) -> int:
        return self.lattice.dim

    @property
    def m(self) -> int:
        return self.symbol.m

    @property
    def n(self) -> int:
        return self.symbol.n

    @property
    def has_f(self) -> bool:
        return self.f is not None

    @cached_property
    def f_field(self) -> PeriodicMatrixField:
        if self.f is not None:
            return self.f
        return PeriodicMatrixField.constant(np.eye(self.n), self.lattice, self.g.grid_shape, name="1")

    @cached_property
    def Q(self) -> PeriodicMatrixField:
        return product(self.f_field, self.f_field.adjoint()).inverse()

    @cached_property
    def Q_bar(self) -> np.ndarray:
        q = self.Q.mean()
        return 0.5 * (q + q.conj().T)

    @cached_property
    def f0(self) -> np.ndarray:
        return _hermitian_power(self.Q_bar, -0.5)

    @cached_property
    def alphas(self) -> tuple[float, float]:
        return alpha_bounds(self.symbol, self.n_theta)

    @property
    def alpha0(self) -> float:
        return self.alphas[0]

    @property
    def alpha1(self) -> float:
        return self.alphas[1]

    @cached_property
    def g_norm(self) -> float:
        return self.g.sup_norm()

    @cached_property
    def g_inv_norm(self) -> float:
        return self.g.inverse().sup_norm()

    @cached_property
    def f_norm(self) -> float:
        return 1.0 if self.f is None else self.f.sup_norm()

    @cached_property
    def f_inv_norm(self) -> float:
        return 1.0 if self.f is None else self.f.inverse().sup_norm()

    @cached_property
    def _cutoff_cache(self) -> dict:
        return {}

    def grid_for_cutoff(self, K: int) -> tuple[int, ...]:
        """Common grid on which all Fourier data at cutoff K are taken.

        Convolution blocks need coefficients with |kappa_i| <= 2K, which fit
        strictly below the Nyquist bound once N_i >= 4K + 4.
        """
        need = 4 * int(K) + 4
        fields = [self.g] + ([self.f] if self.f is not None else [])
        return tuple(max([need] + [fl.grid_shape[i] for fl in fields]) for i in range(self.dim))

    def at_cutoff(self, K: int) -> "OperatorModel":
        """The same model with every field resampled on ``grid_for_cutoff(K)``."""
        grid = self.grid_for_cutoff(K)
        cache = self._cutoff_cache
        if grid not in cache:
            if self.g.grid_shape == grid and (self.f is None or self.f.grid_shape == grid):
                cache[grid] = self
            else:
                cache[grid] = OperatorModel(
                    self.lattice, self.symbol, self.g.resample(grid),
                    None if self.f is None else self.f.resample(grid), self.name, self.n_theta)
        return cache[grid]

    def to_dict(self) -> dict:
        return {"name": self.name, "dim": self.dim, "m": self.m, "n": self.n,
                "alpha0": self.alpha0, "alpha1": self.alpha1, "g_norm": self.g_norm,
                "g_inv_norm": self.g_inv_norm, "f_norm": self.f_norm, "f_inv_norm": self.f_inv_norm,
                "r0": self.lattice.r0}


def validate(model: OperatorModel) -> ValidationReport:
    """Check m >= n, the rank condition, positivity of g and invertibility of f."""
    fails, wit = [], {}
    b = model.symbol
    if b.dim != model.lattice.dim:
        fails.append(f"symbol dimension {b.dim} differs from lattice dimension {model.lattice.dim}")
    if b.m < b.n:
        fails.append(f"symbol has m={b.m} < n={b.n}")
    else:
        a0, a1 = alpha_bounds(b, model.n_theta)
        wit["alpha0"], wit["alpha1"] = a0, a1
        if a0 <= RANK_TOL:
            fails.append(f"rank condition fails: sampled alpha0 = {a0:.3e}")
    g = model.g
    if (g.rows, g.cols) != (b.m, b.m):
        fails.append(f"g has shape {g.rows}x{g.cols}, expected {b.m}x{b.m}")
    else:
        if not g.hermitian_flag:
            fails.append("g is not Hermitian on the grid")
        lam = g.min_eigenvalue()
        wit["g_min_eigenvalue"] = lam
        if lam <= 0:
            idx = g.argmin_eigenvalue()
            wit["g_nonpositive_at"] = list(idx)
            fails.append(f"g is not positive definite at grid index {idx} (eigenvalue {lam:.3e})")
    if model.f is not None:
        f = model.f
        if (f.rows, f.cols) != (b.n, b.n):
            fails.append(f"f has shape {f.rows}x{f.cols}, expected {b.n}x{b.n}")
        else:
            smin = np.linalg.svd(f.samples.reshape(-1, f.rows, f.cols), compute_uv=False)[:, -1]
            wit["f_min_singular_value"] = float(smin.min())
            if smin.min() <= 1e-14:
                idx = np.unravel_index(int(np.argmin(smin)), f.grid_shape)
                wit["f_singular_at"] = [int(i) for i in idx]
                fails.append(f"f is not invertible at grid index {tuple(int(i) for i in idx)}")
    return ValidationReport(not fails, fails, wit)


def threshold_params(model: OperatorModel) -> ThresholdParams:
    r0 = model.lattice.r0
    a0, a1 = model.alphas
    g, gi, fn, fi = model.g_norm, model.g_inv_norm, model.f_norm, model.f_inv_norm
    c_star = a0 / gi / fi**2
    delta = c_star * r0**2 / 4.0
    t0 = delta**0.5 * a1**-0.5 * g**-0.5 / fn
    c_hat = a0 / gi
    delta_hat = c_hat * r0**2 / 4.0
    t0_hat = 0.5 * r0 * (a0 / a1) ** 0.5 * (g * gi) ** -0.5
    return ThresholdParams(c_star, delta, t0, c_hat, delta_hat, t0_hat)
