"""Periodic cell problems and the effective objects built from them.

The corrector equation b(D)* g (b(D) Lambda + 1) = 0 is solved by Galerkin
projection onto the plane waves with integer coordinates in [-K, K]^d, the
zero frequency removed. All Fourier data are taken on the model's grid for
cutoff K, the same data the fiber operators use, so the effective matrix and
the corrector are exactly those of the discretized fiber family.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sla

from ._galerkin import convolution_blocks, hermitize, symbol_stack
from .fields import PeriodicMatrixField, pointwise_map, product
from .lattice import FrequencySet, frequency_set
from .model import OperatorModel

COND_LIMIT = 1e12
SKEW_TOL = 1e-10


class IllConditionedCellProblem(RuntimeError):
    pass


@dataclass
class CellSolution:
    freqs: FrequencySet
    coeffs: np.ndarray  # (F, n, m), zero at kappa = 0
    residual: float
    condition: float


@dataclass(eq=False)
class EffectiveData:
    model: OperatorModel  # the model resampled on the cutoff grid
    cutoff: int
    freqs: FrequencySet
    Lambda_hat: np.ndarray
    Lambda: PeriodicMatrixField
    g_tilde: PeriodicMatrixField
    g0: np.ndarray
    Lambda_Q0: np.ndarray
    Lambda_Q: PeriodicMatrixField
    f0: np.ndarray
    Q_bar: np.ndarray
    residual: float
    residual_Q: float
    condition: float
    skew: float = 0.0
    extras: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.model.n

    @property
    def m(self) -> int:
        return self.model.m

    @cached_property
    def _L_parts(self) -> tuple[np.ndarray, np.ndarray]:
        """Tensors T_l = mean(Lam* b_l* g~) for Lambda and Lambda_Q, shape (d, m, m)."""
        return _mean_products(self.Lambda, self.g_tilde, self.model), _mean_products(
            self.Lambda_Q, self.g_tilde, self.model)

    def L_coefficients(self, weighted: bool = False) -> np.ndarray:
        """Matrices L_l with L(theta) = sum_l theta_l L_l (Hermitian)."""
        T = self._L_parts[1 if weighted else 0]
        return T + T.conj().transpose(0, 2, 1)

    def to_dict(self) -> dict:
        return {
            "cutoff": self.cutoff,
            "g0": _cmat(self.g0),
            "f0": _cmat(self.f0),
            "Q_bar": _cmat(self.Q_bar),
            "Lambda_Q0": _cmat(self.Lambda_Q0),
            "Lambda_fourier": [{"kappa": [int(c) for c in kap], "value": _cmat(v)}
                               for kap, v in zip(self.freqs.kappa, self.Lambda_hat)
                               if np.abs(v).max() > 1e-15],
            "residual": self.residual,
            "residual_Q": self.residual_Q,
            "condition": self.condition,
            "g0_skew": self.skew,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _cmat(M) -> list:
    M = np.atleast_2d(np.asarray(M, dtype=complex))
    return [[[float(z.real), float(z.imag)] for z in row] for row in M]


def cmat_from_json(data) -> np.ndarray:
    a = np.asarray(data, dtype=float)
    return a[..., 0] + 1j * a[..., 1]


def _mean_products(Lam: PeriodicMatrixField, gt: PeriodicMatrixField, model: OperatorModel) -> np.ndarray:
    grid = tuple(max(a, b) for a, b in zip(Lam.grid_shape, gt.grid_shape))
    L = Lam.resample(grid).samples.reshape(-1, Lam.rows, Lam.cols)
    G = gt.resample(grid).samples.reshape(-1, gt.rows, gt.cols)
    # mean over the grid of Lam^* b_l^* g~  ->  (d, m, m)
    bl = model.symbol.mats
    return np.einsum("pji,lkj,pkr->lir", L.conj(), bl.conj(), G, optimize=True) / L.shape[0]


def _lambda_field(model: OperatorModel, freqs: FrequencySet, coeffs: np.ndarray, grid) -> PeriodicMatrixField:
    d = {tuple(int(c) for c in kap): v for kap, v in zip(freqs.kappa, coeffs)}
    return PeriodicMatrixField.from_fourier(d, model.lattice, grid, name="Lambda")


def solve_cell_problem(model: OperatorModel, K: int) -> CellSolution:
    """Galerkin corrector: for each column, the mean-zero solution in the truncated space."""
    mk = model.at_cutoff(K)
    freqs = frequency_set(model.lattice, K)
    n, m = model.n, model.m
    G = convolution_blocks(mk.g, freqs)
    B = symbol_stack(model.symbol, freqs.vectors)
    nz = np.arange(len(freqs)) != freqs.zero_index
    Bn = B[nz]
    A = np.einsum("api,abpq,bqj->aibj", Bn.conj(), G[np.ix_(nz, nz)], Bn, optimize=True)
    Fp = Bn.shape[0]
    A = hermitize(A.reshape(Fp * n, Fp * n))
    rhs = -np.einsum("api,apq->aiq", Bn.conj(), G[nz, freqs.zero_index]).reshape(Fp * n, m)
    w = np.linalg.eigvalsh(A)
    cond = float(w[-1] / w[0]) if w[0] > 0 else np.inf
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise IllConditionedCellProblem(f"cell-problem Galerkin matrix has condition {cond:.3e}")
    x = sla.solve(A, rhs, assume_a="pos")
    rnorm = np.linalg.norm(rhs)
    res = float(np.linalg.norm(A @ x - rhs) / rnorm) if rnorm > 0 else float(np.linalg.norm(A @ x))
    coeffs = np.zeros((len(freqs), n, m), dtype=complex)
    coeffs[nz] = x.reshape(Fp, n, m)
    return CellSolution(freqs, coeffs, res, cond)


def effective_matrix(model: OperatorModel, sol: CellSolution) -> tuple[PeriodicMatrixField, np.ndarray, float]:
    """Return (g_tilde, g0, skew) with g_tilde = g (b(D) Lambda + 1) and g0 its mean."""
    mk = model.at_cutoff(sol.freqs.cutoff)
    B = symbol_stack(model.symbol, sol.freqs.vectors)
    W = np.einsum("aij,ajk->aik", B, sol.coeffs)
    W[sol.freqs.zero_index] += np.eye(model.m)
    Wf = _lambda_field(model, sol.freqs, W, mk.g.grid_shape)
    gt = pointwise_map(np.matmul, mk.g, Wf, grid_shape=mk.g.grid_shape, name="g_tilde")
    g0 = gt.mean()
    skew = float(np.abs(g0 - g0.conj().T).max() / max(np.abs(g0).max(), 1e-300))
    if skew > SKEW_TOL:
        raise RuntimeError(f"effective matrix is not Hermitian (relative skew part {skew:.3e})")
    return gt, hermitize(g0), skew


def solve_cell_problem_Q(model: OperatorModel, Lambda: PeriodicMatrixField) -> tuple[PeriodicMatrixField, np.ndarray, float]:
    """Shift Lambda by a constant so that mean(Q Lambda_Q) = 0."""
    grid = Lambda.grid_shape
    Q = model.Q.at_least(grid)
    QL = product(Q, Lambda.resample(Q.grid_shape))
    shift = -np.linalg.solve(model.Q_bar, QL.mean())
    LQ = pointwise_map(lambda a: a + shift, Lambda, bandwidth=Lambda.bandwidth, name="Lambda_Q")
    res = float(np.abs(product(Q, LQ.resample(Q.grid_shape)).mean()).max())
    return LQ, shift, res


def compute_effective(model: OperatorModel, K: int) -> EffectiveData:
    """Corrector, g_tilde, g0 and the Q-weighted objects at cutoff K."""
    mk = model.at_cutoff(K)
    sol = solve_cell_problem(model, K)
    Lam = _lambda_field(model, sol.freqs, sol.coeffs, mk.g.grid_shape)
    gt, g0, skew = effective_matrix(model, sol)
    LQ, LQ0, resQ = solve_cell_problem_Q(mk, Lam)
    return EffectiveData(mk, K, sol.freqs, sol.coeffs, Lam, gt, g0, LQ0, LQ, mk.f0, mk.Q_bar,
                         sol.residual, resQ, sol.condition, skew)


def converged_effective(model: OperatorModel, K: int = 6, step: int = 2, rtol: float = 1e-12,
                        K_max: int = 40) -> EffectiveData:
    """Raise the cutoff until g0 moves by at most ``rtol`` (relative) between successive cutoffs."""
    prev = compute_effective(model, K)
    while prev.cutoff + step <= K_max:
        nxt = compute_effective(model, prev.cutoff + step)
        drift = np.abs(nxt.g0 - prev.g0).max() / max(np.abs(nxt.g0).max(), 1e-300)
        nxt.extras["cutoff_drift"] = float(drift)
        if drift <= rtol:
            return nxt
        prev = nxt
    prev.extras["not_converged"] = True
    return prev


def voigt_reuss_check(g0: np.ndarray, g_field: PeriodicMatrixField, n: int | None = None,
                      tol: float = 1e-9, refine: int = 4) -> dict:
    """Bracketing harmonic mean <= g0 <= arithmetic mean in the PSD order.

    Both means are taken on the field grid refined ``refine`` times per axis, so
    the quadrature of the (non band-limited) inverse stays far below ``tol``.
    """
    g_field = g_field.resample(tuple(refine * n_ for n_ in g_field.grid_shape))
    upper = hermitize(g_field.mean())
    lower = hermitize(g_field.harmonic_mean())
    e_up = np.linalg.eigvalsh(upper - g0)
    e_lo = np.linalg.eigvalsh(g0 - lower)
    out = {
        "min_eig_upper_minus_g0": float(e_up.min()),
        "min_eig_g0_minus_lower": float(e_lo.min()),
        "passed": bool(e_up.min() >= -tol and e_lo.min() >= -tol),
    }
    if n is not None and n == g0.shape[0]:
        dev = float(np.linalg.norm(g0 - lower, 2) / max(np.linalg.norm(g0, 2), 1e-300))
        out["equality_deviation"] = dev
        out["passed"] = out["passed"] and dev <= tol
    return out


def classify_degenerate_cases(model: OperatorModel, tol: float = 1e-10) -> dict:
    """Detect g0 = upper mean (divergence-free columns) and g0 = lower mean (potential columns).

    Uses every DFT coefficient of the grid below the Nyquist bound.
    """
    g = model.g
    lat = model.lattice
    grid = g.grid_shape
    kap = np.stack(np.meshgrid(*[np.fft.fftfreq(N, 1.0 / N) for N in grid], indexing="ij"), -1)
    kap = kap.reshape(-1, lat.dim).astype(int)
    ok = np.all(2 * np.abs(kap) < np.asarray(grid), axis=1) & np.any(kap != 0, axis=1)
    kap = kap[ok]
    B = model.symbol(lat.dual_vectors(kap))  # (P, m, n)
    gh = g.coefficients(kap)  # (P, m, m)
    up = np.einsum("pji,pjk->pik", B.conj(), gh)  # b(b)* g_hat, columns = columns of g
    upper_res = np.sqrt((np.abs(up) ** 2).sum(axis=(0, 1)))
    upper_scale = max(g.sup_norm(), 1e-300)
    gi = g.inverse()
    lh = gi.coefficients(kap)
    pinv = np.linalg.pinv(B)
    proj = B @ pinv
    resid = lh - proj @ lh
    lower_res = np.sqrt((np.abs(resid) ** 2).sum(axis=(0, 1)))
    lower_scale = max(gi.sup_norm(), 1e-300)
    return {
        "g0_equals_upper": bool(np.all(upper_res <= tol * upper_scale)),
        "g0_equals_lower": bool(np.all(lower_res <= tol * lower_scale)),
        "upper_residuals": (upper_res / upper_scale).tolist(),
        "lower_residuals": (lower_res / lower_scale).tolist(),
    }
