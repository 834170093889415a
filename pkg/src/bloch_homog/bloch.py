"""Plane-wave Galerkin fibers, band functions and the threshold-expansion oracle.

Fibers are written in the variable v = f u. On the span of the plane waves
with integer coordinates in [-K, K]^d the fiber form becomes the pencil

    A_hat(k) v = E Q_K v,    A_hat(k) = B(k)* G B(k),

where G and Q_K are the convolution blocks of g and Q = (f f*)^{-1}, and
B(k) is block diagonal with blocks b(b + k). G is the compression of
multiplication by the grid samples of g, so A_hat(k) = X(k)* X(k) with
X(k) the quadrature-weighted grid realization of h b(D + k), h = g^{1/2}.
For f = 1 the pencil is an ordinary Hermitian problem.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sla
from scipy.sparse.csgraph import connected_components

from ._galerkin import convolution_blocks, flatten_blocks, hermitize, symbol_stack
from .effective import EffectiveData
from .fields import grid_points
from .lattice import FrequencySet, frequency_set
from .model import OperatorModel, threshold_params

COUPLING_TOL = 1e-14


class ThresholdRegimeError(ValueError):
    """Spectral projection requested outside the threshold regime."""


class Discretization:
    """Cutoff-K data shared by all fibers of one model: convolution blocks and coupling pattern."""

    def __init__(self, model: OperatorModel, K: int, g0: np.ndarray | None = None,
                 use_f: bool = True):
        self.base = model
        self.model = model.at_cutoff(K)
        self.K = int(K)
        self.freqs: FrequencySet = frequency_set(model.lattice, K)
        if model.g.bandwidth is not None and model.g.bandwidth > 2 * K:
            raise ValueError(f"cutoff {K} is below the coefficient bandwidth")
        self.n, self.m = model.n, model.m
        self.G = convolution_blocks(self.model.g, self.freqs)
        self.has_f = model.has_f and use_f
        if self.has_f:
            self.Qmat = hermitize(flatten_blocks(convolution_blocks(self.model.Q, self.freqs)))
        else:
            self.Qmat = None
        self.g0 = g0
        self.groups = self._coupling_groups()

    @property
    def dim(self) -> int:
        return len(self.freqs) * self.n

    def _coupling_groups(self) -> list[np.ndarray]:
        F, n = len(self.freqs), self.n
        Gabs = np.abs(self.G)
        Gabs = np.where(Gabs > COUPLING_TOL * Gabs.max(), Gabs, 0.0)
        Bs = np.abs(self.base.symbol.mats).sum(axis=0)  # structural pattern (m, n)
        pat = np.einsum("pi,abpq,qj->aibj", Bs, Gabs, Bs).reshape(F * n, F * n)
        if self.Qmat is not None:
            Qa = np.abs(self.Qmat)
            pat = pat + np.where(Qa > COUPLING_TOL * Qa.max(), Qa, 0.0)
        within = Bs.T @ Bs
        if self.g0 is not None:
            within = within + Bs.T @ np.abs(self.g0) @ Bs
        if self.has_f:
            within = within + np.abs(self.model.Q_bar)
        pat = pat + np.kron(np.eye(F), within)
        ncomp, labels = connected_components(pat > 0, directed=False)
        return [np.flatnonzero(labels == c) for c in range(ncomp)]

    def symbol_blocks(self, k) -> np.ndarray:
        return symbol_stack(self.base.symbol, self.freqs.vectors + np.asarray(k, dtype=float)[None, :])

    def A_hat(self, k) -> np.ndarray:
        B = self.symbol_blocks(k)
        blocks = np.einsum("api,abpq,bqj->aibj", B.conj(), self.G, B, optimize=True)
        return hermitize(blocks.reshape(self.dim, self.dim))

    def effective_blocks(self, k, g0: np.ndarray) -> np.ndarray:
        B = self.symbol_blocks(k)
        return np.einsum("api,pq,aqj->aij", B.conj(), g0, B)

    def fiber(self, k) -> "FiberOperator":
        return FiberOperator(self, np.asarray(k, dtype=float), self.A_hat(k))

    def X_matrix(self, k) -> np.ndarray:
        """Quadrature-weighted grid realization of h b(D + k) on the truncated space.

        Rows are indexed by (grid point, m-component), columns by (frequency,
        n-component); X* X reproduces ``A_hat(k)``.
        """
        lat = self.base.lattice
        grid = self.model.g.grid_shape
        x = grid_points(lat, grid).reshape(-1, lat.dim)
        P = len(x)
        S = np.exp(1j * x @ (self.freqs.vectors).T)  # (P, F)
        B = self.symbol_blocks(k)  # (F, m, n)
        h = self.model.g.sqrt_psd().resample(grid).samples.reshape(P, self.m, self.m)
        SB = np.einsum("pa,ami->pmai", S, B)  # (P, m, F, n)
        X = np.einsum("pkm,pmai->pkai", h, SB) / np.sqrt(P)
        return X.reshape(P * self.m, self.dim)


@dataclass(eq=False)
class FiberOperator:
    disc: Discretization
    k: np.ndarray
    A_hat: np.ndarray

    @property
    def Q(self) -> np.ndarray | None:
        return self.disc.Qmat

    @cached_property
    def _chol(self) -> np.ndarray:
        return np.linalg.cholesky(self.disc.Qmat)

    @cached_property
    def A_matrix(self) -> np.ndarray:
        """Hermitian matrix of the fiber in an orthonormal basis of the u-space."""
        if self.Q is None:
            return self.A_hat
        L = self._chol
        Y = sla.solve_triangular(L, self.A_hat, lower=True)
        return hermitize(sla.solve_triangular(L, Y.conj().T, lower=True).conj().T)

    @cached_property
    def eig(self) -> tuple[np.ndarray, np.ndarray]:
        """All eigenpairs, ascending; vectors are Q-orthonormal (plain orthonormal when f = 1).

        Each coupling group is diagonalized separately.
        """
        N = self.disc.dim
        E = np.empty(N)
        V = np.zeros((N, N), dtype=complex)
        pos = 0
        for idx in self.disc.groups:
            Ab = self.A_hat[np.ix_(idx, idx)]
            if self.Q is None:
                w, v = np.linalg.eigh(Ab)
            else:
                w, v = sla.eigh(Ab, self.Q[np.ix_(idx, idx)])
            V[np.ix_(idx, np.arange(pos, pos + len(idx)))] = v
            E[pos:pos + len(idx)] = w
            pos += len(idx)
        order = np.argsort(E, kind="stable")
        return E[order], V[:, order]

    def energies(self, count: int | None = None) -> np.ndarray:
        E = self.eig[0]
        return E if count is None else E[:count]


@dataclass
class EffectiveFiber:
    k: np.ndarray
    blocks: np.ndarray  # (F, n, n): b(b+k)* g0 b(b+k)
    Q_bar: np.ndarray | None = None

    @cached_property
    def matrix(self) -> np.ndarray:
        return sla.block_diag(*self.blocks)

    @cached_property
    def eig(self) -> tuple[np.ndarray, np.ndarray]:
        F, n, _ = self.blocks.shape
        if self.Q_bar is None:
            w, v = np.linalg.eigh(self.blocks)
        else:
            w = np.empty((F, n))
            v = np.empty((F, n, n), dtype=complex)
            for a in range(F):
                w[a], v[a] = sla.eigh(self.blocks[a], self.Q_bar)
        return w, v


def assemble_fiber(model: OperatorModel, k, K: int) -> FiberOperator:
    return Discretization(model, K).fiber(k)


def effective_fiber(disc: Discretization, eff: EffectiveData, k, weighted: bool = False) -> EffectiveFiber:
    return EffectiveFiber(np.asarray(k, float), disc.effective_blocks(k, eff.g0),
                          eff.Q_bar if weighted else None)


def band_functions(model: OperatorModel, k_points, K: int, count: int,
                   disc: Discretization | None = None) -> np.ndarray:
    disc = disc or Discretization(model, K)
    if count > disc.dim:
        raise ValueError("count exceeds the matrix dimension")
    return np.array([disc.fiber(k).energies(count) for k in np.atleast_2d(k_points)])


def spectral_projection(fiber: FiberOperator, upper: float | None = None) -> np.ndarray:
    """Projection onto the lowest n eigenvectors, in the orthonormal u-basis of ``A_matrix``.

    ``upper`` (default: delta from the threshold parameters) must separate the
    lowest n eigenvalues from the rest.
    """
    n = fiber.disc.n
    E, V = fiber.eig
    if upper is None:
        upper = threshold_params(fiber.disc.base).delta
    if np.count_nonzero(E <= upper) != n:
        raise ThresholdRegimeError(
            f"{np.count_nonzero(E <= upper)} eigenvalues below {upper:.3e} at k={fiber.k}; expected {n}")
    W = V[:, :n]
    if fiber.Q is not None:
        W = fiber._chol.conj().T @ W
    return W @ W.conj().T


def zero_block_projector(disc: Discretization) -> np.ndarray:
    """Orthogonal projector onto the zero-frequency (constant) components."""
    P = np.zeros((disc.dim, disc.dim))
    z = disc.freqs.zero_index * disc.n
    P[z:z + disc.n, z:z + disc.n] = np.eye(disc.n)
    return P


# --------------------------------------------------------------------------
# threshold-expansion oracle


def lowest_eigs_schur(A: np.ndarray, Q: np.ndarray | None, zidx: np.ndarray,
                      maxiter: int = 100) -> np.ndarray:
    """Lowest len(zidx) eigenvalues of the pencil (A, Q) through the nonlinear Schur complement.

    With T(lam) = A - lam Q split over the constant block z and the rest r, an
    eigenvalue satisfies det(M(lam) - lam Q_zz) = 0 where
    M(lam) = A_zz - T_zr T_rr^{-1} T_rz. Each branch is found by fixed-point
    iteration lam <- eig_l(M(lam), Q_zz), which contracts because M depends on
    lam only through terms of size |k|^2. The small eigenvalues come out
    with relative accuracy, unlike a full dense solve.
    """
    N = A.shape[0]
    ridx = np.setdiff1d(np.arange(N), zidx)
    Azz = A[np.ix_(zidx, zidx)]
    Azr, Arr = A[np.ix_(zidx, ridx)], A[np.ix_(ridx, ridx)]
    if Q is None:
        Qzz, Qzr, Qrr = np.eye(len(zidx)), np.zeros_like(Azr), np.eye(len(ridx))
    else:
        Qzz, Qzr, Qrr = Q[np.ix_(zidx, zidx)], Q[np.ix_(zidx, ridx)], Q[np.ix_(ridx, ridx)]

    def M(lam):
        Tzr = Azr - lam * Qzr
        X = sla.solve(Arr - lam * Qrr, Tzr.conj().T, assume_a="her")
        return hermitize(Azz - Tzr @ X)

    nb = len(zidx)
    out = np.empty(nb)
    lam0 = sla.eigh(M(0.0), Qzz, eigvals_only=True)
    for l in range(nb):
        lam = lam0[l]
        for _ in range(maxiter):
            new = sla.eigh(M(lam), Qzz, eigvals_only=True)[l]
            if abs(new - lam) <= 4e-16 * max(abs(new), 1e-300):
                lam = new
                break
            lam = new
        out[l] = lam
    return out


@dataclass
class ThresholdFit:
    theta: np.ndarray
    t: np.ndarray
    lambdas: np.ndarray  # (T, n)
    gamma: np.ndarray
    mu: np.ndarray
    nu: np.ndarray
    residual: np.ndarray
    cluster_trace: dict = field(default_factory=dict)
    flagged: bool = False


def default_t_ladder(model: OperatorModel) -> np.ndarray:
    tp = threshold_params(model)
    t0 = tp.t0 if model.has_f else tp.t0_hat
    return t0 / 64.0 * 2.0 ** np.arange(5)


def constant_group(disc: Discretization) -> tuple[np.ndarray, np.ndarray]:
    """Indices of the coupling groups holding the constants, and the constants' positions in them."""
    z0 = disc.freqs.zero_index * disc.n
    zidx = np.arange(z0, z0 + disc.n)
    sel = np.unique(np.concatenate([g for g in disc.groups if np.intersect1d(g, zidx).size]))
    return sel, np.searchsorted(sel, zidx)


def extract_threshold_coeffs(model: OperatorModel, theta, t_samples=None, K: int = 8,
                             disc: Discretization | None = None, order: int = 5,
                             flag_tol: float = 1e-9) -> ThresholdFit:
    """Fit lambda_l(t) = gamma t^2 + mu t^3 + nu t^4 (+ rho t^5) along k = t theta.

    Eigenvalues are taken from the fiber pencils alone (no corrector data);
    branches are the ascending eigenvalues at each t > 0. The fit is done on
    lambda / t^2 against powers of t up to ``order - 2``; the default keeps a
    quintic tail term so the cubic coefficient is not biased by it.
    """
    disc = disc or Discretization(model, K)
    theta = np.asarray(theta, dtype=float)
    t = np.asarray(default_t_ladder(model) if t_samples is None else t_samples, dtype=float)
    sel, zloc = constant_group(disc)
    Qs = None if disc.Qmat is None else disc.Qmat[np.ix_(sel, sel)]
    lam = np.array([lowest_eigs_schur(disc.A_hat(tt * theta)[np.ix_(sel, sel)], Qs, zloc) for tt in t])
    V = np.stack([t**p for p in range(order - 1)], axis=1)
    if V.shape[1] > len(t):
        raise ValueError("not enough t samples for the requested fit order")
    coef, *_ = np.linalg.lstsq(V, lam / t[:, None] ** 2, rcond=None)
    resid = lam / t[:, None] ** 2 - V @ coef
    rel = np.abs(resid).max(axis=0) / np.maximum(np.abs(coef[0]), 1e-300)
    trace = lam.sum(axis=1)
    ctr, *_ = np.linalg.lstsq(V, trace / t**2, rcond=None)
    nu = coef[2] if coef.shape[0] > 2 else np.zeros(disc.n)
    return ThresholdFit(theta, t, lam, coef[0], coef[1], nu, rel,
                        {"gamma_sum": ctr[0], "mu_sum": ctr[1]}, bool(np.any(rel > flag_tol)))


def threshold_residuals(model: OperatorModel, eff: EffectiveData, theta, t_samples=None,
                        K: int | None = None) -> dict:
    """max_t ||F(t) - P|| / t and max_t ||A(t) F(t) - t^2 S(theta) P|| / t^3 (f = 1 only)."""
    if model.has_f:
        raise ValueError("threshold residuals are defined here for f = identity only")
    K = K or eff.cutoff
    disc = Discretization(model, K)
    theta = np.asarray(theta, dtype=float)
    t = np.asarray(default_t_ladder(model) if t_samples is None else t_samples, dtype=float)
    P = zero_block_projector(disc)
    bt = model.symbol(theta)
    S = hermitize(bt.conj().T @ eff.g0 @ bt)
    SP = np.zeros((disc.dim, disc.dim), dtype=complex)
    z = disc.freqs.zero_index * disc.n
    SP[z:z + disc.n, z:z + disc.n] = S
    r1, r2 = [], []
    for tt in t:
        fib = disc.fiber(tt * theta)
        F = spectral_projection(fib)
        E, V = fib.eig
        AF = (V[:, :disc.n] * E[:disc.n]) @ V[:, :disc.n].conj().T
        r1.append(np.linalg.norm(F - P, 2) / tt)
        r2.append(np.linalg.norm(AF - tt**2 * SP, 2) / tt**3)
    return {"t": t.tolist(), "projection_ratio": r1, "operator_ratio": r2,
            "max_projection_ratio": float(max(r1)), "max_operator_ratio": float(max(r2))}
