"""Shared plane-wave Galerkin helpers (convolution blocks, symbol stacks)."""

from __future__ import annotations

import numpy as np

from .fields import PeriodicMatrixField
from .lattice import FrequencySet
from .model import MatrixSymbol


def convolution_blocks(field: PeriodicMatrixField, freqs: FrequencySet) -> np.ndarray:
    """Blocks C[a, b] = coefficient(kappa_a - kappa_b), shape (F, F, rows, cols).

    Multiplication by the field, compressed to the span of the plane waves in
    ``freqs``, acts on coefficient vectors through these blocks.
    """
    return field.coefficients(freqs.difference_table())


def flatten_blocks(blocks: np.ndarray) -> np.ndarray:
    """(F, F, r, c) -> (F*r, F*c) with index a*r + i."""
    F1, F2, r, c = blocks.shape
    return blocks.transpose(0, 2, 1, 3).reshape(F1 * r, F2 * c)


def symbol_stack(symbol: MatrixSymbol, vectors: np.ndarray) -> np.ndarray:
    """b(xi) evaluated at each row of ``vectors``; shape (F, m, n)."""
    return symbol(vectors)


def sandwich(B: np.ndarray, G: np.ndarray) -> np.ndarray:
    """Blocks B_a^* G[a, b] B_b flattened to (F*n, F*n)."""
    blocks = np.einsum("api,abpq,bqj->aibj", B.conj(), G, B, optimize=True)
    F, n = B.shape[0], B.shape[2]
    return blocks.reshape(F * n, F * n)


def hermitize(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.conj().T)
