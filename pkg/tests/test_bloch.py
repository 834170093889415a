import numpy as np
import pytest

from bloch_homog import gallery
from bloch_homog.bloch import (Discretization, ThresholdRegimeError, band_functions, effective_fiber,
                               spectral_projection, threshold_residuals)
from bloch_homog.germ import germ_at
from bloch_homog.lattice import Lattice, in_parallelepiped, k_grid
from bloch_homog.model import threshold_params


def corner_points(lat):
    red = np.array([[a, b] for a in (-0.5, 0.0, 0.5) for b in (-0.5, 0.0, 0.5)])
    return red @ lat.dual_basis


@pytest.fixture(scope="module")
def models(crossing, complex_scalar, scalar, pauli_entry):
    return {"scalar": scalar[0].model, "crossing": crossing[0].model, "complex_scalar": complex_scalar[0].model,
            "pauli": pauli_entry.model}


@pytest.mark.parametrize("name", ["scalar", "crossing", "complex_scalar", "pauli"])
def test_kernel_dimension_and_psd(models, name):
    m = models[name]
    disc = Discretization(m, 5)
    E = disc.fiber(np.zeros(m.dim)).energies()
    assert np.count_nonzero(E < 1e-10) == m.n
    assert E.min() > -1e-10


@pytest.mark.parametrize("name", ["scalar", "crossing", "complex_scalar", "pauli"])
def test_band_lower_bounds(models, name):
    m = models[name]
    tp = threshold_params(m)
    c_star, r0 = tp.c_star, m.lattice.r0
    pts, _ = k_grid(m.lattice, 6)
    if m.dim == 2:
        pts = np.vstack([pts, corner_points(m.lattice)])
    else:
        pts = np.vstack([pts, [[-0.5], [0.5]]])
    E = band_functions(m, pts, 5, m.n + 1)
    k2 = (pts**2).sum(axis=1)
    assert np.all(E[:, :m.n] >= c_star * k2[:, None] - 1e-9)
    assert np.all(E[:, m.n] >= c_star * r0**2 - 1e-9)


@pytest.mark.parametrize("name", ["scalar", "complex_scalar"])
def test_cutoff_refinement(models, name):
    m = models[name]
    k = np.full(m.dim, 0.21)
    a = Discretization(m, 8).fiber(k).energies(m.n + 1)
    b = Discretization(m, 10).fiber(k).energies(m.n + 1)
    assert np.all(np.abs(a - b) <= 1e-8 * np.maximum(np.abs(b), 1.0))


def test_grid_factorization(models):
    disc = Discretization(models["crossing"], 3)
    k = np.array([0.13, -0.31])
    X = disc.X_matrix(k)
    assert np.abs(X.conj().T @ X - disc.A_hat(k)).max() < 1e-12


def test_effective_fiber_matches_germ(crossing):
    e, eff = crossing
    disc = Discretization(e.model, 4)
    th = np.array([0.6, 0.8])
    for t in (1e-3, 0.05):
        w, _ = effective_fiber(disc, eff, t * th).eig
        z = disc.freqs.zero_index
        g, _ = germ_at(eff, th)
        assert np.allclose(np.sort(w[z]), t**2 * g.gamma, rtol=1e-12, atol=1e-15)


def test_pauli_blocks_isospectral(pauli_entry):
    dp = Discretization(gallery.pauli_block(pauli_entry, "+"), 8)
    dm = Discretization(gallery.pauli_block(pauli_entry, "-"), 8)
    for k in ([0.1, 0.2], [-0.4, 0.33], [0.5, 0.5]):
        a, b = dp.fiber(k).energies(3), dm.fiber(k).energies(3)
        assert np.allclose(a, b, rtol=1e-6)


def test_spectral_projection_threshold(scalar):
    m = scalar[0].model
    disc = Discretization(m, 6)
    small = disc.fiber(np.array([1e-3]))
    P = spectral_projection(small)
    assert np.allclose(P @ P, P, atol=1e-12) and np.trace(P).real == pytest.approx(1.0)
    with pytest.raises(ThresholdRegimeError):
        spectral_projection(disc.fiber(np.array([0.5])), upper=1.0)


def test_threshold_residual_ratios_bounded(scalar):
    rep = threshold_residuals(scalar[0].model, scalar[1], [1.0])
    assert rep["max_projection_ratio"] < 10 and rep["max_operator_ratio"] < 10


def test_coupling_groups_partition(models):
    disc = Discretization(models["crossing"], 6)
    idx = np.sort(np.concatenate(disc.groups))
    assert np.array_equal(idx, np.arange(disc.dim))
    assert len(disc.groups) > 1
    k = np.array([0.3, -0.1])
    A = disc.A_hat(k)
    mask = np.zeros_like(A, dtype=bool)
    for g in disc.groups:
        mask[np.ix_(g, g)] = True
    assert np.abs(A[~mask]).max() == 0.0


def test_skewed_lattice_grid_inside():
    lat = Lattice(np.array([[1.0, 0.0], [0.6, 1.1]]))
    pts, _ = k_grid(lat, 5)
    assert np.all(in_parallelepiped(lat, pts))
