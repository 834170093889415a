import numpy as np
import pytest
from hypothesis import given, strategies as st

from bloch_homog.lattice import (DegenerateLatticeError, Lattice, dual_basis, frequency_set,
                                 in_parallelepiped, k_grid, r0, reduced_coordinates, sphere_directions)

bases = st.lists(st.floats(-2.0, 2.0), min_size=4, max_size=4).map(
    lambda v: np.eye(2) * 3.0 + np.array(v).reshape(2, 2))


def test_square_lattice_dual():
    lat = Lattice.cubic(2)
    assert np.allclose(lat.dual_basis, np.eye(2))
    assert lat.r0 == pytest.approx(0.5)


@given(bases)
def test_biorthogonality_and_volume(a):
    b = dual_basis(a)
    assert np.abs(b @ a.T - 2 * np.pi * np.eye(2)).max() < 1e-12
    lat = Lattice(a)
    assert abs(lat.cell_volume * lat.dual_cell_volume / (2 * np.pi) ** 2 - 1) < 1e-12


def test_singular_basis_rejected():
    with pytest.raises(DegenerateLatticeError):
        Lattice(np.array([[1.0, 2.0], [2.0, 4.0]]))


def test_r0_skewed_lattice_matches_brute_force():
    lat = Lattice(np.array([[1.0, 0.0], [0.93, 0.2]]))
    kap = np.array([(i, j) for i in range(-30, 31) for j in range(-30, 31) if (i, j) != (0, 0)])
    brute = 0.5 * np.linalg.norm(kap @ lat.dual_basis, axis=1).min()
    assert lat.r0 == pytest.approx(brute, rel=1e-12)
    assert r0(lat) == pytest.approx(brute, rel=1e-12)


def test_frequency_set_symmetric():
    fs = frequency_set(Lattice.cubic(2), 3)
    for kap in fs.kappa:
        assert tuple(-kap) in fs
    assert np.all(fs.kappa[fs.zero_index] == 0)


@pytest.mark.parametrize("N", [1, 4, 7])
def test_k_grid_weights_and_containment(N):
    lat = Lattice(np.array([[1.0, 0.2], [0.0, 1.3]]))
    pts, w = k_grid(lat, N)
    assert w.sum() == pytest.approx(lat.dual_cell_volume, rel=1e-14)
    assert np.all(in_parallelepiped(lat, pts))
    red = reduced_coordinates(lat, pts)
    assert np.all(np.abs(red) < 0.5)


def test_k_grid_single_point_is_origin():
    pts, _ = k_grid(Lattice.cubic(3), 1)
    assert np.allclose(pts, 0.0)


@pytest.mark.parametrize("d,n", [(1, 2), (2, 16), (3, 20), (4, 9)])
def test_sphere_directions_unit(d, n):
    v = sphere_directions(d, n)
    assert np.allclose(np.linalg.norm(v, axis=1), 1.0)
