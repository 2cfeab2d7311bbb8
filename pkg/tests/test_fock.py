import math

import numpy as np
import pytest
import scipy.stats

from lab.errors import BadArgument, CapacityError, LeakageError
from lab.fock import (
    CloudFunction,
    FockVector,
    GridRecipe,
    ModeGrid,
    annihilation_op,
    build_basis,
    coherent_state,
    count_states,
    creation_op,
    direction_set,
    free_photon_hamiltonian,
    number_operator,
    photon_momentum,
    polarization_vectors,
    smeared_field_ops,
    vacuum,
    weyl_cocycle_check,
    weyl_operator,
)


def test_single_mode_basis(single_mode):
    basis = build_basis(single_mode, 2, 2)
    assert basis.states.tolist() == [[0], [1], [2]]
    assert basis.size == 3


def test_two_mode_basis_is_graded_lexicographic(line_grid):
    basis = build_basis(line_grid([0.5, 1.0]), 1, 1)
    assert basis.states.tolist() == [[0, 0], [1, 0], [0, 1]]


def test_basis_size_matches_multiset_count(line_grid):
    grid = line_grid(np.linspace(0.1, 1.2, 12))
    basis = build_basis(grid, 4, 4)
    assert basis.size == math.comb(16, 4) == 1820
    assert count_states(12, 4, 4) == 1820
    assert basis.states[0].tolist() == [0] * 12
    assert basis.states.sum(axis=1).max() == 4


def test_capacity_error_names_parameters(line_grid):
    grid = line_grid(np.linspace(0.1, 1.2, 12))
    with pytest.raises(CapacityError) as exc:
        build_basis(grid, 4, 4, hard_limit=1000)
    assert exc.value.size == 1820
    assert exc.value.params == {"modes": 12, "max_total": 4, "max_per_mode": 4}


def test_basis_is_deterministic(line_grid):
    grid = line_grid([0.2, 0.4, 0.8])
    a, b = build_basis(grid, 3, 2), build_basis(grid, 3, 2)
    np.testing.assert_array_equal(a.states, b.states)
    ca, cb = creation_op(a, 1).matrix, creation_op(b, 1).matrix
    np.testing.assert_array_equal(ca.indices, cb.indices)
    np.testing.assert_array_equal(ca.indptr, cb.indptr)
    np.testing.assert_array_equal(ca.data, cb.data)


def test_creation_and_annihilation_on_vacuum(single_mode):
    basis = build_basis(single_mode, 2, 2)
    raised = creation_op(basis, 0).apply(vacuum(basis))
    assert raised.amplitudes[basis.index_of([1])] == pytest.approx(1.0)
    assert raised.norm() == pytest.approx(1.0)
    lowered = annihilation_op(basis, 0).apply(vacuum(basis))
    assert lowered.norm() == 0.0


def test_creation_matrix_element(single_mode):
    basis = build_basis(single_mode, 2, 2)
    dense = creation_op(basis, 0).to_dense()
    assert dense[basis.index_of([2]), basis.index_of([1])] == pytest.approx(math.sqrt(2.0))


def test_invalid_mode_index(single_mode):
    basis = build_basis(single_mode, 2, 2)
    with pytest.raises(BadArgument):
        creation_op(basis, 1)


def test_ladder_commutator_below_truncation(line_grid):
    basis = build_basis(line_grid([0.3, 0.6, 0.9]), 4, 4)
    keep = basis.totals <= basis.max_total - 1
    identity = np.eye(basis.size)
    for i in range(basis.n_modes):
        a = annihilation_op(basis, i).to_dense()
        for j in range(basis.n_modes):
            ad = creation_op(basis, j).to_dense()
            comm = a @ ad - ad @ a - (i == j) * identity
            assert np.abs(comm[np.ix_(keep, keep)]).max() <= 1e-12


def test_smeared_operators(line_grid, cloud):
    grid = line_grid([0.5, 1.0], weights=[0.3, 0.7])
    basis = build_basis(grid, 2, 2)
    g = CloudFunction(grid, [1.0 + 1.0j, 2.0])
    h = CloudFunction(grid, [0.5, -1.0j])

    up_h, _ = smeared_field_ops(basis, h)
    _, down_g = smeared_field_ops(basis, g)
    omega = vacuum(basis)
    value = omega.inner(down_g.apply(up_h.apply(omega)))
    assert value == pytest.approx(g.inner(h), abs=1e-12)
    assert g.inner(h) == pytest.approx(0.3 * (1.0 - 1.0j) * 0.5 + 0.7 * 2.0 * -1.0j)

    zero_up, zero_down = smeared_field_ops(basis, cloud(grid, 0.0))
    assert zero_up.nnz == 0 and zero_down.nnz == 0


def test_smeared_creation_absorbs_square_root_weight(line_grid):
    grid = line_grid([0.5], weights=[0.3])
    basis = build_basis(grid, 1, 1)
    up, _ = smeared_field_ops(basis, CloudFunction(grid, [1.0]))
    assert up.apply(vacuum(basis)).amplitudes[1] == pytest.approx(math.sqrt(0.3))


def test_smeared_commutator_expectation(line_grid):
    grid = line_grid([0.2, 0.5, 1.0], weights=[0.5, 1.0, 2.0])
    basis = build_basis(grid, 4, 4)
    g = CloudFunction(grid, [0.3, -0.2j, 0.1 + 0.4j])
    h = CloudFunction(grid, [1.0j, 0.5, -0.25])
    up_h, _ = smeared_field_ops(basis, h)
    _, down_g = smeared_field_ops(basis, g)
    comm = (down_g @ up_h) - (up_h @ down_g)

    rng = np.random.default_rng(7)
    amps = rng.standard_normal(basis.size) + 1j * rng.standard_normal(basis.size)
    amps[basis.totals > basis.max_total - 1] = 0.0
    psi = FockVector(basis, amps)
    value = psi.inner(comm.apply(psi))
    assert value == pytest.approx(g.inner(h) * psi.norm() ** 2, abs=1e-10)


def test_grid_mismatch_is_rejected(line_grid):
    basis = build_basis(line_grid([0.5, 1.0]), 1, 1)
    other = line_grid([0.5, 1.0])
    with pytest.raises(BadArgument):
        smeared_field_ops(basis, CloudFunction(other, [1.0, 1.0]))


def test_free_photon_hamiltonian(line_grid, single_mode):
    basis = build_basis(single_mode, 2, 2)
    H = free_photon_hamiltonian(basis)
    assert H.hermitian
    assert vacuum(basis).expectation(H) == 0.0
    assert H.to_dense()[1, 1] == pytest.approx(0.5)

    basis = build_basis(line_grid([1.0, 2.0]), 3, 2)
    diag = free_photon_hamiltonian(basis).to_dense().diagonal()
    assert diag[basis.index_of([2, 1])] == pytest.approx(4.0)


def test_photon_momentum_and_number(line_grid):
    basis = build_basis(line_grid([-0.5, 1.0]), 2, 2)
    (P,) = photon_momentum(basis)
    N = number_operator(basis)
    idx = basis.index_of([1, 1])
    assert P.to_dense()[idx, idx] == pytest.approx(0.5)
    assert N.to_dense()[idx, idx] == pytest.approx(2.0)
    assert vacuum(basis).expectation(N) == 0.0


def test_weyl_of_zero_is_identity(line_grid, cloud):
    grid = line_grid([0.5, 1.0])
    basis = build_basis(grid, 3, 3)
    W = weyl_operator(basis, cloud(grid, 0.0))
    assert W.method == "dense"
    np.testing.assert_allclose(W.dense, np.eye(basis.size), atol=1e-15)


def test_vacuum_overlap_single_mode(single_mode):
    basis = build_basis(single_mode, 8, 8)
    g = CloudFunction(single_mode, [0.5])
    assert g.norm_squared() == pytest.approx(0.25)
    overlap = vacuum(basis).inner(coherent_state(basis, g))
    assert abs(overlap) == pytest.approx(math.exp(-0.125), abs=1e-6)
    assert abs(overlap) == pytest.approx(0.8825, abs=5e-5)


def test_weyl_inverse_restores_vector(line_grid):
    grid = line_grid([0.5, 1.0])
    basis = build_basis(grid, 6, 6)
    g = CloudFunction(grid, [0.4 + 0.1j, -0.3])
    there = weyl_operator(basis, g).apply(vacuum(basis))
    back = weyl_operator(basis, -g).apply(there)
    np.testing.assert_allclose(back.amplitudes, vacuum(basis).amplitudes, atol=1e-12)


def test_weyl_krylov_matches_dense(line_grid):
    grid = line_grid([0.5, 1.0])
    basis = build_basis(grid, 6, 6)
    g = CloudFunction(grid, [0.4 + 0.1j, -0.3])
    dense = weyl_operator(basis, g, method="dense").apply(vacuum(basis))
    krylov = weyl_operator(basis, g, method="krylov").apply(vacuum(basis))
    np.testing.assert_allclose(krylov.amplitudes, dense.amplitudes, atol=1e-10)


def test_cocycle_trivial_cases(single_mode, cloud):
    basis = build_basis(single_mode, 8, 8)
    g = cloud(single_mode, 0.3)
    theta, defect = weyl_cocycle_check(basis, g, cloud(single_mode, 0.0))
    assert theta == pytest.approx(0.0, abs=1e-12)
    assert defect <= 1e-10

    theta, defect = weyl_cocycle_check(basis, g, cloud(single_mode, 0.2))
    assert theta == pytest.approx(0.0, abs=1e-12)
    assert defect <= 1e-10


def test_cocycle_phase_is_minus_imaginary_overlap(single_mode, cloud):
    basis = build_basis(single_mode, 14, 14)
    h = cloud(single_mode, math.sqrt(0.1))
    g = h * 1j
    theta, defect = weyl_cocycle_check(basis, g, h)
    assert -g.inner(h).imag == pytest.approx(0.1)
    assert theta == pytest.approx(0.1, abs=1e-6)
    assert defect <= 1e-6


def test_cocycle_defect_is_a_maximum_over_states(single_mode, cloud):
    basis = build_basis(single_mode, 14, 14)
    h = cloud(single_mode, math.sqrt(0.1))
    g = h * 1j
    _, on_vacuum = weyl_cocycle_check(basis, g, h, depth=0)
    _, interior = weyl_cocycle_check(basis, g, h, depth=1)
    _, everywhere = weyl_cocycle_check(basis, g, h, depth=14)
    assert on_vacuum <= interior <= 1e-6
    # the top state feels the truncated commutator
    assert everywhere > 1e-3

    with pytest.raises(BadArgument):
        weyl_cocycle_check(basis, g, h, depth=15)


def test_cocycle_on_two_modes(line_grid):
    grid = line_grid([0.5, 1.0])
    basis = build_basis(grid, 12, 12)
    g = CloudFunction(grid, [0.2 + 0.1j, -0.1j])
    h = CloudFunction(grid, [0.1, 0.15 + 0.05j])
    theta, defect = weyl_cocycle_check(basis, g, h)
    assert theta == pytest.approx(-g.inner(h).imag, abs=1e-6)
    assert defect <= 1e-6


def test_leakage_decreases_with_cap(single_mode):
    g = CloudFunction(single_mode, [0.7])
    leaks = [
        weyl_operator(build_basis(single_mode, n, n), g).leakage() for n in (4, 6, 8)
    ]
    assert leaks[0] > leaks[1] > leaks[2] > 0.0


def test_leakage_tolerance_is_enforced(single_mode):
    basis = build_basis(single_mode, 2, 2)
    with pytest.raises(LeakageError) as exc:
        coherent_state(basis, CloudFunction(single_mode, [1.5]), leak_tol=1e-6)
    assert exc.value.leakage > 1e-6


def test_coherent_state_is_poissonian(line_grid):
    grid = line_grid([0.5, 1.0])
    basis = build_basis(grid, 10, 10)
    g = CloudFunction(grid, [0.5, 0.5j])
    state = coherent_state(basis, g)

    dist = state.photon_number_distribution()
    expected = scipy.stats.poisson.pmf(np.arange(11), 0.5)
    assert 0.5 * np.abs(dist - expected).sum() <= 1e-4
    assert state.expectation(number_operator(basis)) == pytest.approx(0.5, abs=1e-8)


@pytest.mark.parametrize("dimension,directions", [(1, "axes"), (3, "axes"), (3, "lebedev26"), (3, "gauss6")])
def test_grid_weights_cover_the_shell(dimension, directions):
    grid = ModeGrid.build(GridRecipe(dimension, 0.01, 1.0, 2, directions))
    area = 2.0 if dimension == 1 else 4.0 * math.pi
    volume = area * (1.0 - 0.01**dimension) / dimension
    assert grid.weights.sum() == pytest.approx(volume, rel=1e-12)
    assert np.all((grid.abs_momenta >= 0.01) & (grid.abs_momenta <= 1.0))


def test_grids_are_nested_across_cutoffs():
    coarse = ModeGrid.build(GridRecipe(3, 0.1, 1.0, 1, "axes"))
    fine = coarse.with_ir_cutoff(0.001)
    assert len(fine) == 3 * len(coarse)
    assert np.all(np.isclose(coarse.abs_momenta[:, None], fine.abs_momenta[None, :], rtol=1e-14).any(axis=1))


@pytest.mark.parametrize("name", ["axes", "lebedev14", "lebedev26", "gauss4", "gauss8"])
def test_direction_sets_integrate_quadratics(name):
    dirs, weights = direction_set(name)
    assert weights.sum() == pytest.approx(4.0 * math.pi)
    assert weights @ dirs[:, 0] ** 2 == pytest.approx(4.0 * math.pi / 3.0)
    np.testing.assert_allclose(np.linalg.norm(dirs, axis=1), 1.0)


def test_unknown_direction_set():
    with pytest.raises(BadArgument):
        direction_set("icosahedron")


def test_polarization_frame():
    e1, e2 = polarization_vectors([0.0, 0.0, 1.0])
    np.testing.assert_allclose(e1, [1.0, 0.0, 0.0])
    np.testing.assert_allclose(e2, [0.0, 1.0, 0.0])

    rng = np.random.default_rng(3)
    for k in rng.standard_normal((10, 3)):
        k /= np.linalg.norm(k)
        e1, e2 = polarization_vectors(k)
        frame = np.array([e1, e2, k])
        np.testing.assert_allclose(frame @ frame.T, np.eye(3), atol=1e-12)


def test_cloud_shell_norm_and_free_evolution(axes_grid, cloud):
    fine = axes_grid.with_ir_cutoff(0.001)
    g = cloud(fine, 1.0) * (1.0 / fine.abs_momenta**1.5)
    total = g.norm_squared()
    assert g.norm_squared(0.01, 1.0) + g.norm_squared(None, 0.01) == pytest.approx(total)
    assert g.free_evolved(3.0).norm_squared() == pytest.approx(total)


def test_cloud_rotation_and_restriction(line_grid):
    grid = line_grid([0.5, 1.0])
    g = CloudFunction(grid, [1.0, 2.0j])
    np.testing.assert_allclose(g.free_evolved(2.0).amplitudes, [np.exp(-1j), 2.0j * np.exp(-2j)])
    rotated = g.free_evolved(2.0, frequencies=[0.25, 0.0])
    np.testing.assert_allclose(rotated.amplitudes, [np.exp(-0.5j), 2.0j])
    with pytest.raises(BadArgument):
        g.free_evolved(1.0, frequencies=[1.0])

    np.testing.assert_array_equal(g.above(1.0).amplitudes, [0.0, 2.0j])
    np.testing.assert_array_equal(g.above(0.5).amplitudes, g.amplitudes)
