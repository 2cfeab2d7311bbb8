import numpy as np
import pytest
import scipy.linalg
import scipy.sparse as sp

from lab.errors import BadArgument, ConvergenceError
from lab.fock import CloudFunction, FockVector, SparseOperator, build_basis, free_photon_hamiltonian, smeared_field_ops, vacuum
from lab.spectral import dense_evolve, dense_lowest_eigenpair, evolve, exp_antihermitian_apply, lowest_eigenpair


@pytest.fixture
def basis(line_grid):
    return build_basis(line_grid([0.25, 0.5, 1.0]), 4, 4)


def random_hermitian(basis, seed=11):
    rng = np.random.default_rng(seed)
    m = rng.standard_normal((basis.size, basis.size)) + 1j * rng.standard_normal((basis.size, basis.size))
    return SparseOperator(basis, sp.csr_matrix((m + m.conj().T) / 2.0), hermitian=True)


def random_vector(basis, seed=5):
    rng = np.random.default_rng(seed)
    return FockVector(basis, rng.standard_normal(basis.size) + 1j * rng.standard_normal(basis.size)).normalize()


def test_free_ground_state_is_vacuum(basis):
    result = lowest_eigenpair(free_photon_hamiltonian(basis), tol=1e-10)
    assert result.eigenvalue == pytest.approx(0.0, abs=1e-10)
    assert result.residual <= 1e-10
    assert abs(vacuum(basis).inner(result.eigenvector)) == pytest.approx(1.0, abs=1e-8)


def test_lanczos_matches_dense(basis):
    H = random_hermitian(basis)
    sparse = lowest_eigenpair(H, tol=1e-10, seed=3)
    dense = dense_lowest_eigenpair(H)
    assert sparse.eigenvalue == pytest.approx(dense.eigenvalue, abs=1e-8)
    assert abs(dense.eigenvector.inner(sparse.eigenvector)) == pytest.approx(1.0, abs=1e-8)
    assert sparse.eigenvector.normalized


def test_lanczos_is_deterministic(basis):
    H = random_hermitian(basis)
    a, b = lowest_eigenpair(H, seed=9), lowest_eigenpair(H, seed=9)
    assert a.eigenvalue == b.eigenvalue
    assert a.iterations == b.iterations
    np.testing.assert_array_equal(a.eigenvector.amplitudes, b.eigenvector.amplitudes)


def test_lanczos_reports_best_residual(basis):
    with pytest.raises(ConvergenceError) as exc:
        lowest_eigenpair(random_hermitian(basis), tol=1e-14, max_iter=2)
    assert exc.value.best_residual > 1e-14
    assert exc.value.iterations == 2


def test_hermitian_flag_is_required(basis):
    H = random_hermitian(basis)
    with pytest.raises(BadArgument):
        lowest_eigenpair(SparseOperator(basis, H.matrix))
    with pytest.raises(BadArgument):
        evolve(SparseOperator(basis, H.matrix), vacuum(basis), 1.0)


def test_evolution_matches_dense(basis):
    H = random_hermitian(basis) * 0.1
    psi = random_vector(basis)
    krylov = evolve(H, psi, 2.0, tol=1e-10)
    exact = dense_evolve(H, psi, 2.0)
    np.testing.assert_allclose(krylov.vector.amplitudes, exact.vector.amplitudes, atol=1e-8)
    assert krylov.vector.norm() == pytest.approx(1.0, abs=1e-10)
    assert krylov.steps >= 1


def test_evolution_at_zero_time_and_reversal(basis):
    H = random_hermitian(basis) * 0.1
    psi = random_vector(basis)
    still = evolve(H, psi, 0.0)
    np.testing.assert_array_equal(still.vector.amplitudes, psi.amplitudes)
    assert still.steps == 0

    there = evolve(H, psi, 1.5).vector
    back = evolve(H, there, -1.5).vector
    np.testing.assert_allclose(back.amplitudes, psi.amplitudes, atol=1e-8)


def test_antihermitian_exponential(basis):
    g = CloudFunction(basis.grid, [0.2, -0.1j, 0.3])
    up, down = smeared_field_ops(basis, g)
    psi = vacuum(basis)
    result = exp_antihermitian_apply(up, down, psi)
    expected = scipy.linalg.expm((up.matrix - down.matrix).toarray()) @ psi.amplitudes
    np.testing.assert_allclose(result.vector.amplitudes, expected, atol=1e-10)

    with pytest.raises(BadArgument):
        exp_antihermitian_apply(up, up, psi)
