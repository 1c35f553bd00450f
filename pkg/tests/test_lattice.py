import numpy as np
import pytest
import scipy.sparse as sp
from functools import reduce
from hypothesis import given, settings, strategies as st

from hrsim.errors import ResourceCapError, ValidationError
from hrsim.lattice import (FieldDigitization, LatticeGeometry, LatticeModel, TheorySpec,
                           assemble_hamiltonian, build_field_op, build_field_sq_shifted,
                           build_momentum_sq, build_parity_op, build_translation_op, export_coo,
                           field_diag_from_paulis, field_sq_shift, gradient_diagonal,
                           local_momentum_sq)
from hrsim.spectral import ground_state, lattice_dispersion


def dense(A):
    return A.toarray() if sp.issparse(A) else np.asarray(A)


def explicit_field(V, k, phi_max, site):
    """Oracle: kron of the explicit level grid at one site."""
    n = 2**k
    grid = np.linspace(-phi_max, phi_max, n)
    ops = [np.diag(grid) if s == site else np.eye(n) for s in range(V)]
    return reduce(np.kron, ops)


def test_field_op_levels_k1():
    g = LatticeGeometry(1, 1)
    phi = dense(build_field_op(g, FieldDigitization(1, 1.0), 0))
    assert np.allclose(np.diag(phi), [-1.0, 1.0])


def test_field_op_levels_k2():
    g = LatticeGeometry(1, 1)
    phi = dense(build_field_op(g, FieldDigitization(2, 3.0), 0))
    assert np.allclose(np.sort(np.diag(phi)), [-3, -1, 1, 3])


def test_field_op_pauli_sum_matches_oracle():
    g, d = LatticeGeometry(1, 2), FieldDigitization(2, 3.0)
    for site in range(2):
        phi = dense(build_field_op(g, d, site))
        assert np.abs(phi - explicit_field(2, 2, 3.0, site)).max() < 1e-14
        assert np.abs(field_diag_from_paulis(g, d, site) - np.diag(phi)).max() < 1e-14


def test_field_op_bad_site():
    with pytest.raises(ValidationError):
        build_field_op(LatticeGeometry(1, 2), FieldDigitization(2, 1.0), 2)


def test_field_sq_shifted_k1_is_zero():
    op = dense(build_field_sq_shifted(LatticeGeometry(1, 1), FieldDigitization(1, 2.0), 0))
    assert np.all(op == 0)


def test_field_sq_shifted_k2_values():
    d = FieldDigitization(2, 3.0)
    assert np.isclose(field_sq_shift(d), 5.0)
    op = np.diag(dense(build_field_sq_shifted(LatticeGeometry(1, 1), d, 0)))
    # levels -3, -1, 1, 3
    assert np.allclose(op, [4, -4, -4, 4])


@settings(max_examples=15, deadline=None)
@given(k=st.integers(1, 5), phi_max=st.floats(0.1, 10.0))
def test_field_sq_shift_identity(k, phi_max):
    g, d = LatticeGeometry(1, 1), FieldDigitization(k, phi_max)
    phi = dense(build_field_op(g, d, 0))
    shifted = dense(build_field_sq_shifted(g, d, 0))
    assert np.abs(shifted + field_sq_shift(d) * np.eye(2**k) - phi @ phi).max() < 1e-12 * max(1, phi_max**2)


def test_momentum_sq_fd_stencil():
    d = FieldDigitization(2, 3.0)
    K = dense(build_momentum_sq(LatticeGeometry(1, 1), d, 0, "finite_difference"))
    h2 = d.delta_phi**2
    assert np.allclose(np.diag(K), 2 / h2)
    assert np.allclose(np.diag(K, 1), -1 / h2)
    assert np.allclose(np.diag(K, -1), -1 / h2)
    assert np.all(np.triu(K, 2) == 0)


def test_momentum_sq_bad_scheme():
    with pytest.raises(ValidationError):
        local_momentum_sq(FieldDigitization(2, 1.0), "chebyshev")


@pytest.mark.parametrize("scheme", ["finite_difference", "spectral"])
def test_momentum_sq_psd(scheme):
    K = local_momentum_sq(FieldDigitization(4, 3.0), scheme)
    assert np.allclose(K, K.conj().T)
    assert np.linalg.eigvalsh(K).min() > -1e-10


@pytest.mark.parametrize("scheme", ["finite_difference", "spectral"])
def test_harmonic_single_site(scheme):
    m = LatticeModel(LatticeGeometry(1, 1), FieldDigitization(7, 6.0), TheorySpec(1.0), scheme)
    E0, _ = ground_state(m.hamiltonian)
    assert abs(E0 - 0.5) < 1e-3


def test_harmonic_schemes_agree():
    E = [ground_state(LatticeModel(LatticeGeometry(1, 1), FieldDigitization(7, 6.0),
                                   TheorySpec(1.0), s).hamiltonian)[0]
         for s in ("finite_difference", "spectral")]
    assert abs(E[0] - E[1]) < 1e-3
    # frozen from the dense solve
    assert np.isclose(E[0], 0.49972, atol=1e-5)


def test_hamiltonian_hermitian_and_translation():
    g, d = LatticeGeometry(1, 2), FieldDigitization(2, 2.0)
    H = dense(assemble_hamiltonian(g, d, TheorySpec(1.0)))
    T = dense(build_translation_op(g, d))
    assert np.abs(H - H.conj().T).max() < 1e-12
    assert np.abs(H @ T - T @ H).max() < 1e-12


def test_hamiltonian_matches_kron_oracle():
    V, k, pm, a = 3, 2, 1.5, 0.7
    g, d = LatticeGeometry(1, V, a), FieldDigitization(k, pm)
    spec = TheorySpec(0.8, lambda4=1.3)
    H = dense(assemble_hamiltonian(g, d, spec))
    n = 2**k
    K = local_momentum_sq(d)
    phis = [explicit_field(V, k, pm, s) for s in range(V)]
    ref = np.zeros((n**V, n**V))
    for x in range(V):
        ops = [K if s == x else np.eye(n) for s in range(V)]
        ref += reduce(np.kron, ops) / (2 * a)
        y = (x + 1) % V
        D = phis[y] - phis[x]
        ref += a * (0.5 * D @ D / a**2 + 0.5 * 0.8 * phis[x] @ phis[x]
                    + 1.3 / 24 * np.linalg.matrix_power(phis[x], 4))
    assert np.abs(H - ref).max() < 1e-11


def test_free_dispersion_v2():
    g, d = LatticeGeometry(1, 2), FieldDigitization(4, 6.0)
    H = dense(assemble_hamiltonian(g, d, TheorySpec(1.0), "spectral"))
    w = np.linalg.eigvalsh(H)
    P = dense(build_parity_op(g, d))
    # odd states carry the single-particle band
    vals, vecs = np.linalg.eigh(H)
    par = np.einsum("ij,ij->j", vecs, P @ vecs)
    odd = (vals[par < 0] - w[0])[:2]
    assert np.allclose(odd, lattice_dispersion(np.array([0.0, np.pi]), 1.0), atol=5e-2)


def test_gradient_vanishes_on_uniform_states():
    g, d = LatticeGeometry(1, 2), FieldDigitization(3, 2.0)
    grad = gradient_diagonal(g, d)
    for lvl in range(8):
        idx = lvl * 8 + lvl
        assert grad[idx] == 0


def test_parity_properties():
    g, d = LatticeGeometry(1, 2), FieldDigitization(2, 3.0)
    P = dense(build_parity_op(g, d))
    assert np.array_equal(P @ P, np.eye(16))
    for s in range(2):
        phi = dense(build_field_op(g, d, s))
        assert np.abs(P @ phi @ P + phi).max() < 1e-14
    for scheme in ("finite_difference", "spectral"):
        K = dense(build_momentum_sq(g, d, 0, scheme))
        assert np.abs(P @ K @ P - K).max() < 1e-12
    H = dense(assemble_hamiltonian(g, d, TheorySpec(1.0, lambda4=2.0)))
    assert np.abs(H @ P - P @ H).max() < 1e-12


def test_translation_properties():
    g, d = LatticeGeometry(1, 3), FieldDigitization(2, 1.0)
    T = dense(build_translation_op(g, d))
    assert np.allclose(np.linalg.matrix_power(T, 3), np.eye(64))
    ev = np.linalg.eigvals(T)
    roots = np.exp(2j * np.pi * np.arange(3) / 3)
    counts = [np.sum(np.abs(ev - r) < 1e-8) for r in roots]
    # 4 uniform states are fixed, the other 60 form 20 three-cycles
    assert counts == [24, 20, 20]
    phi0, phi1 = dense(build_field_op(g, d, 0)), dense(build_field_op(g, d, 1))
    assert np.allclose(T @ phi1 @ T.T, phi0)


def test_field_ops_commute():
    g, d = LatticeGeometry(1, 3), FieldDigitization(2, 1.0)
    a, b = dense(build_field_op(g, d, 0)), dense(build_field_op(g, d, 2))
    assert np.array_equal(a @ b, b @ a)


def test_dimension_cap():
    with pytest.raises(ResourceCapError):
        assemble_hamiltonian(LatticeGeometry(1, 4), FieldDigitization(3, 1.0), TheorySpec(), cap_dim=1000)


def test_invalid_inputs():
    with pytest.raises(ValidationError):
        FieldDigitization(0, 1.0)
    with pytest.raises(ValidationError):
        TheorySpec(1.0, lambda4=-1.0)
    with pytest.raises(ValidationError):
        TheorySpec(1.0, lambda4=1.0, lambda6_minus_4=1.0)
    with pytest.raises(ValidationError):
        LatticeGeometry(1, 2, periodic=False)


def test_free_gap_tolerance_shrinks_with_k():
    g = LatticeGeometry(1, 2)
    errs = []
    for k in (3, 4, 5):
        H = dense(assemble_hamiltonian(g, FieldDigitization(k, 6.0), TheorySpec(1.0), "spectral"))
        P = dense(build_parity_op(g, FieldDigitization(k, 6.0)))
        vals, vecs = np.linalg.eigh(H)
        par = np.einsum("ij,ij->j", vecs, P @ vecs)
        odd = (vals[par < 0] - vals[0])[:2]
        errs.append(np.abs(odd - lattice_dispersion(np.array([0.0, np.pi]), 1.0)).max())
    assert errs[0] > errs[1] > errs[2]


def test_export_coo(tmp_path):
    op = build_field_op(LatticeGeometry(1, 1), FieldDigitization(1, 1.0), 0)
    path = export_coo(op, tmp_path / "phi.txt")
    lines = path.read_text().splitlines()
    assert lines[0].startswith("#")
    assert lines[1].split() == ["0", "0", "-1", "0"]
