"""Digitized scalar fields on a periodic hypercubic lattice.

Each site carries ``k`` qubits whose computational basis state ``l`` (bits
``b_0..b_{k-1}``, ``l = sum 2**i b_i``) is the field eigenstate with value
``-phi_max + l * delta_phi``.  The qubit Pauli used for field operators is
``sigma_z = 2 b - 1``, so that

    phi(x) = phi_max / (2**k - 1) * sum_i 2**i sigma_z(x, i).

Many-body basis indices follow ``numpy.kron`` order with site 0 as the most
significant factor.  Conjugate momenta satisfy ``[phi(x), pi(y)] = i/a**d``
in the continuum, so the kinetic energy of a site is ``p**2 / (2 a**d)`` with
``p**2`` a digitization of ``-d^2/dphi^2``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import ResourceCapError, ValidationError

DEFAULT_CAP_DIM = 2**26
SCHEMES = ("finite_difference", "spectral")


@dataclass(frozen=True)
class LatticeGeometry:
    d: int = 1
    sites_per_dim: int = 2
    a: float = 1.0
    periodic: bool = True

    def __post_init__(self):
        if self.d < 1 or self.sites_per_dim < 1:
            raise ValidationError("need d >= 1 and sites_per_dim >= 1")
        if not self.a > 0:
            raise ValidationError(f"lattice spacing must be positive, got {self.a}")
        if not self.periodic:
            raise ValidationError("only periodic boundaries are supported")

    @property
    def n_sites(self) -> int:
        return self.sites_per_dim**self.d

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.sites_per_dim,) * self.d

    def coords(self, site: int) -> tuple[int, ...]:
        self.check_site(site)
        return tuple(int(c) for c in np.unravel_index(site, self.shape))

    def site_index(self, coords) -> int:
        wrapped = [int(c) % self.sites_per_dim for c in coords]
        return int(np.ravel_multi_index(wrapped, self.shape))

    def neighbor(self, site: int, axis: int, step: int = 1) -> int:
        c = list(self.coords(site))
        c[axis] += step
        return self.site_index(c)

    def positions(self) -> np.ndarray:
        """Physical coordinates, shape (n_sites, d)."""
        idx = np.array(np.unravel_index(np.arange(self.n_sites), self.shape)).T
        return self.a * idx.astype(float)

    def check_site(self, site: int):
        if not 0 <= site < self.n_sites:
            raise ValidationError(f"site {site} out of range for {self.n_sites} sites")


@dataclass(frozen=True)
class FieldDigitization:
    k: int
    phi_max: float

    def __post_init__(self):
        if self.k < 1:
            raise ValidationError(f"need k >= 1 qubits per site, got {self.k}")
        if not self.phi_max > 0:
            raise ValidationError(f"phi_max must be positive, got {self.phi_max}")

    @property
    def levels(self) -> int:
        return 2**self.k

    @property
    def delta_phi(self) -> float:
        return 2.0 * self.phi_max / (self.levels - 1)

    @property
    def pauli_weight(self) -> float:
        """Coefficient phi_max/(2**k - 1) multiplying ``2**i sigma_z``."""
        return self.phi_max / (self.levels - 1)

    @property
    def grid(self) -> np.ndarray:
        return -self.phi_max + self.delta_phi * np.arange(self.levels)

    def sigma_z(self, bit: int) -> np.ndarray:
        """Local eigenvalues of the bit-``bit`` Pauli over the 2**k levels."""
        if not 0 <= bit < self.k:
            raise ValidationError(f"bit {bit} out of range for k={self.k}")
        return 2.0 * ((np.arange(self.levels) >> bit) & 1) - 1.0


@dataclass(frozen=True)
class TheorySpec:
    """On-site potential ``m0_sq phi^2/2 + lambda4 phi^4/4! + lambda6_minus_4 (phi^6 - phi^4)``."""

    m0_sq: float = 1.0
    lambda4: float = 0.0
    lambda6_minus_4: float = 0.0

    def __post_init__(self):
        if self.lambda4 != 0 and self.lambda6_minus_4 != 0:
            raise ValidationError("phi^4 and phi^6-phi^4 couplings are mutually exclusive")
        if self.lambda4 < 0 or self.lambda6_minus_4 < 0:
            raise ValidationError("negative leading coupling gives a potential unbounded below")

    @property
    def is_free(self) -> bool:
        return self.lambda4 == 0 and self.lambda6_minus_4 == 0

    def onsite(self, phi):
        phi = np.asarray(phi, dtype=float)
        v = 0.5 * self.m0_sq * phi**2 + self.lambda4 * phi**4 / 24.0
        if self.lambda6_minus_4:
            v = v + self.lambda6_minus_4 * (phi**6 - phi**4)
        return v

    def onsite_derivative(self, phi):
        phi = np.asarray(phi, dtype=float)
        dv = self.m0_sq * phi + self.lambda4 * phi**3 / 6.0
        if self.lambda6_minus_4:
            dv = dv + self.lambda6_minus_4 * (6 * phi**5 - 4 * phi**3)
        return dv

    def onsite_second_derivative(self, phi):
        phi = np.asarray(phi, dtype=float)
        d2v = self.m0_sq + self.lambda4 * phi**2 / 2.0
        if self.lambda6_minus_4:
            d2v = d2v + self.lambda6_minus_4 * (30 * phi**4 - 12 * phi**2)
        return d2v

    def free(self) -> "TheorySpec":
        return TheorySpec(m0_sq=self.m0_sq)


def check_dimension(dim: int, cap_dim: int = DEFAULT_CAP_DIM):
    if dim > cap_dim:
        raise ResourceCapError(f"Hilbert-space dimension {dim} exceeds cap {cap_dim}")


def hilbert_dim(geom: LatticeGeometry, digit: FieldDigitization) -> int:
    return digit.levels**geom.n_sites


def level_indices(geom: LatticeGeometry, digit: FieldDigitization) -> np.ndarray:
    """Local level of every site for every basis state, shape (n_sites, dim)."""
    n, V = digit.levels, geom.n_sites
    idx = np.arange(n**V)
    powers = n ** np.arange(V - 1, -1, -1)
    return (idx[None, :] // powers[:, None]) % n


def _field_diag(geom, digit, site):
    geom.check_site(site)
    n, V = digit.levels, geom.n_sites
    idx = np.arange(n**V)
    level = (idx // n ** (V - 1 - site)) % n
    return digit.grid[level]


def pauli_z_diag(geom: LatticeGeometry, digit: FieldDigitization, site: int, bit: int) -> np.ndarray:
    """Diagonal of sigma_z on qubit ``bit`` of ``site`` in the many-body basis."""
    geom.check_site(site)
    n, V = digit.levels, geom.n_sites
    level = (np.arange(n**V) // n ** (V - 1 - site)) % n
    return digit.sigma_z(bit)[level]


def field_diag_from_paulis(geom, digit, site) -> np.ndarray:
    w = digit.pauli_weight
    return w * sum(2**i * pauli_z_diag(geom, digit, site, i) for i in range(digit.k))


def build_field_op(geom: LatticeGeometry, digit: FieldDigitization, site: int) -> sp.csr_matrix:
    """phi(site) assembled from its Pauli-Z expansion."""
    return sp.diags(field_diag_from_paulis(geom, digit, site)).tocsr()


def field_sq_shift(digit: FieldDigitization) -> float:
    """Constant removed from phi^2: the i == j terms of the double Pauli sum."""
    return digit.pauli_weight**2 * sum(4**i for i in range(digit.k))


def field_sq_shifted_diag(geom, digit, site) -> np.ndarray:
    w2 = digit.pauli_weight**2
    zs = [pauli_z_diag(geom, digit, site, i) for i in range(digit.k)]
    out = np.zeros(hilbert_dim(geom, digit))
    for i in range(digit.k):
        for j in range(digit.k):
            if i != j:
                out += w2 * 2 ** (i + j) * zs[i] * zs[j]
    return out


def build_field_sq_shifted(geom: LatticeGeometry, digit: FieldDigitization, site: int) -> sp.csr_matrix:
    return sp.diags(field_sq_shifted_diag(geom, digit, site)).tocsr()


def local_momentum_sq(digit: FieldDigitization, scheme: str = "finite_difference") -> np.ndarray:
    """Single-site digitization of -d^2/dphi^2 on the 2**k field levels."""
    n, h = digit.levels, digit.delta_phi
    if scheme == "finite_difference":
        return (2.0 * np.eye(n) - np.eye(n, k=1) - np.eye(n, k=-1)) / h**2
    if scheme == "spectral":
        p = 2 * np.pi * np.fft.fftfreq(n, d=h)
        F = np.fft.fft(np.eye(n), axis=0) / np.sqrt(n)
        K = (F.conj().T @ np.diag(p**2) @ F).real
        return 0.5 * (K + K.T)
    raise ValidationError(f"unknown momentum scheme {scheme!r}; expected one of {SCHEMES}")


def local_momentum(digit: FieldDigitization, scheme: str = "finite_difference") -> np.ndarray:
    """Single-site momentum p = -i d/dphi consistent with ``scheme``.

    For the spectral scheme ``p @ p`` reproduces ``local_momentum_sq`` exactly;
    the finite-difference variant is the central difference with hard walls.
    """
    n, h = digit.levels, digit.delta_phi
    if scheme == "finite_difference":
        return -1j * (np.eye(n, k=1) - np.eye(n, k=-1)) / (2 * h)
    if scheme == "spectral":
        q = 2 * np.pi * np.fft.fftfreq(n, d=h)
        if n % 2 == 0:
            q[n // 2] = 0.0  # Nyquist mode has no definite sign
        F = np.fft.fft(np.eye(n), axis=0) / np.sqrt(n)
        P = F.conj().T @ np.diag(q) @ F
        return 0.5 * (P + P.conj().T)
    raise ValidationError(f"unknown momentum scheme {scheme!r}; expected one of {SCHEMES}")


def embed_local(op, site: int, n_sites: int) -> sp.csr_matrix:
    n = op.shape[0]
    left = sp.identity(n**site, format="csr")
    right = sp.identity(n ** (n_sites - 1 - site), format="csr")
    return sp.kron(sp.kron(left, sp.csr_matrix(op)), right, format="csr")


def build_momentum_sq(geom: LatticeGeometry, digit: FieldDigitization, site: int,
                      scheme: str = "finite_difference") -> sp.csr_matrix:
    geom.check_site(site)
    return embed_local(local_momentum_sq(digit, scheme), site, geom.n_sites)


def gradient_diagonal(geom: LatticeGeometry, digit: FieldDigitization) -> np.ndarray:
    """a^d * sum_x sum_i ((phi(x+r_i) - phi(x))/a)^2 / 2 as a diagonal."""
    fields = [_field_diag(geom, digit, x) for x in range(geom.n_sites)]
    out = np.zeros(hilbert_dim(geom, digit))
    for x in range(geom.n_sites):
        for axis in range(geom.d):
            y = geom.neighbor(x, axis)
            out += 0.5 * (fields[y] - fields[x]) ** 2 / geom.a**2
    return geom.a**geom.d * out


def potential_diagonal(geom: LatticeGeometry, digit: FieldDigitization, spec: TheorySpec) -> np.ndarray:
    """H_phi: gradient plus on-site terms, diagonal in the field basis."""
    onsite = sum(spec.onsite(_field_diag(geom, digit, x)) for x in range(geom.n_sites))
    return gradient_diagonal(geom, digit) + geom.a**geom.d * onsite


def kinetic_op(geom: LatticeGeometry, digit: FieldDigitization,
               scheme: str = "finite_difference") -> sp.csr_matrix:
    """H_pi = sum_x a^d pi(x)^2 / 2 = sum_x p(x)^2 / (2 a^d)."""
    K = local_momentum_sq(digit, scheme) / (2 * geom.a**geom.d)
    return sum(embed_local(K, x, geom.n_sites) for x in range(geom.n_sites)).tocsr()


def assemble_hamiltonian(geom: LatticeGeometry, digit: FieldDigitization, spec: TheorySpec,
                         scheme: str = "finite_difference",
                         cap_dim: int = DEFAULT_CAP_DIM) -> sp.csr_matrix:
    check_dimension(hilbert_dim(geom, digit), cap_dim)
    H = kinetic_op(geom, digit, scheme) + sp.diags(potential_diagonal(geom, digit, spec))
    return H.tocsr()


def _permutation(perm: np.ndarray) -> sp.csr_matrix:
    """Matrix sending basis state j to basis state perm[j]."""
    D = perm.size
    return sp.csr_matrix((np.ones(D), (perm, np.arange(D))), shape=(D, D))


def build_parity_op(geom: LatticeGeometry, digit: FieldDigitization) -> sp.csr_matrix:
    """phi -> -phi on every site, i.e. level l -> 2**k - 1 - l."""
    D = hilbert_dim(geom, digit)
    return _permutation(D - 1 - np.arange(D))


def build_translation_op(geom: LatticeGeometry, digit: FieldDigitization, axis: int = 0) -> sp.csr_matrix:
    """Cyclic shift with T phi(x) T^dagger = phi(x - r_axis).

    A plane wave sum_x exp(i q x) phi(x)|vac> then has eigenvalue exp(i q a).
    """
    levels = level_indices(geom, digit)
    source = [geom.neighbor(y, axis, +1) for y in range(geom.n_sites)]
    new_levels = levels[source]
    n, V = digit.levels, geom.n_sites
    powers = n ** np.arange(V - 1, -1, -1)
    return _permutation(powers @ new_levels)


def export_coo(op, path) -> Path:
    """Write an operator as whitespace-separated ``row col re im`` lines."""
    coo = sp.coo_matrix(op)
    path = Path(path)
    with path.open("w") as fh:
        fh.write("# row col re im\n")
        for r, c, v in zip(coo.row, coo.col, coo.data.astype(complex)):
            fh.write(f"{r} {c} {v.real:.17g} {v.imag:.17g}\n")
    return path


@dataclass
class LatticeModel:
    """Geometry, digitization and theory with lazily built operators."""

    geom: LatticeGeometry
    digit: FieldDigitization
    spec: TheorySpec
    scheme: str = "finite_difference"
    cap_dim: int = DEFAULT_CAP_DIM
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValidationError(f"unknown momentum scheme {self.scheme!r}")
        check_dimension(self.dim, self.cap_dim)

    @property
    def dim(self) -> int:
        return hilbert_dim(self.geom, self.digit)

    @property
    def n_sites(self) -> int:
        return self.geom.n_sites

    @cached_property
    def local_kinetic(self) -> np.ndarray:
        return local_momentum_sq(self.digit, self.scheme) / (2 * self.geom.a**self.geom.d)

    @cached_property
    def kinetic(self) -> sp.csr_matrix:
        return kinetic_op(self.geom, self.digit, self.scheme)

    @cached_property
    def potential(self) -> np.ndarray:
        return potential_diagonal(self.geom, self.digit, self.spec)

    @cached_property
    def hamiltonian(self) -> sp.csr_matrix:
        return (self.kinetic + sp.diags(self.potential)).tocsr()

    @cached_property
    def field_diags(self) -> list[np.ndarray]:
        return [field_diag_from_paulis(self.geom, self.digit, x) for x in range(self.n_sites)]

    def field_op(self, site: int) -> sp.csr_matrix:
        return sp.diags(self.field_diags[site]).tocsr()

    @cached_property
    def parity(self) -> sp.csr_matrix:
        return build_parity_op(self.geom, self.digit)

    @cached_property
    def translation(self) -> sp.csr_matrix:
        return build_translation_op(self.geom, self.digit)

    def with_spec(self, spec: TheorySpec) -> "LatticeModel":
        return LatticeModel(self.geom, self.digit, spec, self.scheme, self.cap_dim)
