"""Exact and first-order Trotter evolution, commutator norms, adiabatic ramps.

States may carry leading batch axes; the last axis is always the
field-basis index of the system register.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ValidationError
from .lattice import LatticeModel, TheorySpec, embed_local, local_momentum
from .spectral import DENSE_MAX_DIM, ground_state


def _dense(A) -> np.ndarray:
    return A.toarray() if sp.issparse(A) else np.asarray(A)


def hermitian_norm(A) -> float:
    """Spectral norm of a Hermitian matrix."""
    if A.shape[0] <= DENSE_MAX_DIM:
        ev = la.eigvalsh(_dense(A))
        return float(np.max(np.abs(ev))) if ev.size else 0.0
    ev = spla.eigsh(sp.csr_matrix(A), k=1, which="LM", return_eigenvectors=False)
    return float(abs(ev[0]))


class ExactPropagator:
    """exp(-iHt) from a dense eigendecomposition, or Krylov above the dense limit."""

    kind = "exact"

    def __init__(self, H, dense_max: int = DENSE_MAX_DIM):
        self.H = H
        self.dim = H.shape[0]
        self.dense = self.dim <= dense_max
        if self.dense:
            self.energies, self.basis = la.eigh(_dense(H))

    def to_eigbasis(self, state):
        return state @ self.basis.conj()

    def from_eigbasis(self, coeffs):
        return coeffs @ self.basis.T

    def evolve(self, state, t: float):
        state = np.asarray(state, dtype=complex)
        if t == 0:
            return state.copy()
        if self.dense:
            c = self.to_eigbasis(state) * np.exp(-1j * self.energies * t)
            return self.from_eigbasis(c)
        flat = state.reshape(-1, self.dim).T
        out = spla.expm_multiply(-1j * t * sp.csr_matrix(self.H), flat)
        return out.T.reshape(state.shape)


class TrotterPropagator:
    """First-order product formula (exp(-i H_pi h) exp(-i H_phi h))^n.

    ``H_phi`` is diagonal in the field basis and ``H_pi`` is a sum of
    single-site terms, so each factor is applied exactly.  ``step`` fixes
    the Trotter step length; a call with time ``t`` then uses
    ``ceil(|t|/step)`` equal steps.  Without ``step`` each call uses
    ``n_steps`` steps.
    """

    kind = "trotter1"

    def __init__(self, model: LatticeModel, n_steps: int = 1, step: Optional[float] = None):
        if n_steps < 1:
            raise ValidationError("n_steps must be positive")
        self.model = model
        self.n_steps = int(n_steps)
        self.step = step
        self.dim = model.dim
        self._kin_w, self._kin_v = la.eigh(model.local_kinetic)
        self._pot = model.potential

    def steps_for(self, t: float) -> int:
        if self.step is not None:
            return max(1, math.ceil(abs(t) / self.step - 1e-12))
        return self.n_steps

    def _apply_kinetic(self, state, h):
        n, V = self.model.digit.levels, self.model.n_sites
        U = (self._kin_v * np.exp(-1j * self._kin_w * h)) @ self._kin_v.conj().T
        batch = state.shape[:-1]
        psi = state.reshape(batch + (n,) * V)
        nb = len(batch)
        for x in range(V):
            psi = np.moveaxis(np.tensordot(U, psi, axes=([1], [nb + x])), 0, nb + x)
        return psi.reshape(state.shape)

    def evolve(self, state, t: float, n_steps: Optional[int] = None):
        state = np.asarray(state, dtype=complex)
        if t == 0:
            return state.copy()
        n = n_steps or self.steps_for(t)
        h = t / n
        phase = np.exp(-1j * self._pot * h)
        out = state
        for _ in range(n):
            out = self._apply_kinetic(out * phase, h)
        return out


def make_backend(model: LatticeModel, kind: str = "exact", n_steps: int = 1,
                 step: Optional[float] = None):
    if kind == "exact":
        return ExactPropagator(model.hamiltonian)
    if kind in ("trotter", "trotter1"):
        return TrotterPropagator(model, n_steps=n_steps, step=step)
    raise ValidationError(f"unknown evolution backend {kind!r}")


def evolve(state, H_or_backend, t: float):
    """Apply exp(-iHt) with an operator or a prepared backend."""
    backend = H_or_backend if hasattr(H_or_backend, "evolve") else ExactPropagator(H_or_backend)
    return backend.evolve(state, t)


def trotter_error_bound(t: float, n_steps: int, commutator_norm: float) -> float:
    """||U_trotter - U|| <= t^2 ||[H_phi, H_pi]|| / (2 n)."""
    return t**2 * commutator_norm / (2 * n_steps)


def required_trotter_steps(T: float, eps: float, commutator_norm: float) -> int:
    """N_ST = ceil(T^2 ||[H_phi, H_pi]|| / eps), with unit prefactor."""
    if T <= 0 or eps <= 0 or commutator_norm < 0:
        raise ValidationError("need T > 0, eps > 0, norm >= 0")
    return max(1, math.ceil(T**2 * commutator_norm / eps))


# ---------------------------------------------------------------- commutators

def analytic_double_commutator(model: LatticeModel, site: int) -> np.ndarray:
    """Diagonal of (1/a^2) sum_i [2 phi(x) - phi(x+r_i) - phi(x-r_i)] + V'(phi(x))."""
    g = model.geom
    phi = model.field_diags
    out = model.spec.onsite_derivative(phi[site]).astype(float)
    for axis in range(g.d):
        fwd = g.neighbor(site, axis, +1)
        bwd = g.neighbor(site, axis, -1)
        out = out + (2 * phi[site] - phi[fwd] - phi[bwd]) / g.a**2
    return out


@dataclass
class CommutatorCheck:
    direct_norm: float
    analytic_norm: float
    max_entry_diff: float
    norm_diff: float

    @property
    def relative_diff(self) -> float:
        return abs(self.direct_norm - self.analytic_norm) / max(self.analytic_norm, 1e-300)


def double_commutator_norm(H, model: LatticeModel, site: int = 0) -> CommutatorCheck:
    """Direct [H,[H,phi(x)]] against its canonical-commutator closed form."""
    model.geom.check_site(site)
    Hd = _dense(H)
    phi = model.field_diags[site]
    c1 = Hd * phi[None, :] - phi[:, None] * Hd
    c2 = Hd @ c1 - c1 @ Hd
    ana = np.diag(analytic_double_commutator(model, site))
    diff = c2 - ana
    return CommutatorCheck(
        direct_norm=hermitian_norm(0.5 * (c2 + c2.conj().T)),
        analytic_norm=float(np.max(np.abs(np.diag(ana)))),
        max_entry_diff=float(np.max(np.abs(diff))),
        norm_diff=hermitian_norm(0.5 * (diff + diff.conj().T)),
    )


def analytic_field_pi_commutator(model: LatticeModel) -> sp.csr_matrix:
    """(i/2) sum_x (p_x D_x + D_x p_x) with D_x the closed-form double commutator.

    ``p_x`` is the single-site momentum of the model's scheme, so the
    expression equals [H_phi, H_pi] exactly when [phi, p] = i holds.
    """
    p_loc = local_momentum(model.digit, model.scheme)
    out = sp.csr_matrix((model.dim, model.dim), dtype=complex)
    for x in range(model.n_sites):
        P = embed_local(p_loc, x, model.n_sites)
        D = sp.diags(analytic_double_commutator(model, x))
        out = out + 0.5j * (P @ D + D @ P)
    return out.tocsr()


@dataclass
class FieldPiCommutator:
    direct_norm: float
    analytic_norm: float
    canonical_error: float  # ||direct - analytic||
    ccr_defect: float  # ||[phi, p] - i|| on one site

    @property
    def relative_diff(self) -> float:
        return abs(self.direct_norm - self.analytic_norm) / max(self.direct_norm, 1e-300)


def field_pi_commutator_norm(H_phi, H_pi, model: Optional[LatticeModel] = None):
    """||[H_phi, H_pi]|| from the matrices; with ``model`` also the closed form.

    ``H_phi`` may be given as its diagonal.
    """
    Hp = _dense(H_pi)
    diag = np.asarray(H_phi.diagonal() if sp.issparse(H_phi) else H_phi)
    if diag.ndim == 2:
        diag = np.diag(diag)
    C = diag[:, None] * Hp - Hp * diag[None, :]
    direct = hermitian_norm(1j * C)
    if model is None:
        return direct
    A = _dense(analytic_field_pi_commutator(model))
    p_loc = local_momentum(model.digit, model.scheme)
    grid = model.digit.grid
    ccr = grid[:, None] * p_loc - p_loc * grid[None, :] - 1j * np.eye(len(grid))
    return FieldPiCommutator(
        direct_norm=direct,
        analytic_norm=hermitian_norm(1j * A),
        canonical_error=hermitian_norm(1j * (C - A)),
        ccr_defect=float(np.linalg.norm(ccr, 2)),
    )


def model_field_pi_commutator(model: LatticeModel, with_analytic: bool = True):
    return field_pi_commutator_norm(model.potential, model.kinetic, model if with_analytic else None)


# ---------------------------------------------------------------- adiabatic

SCHEDULES = {
    "linear": lambda s: s,
    "quadratic": lambda s: s * s,
    "smoothstep": lambda s: s * s * (3 - 2 * s),
}


@dataclass
class AdiabaticPath:
    """Interpolation start -> target of all couplings along f(s), s = t/tau."""

    start: TheorySpec
    target: TheorySpec
    total_time: float
    dt: float = 0.1
    schedule: str = "linear"
    backend: str = "exact"

    def __post_init__(self):
        if self.schedule not in SCHEDULES:
            raise ValidationError(f"unknown schedule {self.schedule!r}")
        if self.total_time < 0 or self.dt <= 0:
            raise ValidationError("need total_time >= 0 and dt > 0")
        if self.start != self.target.free() and self.start != self.target:
            raise ValidationError("path must start at the free theory of the target")

    @property
    def n_steps(self) -> int:
        return max(1, math.ceil(self.total_time / self.dt - 1e-12)) if self.total_time > 0 else 0

    def spec_at(self, s: float) -> TheorySpec:
        f = SCHEDULES[self.schedule](s)
        mix = lambda x, y: (1 - f) * x + f * y
        return TheorySpec(
            m0_sq=mix(self.start.m0_sq, self.target.m0_sq),
            lambda4=mix(self.start.lambda4, self.target.lambda4),
            lambda6_minus_4=mix(self.start.lambda6_minus_4, self.target.lambda6_minus_4),
        )


def adiabatic_prepare_vacuum(path: AdiabaticPath, free_vacuum, model: LatticeModel,
                             target_vacuum=None):
    """Evolve ``free_vacuum`` along ``path``; return (state, infidelity).

    Each step applies the exact exponential (or one Trotter step) of the
    Hamiltonian at the step midpoint.  ``model`` supplies geometry,
    digitization and scheme; its theory is ignored.
    """
    start_model = model.with_spec(path.start)
    H0 = start_model.hamiltonian
    v = np.asarray(free_vacuum, dtype=complex)
    e0 = np.vdot(v, H0 @ v).real
    if np.linalg.norm(H0 @ v - e0 * v) > 1e-8:
        raise ValidationError("initial state is not an eigenstate of the start Hamiltonian")
    state = v.copy()
    n = path.n_steps
    if path.start == path.target:
        n = 0  # zero-length path in coupling space
    kinetic = start_model.kinetic
    for j in range(n):
        s = (j + 0.5) / n
        m = model.with_spec(path.spec_at(s))
        h = path.total_time / n
        if path.backend == "exact":
            Hs = _dense(kinetic) + np.diag(m.potential)
            w, W = la.eigh(Hs)
            state = W @ (np.exp(-1j * w * h) * (W.conj().T @ state))
        else:
            state = TrotterPropagator(m, n_steps=1).evolve(state, h)
    if target_vacuum is None:
        _, target_vacuum = ground_state(model.with_spec(path.target).hamiltonian)
    infid = 1.0 - abs(np.vdot(target_vacuum, state)) ** 2
    return state, float(max(infid, 0.0))
