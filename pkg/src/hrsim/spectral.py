"""Low-lying spectrum with momentum and parity labels.

Eigenpairs come from dense ``eigh`` for small matrices and from a restarted
Lanczos iteration (ground state) or ARPACK (several states) above that.
Degenerate subspaces are split by diagonalizing the translation first and
the field parity second, so every returned vector carries sharp labels.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConvergenceError, ValidationError

DENSE_MAX_DIM = 4096
LABEL_TOL = 1e-8


class InsufficientSpectrumError(ValidationError):
    """The computed states do not reach the energies a query needs."""


def lattice_dispersion(p, m: float, a: float = 1.0):
    """omega(p) = sqrt(m^2 + (4/a^2) sum_i sin^2(p_i a / 2)); ``p`` may have a trailing d axis."""
    p = np.asarray(p, dtype=float)
    s = np.sin(p * a / 2) ** 2
    if s.ndim > 1:
        s = s.sum(axis=-1)
    return np.sqrt(m**2 + 4.0 / a**2 * s)


def _fix_phase(vecs: np.ndarray) -> np.ndarray:
    """Rotate each column so that its largest-magnitude entry is real positive."""
    vecs = np.array(vecs, dtype=complex if np.iscomplexobj(vecs) else float, copy=True)
    for j in range(vecs.shape[1]):
        i = np.argmax(np.abs(vecs[:, j]))
        ph = vecs[i, j] / abs(vecs[i, j])
        vecs[:, j] = vecs[:, j] / ph
        if np.iscomplexobj(vecs):
            vecs[i, j] = vecs[i, j].real
    return vecs


def lanczos_ground(H, krylov_dim: int = 60, tol: float = 1e-11, max_restarts: int = 200,
                   seed: int = 0, v0: Optional[np.ndarray] = None):
    """Lowest eigenpair by Lanczos with full reorthogonalization and explicit restarts.

    Each cycle builds a Krylov basis of at most ``krylov_dim`` vectors and
    restarts from the current Ritz vector until ``||H v - E v|| < tol``.
    """
    D = H.shape[0]
    dtype = np.result_type(H.dtype, float)
    if v0 is None:
        v = np.random.default_rng(seed).standard_normal(D).astype(dtype)
    else:
        v = np.asarray(v0, dtype=dtype).copy()
    v /= np.linalg.norm(v)
    m = min(krylov_dim, D)
    resid = np.inf
    for _ in range(max_restarts):
        Q = np.zeros((D, m), dtype=dtype)
        alpha = np.zeros(m)
        beta = np.zeros(m)
        Q[:, 0] = v
        n = m
        for j in range(m):
            w = H @ Q[:, j]
            alpha[j] = np.vdot(Q[:, j], w).real
            for _twice in range(2):
                w = w - Q[:, : j + 1] @ (Q[:, : j + 1].conj().T @ w)
            b = np.linalg.norm(w)
            if j + 1 == m:
                break
            if b < 1e-13 * max(1.0, abs(alpha[j])):
                n = j + 1
                break
            beta[j] = b
            Q[:, j + 1] = w / b
        if n == 1:
            theta, S = alpha[:1], np.ones((1, 1))
        else:
            theta, S = la.eigh_tridiagonal(alpha[:n], beta[: n - 1])
        x = Q[:, :n] @ S[:, 0]
        x /= np.linalg.norm(x)
        Hx = H @ x
        E = np.vdot(x, Hx).real
        resid = np.linalg.norm(Hx - E * x)
        if resid < tol:
            return E, _fix_phase(x[:, None])[:, 0]
        v = x
    raise ConvergenceError(f"Lanczos did not converge: residual {resid:.3e} after {max_restarts} restarts")


def ground_state(H, tol: float = 1e-11, seed: int = 0, dense_max: int = DENSE_MAX_DIM, **kw):
    """Return ``(E0, vacuum)`` with the vacuum phase-fixed."""
    D = H.shape[0]
    if D <= dense_max:
        A = H.toarray() if sp.issparse(H) else np.asarray(H)
        w, v = la.eigh(A, subset_by_index=[0, 0])
        return float(w[0]), _fix_phase(v)[:, 0]
    return lanczos_ground(H, tol=tol, seed=seed, **kw)


def lowest_eigenpairs(H, n: int, seed: int = 0, dense_max: int = DENSE_MAX_DIM):
    D = H.shape[0]
    n = min(n, D)
    if D <= dense_max:
        A = H.toarray() if sp.issparse(H) else np.asarray(H)
        return la.eigh(A, subset_by_index=[0, n - 1])
    if n >= D - 1:
        raise ValidationError("too many states requested for the sparse solver")
    v0 = np.random.default_rng(seed).standard_normal(D)
    try:
        w, v = spla.eigsh(H, k=n, which="SA", v0=v0, tol=1e-13, maxiter=20 * D)
    except spla.ArpackNoConvergence as exc:
        raise ConvergenceError(str(exc)) from exc
    order = np.argsort(w)
    return w[order], v[:, order]


@dataclass
class SpectralData:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    momentum: np.ndarray
    parity: np.ndarray
    a: float = 1.0
    label_residual: np.ndarray = field(default_factory=lambda: np.zeros(0))
    ambiguous: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))

    def __len__(self):
        return len(self.eigenvalues)

    @property
    def gaps(self) -> np.ndarray:
        return self.eigenvalues - self.eigenvalues[0]

    @property
    def vacuum(self) -> np.ndarray:
        return self.eigenvectors[:, 0]

    def select(self, parity=None, q=None, qtol=1e-9) -> np.ndarray:
        mask = np.ones(len(self), dtype=bool)
        if parity is not None:
            mask &= self.parity == parity
        if q is not None:
            mask &= np.abs(self.momentum - q) < qtol
        return np.flatnonzero(mask)

    def single_particle_band(self, n_sites: int) -> np.ndarray:
        """Indices of the ``n_sites`` lowest odd states."""
        odd = self.select(parity=-1)
        if len(odd) < n_sites:
            raise InsufficientSpectrumError(f"only {len(odd)} odd states computed, need {n_sites}")
        return odd[:n_sites]


def _momentum_from_phase(phase: np.ndarray, a: float, period: Optional[int]) -> np.ndarray:
    ang = np.angle(phase)
    if period:
        n = np.rint(ang * period / (2 * np.pi))
        ang = 2 * np.pi * n / period
    ang = np.where(ang <= -np.pi + 1e-9, ang + 2 * np.pi, ang)
    return ang / a


def _degenerate_groups(w: np.ndarray, tol: float):
    groups, start = [], 0
    for i in range(1, len(w) + 1):
        if i == len(w) or w[i] - w[i - 1] > tol * max(1.0, abs(w[i])):
            groups.append(range(start, i))
            start = i
    return groups


def _resolve_group(Q, T, P, a, period):
    """Split a degenerate block into joint eigenvectors of T then P."""
    g = Q.shape[1]
    if T is not None and g > 1:
        Tq = Q.conj().T @ (T @ Q)
        ph, Z = np.linalg.eig(Tq)
        q = _momentum_from_phase(ph, a, period)
        order = np.argsort(q, kind="stable")
        Z, q = Z[:, order], q[order]
        blocks = _degenerate_groups(q, 1e-6)
        # eigenvectors of a unitary are orthogonal across distinct phases
        for blk in blocks:
            Z[:, list(blk)] = np.linalg.qr(Z[:, list(blk)])[0]
        Q = Q @ Z
    else:
        blocks = [range(g)]
    cols = []
    for blk in blocks:
        Qb = Q[:, list(blk)]
        if P is not None and len(blk) > 1:
            Pb = Qb.conj().T @ (P @ Qb)
            _, U = la.eigh(0.5 * (Pb + Pb.conj().T))
            Qb = Qb @ U
        cols.append(Qb)
    return np.hstack(cols)


def low_spectrum(H, n_states: int, translation=None, parity=None, a: float = 1.0,
                 period: Optional[int] = None, seed: int = 0, degeneracy_tol: float = 1e-8,
                 pad: int = 8) -> SpectralData:
    """The ``n_states`` lowest eigenpairs with momentum and parity labels.

    ``period`` is the number of sites along the translation axis; when given,
    momenta are snapped to the allowed grid ``2 pi n / (period a)``.
    States whose label residual exceeds ``1e-8`` are flagged in ``ambiguous``.
    """
    D = H.shape[0]
    if n_states < 1:
        raise ValidationError("n_states must be positive")
    n_calc = min(D, n_states + pad) if D <= DENSE_MAX_DIM else min(D - 2, n_states + pad)
    w, v = lowest_eigenpairs(H, n_calc, seed=seed)
    groups = _degenerate_groups(w, degeneracy_tol)
    vecs = np.zeros((D, len(w)), dtype=complex if translation is not None else v.dtype)
    for grp in groups:
        idx = list(grp)
        vecs[:, idx] = _resolve_group(v[:, idx].astype(vecs.dtype), translation, parity, a, period)
    vecs = _fix_phase(vecs)

    mom = np.zeros(len(w))
    par = np.zeros(len(w), dtype=int)
    resid = np.zeros(len(w))
    for j in range(len(w)):
        x = vecs[:, j]
        if translation is not None:
            tx = translation @ x
            lam = np.vdot(x, tx)
            mom[j] = _momentum_from_phase(np.array([lam]), a, period)[0]
            resid[j] = max(resid[j], np.linalg.norm(tx - np.exp(1j * mom[j] * a) * x))
        if parity is not None:
            px = parity @ x
            par[j] = 1 if np.vdot(x, px).real >= 0 else -1
            resid[j] = max(resid[j], np.linalg.norm(px - par[j] * x))
    # stable tie ordering inside degenerate groups: by q, then parity
    order = []
    for grp in groups:
        idx = list(grp)
        order.extend(sorted(idx, key=lambda j: (round(mom[j], 9), par[j])))
    order = np.array(order)
    ambiguous = resid > LABEL_TOL
    last = groups[-1]
    if n_calc < D and last.stop == len(w):
        ambiguous[list(last)] = True  # block may continue past the computed states
    keep = order[:n_states]
    return SpectralData(
        eigenvalues=w[keep], eigenvectors=vecs[:, keep], momentum=mom[keep], parity=par[keep],
        a=a, label_residual=resid[keep], ambiguous=ambiguous[keep],
    )


def model_spectrum(model, n_states: int, seed: int = 0) -> SpectralData:
    """``low_spectrum`` for a :class:`~hrsim.lattice.LatticeModel`."""
    return low_spectrum(model.hamiltonian, n_states, model.translation, model.parity,
                        a=model.geom.a, period=model.geom.sites_per_dim, seed=seed)


@dataclass
class MassGapReport:
    m: float
    two_particle_threshold: float
    m_b: Optional[float] = None
    vacuum_energy: float = 0.0
    bound_index: Optional[int] = None

    @property
    def has_bound_state(self) -> bool:
        return self.m_b is not None


def mass_gap_report(data: SpectralData, rel_tol: float = 1e-6) -> MassGapReport:
    """Single-particle mass from the lowest odd q=0 state and the bound state below 2m.

    A candidate even level counts as bound only if it lies below ``2m (1 - rel_tol)``.
    """
    gaps = data.gaps
    odd0 = [j for j in data.select(parity=-1, q=0.0) if j > 0]
    if not odd0:
        raise InsufficientSpectrumError("no odd zero-momentum state in the computed spectrum")
    m = float(gaps[odd0[0]])
    if m <= 0:
        raise ValidationError("non-positive single-particle gap")
    thr = 2 * m
    if gaps[-1] < thr * (1 - rel_tol):
        raise InsufficientSpectrumError(
            f"spectrum reaches gap {gaps[-1]:.6g}, below the two-particle threshold {thr:.6g}")
    even0 = [j for j in data.select(parity=1, q=0.0) if j > 0]
    below = [j for j in even0 if gaps[j] < thr * (1 - rel_tol)]
    if below:
        j = below[0]
        return MassGapReport(m, thr, float(gaps[j]), float(data.eigenvalues[0]), int(j))
    return MassGapReport(m, thr, None, float(data.eigenvalues[0]))


def field_variance(state: np.ndarray, phi) -> float:
    """sigma = sqrt(<state|phi^2|state>) for a field-basis-diagonal ``phi``."""
    if sp.issparse(phi):
        diag = phi.diagonal()
    else:
        phi = np.asarray(phi)
        diag = np.diag(phi) if phi.ndim == 2 else phi
    return float(np.sqrt(np.sum(np.abs(state) ** 2 * diag.real**2)))
