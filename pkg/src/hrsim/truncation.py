"""Field-cutoff analysis from a product ansatz over single-site ground states.

The on-site potential used here is ``v(phi) = a^d (lambda0 phi^4 + m0_sq phi^2)``.
``phi_cl`` bounds the classically allowed region when all energy ``E`` sits
on one site and the others rest at the potential minimum.  The single-site
amplitude ``psi1`` solves ``-1/2 psi'' + v psi = e psi``, and a cutoff
``phi_max`` loses the weight ``eps = 1 - (u(phi_max)/u(inf))^V`` with
``u(phi) = int_{-phi}^{phi} psi1^2``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.linalg as la
from scipy.integrate import cumulative_trapezoid, trapezoid
from scipy.optimize import brentq, minimize_scalar

from .errors import ValidationError
from .lattice import FieldDigitization, LatticeGeometry, LatticeModel, TheorySpec, level_indices
from .spectral import ground_state


def quartic_onsite(m0_sq: float, lambda0: float, a: float = 1.0, d: int = 1) -> Callable:
    return lambda phi: a**d * (lambda0 * np.asarray(phi) ** 4 + m0_sq * np.asarray(phi) ** 2)


def phi_cl_closed_form(m0_sq: float, lambda0: float, E: float, a: float = 1.0, d: int = 1,
                       volume_sites: int = 1) -> float:
    """Outer turning point with E on one site and the rest at the minimum."""
    if not lambda0 > 0:
        raise ValidationError("closed form needs lambda0 > 0")
    if not E > 0:
        raise ValidationError("need E > 0")
    if m0_sq < 0:
        root = np.sqrt(4 * lambda0 * E / a**d + volume_sites * m0_sq**2)
    else:
        root = np.sqrt(4 * lambda0 * E / a**d + m0_sq**2)
    return float(np.sqrt((-m0_sq + root) / (2 * lambda0)))


def phi_cl_bruteforce(m0_sq: float, lambda0: float, E: float, a: float = 1.0, d: int = 1,
                      volume_sites: int = 1) -> float:
    """Root of v(phi_1) + (V-1) min v = E found numerically."""
    v = quartic_onsite(m0_sq, lambda0, a, d)
    scale = 1.0 + abs(m0_sq) / lambda0 + (E / a**d / lambda0) ** 0.25
    res = minimize_scalar(v, bounds=(0.0, scale), method="bounded", options={"xatol": 1e-14})
    phi_min, v_min = float(res.x), float(min(res.fun, v(0.0)))
    if v(0.0) <= res.fun:
        phi_min = 0.0
    target = E - (volume_sites - 1) * v_min
    hi = max(phi_min, 1.0)
    while v(hi) < target:
        hi *= 2
    return float(brentq(lambda p: v(p) - target, phi_min, hi, xtol=1e-15, rtol=1e-15))


@dataclass
class SingleSiteGroundState:
    phi_grid: np.ndarray
    psi1: np.ndarray
    energy: float
    phi_cl: float
    radii: np.ndarray  # nonnegative phi values
    u_cumulative: np.ndarray  # u at each radius

    def u(self, phi) -> np.ndarray:
        return np.interp(phi, self.radii, self.u_cumulative, right=self.u_cumulative[-1])

    @property
    def u_inf(self) -> float:
        return float(self.u_cumulative[-1])

    @property
    def sigma0(self) -> float:
        return float(np.sqrt(trapezoid(self.phi_grid**2 * self.psi1**2, self.phi_grid)))


def solve_single_site_ground(v: Callable, phi_cl: float, n_points: int = 2048,
                             width_factor: float = 8.0, boundary_tol: float = 1e-12
                             ) -> SingleSiteGroundState:
    """Ground state of -1/2 d^2/dphi^2 + v on a uniform grid over [-8 phi_cl, 8 phi_cl].

    Uses a fourth-order five-point Laplacian with zero boundary values.
    """
    if not phi_cl > 0:
        raise ValidationError("phi_cl must be positive")
    L = width_factor * phi_cl
    x = np.linspace(-L, L, n_points)
    h = x[1] - x[0]
    c = 1.0 / (24 * h**2)  # -1/2 * (-1, 16, -30, 16, -1)/(12 h^2)
    bands = np.zeros((3, n_points))
    bands[0, :] = 30 * c + v(x)
    bands[1, :-1] = -16 * c
    bands[2, :-2] = 1 * c
    w, vec = la.eig_banded(bands, lower=True, select="i", select_range=(0, 0))
    psi = vec[:, 0]
    psi = psi * np.sign(psi[np.argmax(np.abs(psi))])
    psi = np.abs(psi)
    psi /= np.sqrt(trapezoid(psi**2, x))
    if max(psi[0], psi[-1]) > boundary_tol * psi.max():
        raise ValidationError("grid too narrow: boundary amplitude above tolerance")
    C = np.concatenate([[0.0], cumulative_trapezoid(psi**2, x)])
    half = n_points // 2
    pos = np.arange(half, n_points)
    neg = n_points - 1 - pos
    radii = x[pos]
    u = C[pos] - C[neg]
    if n_points % 2 == 0:
        radii = np.concatenate([[0.0], radii])
        u = np.concatenate([[0.0], u])
    u = np.maximum.accumulate(u)
    return SingleSiteGroundState(x, psi, float(w[0]), float(phi_cl), radii, u)


def eps_from_ratio(ratio: float, volume_sites: int) -> float:
    return float(1.0 - ratio**volume_sites)


def eps_trunc(ground: SingleSiteGroundState, phi_max: float, volume_sites: int) -> float:
    """1 - (u(phi_max)/u(inf))^V."""
    if phi_max < 0:
        raise ValidationError("phi_max must be nonnegative")
    if phi_max > ground.radii[-1]:
        raise ValidationError("phi_max lies outside the solved grid")
    ratio = float(ground.u(phi_max)) / ground.u_inf
    return float(np.clip(eps_from_ratio(min(ratio, 1.0), volume_sites), 0.0, 1.0))


def tail_decay_rate(ground: SingleSiteGroundState, phi: float, span: float = 0.05) -> float:
    """kappa = -d/dphi log(u_inf - u(phi)) from a centered difference."""
    t = lambda p: np.log(ground.u_inf - ground.u(p))
    return float(-(t(phi + span) - t(phi - span)) / (2 * span))


@dataclass
class TruncationReport:
    phi_cl: float
    phi_max_recommended: float
    eps_trunc: float
    bound_chebyshev: float
    bound_new: float
    phi_max_solve: float = 0.0

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def recommend_phi_max(ground: SingleSiteGroundState, volume_sites: int, eps_target: float,
                      E: float = 1.0, phi_cl: Optional[float] = None) -> TruncationReport:
    """Smallest grid radius with eps_trunc <= target, floored at phi_cl.

    Also reports the Chebyshev bound sqrt(E) sigma0 sqrt(V/eps) and the
    bound phi_cl + log(V/eps), both with unit constants.
    """
    if not 0 < eps_target < 1:
        raise ValidationError("eps_target must lie in (0, 1)")
    phi_cl = ground.phi_cl if phi_cl is None else phi_cl
    ratio = np.minimum(ground.u_cumulative / ground.u_inf, 1.0)
    eps = 1.0 - ratio**volume_sites
    ok = np.flatnonzero(eps <= eps_target)
    if not len(ok):
        raise ValidationError("eps_target unreachable on the solved grid")
    phi_solve = float(ground.radii[ok[0]])
    rec = max(phi_cl, phi_solve)
    return TruncationReport(
        phi_cl=float(phi_cl),
        phi_max_recommended=float(rec),
        eps_trunc=eps_trunc(ground, min(rec, ground.radii[-1]), volume_sites),
        bound_chebyshev=float(np.sqrt(E) * ground.sigma0 * np.sqrt(volume_sites / eps_target)),
        bound_new=float(phi_cl + np.log(volume_sites / eps_target)),
        phi_max_solve=phi_solve,
    )


@dataclass
class TruncationValidation:
    energy_deviation: float
    infidelity: float
    e_small: float
    e_large: float


def _embedding(geom, small: FieldDigitization, large: FieldDigitization) -> np.ndarray:
    """Large-basis index of every small-basis state for nested grids."""
    if not np.isclose(small.delta_phi, large.delta_phi, rtol=1e-12, atol=0):
        raise ValidationError("digitizations must share the level spacing")
    if large.levels < small.levels:
        raise ValidationError("second digitization must be the larger one")
    off = (large.levels - small.levels) // 2
    lv = level_indices(geom, small) + off
    powers = large.levels ** np.arange(geom.n_sites - 1, -1, -1)
    return powers @ lv


def nested_digitization(small: FieldDigitization, extra_bits: int = 1) -> FieldDigitization:
    """Same spacing, 2^extra_bits times as many levels (cutoff roughly doubles per bit)."""
    k = small.k + extra_bits
    return FieldDigitization(k, small.delta_phi * (2**k - 1) / 2)


def validate_truncation_on_spectrum(geom: LatticeGeometry, digit_small: FieldDigitization,
                                    digit_large: FieldDigitization, spec: TheorySpec,
                                    scheme: str = "finite_difference") -> TruncationValidation:
    """Vacuum energy shift and infidelity between nested cutoffs."""
    idx = _embedding(geom, digit_small, digit_large)
    ms = LatticeModel(geom, digit_small, spec, scheme)
    ml = LatticeModel(geom, digit_large, spec, scheme)
    es, vs = ground_state(ms.hamiltonian)
    el, vl = ground_state(ml.hamiltonian)
    emb = np.zeros(ml.dim, dtype=complex)
    emb[idx] = vs
    infid = 1.0 - abs(np.vdot(vl, emb)) ** 2
    return TruncationValidation(abs(es - el), float(max(infid, 0.0)), es, el)
