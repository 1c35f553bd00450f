"""Smearing functions and the discrete amplitude table psi(t_i, x_j).

The amplitude at zero Haag-Ruelle time is

    psi(t, x) = 1/(V a^d) sum_p g(p) exp(i p.(x - x_c)) F(t, p),
    F(t, p)   = 1/(2 pi) int dp0 f(p0, p) (p0 + E(p)) / (2 E(p)) exp(-i p0 t),

with the sum over the lattice Brillouin zone and ``E(p)`` the lattice
dispersion of the particle being created.  ``f`` is a window in the
mass-shell variable ``s = p0^2 - phat^2`` (``phat^2 = (4/a^2) sum sin^2``)
supported on ``a_coef m^2 < s < b_coef m^2`` with ``p0 > 0``.  The p0
integral uses Gauss-Legendre quadrature in the window coordinate ``u``.

Sign conventions: with ``T phi(x) T^dagger = phi(x - a)`` the created
state carries momentum ``+p_bar``; the ``exp(-i p0 t)`` factor selects
energies ``p0`` above the vacuum when ``phi`` is evolved as
``exp(iHt) phi exp(-iHt)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import ValidationError
from .lattice import LatticeGeometry
from .spectral import lattice_dispersion

DEFAULT_QUAD = 64
GAUSS_CUT = 6.0  # Gaussian supports are truncated at this many widths


class EmptySupportError(ValidationError):
    pass


def bump(u):
    """C-infinity bump exp(-1/(1-u^2)) on |u| < 1, zero outside."""
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    inside = np.abs(u) < 1
    out[inside] = np.exp(-1.0 / (1.0 - u[inside] ** 2))
    return out


def truncated_gaussian(r, sigma, cut=GAUSS_CUT):
    r = np.asarray(r, dtype=float)
    return np.where(np.abs(r) <= cut * sigma, np.exp(-0.5 * (r / sigma) ** 2), 0.0)


def wrap_momentum(p, a):
    """Map momenta into [-pi/a, pi/a)."""
    return (np.asarray(p) + np.pi / a) % (2 * np.pi / a) - np.pi / a


@dataclass(frozen=True)
class MomentumProfile:
    p_bar: Sequence[float] | float = 0.0
    delta_p: float = 0.5
    shape: str = "gaussian"
    x_center: Sequence[float] | float = 0.0

    def __post_init__(self):
        if not self.delta_p > 0:
            raise ValidationError("delta_p must be positive")
        if self.shape not in ("gaussian", "bump"):
            raise ValidationError(f"unknown profile shape {self.shape!r}")

    @property
    def support_radius(self) -> float:
        return GAUSS_CUT * self.delta_p if self.shape == "gaussian" else self.delta_p

    def check_zone(self, a: float):
        if self.support_radius >= np.pi / a:
            raise ValidationError("momentum profile does not fit inside the Brillouin zone")

    def __call__(self, p, a: float = 1.0) -> np.ndarray:
        """g(p) for momenta of shape (..., d)."""
        p = np.atleast_2d(p)
        dp = wrap_momentum(p - np.broadcast_to(np.asarray(self.p_bar, float), p.shape[-1:]), a)
        r = np.linalg.norm(dp, axis=-1)
        if self.shape == "gaussian":
            return truncated_gaussian(r, self.delta_p)
        return bump(r / self.delta_p)


@dataclass(frozen=True)
class SmearingWindow:
    """Compact window between the vacuum and the multiparticle continuum.

    ``variable='mass_shell'`` places the window in ``s = p0^2 - phat^2``
    with ``a_coef m^2 < s < b_coef m^2``.  ``variable='energy'`` uses p0
    itself on ``[sign(a)sqrt|a| m, sqrt(b) m]`` and is meant for controls.
    An optional momentum factor restricts the window to
    ``|p_i - p_center_i| < p_halfwidth`` componentwise.
    """

    a_coef: float = 0.5
    b_coef: float = 2.0
    mass_sq_target: float = 1.0
    shape: str = "bump"
    variable: str = "mass_shell"
    upper_limit: float = 4.0
    p_center: Optional[Sequence[float] | float] = None
    p_halfwidth: Optional[float] = None
    check: bool = True

    def __post_init__(self):
        if self.shape not in ("bump", "gaussian"):
            raise ValidationError(f"unknown window shape {self.shape!r}")
        if self.variable not in ("mass_shell", "energy"):
            raise ValidationError(f"unknown window variable {self.variable!r}")
        if not self.mass_sq_target > 0:
            raise ValidationError("mass_sq_target must be positive")
        if not self.a_coef < self.b_coef:
            raise ValidationError("need a_coef < b_coef")
        if self.check and not (0 < self.a_coef < 1 < self.b_coef < self.upper_limit):
            raise ValidationError(
                f"window must satisfy 0 < a < 1 < b < {self.upper_limit}, got a={self.a_coef}, b={self.b_coef}")

    @property
    def mass(self) -> float:
        return float(np.sqrt(self.mass_sq_target))

    @property
    def E_bar(self) -> float:
        """Center of the p0 support at zero momentum."""
        lo, hi = self._p0_bounds_rest()
        return 0.5 * (lo + hi)

    @property
    def delta_E(self) -> float:
        """Half-width of the p0 support at zero momentum."""
        lo, hi = self._p0_bounds_rest()
        return 0.5 * (hi - lo)

    def _p0_bounds_rest(self):
        m = self.mass
        lo = np.sign(self.a_coef) * np.sqrt(abs(self.a_coef)) * m
        return lo, np.sqrt(self.b_coef) * m

    def profile(self, u):
        if self.shape == "bump":
            return bump(u)
        return truncated_gaussian(u, 1.0 / GAUSS_CUT, cut=GAUSS_CUT)

    def momentum_factor(self, p, a):
        if self.p_center is None or self.p_halfwidth is None:
            return np.ones(np.atleast_2d(p).shape[0])
        p = np.atleast_2d(p)
        dp = wrap_momentum(p - np.broadcast_to(np.asarray(self.p_center, float), p.shape[-1:]), a)
        return np.prod(bump(dp / self.p_halfwidth), axis=-1)

    def nodes(self, phat_sq: float, n: int):
        """Quadrature nodes p0, weights dp0 and window values for one momentum."""
        x, w = np.polynomial.legendre.leggauss(n)
        m2 = self.mass_sq_target
        if self.variable == "mass_shell":
            s = 0.5 * ((self.b_coef - self.a_coef) * x + (self.a_coef + self.b_coef)) * m2
            p0sq = s + phat_sq
            ok = p0sq > 0
            p0 = np.sqrt(np.where(ok, p0sq, 1.0))
            dp0 = np.where(ok, w * 0.5 * (self.b_coef - self.a_coef) * m2 / (2 * p0), 0.0)
        else:
            lo, hi = self._p0_bounds_rest()
            p0 = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
            dp0 = w * 0.5 * (hi - lo)
        return p0, dp0, self.profile(x)

    def p0_spread(self, phat_sq_max: float) -> tuple[float, float]:
        m2 = self.mass_sq_target
        if self.variable == "mass_shell":
            lo = np.sqrt(max(self.a_coef * m2, 0.0))
            return lo, np.sqrt(self.b_coef * m2 + phat_sq_max)
        return self._p0_bounds_rest()


@dataclass
class WavepacketGrid:
    t_list: np.ndarray
    site_list: np.ndarray
    geom: LatticeGeometry

    def __post_init__(self):
        self.t_list = np.asarray(self.t_list, dtype=float)
        self.site_list = np.asarray(self.site_list, dtype=int)
        if self.t_list.ndim != 1 or len(self.t_list) == 0 or len(self.site_list) == 0:
            raise ValidationError("grid needs at least one time and one site")
        if len(set(self.site_list.tolist())) != len(self.site_list):
            raise ValidationError("duplicate sites in grid")
        if len(self.site_list) > self.geom.n_sites:
            raise ValidationError("more grid sites than lattice sites")
        for s in self.site_list:
            self.geom.check_site(int(s))
        if len(self.t_list) > 1:
            steps = np.diff(self.t_list)
            if np.max(np.abs(steps - steps[0])) > 1e-12 * max(1.0, abs(steps[0])) or steps[0] <= 0:
                raise ValidationError("time grid must be uniform and increasing")

    @classmethod
    def midpoint(cls, t_lo: float, t_hi: float, n_t: int, sites, geom):
        """Midpoints of ``n_t`` equal cells covering [t_lo, t_hi]."""
        dt = (t_hi - t_lo) / n_t
        return cls(t_lo + dt * (np.arange(n_t) + 0.5), sites, geom)

    @property
    def dt(self) -> float:
        return float(self.t_list[1] - self.t_list[0]) if len(self.t_list) > 1 else self._dt_single

    _dt_single: float = field(default=1.0, repr=False)

    @property
    def a(self) -> float:
        return self.geom.a

    @property
    def d(self) -> int:
        return self.geom.d

    @property
    def N(self) -> int:
        return len(self.t_list)

    @property
    def S(self) -> int:
        return len(self.site_list)

    @property
    def t_range(self) -> tuple[float, float]:
        return float(self.t_list[0] - self.dt / 2), float(self.t_list[-1] + self.dt / 2)

    def refined(self, factor: int = 2) -> "WavepacketGrid":
        """Same time interval with ``factor`` times more midpoint cells."""
        lo, hi = self.t_range
        return WavepacketGrid.midpoint(lo, hi, self.N * factor, self.site_list, self.geom)


@dataclass
class DiscreteAmplitudeTable:
    values: np.ndarray  # (N, S)
    grid: WavepacketGrid
    dot: Optional[np.ndarray] = None
    ddot: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    @property
    def weights(self) -> np.ndarray:
        """Complex LCU coefficients a^d dt psi(t_i, x_j)."""
        return self.grid.a**self.grid.d * self.grid.dt * self.values

    @property
    def l1_mass(self) -> float:
        return float(np.sum(np.abs(self.weights)))

    @classmethod
    def from_values(cls, values, t_list, sites, geom, dt=None):
        grid = WavepacketGrid(np.atleast_1d(t_list), np.atleast_1d(sites), geom)
        if dt is not None:
            grid._dt_single = float(dt)
        return cls(np.asarray(values, dtype=complex).reshape(grid.N, grid.S), grid)


def brillouin_momenta(geom: LatticeGeometry) -> np.ndarray:
    """All lattice momenta, shape (n_sites, d), ordered like site indices."""
    k1 = 2 * np.pi * np.fft.fftfreq(geom.sites_per_dim, d=geom.a)
    mesh = np.meshgrid(*([k1] * geom.d), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def quadrature_order(window: SmearingWindow, geom: LatticeGeometry, t_max: float,
                     n_quad: int = DEFAULT_QUAD) -> int:
    """Base order plus one node per radian of phase spread across the window."""
    phat_max = 4.0 / geom.a**2 * geom.d
    lo, hi = window.p0_spread(phat_max)
    return int(n_quad + np.ceil(0.5 * (hi - lo) * t_max))


def eval_psi(grid: WavepacketGrid, profile: MomentumProfile, window: SmearingWindow,
             n_quad: int = DEFAULT_QUAD, allow_empty: bool = False) -> DiscreteAmplitudeTable:
    """Evaluate psi and its first two time derivatives on ``grid``."""
    geom = grid.geom
    profile.check_zone(geom.a)
    p = brillouin_momenta(geom)
    phat_sq = 4.0 / geom.a**2 * np.sum(np.sin(p * geom.a / 2) ** 2, axis=-1)
    E = lattice_dispersion(p, window.mass, geom.a)
    g = profile(p, geom.a) * window.momentum_factor(p, geom.a)
    t = grid.t_list
    n = quadrature_order(window, geom, float(np.max(np.abs(t))), n_quad)

    live = np.flatnonzero(g != 0)
    F = np.zeros((3, len(t), len(p)), dtype=complex)
    for k in live:
        p0, dp0, f = window.nodes(phat_sq[k], n)
        W = dp0 * f * (p0 + E[k]) / (2 * E[k]) / (2 * np.pi)
        phase = np.exp(-1j * np.outer(t, p0))
        F[0, :, k] = phase @ W
        F[1, :, k] = phase @ (W * (-1j * p0))
        F[2, :, k] = phase @ (W * (-p0**2))

    xc = np.broadcast_to(np.asarray(profile.x_center, float), (geom.d,))
    x = geom.positions()[grid.site_list]
    kern = np.exp(1j * (x - xc) @ p.T) * g[None, :] / (geom.n_sites * geom.a**geom.d)  # (S, M)
    vals = np.stack([F[i] @ kern.T for i in range(3)])
    if not allow_empty and np.all(np.abs(vals[0]) < 1e-300):
        raise EmptySupportError("profile and window have no common support")
    meta = {"n_quad": n, "E_bar": window.E_bar, "delta_E": window.delta_E}
    return DiscreteAmplitudeTable(vals[0], grid, vals[1], vals[2], meta)


def shift_term_residual(table: DiscreteAmplitudeTable) -> float:
    """|sum a^d dt psi|: coupling of the table to a constant operator shift."""
    return float(np.abs(np.sum(table.weights)))


def _time_envelope(profile, window, geom, t, n_quad):
    grid = WavepacketGrid(t, np.arange(geom.n_sites), geom)
    return eval_psi(grid, profile, window, n_quad=n_quad, allow_empty=True).values


def default_dt(window: SmearingWindow, geom: LatticeGeometry, fraction: float = 0.25) -> float:
    """A fraction of the Nyquist step for the largest window energy."""
    lo, hi = window.p0_spread(4.0 / geom.a**2 * geom.d)
    return fraction * np.pi / max(abs(lo), abs(hi))


def choose_grid(profile: MomentumProfile, window: SmearingWindow, geom: LatticeGeometry,
                tail_tolerance: float = 1e-3, dt: Optional[float] = None,
                n_quad: int = DEFAULT_QUAD, t_search: Optional[float] = None,
                max_doublings: int = 12) -> WavepacketGrid:
    """Smallest midpoint grid holding every point with |psi| >= tol * max|psi|.

    The time search starts at ``t_search`` (default ``4/delta_E``) and doubles
    until the envelope at the search edge is below threshold.
    """
    if not 0 < tail_tolerance <= 1:
        raise ValidationError("tail_tolerance must lie in (0, 1]")
    dt = default_dt(window, geom) if dt is None else float(dt)
    T = 4.0 / window.delta_E if t_search is None else float(t_search)
    for _ in range(max_doublings):
        n_half = int(np.ceil(T / dt))
        t = dt * np.arange(-n_half, n_half + 1)
        psi = np.abs(_time_envelope(profile, window, geom, t, n_quad))
        peak = psi.max()
        if peak == 0:
            raise EmptySupportError("profile and window have no common support")
        edge = max(psi[0].max(), psi[-1].max())
        if edge < tail_tolerance * peak or tail_tolerance == 1:
            break
        T *= 2
    else:
        raise ValidationError("time envelope does not decay within the search range")
    mask = psi >= tail_tolerance * peak * (1 - 1e-12)
    if tail_tolerance == 1:
        i, j = np.unravel_index(np.argmax(psi), psi.shape)
        grid = WavepacketGrid(t[[i]], [j], geom)
        grid._dt_single = dt
        return grid
    rows = np.flatnonzero(mask.any(axis=1))
    sites = np.flatnonzero(mask.any(axis=0))
    if len(sites) == geom.n_sites and geom.n_sites > 1:
        raise ValidationError("wavepacket does not fit in the lattice at this tolerance")
    t_sel = t[rows[0]: rows[-1] + 1]
    return WavepacketGrid.midpoint(t_sel[0] - dt / 2, t_sel[-1] + dt / 2, len(t_sel), sites, geom)


def spatial_extent(grid: WavepacketGrid, x_center=0.0) -> float:
    """Diameter (minimal image, max over axes) of the grid's site set."""
    geom = grid.geom
    L = geom.sites_per_dim * geom.a
    x = geom.positions()[grid.site_list] - np.broadcast_to(np.asarray(x_center, float), (geom.d,))
    x = (x + L / 2) % L - L / 2
    return float(np.max(np.abs(x)) * 2)


def commutator(A, B):
    return A @ B - B @ A


def _spectral_norm(A) -> float:
    A = A.toarray() if sp.issparse(A) else np.asarray(A)
    if A.size == 0:
        return 0.0
    return float(np.linalg.norm(A, 2))


@dataclass
class DiscretizationErrorEstimate:
    bound: float
    terms: dict
    dominant: str


def discretization_error_estimate(table: DiscreteAmplitudeTable, H, phi_ops) -> DiscretizationErrorEstimate:
    """Triangle-inequality bound on the midpoint-rule error of the creation operator.

    Per cell the error is dt^3/24 times the norm of
    ``psi'' phi + 2i psi' [H, phi] - psi [H, [H, phi]]`` conjugated by the
    evolution; unitary conjugation leaves norms unchanged, so the three
    pieces are bounded separately and summed over all cells.
    ``phi_ops`` maps a site index to its field operator.
    """
    g = table.grid
    pref = g.a**g.d * g.dt**3 / 24.0
    terms = {"psi_ddot_phi": 0.0, "psi_dot_comm": 0.0, "psi_double_comm": 0.0}
    if not np.any(table.values):
        return DiscretizationErrorEstimate(0.0, terms, "none")
    if table.dot is None or table.ddot is None:
        raise ValidationError("table lacks time derivatives")
    for j, s in enumerate(g.site_list):
        phi = phi_ops[int(s)]
        c1 = commutator(H, phi)
        c2 = commutator(H, c1)
        terms["psi_ddot_phi"] += pref * np.sum(np.abs(table.ddot[:, j])) * _spectral_norm(phi)
        terms["psi_dot_comm"] += pref * 2 * np.sum(np.abs(table.dot[:, j])) * _spectral_norm(c1)
        terms["psi_double_comm"] += pref * np.sum(np.abs(table.values[:, j])) * _spectral_norm(c2)
    dominant = max(terms, key=terms.get)
    return DiscretizationErrorEstimate(float(sum(terms.values())), terms, dominant)
