"""
Semi-discrete Galerkin system for (v, F) and its time integration.

Momentum is tested against the velocity modes in weak form: stresses act on
``grad`` of the test function, the hyperstress on ``grad E`` of it, the
traction enters as an edge integral.  The transport equation for ``F`` (and,
optionally, the return-map displacement) is projected onto its own families.

Time stepping is the third-order exponential time-differencing Runge-Kutta
scheme of Cox and Matthews.  The stiff linear part -- the viscous operator plus
a frozen-coefficient bound of the hyperviscous one for ``v``, and
``epsilon * Laplacian`` for ``F`` -- enters through phi-functions evaluated per
mode; everything else is explicit.
"""
from __future__ import annotations

import functools
import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from .basis import (Domain, GalerkinBasis, TensorField, tensor_families,
                    vector_families)
from .constitutive import (MaterialParams, StoredEnergyModel,
                           stored_energy_derivative)
from .errors import ConfigError, NumericalError

log = logging.getLogger(__name__)

# Stage nodes of ETDRK3 and the weights it reduces to without a linear part
# (Kutta's RK3); the energy ledger integrates stage rates with these weights.
ETD_C = (0.0, 0.5, 1.0)
ETD_B = (1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0)
_TAYLOR_RADIUS = 1.0
_TAYLOR_TERMS = 24

VELOCITY_FAMILIES = ("sc", "cs")
GRAD_V_FAMILIES = np.array([["cc", "ss"], ["ss", "cc"]], dtype=object)
TANGENT_COMPONENT = {"left": 1, "right": 1, "bottom": 0, "top": 0}


def phi_functions(z) -> tuple:
    """
    ``(phi_0, phi_1, phi_2, phi_3)`` of a real array ``z``.

    ``phi_0 = exp(z)`` and ``phi_{j+1}(z) = (phi_j(z) - 1/j!) / z``.  Small
    arguments use the Taylor series to avoid cancellation.
    """
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < _TAYLOR_RADIUS
    zs = np.where(small, z, 0.0)
    zl = np.where(small, 1.0, z)
    out = []
    direct = np.exp(zl)
    for j in range(4):
        series = sum(zs ** n / math.factorial(n + j) for n in range(_TAYLOR_TERMS))
        if j > 0:
            direct = (direct - 1.0 / math.factorial(j - 1)) / zl
        out.append(np.where(small, series, direct))
    return tuple(out)


class ExponentialOperator:
    """
    phi-functions of ``-A tau`` for a per-mode operator ``A``.

    ``A`` acts as ``rate_perp`` across and ``rate_par`` along the unit wave
    vector ``khat`` (vector fields), or as a scalar ``rate_perp`` on every
    component when ``khat`` is None.
    """

    def __init__(self, tau: float, rate_perp, rate_par=None, khat=None):
        self.khat = khat
        self.perp = phi_functions(-np.asarray(rate_perp) * tau)
        self.par = None if khat is None else phi_functions(-np.asarray(rate_par) * tau)

    def apply(self, combo: Callable, u):
        """``combo(phis)`` builds the scalar symbol from ``(phi_0, ..., phi_3)``."""
        cp = combo(self.perp)
        if self.khat is None:
            return cp * u
        kh = self.khat
        along = (kh[0] * u[0] + kh[1] * u[1]) * kh
        return cp * (u - along) + combo(self.par) * along


class CFLWarning(UserWarning):
    """Time step exceeds the advective limit."""


@dataclass(frozen=True, eq=False)
class Scenario:
    """
    Everything needed to run one simulation.

    Callables receive grid coordinate arrays and return stacked components:
    ``v0(x, y) -> (2, ...)``, ``F0(x, y) -> (2, 2, ...)``,
    ``body_force(t, x, y) -> (2, ...)``.  ``traction`` maps an edge name to
    ``g(t, x, y) -> (...)``, the tangential traction component on that edge.
    ``prescribed_velocity(t) -> (2, Nx, Ny)`` freezes the momentum equation and
    only transports ``F`` (kinematic experiments).
    """

    domain: Domain = field(default_factory=Domain)
    nx: int = 32
    ny: int | None = None
    mx: int | None = None
    my: int | None = None
    material: MaterialParams = field(default_factory=MaterialParams)
    energy: StoredEnergyModel = field(default_factory=StoredEnergyModel)
    v0: Callable | None = None
    F0: Callable | None = None
    body_force: Callable | None = None
    traction: Mapping[str, Callable] | None = None
    t_end: float = 1.0
    dt: float = 1e-3
    layout: str = "parity"
    prescribed_velocity: Callable | None = None
    track_return_map: bool = False
    hyper_shift: bool = True
    name: str = "scenario"

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ConfigError(f"time step must be positive, got {self.dt}")
        if not (self.t_end >= 0 and math.isfinite(self.t_end)):
            raise ConfigError(f"end time must be nonnegative, got {self.t_end}")
        tensor_families(self.layout)
        for edge in (self.traction or {}):
            if edge not in TANGENT_COMPONENT:
                raise ConfigError(f"unknown traction edge {edge!r}")

    def with_(self, **changes) -> "Scenario":
        return replace(self, **changes)


@dataclass(frozen=True)
class SimState:
    """Galerkin unknowns at time ``t``; ``xi`` is the return-map displacement."""

    t: float
    v: np.ndarray
    F: np.ndarray
    xi: np.ndarray | None = None

    def check_finite(self) -> None:
        for name, arr in (("velocity", self.v), ("deformation gradient", self.F), ("return map", self.xi)):
            if arr is not None and not np.all(np.isfinite(arr)):
                raise NumericalError(f"non-finite {name} coefficients at t={self.t}", term=name, t=self.t)


@dataclass
class Evaluation:
    """One right-hand-side evaluation with the energy-relevant integrals."""

    v_rate: np.ndarray | None
    F_rate: np.ndarray
    xi_rate: np.ndarray | None
    dissipation: float
    power: float
    div_sq: float
    grad_e_max: float
    v_max: float


@dataclass
class StepInfo:
    """Stage data of one step, consumed by the energy ledger."""

    t: float
    dt: float
    weights: tuple
    dissipation: tuple
    power: tuple
    div_sq: tuple
    sigma: float
    cfl: float


class Solver:
    """Discrete operators of one :class:`Scenario`."""

    def __init__(self, scn: Scenario):
        self.scn = scn
        self.basis = GalerkinBasis(scn.domain, scn.nx, scn.ny, scn.mx, scn.my)
        self.mp = scn.material
        self.model = scn.energy
        self.F_families = tensor_families(scn.layout)
        b = self.basis
        k = np.stack(np.broadcast_arrays(b.kx[:, None], b.ky[None, :]))
        lam = b.lam
        with np.errstate(invalid="ignore", divide="ignore"):
            khat = np.where(lam > 0, k / np.sqrt(lam), 0.0)
        self._khat = khat
        self._lam = lam
        self._vmask = np.stack([b.mask(f) for f in VELOCITY_FAMILIES])
        self._Fmask = np.stack([[b.mask(f) for f in row] for row in self.F_families])
        X, Y = b.mesh()
        self._X, self._Y = X, Y

    # -- initial data ------------------------------------------------------
    def initial_state(self) -> SimState:
        b, scn = self.basis, self.scn
        if scn.prescribed_velocity is not None:
            v = np.asarray(scn.prescribed_velocity(0.0), dtype=float) * self._vmask
        elif scn.v0 is None:
            v = np.zeros((2,) + b.coeff_shape)
        else:
            vg = np.asarray(scn.v0(self._X, self._Y), dtype=float)
            v = np.stack([b.to_coeff(vg[i], VELOCITY_FAMILIES[i]) for i in range(2)])
        if scn.F0 is None:
            F = np.zeros((2, 2) + b.coeff_shape)
            root_area = math.sqrt(scn.domain.Lx * scn.domain.Ly)
            F[0, 0, 0, 0] = F[1, 1, 0, 0] = root_area
        else:
            Fg = np.asarray(scn.F0(self._X, self._Y), dtype=float)
            F = np.empty((2, 2) + b.coeff_shape)
            for i in range(2):
                for j in range(2):
                    F[i, j] = b.to_coeff(np.broadcast_to(Fg[i, j], b.grid_shape), self.F_families[i, j])
        xi = np.zeros((2,) + b.coeff_shape) if scn.track_return_map else None
        s = SimState(0.0, v, F, xi)
        s.check_finite()
        return s

    def velocity_at(self, s: SimState, t: float | None = None) -> np.ndarray:
        if self.scn.prescribed_velocity is not None:
            return np.asarray(self.scn.prescribed_velocity(s.t if t is None else t), dtype=float) * self._vmask
        return s.v

    # -- field helpers -----------------------------------------------------
    def velocity_grid(self, v):
        b = self.basis
        return np.stack([b.to_grid(v[i], VELOCITY_FAMILIES[i]) for i in range(2)])

    def grad_velocity(self, v):
        """Coefficients of ``d v_i / d x_j`` in the families GRAD_V_FAMILIES."""
        b = self.basis
        out = np.empty((2, 2) + b.coeff_shape)
        for i in range(2):
            for j in range(2):
                out[i, j], _ = b.diff(v[i], VELOCITY_FAMILIES[i], j)
        return out

    def tensor_grid(self, coeff, families):
        b = self.basis
        out = np.empty(coeff.shape[:-2] + b.grid_shape)
        for idx in np.ndindex(*coeff.shape[:-2]):
            out[idx] = b.to_grid(coeff[idx], families[idx])
        return out

    def F_grid(self, F):
        return self.tensor_grid(F, self.F_families)

    def grad_tensor(self, F, families):
        """``d F_ij / d x_k`` as coefficients (2, 2, 2, ...) plus their families."""
        b = self.basis
        out = np.empty((2, 2, 2) + b.coeff_shape)
        fams = np.empty((2, 2, 2), dtype=object)
        for i in range(2):
            for j in range(2):
                for k in range(2):
                    out[i, j, k], fams[i, j, k] = b.diff(F[i, j], families[i, j], k)
        return out, fams

    def stress_load(self, S_grid) -> np.ndarray:
        """Weak load ``int S : grad(phi_m)`` for every velocity mode."""
        b = self.basis
        L = np.zeros((2,) + b.coeff_shape)
        for i in range(2):
            for j in range(2):
                fam = GRAD_V_FAMILIES[i, j]
                L[i] += b.diff_adjoint(b.to_coeff(S_grid[i, j], fam), fam, j)
        return L

    def F_to_coeff(self, Fg) -> np.ndarray:
        b = self.basis
        out = np.empty((2, 2) + b.coeff_shape)
        for i in range(2):
            for j in range(2):
                out[i, j] = b.to_coeff(Fg[i, j], self.F_families[i, j])
        return out

    def elastic_load(self, Fg, gFg, t: float = 0.0):
        """
        Weak load of the conservative stress ``phi' F^T + phi I``.

        The ``phi I`` part is integrated by parts into ``-phi'_ij grad F_ij``.
        With ``phi'`` replaced by its projection onto the families of ``F`` the
        load is the exact adjoint of the discrete transport, so the elastic
        power equals the rate of stored energy.  Returns the load and the
        projected ``phi'`` coefficients.
        """
        b = self.basis
        dphi = stored_energy_derivative(Fg, self.model)
        self._finite(dphi, "conservative Cauchy stress", t)
        P = self.F_to_coeff(dphi)
        Pg = self.F_grid(P)
        S = np.einsum("ikxy,jkxy->ijxy", Pg, Fg)
        body = np.einsum("ijxy,ijkxy->kxy", Pg, gFg)
        load = self.stress_load(S) - np.stack([b.to_coeff(body[k], VELOCITY_FAMILIES[k]) for k in range(2)])
        return load, P

    def stress_load_coeff(self, S_coeff) -> np.ndarray:
        b = self.basis
        L = np.zeros((2,) + b.coeff_shape)
        for i in range(2):
            for j in range(2):
                L[i] += b.diff_adjoint(S_coeff[i, j], GRAD_V_FAMILIES[i, j], j)
        return L

    def strain_rate_coeff(self, gv) -> np.ndarray:
        return 0.5 * (gv + np.swapaxes(gv, 0, 1))

    def grad_strain(self, E):
        """``d E_ij / d x_k`` coefficients and families (E in GRAD_V_FAMILIES)."""
        return self.grad_tensor(E, GRAD_V_FAMILIES)

    def hyper_load(self, gE_grid, gE_fams):
        """Weak load of the hyperstress and its pointwise density ``nu |grad E|^p``."""
        b, mp = self.basis, self.mp
        g2 = np.sum(gE_grid ** 2, axis=(0, 1, 2))
        gnorm = np.sqrt(g2)
        scale = mp.nu * gnorm ** (mp.p - 2)
        h = scale * gE_grid
        G = np.zeros((2, 2) + b.coeff_shape)
        for i in range(2):
            for j in range(i, 2):
                for k in range(2):
                    fam = gE_fams[i, j, k]
                    G[i, j] += b.diff_adjoint(b.to_coeff(h[i, j, k], fam), fam, k)
        G[1, 0] = G[0, 1]
        return self.stress_load_coeff(G), scale * g2, gnorm

    def traction_vectors(self, t: float) -> dict:
        """Traction vectors on the edge quadrature nodes (for boundary_integrate)."""
        out = {}
        for edge, g in (self.scn.traction or {}).items():
            x, y, _ = self.basis.edge_nodes(edge)
            gt = np.broadcast_to(np.asarray(g(t, x, y), dtype=float), x.shape)
            vec = np.zeros((2,) + x.shape)
            vec[TANGENT_COMPONENT[edge]] = gt
            out[edge] = vec
        return out

    def external_load(self, t: float) -> np.ndarray | None:
        scn, b = self.scn, self.basis
        if scn.body_force is None and not scn.traction:
            return None
        L = np.zeros((2,) + b.coeff_shape)
        if scn.body_force is not None:
            fg = np.asarray(scn.body_force(t, self._X, self._Y), dtype=float)
            for i in range(2):
                L[i] += b.to_coeff(np.broadcast_to(fg[i], b.grid_shape), VELOCITY_FAMILIES[i])
        for edge, g in (scn.traction or {}).items():
            x, y, _ = b.edge_nodes(edge)
            gt = np.broadcast_to(np.asarray(g(t, x, y), dtype=float), x.shape)
            c = TANGENT_COMPONENT[edge]
            L[c] += b.edge_project(gt, VELOCITY_FAMILIES[c], edge)
        return L

    # -- right-hand sides -------------------------------------------------
    def evaluate(self, t: float, v: np.ndarray, F: np.ndarray, xi: np.ndarray | None = None,
                 momentum: bool = True) -> Evaluation:
        b, mp = self.basis, self.mp
        quad = b.wx * b.wy
        vg = self.velocity_grid(v)
        gv = self.grad_velocity(v)
        gvg = self.tensor_grid(gv, GRAD_V_FAMILIES)
        div_g = gvg[0, 0] + gvg[1, 1]
        div_c = gv[0, 0] + gv[1, 1]
        Fg = self.F_grid(F)
        gF, gF_fams = self.grad_tensor(F, self.F_families)
        gFg = self.tensor_grid(gF, gF_fams)

        v_rate = None
        dissipation = power = 0.0
        grad_e_max = 0.0
        if momentum:
            conv = np.einsum("jxy,ijxy->ixy", vg, gvg) + 0.5 * div_g * vg
            self._finite(conv, "convective term", t)
            load = -mp.rho * np.stack([b.to_coeff(conv[i], VELOCITY_FAMILIES[i]) for i in range(2)])

            el, dphi = self.elastic_load(Fg, gFg, t)
            load -= el

            E = self.strain_rate_coeff(gv)
            trE = E[0, 0] + E[1, 1]
            S = 2.0 * mp.D_mu * E
            S[0, 0] += mp.D_lambda * trE
            S[1, 1] += mp.D_lambda * trE
            load -= self.stress_load_coeff(S)
            visc_diss = float(np.sum(S * E))

            gE, gE_fams = self.grad_strain(E)
            gEg = np.empty((2, 2, 2) + b.grid_shape)
            for i in range(2):
                for k in range(2):
                    gEg[i, i, k] = b.to_grid(gE[i, i, k], gE_fams[i, i, k])
                    if i == 0:
                        gEg[0, 1, k] = b.to_grid(gE[0, 1, k], gE_fams[0, 1, k])
            gEg[1, 0] = gEg[0, 1]
            hl, hyper_density, gnorm = self.hyper_load(gEg, gE_fams)
            self._finite(hl, "hyperstress", t)
            load -= hl
            grad_e_max = float(gnorm.max())
            dissipation = visc_diss + quad * float(hyper_density.sum())
            if mp.epsilon:
                # stored energy removed by the regularization of the transport
                dissipation += mp.epsilon * float(np.sum(dphi * self._lam * F))

            ext = self.external_load(t)
            if ext is not None:
                self._finite(ext, "external load", t)
                load += ext
                power = float(np.sum(ext * v))
            v_rate = load / mp.rho * self._vmask

        # transport: (grad v) F - (v . grad) F
        rhs = np.einsum("ikxy,kjxy->ijxy", gvg, Fg) - np.einsum("kxy,ijkxy->ijxy", vg, gFg)
        self._finite(rhs, "deformation-gradient transport", t)
        F_rate = np.empty_like(F)
        for i in range(2):
            for j in range(2):
                F_rate[i, j] = b.to_coeff(rhs[i, j], self.F_families[i, j])
        if mp.epsilon:
            F_rate -= mp.epsilon * self._lam * F

        xi_rate = None
        if xi is not None:
            gxi = np.empty((2, 2) + b.coeff_shape)
            for i in range(2):
                for k in range(2):
                    gxi[i, k], _ = b.diff(xi[i], VELOCITY_FAMILIES[i], k)
            gxig = self.tensor_grid(gxi, GRAD_V_FAMILIES)
            r = -vg - np.einsum("kxy,ikxy->ixy", vg, gxig)
            xi_rate = np.stack([b.to_coeff(r[i], VELOCITY_FAMILIES[i]) for i in range(2)])

        return Evaluation(v_rate, F_rate, xi_rate, dissipation, power,
                          float(np.sum(div_c ** 2)), grad_e_max, float(np.abs(vg).max()))

    @staticmethod
    def _finite(arr, term, t):
        if not np.all(np.isfinite(arr)):
            raise NumericalError(f"non-finite {term} at t={t}", term=term, t=t)

    def momentum_rhs(self, s: SimState) -> np.ndarray:
        return self.evaluate(s.t, s.v, s.F).v_rate

    def transport_rhs(self, s: SimState) -> np.ndarray:
        v = self.velocity_at(s)
        return self.evaluate(s.t, v, s.F, momentum=False).F_rate

    # -- linear propagators -----------------------------------------------
    def _velocity_symbol(self, sigma: float):
        mp, lam = self.mp, self._lam
        alpha = (mp.D_mu * lam + 0.5 * sigma * lam ** 2) / mp.rho
        beta = (mp.D_lambda + mp.D_mu + 0.5 * sigma * lam) / mp.rho
        return alpha, beta

    def velocity_operator(self, v, sigma: float):
        """Stiff linear part ``A v`` (positive semidefinite, per-mode 2x2)."""
        alpha, beta = self._velocity_symbol(sigma)
        kv = self._khat[0] * v[0] + self._khat[1] * v[1]
        return alpha * v + beta * self._lam * kv * self._khat

    def velocity_exponential(self, sigma: float, tau: float) -> ExponentialOperator:
        alpha, beta = self._velocity_symbol(sigma)
        return ExponentialOperator(tau, alpha, alpha + beta * self._lam, self._khat)

    def F_exponential(self, tau: float) -> ExponentialOperator:
        return ExponentialOperator(tau, self.mp.epsilon * self._lam)

    # -- time stepping ------------------------------------------------------
    def advance(self, s: SimState, h: float) -> tuple[SimState, StepInfo]:
        # overflow shows up as a NumericalError from the finiteness checks
        with np.errstate(over="ignore", invalid="ignore"):
            return self._advance(s, h)

    def _advance(self, s: SimState, h: float) -> tuple[SimState, StepInfo]:
        """
        One ETDRK3 step.

        Each unknown is written ``u' = -A u + N(u)`` with the stiff linear part
        ``A`` (zero for the return map).  With ``E_j`` the phi-functions of
        ``-A h`` and ``H_j`` those of ``-A h / 2``::

            a = H_0 u + h/2 H_1 N(u)
            b = E_0 u + h E_1 (2 N(a) - N(u))
            u+ = E_0 u + h [(E_1 - 3E_2 + 4E_3) N(u) + 4(E_2 - 2E_3) N(a) + (4E_3 - E_2) N(b)]
        """
        if not h > 0:
            raise ConfigError(f"time step must be positive, got {h}")
        mp = self.mp
        momentum = self.scn.prescribed_velocity is None
        track = s.xi is not None
        zero = np.zeros_like(self._lam)

        ev0 = self.evaluate(s.t, self.velocity_at(s) if not momentum else s.v, s.F, s.xi, momentum=momentum)
        cfl = ev0.v_max * h / self.basis.grid_spacing
        sigma = 0.0
        if momentum and self.scn.hyper_shift and ev0.grad_e_max > 0:
            # bounds the Jacobian of nu |G|^{p-2} G, whose largest eigenvalue
            # is (p - 1) nu |G|^{p-2}; the explicit remainder then only lags
            sigma = (mp.p - 1) * mp.nu * ev0.grad_e_max ** (mp.p - 2)

        ops = {}
        if momentum:
            ops["v"] = (self.velocity_exponential(sigma, 0.5 * h), self.velocity_exponential(sigma, h))
        ops["F"] = (self.F_exponential(0.5 * h), self.F_exponential(h))
        if track:
            ops["xi"] = (ExponentialOperator(0.5 * h, zero), ExponentialOperator(h, zero))

        def remainders(ev, v, F):
            out = {"F": ev.F_rate + (mp.epsilon * self._lam * F if mp.epsilon else 0.0)}
            if momentum:
                out["v"] = ev.v_rate + self.velocity_operator(v, sigma)
            if track:
                out["xi"] = ev.xi_rate
            return out

        u0 = {"v": s.v, "F": s.F, "xi": s.xi}
        N0 = remainders(ev0, s.v, s.F)

        ua = {}
        for key, (half, _) in ops.items():
            ua[key] = half.apply(lambda P: P[0], u0[key]) + 0.5 * h * half.apply(lambda P: P[1], N0[key])
        va = ua["v"] if momentum else self.velocity_at(s, s.t + 0.5 * h)
        eva = self.evaluate(s.t + 0.5 * h, va, ua["F"], ua.get("xi"), momentum=momentum)
        Na = remainders(eva, va, ua["F"])

        ub = {}
        for key, (_, full) in ops.items():
            ub[key] = full.apply(lambda P: P[0], u0[key]) + h * full.apply(lambda P: P[1], 2.0 * Na[key] - N0[key])
        vb = ub["v"] if momentum else self.velocity_at(s, s.t + h)
        evb = self.evaluate(s.t + h, vb, ub["F"], ub.get("xi"), momentum=momentum)
        Nb = remainders(evb, vb, ub["F"])

        new = {}
        for key, (_, full) in ops.items():
            new[key] = (full.apply(lambda P: P[0], u0[key])
                        + h * (full.apply(lambda P: P[1] - 3.0 * P[2] + 4.0 * P[3], N0[key])
                               + full.apply(lambda P: 4.0 * (P[2] - 2.0 * P[3]), Na[key])
                               + full.apply(lambda P: 4.0 * P[3] - P[2], Nb[key])))
        t_new = s.t + h
        v_new = new["v"] if momentum else self.velocity_at(s, t_new)
        out = SimState(t_new, v_new, new["F"], new.get("xi"))
        out.check_finite()
        evs = (ev0, eva, evb)
        return out, StepInfo(s.t, h, ETD_B, tuple(e.dissipation for e in evs),
                             tuple(e.power for e in evs), tuple(e.div_sq for e in evs), sigma, cfl)

    def step(self, s: SimState, dt: float) -> SimState:
        return self.advance(s, dt)[0]

    def time_grid(self) -> tuple[int, float]:
        """Number of steps and the step actually used (hits t_end exactly)."""
        scn = self.scn
        if scn.t_end == 0:
            return 0, scn.dt
        n = max(1, int(round(scn.t_end / scn.dt)))
        return n, scn.t_end / n


@functools.lru_cache(maxsize=16)
def solver_for(scn: Scenario) -> Solver:
    return Solver(scn)


def momentum_rhs(s: SimState, scn: Scenario) -> np.ndarray:
    """Velocity-coefficient rates of the Galerkin momentum equation."""
    return solver_for(scn).momentum_rhs(s)


def transport_rhs(s: SimState, scn: Scenario) -> np.ndarray:
    """Deformation-gradient coefficient rates (including ``-eps lambda F``)."""
    return solver_for(scn).transport_rhs(s)


def step(s: SimState, dt: float, scn: Scenario) -> SimState:
    """One integrating-factor RK3 step."""
    return solver_for(scn).step(s, dt)


@dataclass
class Trajectory:
    """Sampled states and energy ledgers of one run."""

    states: list = field(default_factory=list)
    ledgers: list = field(default_factory=list)
    steps: int = 0
    div_sq_integral: float = 0.0
    step_infos: list = field(default_factory=list)

    @property
    def final(self) -> SimState:
        return self.states[-1]

    def div_v_l2(self) -> float:
        """``||div v||`` in L2 over time and space."""
        return math.sqrt(max(self.div_sq_integral, 0.0))


def run(scn: Scenario, callbacks: Sequence[Callable] = (), sample_stride: int = 1,
        keep_states: bool = True, keep_step_infos: bool = False) -> Trajectory:
    """
    Advance from the projected initial data to ``scn.t_end``.

    Each callback is called as ``cb(state, ledger)`` at every sample (the
    initial state, every ``sample_stride`` steps, and the final state).  On a
    numerical abort the exception propagates after the callbacks have seen
    every completed sample; its ``t`` attribute holds the failing time.
    """
    from .energy import ledger_accumulate, ledger_start

    solver = solver_for(scn)
    n, h = solver.time_grid()
    s = solver.initial_state()
    ledger = ledger_start(s, solver)
    traj = Trajectory()

    def emit(state, led):
        if keep_states:
            traj.states.append(state)
        traj.ledgers.append(led)
        for cb in callbacks:
            cb(state, led)

    emit(s, ledger)
    warned = False
    for k in range(1, n + 1):
        try:
            s, info = solver.advance(s, h)
        except NumericalError as exc:
            if exc.t is None:
                exc.t = s.t
            raise
        if info.cfl > 1.0 and not warned:
            warnings.warn(f"advective CFL number {info.cfl:.3g} exceeds 1 at t={info.t:.6g}",
                          CFLWarning, stacklevel=2)
            warned = True
        with np.errstate(over="ignore", invalid="ignore"):
            ledger = ledger_accumulate(ledger, info, s, solver)
        traj.div_sq_integral += h * sum(b * d for b, d in zip(info.weights, info.div_sq))
        if keep_step_infos:
            traj.step_infos.append(info)
        traj.steps = k
        if k % sample_stride == 0 or k == n:
            emit(s, ledger)
    if not keep_states:
        traj.states.append(s)
    return traj
