"""
Kinematic checks that do not go through the momentum equation.

* a characteristics oracle: ``x' = v(t, x)``, ``F' = grad v(t, x) F`` integrated
  with classical RK4 along particle paths, v and grad v evaluated spectrally;
* the transport identity of ``det F``;
* the return map ``xi`` (inverse deformation) and its duality with ``F``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .basis import GalerkinBasis
from .dynamics import GRAD_V_FAMILIES, VELOCITY_FAMILIES, SimState, Solver, Trajectory, run, solver_for
from .errors import NumericalError

OUTFLOW_TOL = 1e-8


@dataclass
class ParticlePath:
    """Samples of one characteristic: positions and the deformation gradient."""

    x0: np.ndarray
    times: list = field(default_factory=list)
    positions: list = field(default_factory=list)
    F: list = field(default_factory=list)

    @property
    def x_end(self) -> np.ndarray:
        return self.positions[-1]

    @property
    def F_end(self) -> np.ndarray:
        return self.F[-1]


class SpectralVelocity:
    """
    Velocity provider from a coefficient function ``t -> (2, Nx, Ny)``.

    Calling it with ``(t, x, y)`` returns ``v`` with shape ``(2, P)`` and
    ``grad v`` with shape ``(2, 2, P)``, ``grad v[i, j] = d v_i / d x_j``.
    """

    def __init__(self, basis: GalerkinBasis, coeff_of_t: Callable[[float], np.ndarray]):
        self.basis = basis
        self.coeff_of_t = coeff_of_t

    def evaluate(self, coeff, x, y):
        b = self.basis
        v = np.stack([b.eval_points(coeff[i], VELOCITY_FAMILIES[i], x, y) for i in range(2)])
        g = np.empty((2, 2) + v.shape[1:])
        for i in range(2):
            for j in range(2):
                d, fam = b.diff(coeff[i], VELOCITY_FAMILIES[i], j)
                g[i, j] = b.eval_points(d, fam, x, y)
        return v, g

    def __call__(self, t: float, x, y):
        return self.evaluate(self.coeff_of_t(t), x, y)


class HermiteVelocity(SpectralVelocity):
    """
    Cubic Hermite interpolation in time of stored velocity coefficients.

    ``times`` must be increasing; ``coeffs`` and ``rates`` hold the velocity
    coefficients and their time derivatives at those times.
    """

    def __init__(self, basis: GalerkinBasis, times: Sequence[float], coeffs: Sequence[np.ndarray],
                 rates: Sequence[np.ndarray]):
        self.times = np.asarray(times, dtype=float)
        if self.times.ndim != 1 or len(self.times) < 2 or np.any(np.diff(self.times) <= 0):
            raise ValueError("Hermite interpolation needs at least two increasing times")
        self.coeffs = [np.asarray(c, dtype=float) for c in coeffs]
        self.rates = [np.asarray(r, dtype=float) for r in rates]
        super().__init__(basis, self.interpolate)

    @classmethod
    def from_trajectory(cls, traj: Trajectory, solver: Solver) -> "HermiteVelocity":
        times, coeffs, rates = [], [], []
        for s in traj.states:
            v = solver.velocity_at(s)
            ev = solver.evaluate(s.t, v, s.F)
            times.append(s.t)
            coeffs.append(v)
            rates.append(ev.v_rate)
        return cls(solver.basis, times, coeffs, rates)

    def interpolate(self, t: float) -> np.ndarray:
        ts = self.times
        k = int(np.clip(np.searchsorted(ts, t, side="right") - 1, 0, len(ts) - 2))
        h = ts[k + 1] - ts[k]
        s = (t - ts[k]) / h
        h00 = 2 * s ** 3 - 3 * s ** 2 + 1
        h10 = s ** 3 - 2 * s ** 2 + s
        h01 = -2 * s ** 3 + 3 * s ** 2
        h11 = s ** 3 - s ** 2
        return (h00 * self.coeffs[k] + h10 * h * self.rates[k]
                + h01 * self.coeffs[k + 1] + h11 * h * self.rates[k + 1])


def _check_inside(basis: GalerkinBasis, x: np.ndarray, t: float) -> None:
    d = basis.domain
    tol = OUTFLOW_TOL * min(d.Lx, d.Ly)
    if np.any(x[0] < -tol) or np.any(x[0] > d.Lx + tol) or np.any(x[1] < -tol) or np.any(x[1] > d.Ly + tol):
        raise NumericalError(f"particle path left the domain at t={t:.6g}", term="characteristics", t=t)


def characteristics_oracle(velocity: SpectralVelocity, x0, F0=None, t_end: float = 1.0,
                           dt_ode: float = 1e-3, t0: float = 0.0) -> list[ParticlePath]:
    """
    Integrate ``x' = v(t, x)``, ``F' = grad v(t, x) F`` with classical RK4.

    ``x0`` has shape ``(P, 2)`` (or ``(2,)`` for a single seed); ``F0`` is one
    ``(2, 2)`` matrix or one per seed, the identity by default.  The step is the
    largest one not exceeding ``dt_ode`` that lands on ``t_end``.  Raises
    :class:`NumericalError` if a path leaves the domain.
    """
    x = np.atleast_2d(np.asarray(x0, dtype=float)).T.copy()  # (2, P)
    P = x.shape[1]
    if F0 is None:
        F = np.repeat(np.eye(2)[:, :, None], P, axis=2)
    else:
        F0 = np.asarray(F0, dtype=float)
        F = np.repeat(F0[:, :, None], P, axis=2) if F0.ndim == 2 else np.moveaxis(F0, 0, -1).copy()
    n = max(1, int(math.ceil((t_end - t0) / dt_ode - 1e-12))) if t_end > t0 else 0
    h = (t_end - t0) / n if n else 0.0
    paths = [ParticlePath(x[:, p].copy()) for p in range(P)]

    def record(t):
        for p, path in enumerate(paths):
            path.times.append(t)
            path.positions.append(x[:, p].copy())
            path.F.append(F[:, :, p].copy())

    def rhs(t, xs, Fs):
        v, g = velocity(t, xs[0], xs[1])
        return v, np.einsum("ikp,kjp->ijp", g, Fs)

    t = t0
    record(t)
    for _ in range(n):
        k1x, k1F = rhs(t, x, F)
        k2x, k2F = rhs(t + h / 2, x + h / 2 * k1x, F + h / 2 * k1F)
        k3x, k3F = rhs(t + h / 2, x + h / 2 * k2x, F + h / 2 * k2F)
        k4x, k4F = rhs(t + h, x + h * k3x, F + h * k3F)
        x = x + h / 6 * (k1x + 2 * k2x + 2 * k3x + k4x)
        F = F + h / 6 * (k1F + 2 * k2F + 2 * k3F + k4F)
        t = t + h
        _check_inside(velocity.basis, x, t)
        record(t)
    return paths


def F_at_points(s: SimState, solver: Solver, x, y) -> np.ndarray:
    """Evaluate the Galerkin ``F`` at points; shape ``(2, 2, P)``."""
    b = solver.basis
    out = np.empty((2, 2, np.size(x)))
    for i in range(2):
        for j in range(2):
            out[i, j] = b.eval_points(s.F[i, j], solver.F_families[i, j], x, y)
    return out


def oracle_error(s: SimState, solver: Solver, paths: Sequence[ParticlePath]) -> float:
    """Largest Frobenius distance between the Galerkin ``F`` at the path ends and the ODE ``F``."""
    xe = np.array([p.x_end for p in paths])
    Fp = F_at_points(s, solver, xe[:, 0], xe[:, 1])
    Fo = np.stack([p.F_end for p in paths], axis=-1)
    return float(np.sqrt(np.sum((Fp - Fo) ** 2, axis=(0, 1))).max())


def det_field(F_grid) -> np.ndarray:
    return F_grid[0, 0] * F_grid[1, 1] - F_grid[0, 1] * F_grid[1, 0]


def min_det_F(s: SimState, solver: Solver) -> float:
    """Minimum of ``det F`` over the quadrature points."""
    return float(det_field(solver.F_grid(s.F)).min())


def _det_and_gradient(s: SimState, solver: Solver):
    b = solver.basis
    J = det_field(solver.F_grid(s.F))
    Jc = b.to_coeff(J, "cc")
    grad = []
    for axis in range(2):
        d, fam = b.diff(Jc, "cc", axis)
        grad.append(b.to_grid(d, fam))
    return J, np.stack(grad)


def _velocity_and_divergence(s: SimState, solver: Solver, t: float | None = None):
    v = solver.velocity_at(s, t)
    gv = solver.grad_velocity(v)
    return solver.velocity_grid(v), solver.basis.to_grid(gv[0, 0] + gv[1, 1], "cc")


def det_transport_defect(s: SimState, solver: Solver) -> float:
    """
    ``|| cof F : F' + v . grad det F - (div v) det F ||_L2`` at one state.

    ``F'`` is the discrete transport rate, so this isolates what the projection
    onto the Galerkin space does to the identity ``D/Dt det F = (div v) det F``.
    """
    b = solver.basis
    v = solver.velocity_at(s)
    ev = solver.evaluate(s.t, v, s.F, momentum=False)
    Fg = solver.F_grid(s.F)
    Fr = solver.F_grid(ev.F_rate)
    cof_rate = Fg[1, 1] * Fr[0, 0] + Fg[0, 0] * Fr[1, 1] - Fg[0, 1] * Fr[1, 0] - Fg[1, 0] * Fr[0, 1]
    vg, div = _velocity_and_divergence(s, solver)
    J, gJ = _det_and_gradient(s, solver)
    r = cof_rate + np.einsum("kxy,kxy->xy", vg, gJ) - div * J
    return float(np.sqrt(b.integrate_grid(r ** 2)))


def det_transport_check(states: Sequence[SimState], solver: Solver) -> list[tuple[float, float]]:
    """
    Defect of ``d_t det F + v . grad det F - (div v) det F`` along stored states.

    The time derivative is a centered difference of neighbouring snapshots,
    so the first and last states carry no entry.  Returns ``(t, L2 defect)``.
    """
    b = solver.basis
    out = []
    for k in range(1, len(states) - 1):
        sm, s, sp = states[k - 1], states[k], states[k + 1]
        Jm = det_field(solver.F_grid(sm.F))
        Jp = det_field(solver.F_grid(sp.F))
        dJ = (Jp - Jm) / (sp.t - sm.t)
        vg, div = _velocity_and_divergence(s, solver)
        J, gJ = _det_and_gradient(s, solver)
        r = dJ + np.einsum("kxy,kxy->xy", vg, gJ) - div * J
        out.append((s.t, float(np.sqrt(b.integrate_grid(r ** 2)))))
    return out


def return_map_gradient(s: SimState, solver: Solver) -> np.ndarray:
    """``grad xi = I + grad u`` on the grid, ``xi = x + u``."""
    if s.xi is None:
        raise ValueError("state carries no return map; run with track_return_map=True")
    b = solver.basis
    g = np.empty((2, 2) + b.coeff_shape)
    for i in range(2):
        for k in range(2):
            g[i, k], _ = b.diff(s.xi[i], VELOCITY_FAMILIES[i], k)
    G = solver.tensor_grid(g, GRAD_V_FAMILIES)
    G[0, 0] += 1.0
    G[1, 1] += 1.0
    return G


def return_map_defect(s: SimState, solver: Solver) -> dict:
    """
    Duality between the evolved ``F`` and the return map.

    ``defect = || F grad xi - I ||_L2``; ``inverse_gap`` is the relative L2
    distance between ``(grad xi)^{-1}`` and ``F``; ``min_det`` is the smallest
    ``det grad xi``.  Both norms are infinite once ``grad xi`` is singular.
    """
    b = solver.basis
    G = return_map_gradient(s, solver)
    Fg = solver.F_grid(s.F)
    detG = det_field(G)
    min_det = float(detG.min())
    if min_det <= 0:
        return {"defect": math.inf, "inverse_gap": math.inf, "min_det": min_det}
    R = np.einsum("ikxy,kjxy->ijxy", Fg, G)
    R[0, 0] -= 1.0
    R[1, 1] -= 1.0
    defect = math.sqrt(b.integrate_grid(np.sum(R ** 2, axis=(0, 1))))
    inv = np.array([[G[1, 1], -G[0, 1]], [-G[1, 0], G[0, 0]]]) / detG
    gap = math.sqrt(b.integrate_grid(np.sum((inv - Fg) ** 2, axis=(0, 1))))
    gap /= math.sqrt(b.integrate_grid(np.sum(Fg ** 2, axis=(0, 1))))
    return {"defect": defect, "inverse_gap": gap, "min_det": min_det}


def return_map_evolve(scn, sample_stride: int = 1) -> tuple[Trajectory, list[tuple[float, dict]]]:
    """
    Run ``scn`` with the return map tracked and report the duality defect at
    every sample.  ``xi`` starts as the identity and is advected by the same
    velocity and integrator as ``F``.
    """
    scn = scn.with_(track_return_map=True)
    traj = run(scn, sample_stride=sample_stride)
    solver = solver_for(scn)
    return traj, [(s.t, return_map_defect(s, solver)) for s in traj.states]
