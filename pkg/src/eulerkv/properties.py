"""
Discrete identities the scheme is built to satisfy, as reusable checks.

Each check returns a small record so that the test suite, the acceptance
gate and the ``verify`` command share one implementation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .basis import random_coefficients
from .constitutive import StoredEnergyModel, stored_energy, stored_energy_derivative
from .dynamics import GRAD_V_FAMILIES, VELOCITY_FAMILIES, Scenario, Solver


@dataclass(frozen=True)
class CheckResult:
    name: str
    value: float
    bound: float

    @property
    def passed(self) -> bool:
        return bool(self.value < self.bound)

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.value:.3e} (bound {self.bound:.3e})"


def random_velocity(solver: Solver, rng: np.random.Generator, decay: float = 1.0) -> np.ndarray:
    return random_coefficients(solver.basis, VELOCITY_FAMILIES, rng, decay)


def random_tensor(solver: Solver, rng: np.random.Generator, decay: float = 1.0) -> np.ndarray:
    return random_coefficients(solver.basis, solver.F_families, rng, decay)


def convective_tested_sum(solver: Solver, v: np.ndarray) -> tuple[float, float]:
    """
    ``int rho ((v . grad) v) . v + (rho / 2)(div v)|v|^2`` on the padded grid.

    Returns the value and ``rho ||v||_{L3}^3``.
    """
    b, rho = solver.basis, solver.mp.rho
    vg = solver.velocity_grid(v)
    gvg = solver.tensor_grid(solver.grad_velocity(v), GRAD_V_FAMILIES)
    div = gvg[0, 0] + gvg[1, 1]
    conv = np.einsum("jxy,ijxy->ixy", vg, gvg)
    v2 = np.sum(vg ** 2, axis=0)
    val = rho * float(b.integrate_grid(np.sum(conv * vg, axis=0) + 0.5 * div * v2))
    scale = rho * float(b.integrate_grid(v2 ** 1.5))
    return val, scale


def transport_tested_sum(solver: Solver, v: np.ndarray, F: np.ndarray) -> tuple[float, float]:
    """
    ``int ((v . grad) F) : F + (1/2)(div v)|F|^2`` on the padded grid.

    Returns the value and ``||v||_L2 ||F||_L2^2``.
    """
    b = solver.basis
    vg = solver.velocity_grid(v)
    gvg = solver.tensor_grid(solver.grad_velocity(v), GRAD_V_FAMILIES)
    div = gvg[0, 0] + gvg[1, 1]
    Fg = solver.F_grid(F)
    gF, fams = solver.grad_tensor(F, solver.F_families)
    gFg = solver.tensor_grid(gF, fams)
    adv = np.einsum("kxy,ijkxy->ijxy", vg, gFg)
    F2 = np.sum(Fg ** 2, axis=(0, 1))
    val = float(b.integrate_grid(np.sum(adv * Fg, axis=(0, 1)) + 0.5 * div * F2))
    scale = math.sqrt(float(np.sum(v ** 2))) * float(np.sum(F ** 2))
    return val, scale


def elastic_power_gap(solver: Solver, v: np.ndarray, F: np.ndarray) -> tuple[float, float]:
    """
    Gap between the elastic power in the momentum equation and the rate of
    stored energy produced by the discrete transport of ``F``.
    """
    Fg = solver.F_grid(F)
    gF, fams = solver.grad_tensor(F, solver.F_families)
    load, dphi = solver.elastic_load(Fg, solver.tensor_grid(gF, fams))
    ev = solver.evaluate(0.0, v, F, momentum=False)
    power = float(np.sum(load * v))
    rate = float(np.sum(dphi * ev.F_rate))
    return abs(power - rate), max(abs(power), abs(rate), np.finfo(float).tiny)


def random_deformation(rng: np.random.Generator, scale: float = 0.4) -> np.ndarray:
    """Random 2x2 matrix near the identity with positive determinant."""
    while True:
        F = np.eye(2) + scale * rng.standard_normal((2, 2))
        if np.linalg.det(F) > 0.05:
            return F


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    a = rng.uniform(0, 2 * math.pi)
    return np.array([[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]])


def derivative_error(F: np.ndarray, model: StoredEnergyModel, h: float = 1e-6) -> float:
    """Relative Frobenius error of the analytic ``phi'`` against central differences."""
    F = np.asarray(F, dtype=float)
    ana = stored_energy_derivative(F, model)
    num = np.empty((2, 2))
    for i in range(2):
        for j in range(2):
            dF = np.zeros((2, 2))
            dF[i, j] = h
            num[i, j] = (stored_energy(F + dF, model) - stored_energy(F - dF, model)) / (2 * h)
    return float(np.linalg.norm(ana - num) / max(np.linalg.norm(ana), 1e-12))


def frame_defect(F: np.ndarray, Q: np.ndarray, model: StoredEnergyModel) -> float:
    """``|phi(QF) - phi(F)| / (1 + phi(F))``."""
    phi = float(stored_energy(F, model))
    return abs(float(stored_energy(Q @ F, model)) - phi) / (1.0 + phi)


def equilibrium_drift(scn: Scenario, steps: int = 50) -> float:
    """Largest of ``max|v|``, ``max|F - I|`` and the energy residual after ``steps`` steps from rest."""
    from .energy import ledger_accumulate, ledger_start

    rest = scn.with_(v0=None, F0=None, body_force=None, traction=None, prescribed_velocity=None,
                     track_return_map=False)
    solver = Solver(rest)
    s = solver.initial_state()
    led = ledger_start(s, solver)
    for _ in range(steps):
        s, info = solver.advance(s, scn.dt)
        led = ledger_accumulate(led, info, s, solver)
    Fg = solver.F_grid(s.F)
    Fg[0, 0] -= 1.0
    Fg[1, 1] -= 1.0
    return max(float(np.abs(solver.velocity_grid(s.v)).max()), float(np.abs(Fg).max()), abs(led.residual))


def verify_suite(scn: Scenario, seed: int = 0, samples: int = 10) -> list[CheckResult]:
    """The structural checks on the discretization of ``scn``."""
    rng = np.random.default_rng(seed)
    solver = Solver(scn.with_(prescribed_velocity=None))
    out = []
    worst = 0.0
    for _ in range(samples):
        val, scale = convective_tested_sum(solver, random_velocity(solver, rng))
        worst = max(worst, abs(val) / scale)
    out.append(CheckResult("convective skew-symmetry", worst, 1e-10))
    worst = 0.0
    for _ in range(samples):
        val, scale = transport_tested_sum(solver, random_velocity(solver, rng), random_tensor(solver, rng))
        worst = max(worst, abs(val) / scale)
    out.append(CheckResult("transport energy identity", worst, 1e-10))
    worst = 0.0
    for _ in range(samples):
        F = 0.2 * random_tensor(solver, rng, decay=2.0)
        root_area = math.sqrt(scn.domain.Lx * scn.domain.Ly)
        F[0, 0, 0, 0] += root_area
        F[1, 1, 0, 0] += root_area
        gap, scale = elastic_power_gap(solver, random_velocity(solver, rng), F)
        worst = max(worst, gap / scale)
    out.append(CheckResult("elastic power consistency", worst, 1e-10))
    models = (scn.energy, StoredEnergyModel(kind="svk"))
    err = max(derivative_error(random_deformation(rng), m) for m in models for _ in range(samples))
    out.append(CheckResult("stored-energy derivative", err, 1e-5))
    fd = 0.0
    for m in models:
        for _ in range(samples):
            fd = max(fd, frame_defect(random_deformation(rng), random_rotation(rng), m))
    out.append(CheckResult("frame indifference", fd, 1e-12))
    out.append(CheckResult("equilibrium fixed point", equilibrium_drift(scn), 1e-11))
    return out
