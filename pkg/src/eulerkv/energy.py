"""
Energy bookkeeping along a trajectory.

The balance tracked is

    E_kin(t) + E_sto(t) + D_cum(t) - W_cum(t) = E_kin(0) + E_sto(0)

with ``D_cum`` and ``W_cum`` integrated using the stage values and weights of
the time integrator.  Whatever is left over is reported as the residual.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .basis import GalerkinBasis
from .constitutive import stored_energy
from .dynamics import GRAD_V_FAMILIES


@dataclass(frozen=True)
class LedgerSample:
    E_kin: float
    E_sto: float
    dissipation_rate: float
    external_power: float


@dataclass(frozen=True)
class EnergyLedger:
    t: float
    E_kin: float
    E_sto: float
    D_cum: float
    W_cum: float
    E0: float

    @property
    def total(self) -> float:
        return self.E_kin + self.E_sto

    @property
    def residual(self) -> float:
        return self.E_kin + self.E_sto + self.D_cum - self.W_cum - self.E0


def kinetic_energy(s, solver) -> float:
    v = solver.velocity_at(s)
    vg = solver.velocity_grid(v)
    return 0.5 * solver.mp.rho * float(solver.basis.integrate_grid(np.sum(vg ** 2, axis=0)))


def stored_energy_total(s, solver) -> float:
    Fg = solver.F_grid(s.F)
    return float(solver.basis.integrate_grid(stored_energy(Fg, solver.model)))


def ledger_sample(s, solver) -> LedgerSample:
    """Instantaneous kinetic and stored energy, dissipation rate and load power."""
    v = solver.velocity_at(s)
    ev = solver.evaluate(s.t, v, s.F)
    return LedgerSample(kinetic_energy(s, solver), stored_energy_total(s, solver),
                        ev.dissipation, ev.power)


def ledger_start(s, solver) -> EnergyLedger:
    ek = kinetic_energy(s, solver)
    es = stored_energy_total(s, solver)
    return EnergyLedger(s.t, ek, es, 0.0, 0.0, ek + es)


def ledger_accumulate(prev: EnergyLedger, info, s_new, solver) -> EnergyLedger:
    """
    Advance the cumulative dissipation and external work over one step.

    ``info`` carries the stage rates and quadrature weights of the step that
    produced ``s_new``; the same weights advance the state, so a constant rate
    is integrated exactly.
    """
    h = info.dt
    dD = h * sum(b * r for b, r in zip(info.weights, info.dissipation))
    dW = h * sum(b * r for b, r in zip(info.weights, info.power))
    return replace(prev, t=s_new.t,
                   E_kin=kinetic_energy(s_new, solver),
                   E_sto=stored_energy_total(s_new, solver),
                   D_cum=prev.D_cum + dD, W_cum=prev.W_cum + dW)


def relative_residuals(ledgers) -> np.ndarray:
    """Residuals scaled by the largest ``E_kin + E_sto`` seen during the run."""
    scale = max(max(l.total for l in ledgers), np.finfo(float).tiny)
    return np.array([l.residual for l in ledgers]) / scale


def apriori_monitors(s, solver) -> dict:
    """
    Norms whose boundedness mirrors the a-priori estimates.

    Returns ``F_L2``, ``gradF_L2``, ``v_L2``, ``gradv_Linf`` and ``gradE_Lp``
    (``p`` being the hyperstress exponent), all computed from the spectral
    representation.
    """
    b: GalerkinBasis = solver.basis
    v = solver.velocity_at(s)
    F_L2 = float(np.sqrt(np.sum(s.F ** 2)))
    gF, _ = solver.grad_tensor(s.F, solver.F_families)
    gradF_L2 = float(np.sqrt(np.sum(gF ** 2)))
    v_L2 = float(np.sqrt(np.sum(v ** 2)))
    gv = solver.grad_velocity(v)
    gvg = solver.tensor_grid(gv, GRAD_V_FAMILIES)
    gradv_inf = float(np.sqrt(np.sum(gvg ** 2, axis=(0, 1))).max())
    E = solver.strain_rate_coeff(gv)
    gE, fams = solver.grad_strain(E)
    gEg = solver.tensor_grid(gE, fams)
    p = solver.mp.p
    gE_Lp = float(b.integrate_grid(np.sum(gEg ** 2, axis=(0, 1, 2)) ** (p / 2)) ** (1.0 / p))
    return {"F_L2": F_L2, "gradF_L2": gradF_L2, "v_L2": v_L2,
            "gradv_Linf": gradv_inf, "gradE_Lp": gE_Lp}
