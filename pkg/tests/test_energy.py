import math

import numpy as np
import pytest

from conftest import reference_scenario, shear
from eulerkv import MaterialParams, Scenario, StoredEnergyModel
from eulerkv.basis import random_coefficients
from eulerkv.constitutive import stored_energy
from eulerkv.dynamics import ETD_B, SimState, Solver, StepInfo, run
from eulerkv.energy import (
    EnergyLedger,
    apriori_monitors,
    kinetic_energy,
    ledger_accumulate,
    ledger_sample,
    ledger_start,
    relative_residuals,
    stored_energy_total,
)


def gauss_points(n=64):
    z, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (z + 1)
    X, Y = np.meshgrid(x, x, indexing="ij")
    return X.ravel(), Y.ravel(), 0.25 * np.outer(w, w).ravel()


def eval_velocity(s, v, X, Y):
    return np.stack([s.basis.eval_points(v[i], fam, X, Y) for i, fam in enumerate(("sc", "cs"))])


def eval_tensor(s, F, X, Y):
    return np.array([[s.basis.eval_points(F[i, j], s.F_families[i, j], X, Y) for j in range(2)]
                     for i in range(2)])


class TestLedgerSample:

    def test_rest_state(self):
        s = Solver(Scenario(nx=8))
        smp = ledger_sample(s.initial_state(), s)
        assert (smp.E_kin, smp.E_sto, smp.dissipation_rate, smp.external_power) == (0.0, 0.0, 0.0, 0.0)

    def test_unit_mode_kinetic_energy(self):
        s = Solver(Scenario(nx=8, material=MaterialParams(rho=2.0)))
        st0 = s.initial_state()
        v = np.zeros_like(st0.v)
        v[0, 1, 2] = 1.0
        assert kinetic_energy(SimState(0.0, v, st0.F), s) == pytest.approx(1.0, rel=1e-14)

    def test_random_state_vs_gauss_quadrature(self, rng):
        # low-mode fields keep every integrand a trigonometric polynomial of modest degree
        scn = Scenario(nx=16, material=MaterialParams(rho=1.7, nu=0.01, p=4.0), energy=StoredEnergyModel(kind="svk"))
        s = Solver(scn)
        v = random_coefficients(s.basis, ("sc", "cs"), rng) * 0.3
        v[:, 4:, :] = 0.0
        v[:, :, 4:] = 0.0
        F = s.initial_state().F + 0.1 * random_coefficients(s.basis, s.F_families, rng)
        F[:, :, 4:, :] = 0.0
        F[:, :, :, 4:] = 0.0
        st0 = SimState(0.0, v, F)
        X, Y, W = gauss_points()
        vg = eval_velocity(s, v, X, Y)
        ek = 0.5 * 1.7 * float(np.sum(W * np.sum(vg ** 2, axis=0)))
        es = float(np.sum(W * stored_energy(eval_tensor(s, F, X, Y), scn.energy)))
        smp = ledger_sample(st0, s)
        assert smp.E_kin == pytest.approx(ek, rel=1e-10)
        assert smp.E_sto == pytest.approx(es, rel=1e-10)
        assert smp.dissipation_rate > 0

    def test_kinetic_energy_uses_prescribed_velocity(self):
        coeff = np.zeros((2, 8, 8))
        coeff[0, 1, 1] = 2.0
        scn = Scenario(nx=8, prescribed_velocity=lambda t: coeff)
        s = Solver(scn)
        assert kinetic_energy(s.initial_state(), s) == pytest.approx(2.0)


def _info(dt, diss, power=(0.0, 0.0, 0.0)):
    return StepInfo(0.0, dt, ETD_B, diss, power, (0.0, 0.0, 0.0), 0.0, 0.0)


class TestAccumulate:

    def test_zero_rates_change_only_time(self):
        s = Solver(Scenario(nx=8))
        st0 = s.initial_state()
        led = ledger_start(st0, s)
        st1 = SimState(0.5, st0.v, st0.F)
        out = ledger_accumulate(led, _info(0.5, (0.0, 0.0, 0.0)), st1, s)
        assert out.t == 0.5
        assert (out.E_kin, out.E_sto, out.D_cum, out.W_cum, out.residual) == (0.0, 0.0, 0.0, 0.0, 0.0)

    def test_constant_rate_is_exact(self):
        s = Solver(Scenario(nx=8))
        st0 = s.initial_state()
        led = ledger_start(st0, s)
        r, h = 0.37, 0.125
        out = ledger_accumulate(led, _info(h, (r, r, r), (2 * r, 2 * r, 2 * r)), st0, s)
        assert out.D_cum == pytest.approx(r * h, rel=1e-15)
        assert out.W_cum == pytest.approx(2 * r * h, rel=1e-15)

    def test_residual_definition(self):
        led = EnergyLedger(t=1.0, E_kin=1.0, E_sto=0.5, D_cum=0.25, W_cum=0.125, E0=1.5)
        assert led.total == 1.5
        assert led.residual == pytest.approx(0.125)
        assert relative_residuals([led])[0] == pytest.approx(0.125 / 1.5)

    def test_residual_third_order_in_time(self):
        base = Scenario(nx=8, v0=shear, t_end=0.2, material=MaterialParams(nu=1e-6))
        r = [np.abs(relative_residuals(run(base.with_(dt=dt)).ledgers)).max() for dt in (0.01, 0.005, 0.0025)]
        assert math.log2(r[-2] / r[-1]) > 2.5

    def test_residual_converges_with_stiff_hyperstress(self):
        base = reference_scenario(nx=8, t_end=0.2)
        r = [np.abs(relative_residuals(run(base.with_(dt=dt)).ledgers)).max() for dt in (0.01, 0.005, 0.0025)]
        assert r[0] > r[1] > r[2]
        # the explicit hyperstress remainder is stiff here, which costs one order
        assert math.log2(r[-2] / r[-1]) > 1.8

    def test_dissipation_nondecreasing_and_energy_decays(self):
        tr = run(reference_scenario(nx=12, dt=0.01, t_end=0.2))
        D = np.array([led.D_cum for led in tr.ledgers])
        assert np.all(np.diff(D) >= 0)
        tot = np.array([led.total for led in tr.ledgers])
        res = np.abs([led.residual for led in tr.ledgers])
        assert np.all(np.diff(tot) <= res[1:] + res[:-1])


class TestMonitors:

    def test_identity_deformation(self):
        s = Solver(Scenario(nx=8))
        mon = apriori_monitors(s.initial_state(), s)
        assert mon["F_L2"] == pytest.approx(math.sqrt(2.0), rel=1e-15)
        assert mon["gradF_L2"] == 0.0
        assert mon["v_L2"] == 0.0 and mon["gradv_Linf"] == 0.0 and mon["gradE_Lp"] == 0.0

    def test_single_mode(self):
        s = Solver(Scenario(nx=8))
        st0 = s.initial_state()
        v = np.zeros_like(st0.v)
        v[0, 1, 1] = 1.0  # 2 sin(pi x) cos(pi y)
        F = st0.F.copy()
        F[0, 0, 0, 1] = 0.5  # 0.5 sqrt(2) cos(pi y)
        mon = apriori_monitors(SimState(0.0, v, F), s)
        assert mon["v_L2"] == pytest.approx(1.0)
        assert mon["F_L2"] == pytest.approx(math.sqrt(2.0 + 0.25))
        assert mon["gradF_L2"] == pytest.approx(0.5 * math.pi)
        X, Y = s._X, s._Y
        gnorm = 2 * math.pi * np.sqrt((np.cos(np.pi * X) * np.cos(np.pi * Y)) ** 2
                                      + (np.sin(np.pi * X) * np.sin(np.pi * Y)) ** 2)
        assert mon["gradv_Linf"] == pytest.approx(gnorm.max(), rel=1e-13)

    def test_norms_vs_quadrature(self, rng):
        s = Solver(Scenario(nx=12))
        F = random_coefficients(s.basis, s.F_families, rng)
        F[:, :, 6:, :] = 0.0
        F[:, :, :, 6:] = 0.0
        v = np.zeros((2, 12, 12))
        X, Y, W = gauss_points()
        oracle = math.sqrt(float(np.sum(W * np.sum(eval_tensor(s, F, X, Y) ** 2, axis=(0, 1)))))
        assert apriori_monitors(SimState(0.0, v, F), s)["F_L2"] == pytest.approx(oracle, rel=1e-10)

    def test_stored_energy_total_matches_sample(self):
        s = Solver(reference_scenario(nx=8))
        st0 = s.initial_state()
        assert stored_energy_total(st0, s) == ledger_sample(st0, s).E_sto
