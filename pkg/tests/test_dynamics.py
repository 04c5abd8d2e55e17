import math
import warnings

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from conftest import reference_scenario, shear, stream
from eulerkv import Domain, GalerkinBasis, MaterialParams, Scenario, StoredEnergyModel
from eulerkv.dynamics import (
    ETD_B,
    VELOCITY_FAMILIES,
    CFLWarning,
    ExponentialOperator,
    SimState,
    Solver,
    momentum_rhs,
    phi_functions,
    run,
    step,
    transport_rhs,
)
from eulerkv.errors import ConfigError, NumericalError
from eulerkv.properties import (
    convective_tested_sum,
    elastic_power_gap,
    random_tensor,
    random_velocity,
    transport_tested_sum,
)


def rest(nx=16, **kw):
    return Scenario(nx=nx, **kw)


class TestPhiFunctions:

    def test_zero(self):
        p = phi_functions(np.array([0.0]))
        np.testing.assert_allclose([q[0] for q in p], [1.0, 1.0, 0.5, 1.0 / 6.0], rtol=1e-15)

    def test_closed_forms(self):
        z = np.array([-50.0, -3.0, -1.5, 2.0])
        p0, p1, p2, p3 = phi_functions(z)
        np.testing.assert_allclose(p0, np.exp(z))
        np.testing.assert_allclose(p1, np.expm1(z) / z)
        np.testing.assert_allclose(p2, (np.expm1(z) - z) / z ** 2)
        np.testing.assert_allclose(p3, (np.expm1(z) - z - z ** 2 / 2) / z ** 3)

    def test_continuous_across_series_switch(self):
        z = np.array([-1.0 + 1e-12, -1.0 - 1e-12])
        for q in phi_functions(z):
            assert abs(q[0] - q[1]) < 1e-10

    @settings(max_examples=50, deadline=None)
    @given(z=st.floats(-1e4, 0.0))
    def test_recursion(self, z):
        p = phi_functions(np.array([z]))
        # phi_{j} = z phi_{j+1} + 1/j!
        for j in range(3):
            assert p[j][0] == pytest.approx(z * p[j + 1][0] + 1.0 / math.factorial(j), rel=1e-9, abs=1e-12)

    def test_operator_splits_along_wave_vector(self, rng):
        khat = rng.standard_normal((2, 3, 3))
        khat /= np.linalg.norm(khat, axis=0)
        u = rng.standard_normal((2, 3, 3))
        op = ExponentialOperator(0.1, 2.0, 5.0, khat)
        out = op.apply(lambda P: P[0], u)
        along = np.sum(khat * u, axis=0)
        np.testing.assert_allclose(np.sum(khat * out, axis=0), math.exp(-0.5) * along)


class TestRightHandSides:

    def test_equilibrium_rates_vanish(self):
        s = Solver(rest())
        st0 = s.initial_state()
        assert np.all(np.abs(s.momentum_rhs(st0)) < 1e-14)
        assert np.all(np.abs(s.transport_rhs(st0)) < 1e-14)

    def test_body_force_only(self):
        b = GalerkinBasis(Domain(), 16)
        X, Y = b.mesh()
        f = 0.7 * np.sin(2 * np.pi * X) * np.cos(np.pi * Y)

        def body(t, x, y):
            return np.stack([0.7 * np.sin(2 * np.pi * x) * np.cos(np.pi * y), np.zeros_like(x)])

        scn = rest(material=MaterialParams(rho=2.0), body_force=body)
        rate = momentum_rhs(Solver(scn).initial_state(), scn)
        np.testing.assert_allclose(rate[0], b.to_coeff(f, "sc") / 2.0, atol=1e-14)
        np.testing.assert_allclose(rate[1], 0.0, atol=1e-14)

    def test_no_transport_without_flow(self, rng):
        scn = rest(F0=lambda x, y: np.array([[1 + 0.1 * np.cos(np.pi * x), 0 * x], [0 * x, 1 + 0 * y]]))
        s = Solver(scn)
        st0 = s.initial_state()
        assert np.abs(transport_rhs(st0, scn)).max() < 1e-14
        eps = 0.01
        scn_e = scn.with_(material=MaterialParams(epsilon=eps))
        se = Solver(scn_e)
        np.testing.assert_allclose(se.transport_rhs(st0), -eps * se.basis.lam * st0.F, atol=1e-15)

    def test_uniform_gradient_transport(self):
        # spatially uniform F: the rate is (grad v) F pointwise
        Fc = np.diag([2.0, 0.5])
        scn = rest(F0=lambda x, y: np.array([[2 + 0 * x, 0 * x], [0 * x, 0.5 + 0 * x]]),
                   v0=lambda x, y: 0.1 * np.stack([np.sin(np.pi * x) * np.cos(np.pi * y),
                                                   np.cos(np.pi * x) * np.sin(np.pi * y)]))
        s = Solver(scn)
        rate = s.transport_rhs(s.initial_state())
        b = s.basis
        x, y = np.array([0.3, 0.5, 0.8]), np.array([0.4, 0.5, 0.1])
        got = np.array([[b.eval_points(rate[i, j], s.F_families[i, j], x, y) for j in range(2)] for i in range(2)])
        L = 0.1 * np.pi * np.array([[np.cos(np.pi * x) * np.cos(np.pi * y), -np.sin(np.pi * x) * np.sin(np.pi * y)],
                                    [-np.sin(np.pi * x) * np.sin(np.pi * y), np.cos(np.pi * x) * np.cos(np.pi * y)]])
        np.testing.assert_allclose(got, np.einsum("ikp,kj->ijp", L, Fc), atol=1e-12)


@pytest.fixture(scope="module")
def manufactured():
    """Symbolic strong-form rates of a closed-form (v*, F*) pair."""
    x, y = sp.symbols("x y", real=True)
    X = (x, y)
    pi = sp.pi
    rho, Dl, Dm, nu, p, K, G, eta = 1.3, 0.2, 0.15, 0.01, 4, 1.0, 0.8, 0.1
    v = sp.Matrix([0.4 * sp.sin(pi * x) * sp.cos(pi * y) + 0.2 * sp.sin(2 * pi * x) * sp.cos(3 * pi * y),
                   -0.3 * sp.cos(pi * x) * sp.sin(pi * y) + 0.1 * sp.cos(2 * pi * x) * sp.sin(pi * y)])
    F = sp.Matrix([[1 + 0.1 * sp.cos(pi * x) * sp.cos(2 * pi * y), 0.05 * sp.sin(pi * x) * sp.sin(pi * y)],
                   [0.08 * sp.sin(2 * pi * x) * sp.sin(pi * y), 1 - 0.1 * sp.cos(2 * pi * x)]])
    gv = sp.Matrix(2, 2, lambda i, j: sp.diff(v[i], X[j]))
    E = (gv + gv.T) / 2
    div = gv.trace()
    fs = sp.symbols("f0:4")
    Fm = sp.Matrix(2, 2, fs)
    Eg = (Fm.T * Fm - sp.eye(2)) / 2
    sph = Eg.trace() / 2 * sp.eye(2)
    dev = Eg - sph
    n2 = lambda M: sum(M[i, j] ** 2 for i in range(2) for j in range(2))  # noqa: E731
    s = n2(Eg) ** sp.Rational(3, 4)
    phi = 2 * K * n2(sph) / (2 + eta * s) + G * n2(dev) / (1 + eta * s)
    sub = dict(zip(fs, list(F)))
    dphi = sp.Matrix(2, 2, [sp.diff(phi, f) for f in fs]).subs(sub)
    T = dphi * F.T + phi.subs(sub) * sp.eye(2)
    D = Dl * div * sp.eye(2) + 2 * Dm * E
    gE = [[[sp.diff(E[i, j], X[k]) for k in range(2)] for j in range(2)] for i in range(2)]
    g2 = sum(gE[i][j][k] ** 2 for i in range(2) for j in range(2) for k in range(2))
    divH = sp.Matrix(2, 2, lambda i, j: sum(sp.diff(nu * g2 * gE[i][j][k], X[k]) for k in range(2)))
    S = T + D - divH
    divS = sp.Matrix([sum(sp.diff(S[i, j], X[j]) for j in range(2)) for i in range(2)])
    v_rate = (divS - rho * (gv * v + div * v / 2)) / rho
    F_rate = gv * F - (sp.diff(F, x) * v[0] + sp.diff(F, y) * v[1])
    lam = lambda expr: sp.lambdify((x, y), list(expr), "numpy")  # noqa: E731
    return {
        "material": MaterialParams(rho=rho, D_lambda=Dl, D_mu=Dm, nu=nu, p=p),
        "energy": StoredEnergyModel(K=K, G=G, eta=eta),
        "v": lam(v), "F": lam(F), "v_rate": lam(v_rate), "F_rate": lam(F_rate),
    }


def _grid(fn, X, Y, shape):
    return np.array([np.broadcast_to(np.asarray(c, float), X.shape) for c in fn(X, Y)]).reshape(shape + X.shape)


class TestManufacturedSolution:

    def _mismatch(self, mf, N):
        scn = Scenario(nx=N, material=mf["material"], energy=mf["energy"],
                       v0=lambda X, Y: _grid(mf["v"], X, Y, (2,)),
                       F0=lambda X, Y: _grid(mf["F"], X, Y, (2, 2)))
        s = Solver(scn)
        st0 = s.initial_state()
        fine = GalerkinBasis(Domain(), N, mx=120, my=120)
        Xf, Yf = fine.mesh()
        r = _grid(mf["v_rate"], Xf, Yf, (2,))
        exp_v = np.stack([fine.to_coeff(r[i], VELOCITY_FAMILIES[i]) for i in range(2)])
        r = _grid(mf["F_rate"], Xf, Yf, (2, 2))
        exp_F = np.array([[fine.to_coeff(r[i, j], s.F_families[i, j]) for j in range(2)] for i in range(2)])
        ev = s.evaluate(0.0, st0.v, st0.F)
        return (np.abs(ev.v_rate - exp_v).max() / np.abs(exp_v).max(),
                np.abs(ev.F_rate - exp_F).max() / np.abs(exp_F).max())

    def test_spectral_convergence(self, manufactured):
        errs = [self._mismatch(manufactured, N) for N in (8, 12, 16)]
        ev = [e[0] for e in errs]
        assert ev[0] > ev[1] > ev[2]
        assert ev[2] < 1e-9
        # the transport of in-span data is alias-free
        assert max(e[1] for e in errs) < 1e-13


class TestDiscreteIdentities:

    @settings(max_examples=15, deadline=None)
    @given(seed=st.integers(0, 2 ** 31), rho=st.floats(0.1, 10.0))
    def test_convection_is_skew(self, seed, rho):
        s = Solver(rest(nx=16, material=MaterialParams(rho=rho)))
        v = random_velocity(s, np.random.default_rng(seed))
        val, scale = convective_tested_sum(s, v)
        assert abs(val) < 1e-10 * scale

    @settings(max_examples=15, deadline=None)
    @given(seed=st.integers(0, 2 ** 31), layout=st.sampled_from(["parity", "neumann"]))
    def test_transport_energy_identity(self, seed, layout):
        s = Solver(rest(nx=16, layout=layout))
        r = np.random.default_rng(seed)
        val, scale = transport_tested_sum(s, random_velocity(s, r), random_tensor(s, r))
        assert abs(val) < 1e-10 * scale

    def test_elastic_power_equals_stored_energy_rate(self, rng):
        s = Solver(rest(nx=16))
        for _ in range(5):
            F = s.initial_state().F + 0.2 * random_tensor(s, rng, decay=2.0)
            gap, scale = elastic_power_gap(s, random_velocity(s, rng), F)
            assert gap < 1e-10 * scale

    def test_growth_bound(self, rng):
        # d/dt |F|^2 / 2 <= (3/2 + defect) |grad v|_inf |F|^2 with a small aliasing defect
        defects = []
        for N in (12, 24):
            s = Solver(rest(nx=N))
            X, Y = s._X, s._Y
            v = np.stack([s.basis.to_coeff(shear(X, Y)[i], VELOCITY_FAMILIES[i]) for i in range(2)])
            F = s.initial_state().F
            F[0, 1, 1, 1] += 0.3
            F[0, 0, 2, 0] += 0.2
            ev = s.evaluate(0.0, v, F, momentum=False)
            growth = float(np.sum(F * ev.F_rate))
            gv = s.tensor_grid(s.grad_velocity(v), np.array([["cc", "ss"], ["ss", "cc"]], dtype=object))
            bound = float(np.sqrt(np.sum(gv ** 2, axis=(0, 1))).max()) * float(np.sum(F ** 2))
            defects.append(max(growth / bound - 1.5, 0.0))
        assert defects[-1] <= defects[0] + 1e-12


class TestStepping:

    def test_equilibrium_is_fixed_point(self):
        scn = rest(nx=16, dt=1e-2)
        s = Solver(scn)
        st0 = s.initial_state()
        st1 = st0
        for _ in range(20):
            st1 = s.step(st1, 1e-2)
        np.testing.assert_array_equal(st1.v, st0.v)
        np.testing.assert_allclose(st1.F, st0.F, atol=1e-15)

    @pytest.mark.parametrize("kind", ["solenoidal", "irrotational"])
    def test_linear_mode_decay(self, kind):
        # tiny amplitude, negligible elasticity: the velocity decays with the viscous symbol
        A = 1e-7
        mp = MaterialParams(rho=2.0, D_lambda=0.3, D_mu=0.1, nu=1e-3, p=3.0)
        if kind == "solenoidal":
            v0 = lambda x, y: A * np.stack([np.sin(np.pi * x) * np.cos(2 * np.pi * y),  # noqa: E731
                                            -0.5 * np.cos(np.pi * x) * np.sin(2 * np.pi * y)])
            rate = mp.D_mu
        else:
            v0 = lambda x, y: A * np.stack([np.sin(np.pi * x) * np.cos(2 * np.pi * y),  # noqa: E731
                                            2 * np.cos(np.pi * x) * np.sin(2 * np.pi * y)])
            rate = mp.D_lambda + 2 * mp.D_mu
        lam = np.pi ** 2 * 5
        scn = Scenario(nx=8, material=mp, energy=StoredEnergyModel(K=1e-9, G=1e-9), v0=v0, t_end=0.5, dt=0.05)
        tr = run(scn, sample_stride=100)
        s0, s1 = tr.states[0], tr.final
        expected = math.exp(-rate * lam * 0.5 / mp.rho)
        np.testing.assert_allclose(s1.v, expected * s0.v, rtol=0, atol=1e-6 * np.abs(s0.v).max())

    def test_third_order_self_convergence(self):
        # mild hyperviscosity keeps the explicit remainder non-stiff at these steps
        base = Scenario(nx=8, v0=shear, t_end=0.2, material=MaterialParams(nu=1e-6))
        finals = [run(base.with_(dt=dt), sample_stride=10 ** 6, keep_states=False).final
                  for dt in (0.02, 0.01, 0.005, 0.0025, 0.000625)]
        ref = finals[-1]
        e = np.array([math.sqrt(np.sum((s.v - ref.v) ** 2) + np.sum((s.F - ref.F) ** 2)) for s in finals[:-1]])
        orders = np.log2(e[:-1] / e[1:])
        assert orders[-1] > 2.5

    def test_step_is_deterministic(self):
        scn = reference_scenario(nx=12, dt=0.01)
        s = Solver(scn).initial_state()
        a = step(s, 0.01, scn)
        b = step(s, 0.01, scn)
        np.testing.assert_array_equal(a.v, b.v)
        np.testing.assert_array_equal(a.F, b.F)

    def test_rejects_nonpositive_step(self):
        s = Solver(rest())
        with pytest.raises(ConfigError):
            s.advance(s.initial_state(), 0.0)
        with pytest.raises(ConfigError):
            Scenario(dt=-1.0)

    def test_blowup_aborts_with_time(self):
        scn = Scenario(nx=12, v0=lambda x, y: stream(x, y, 30.0), t_end=1.0, dt=0.05)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", CFLWarning)
            with pytest.raises(NumericalError) as info:
                run(scn)
        assert info.value.t is not None and 0 < info.value.t < 1.0
        assert info.value.term

    def test_nan_state_rejected(self):
        st0 = Solver(rest()).initial_state()
        bad = SimState(0.0, st0.v * np.nan, st0.F)
        with pytest.raises(NumericalError, match="velocity"):
            bad.check_finite()

    def test_cfl_warning_once(self):
        scn = Scenario(nx=12, v0=lambda x, y: stream(x, y, 2.0), t_end=0.1, dt=0.05)
        with warnings.catch_warnings(record=True) as rec:
            warnings.simplefilter("always")
            run(scn)
        assert sum(issubclass(w.category, CFLWarning) for w in rec) == 1


class TestRun:

    def test_zero_end_time(self):
        scn = reference_scenario(nx=8, t_end=0.0)
        tr = run(scn)
        assert len(tr.states) == 1 and tr.steps == 0
        assert tr.final.t == 0.0

    def test_samples_and_callbacks(self):
        seen = []
        scn = reference_scenario(nx=8, dt=0.01, t_end=0.1)
        tr = run(scn, callbacks=[lambda s, led: seen.append(s.t)], sample_stride=3)
        assert seen == pytest.approx([0.0, 0.03, 0.06, 0.09, 0.1])
        assert len(tr.ledgers) == len(seen)

    def test_unloaded_energy_decreases(self):
        tr = run(reference_scenario(nx=12, dt=0.01, t_end=0.3), sample_stride=1)
        tot = np.array([led.total for led in tr.ledgers])
        res = np.array([abs(led.residual) for led in tr.ledgers])
        assert np.all(np.diff(tot) <= res[1:] + res[:-1])

    def test_stage_weights(self):
        assert sum(ETD_B) == pytest.approx(1.0)
