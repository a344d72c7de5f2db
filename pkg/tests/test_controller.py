import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from funneldsc.config import electromechanical_preset, single_link_preset
from funneldsc.controller import (
    ControlMode,
    ControllerChain,
    ControllerState,
    StageGains,
    adaptive_law_derivative,
    filter_derivative,
    saturated_term,
    zeta,
)
from funneldsc.fuzzy import AdaptiveWeights, GaussianGrid
from funneldsc.perf import ErrorTransform, FunnelBreachError, perf_from_terminal
from funneldsc.plants import (
    electromechanical_reference,
    make_electromechanical,
    make_single_link,
    single_link_reference,
)


def em_chain(mode=ControlMode.FUZZY, **kwargs) -> ControllerChain:
    cfg = electromechanical_preset(mode=mode)
    perf = perf_from_terminal(b=cfg.perf_b, c=cfg.perf_c, h=cfg.perf_h, T=cfg.perf_T)
    return ControllerChain(
        bounds=make_electromechanical().bounds(),
        gains=cfg.gains,
        transform=ErrorTransform(perf=perf),
        reference=electromechanical_reference(),
        mode=mode,
        **kwargs,
    )


def sl_chain(mode=ControlMode.APPROX_FREE, **kwargs) -> ControllerChain:
    cfg = single_link_preset(mode=mode)
    perf = perf_from_terminal(b=cfg.perf_b, c=cfg.perf_c, h=cfg.perf_h, T=cfg.perf_T)
    return ControllerChain(
        bounds=make_single_link().bounds(),
        gains=cfg.gains,
        transform=ErrorTransform(perf=perf),
        reference=single_link_reference(),
        mode=mode,
        **kwargs,
    )


class TestHelpers:
    def test_zeta_at_zero(self):
        assert zeta(0.0, varrho=10.0) == 1.0  # sign(0) = 0 keeps only 1/(1+z^2)

    @given(z=st.floats(-1e6, 1e6), varrho=st.floats(1.0 + 1e-9, 100.0))
    @settings(max_examples=300, deadline=None)
    def test_zeta_never_vanishes(self, z, varrho):
        v = zeta(z, varrho)
        assert v != 0.0
        if z != 0.0:
            # bounded away from zero by the sign offset
            assert abs(v) >= varrho - 1.0 - 1e-12
            assert math.copysign(1.0, v) == math.copysign(1.0, z) or abs(z) < 1e-150

    def test_zeta_smoothing(self):
        hard = zeta(0.5, 10.0)
        soft = zeta(0.5, 10.0, smoothing=1.0)
        assert soft < hard
        assert soft == pytest.approx(1.0 / 1.25 + 10.0 * math.tanh(0.5))

    @given(
        s=st.floats(-1e8, 1e8, allow_nan=False),
        guard=st.floats(1e-6, 1e6, allow_nan=False),
    )
    @settings(max_examples=500, deadline=None)
    def test_saturation_bound(self, s, guard):
        slack = abs(s) - saturated_term(s, guard)
        # rounding noise of the subtraction scales with |s|
        tol = 1e-12 + 4.0 * abs(s) * 1e-16
        assert -tol <= slack <= guard + tol

    def test_filter_derivative(self):
        assert filter_derivative(0.5, 2.0, 3.0) == pytest.approx(2.0)

    def test_adaptive_law(self):
        g = StageGains(delta=1.0, sigma=1.0, varpi=2.0, mu=3.0)
        theta = np.array([1.0, -1.0])
        basis = np.array([0.5, 0.5])
        out = adaptive_law_derivative(g, theta, basis, drive=4.0)
        np.testing.assert_allclose(out, [-2.0 + 6.0, 2.0 + 6.0])


class TestStageGains:
    def test_rejects_nonpositive_core_gains(self):
        with pytest.raises(ValueError):
            StageGains(delta=0.0, sigma=1.0, varpi=1.0, mu=1.0)

    def test_rejects_varrho_at_most_one(self):
        with pytest.raises(ValueError):
            StageGains(delta=1.0, sigma=1.0, varpi=1.0, mu=1.0, varrho=1.0, rho=1.0, tau=1.0, lam=1.0)


class TestChainConstruction:
    def test_requires_order_two(self):
        cfg = single_link_preset()
        perf = perf_from_terminal(b=0.9, c=0.05, h=1.0, T=0.5)
        from funneldsc.plants import PlantBounds

        bad = PlantBounds(n=1, gain_lower=(0.5,), gain_upper=(10.0,), lipschitz_rate=(lambda *a: 1.0,))
        with pytest.raises(ValueError):
            ControllerChain(
                bounds=bad, gains=cfg.gains[:1], transform=ErrorTransform(perf=perf),
                reference=single_link_reference(),
            )

    def test_requires_filter_gains_beyond_stage_one(self):
        cfg = single_link_preset()
        perf = perf_from_terminal(b=0.9, c=0.05, h=1.0, T=0.5)
        incomplete = (cfg.gains[0], cfg.gains[0])  # stage-2 block missing rho/tau/varrho/lam
        with pytest.raises(ValueError):
            ControllerChain(
                bounds=make_single_link().bounds(), gains=incomplete,
                transform=ErrorTransform(perf=perf), reference=single_link_reference(),
            )

    def test_rejects_multidimensional_grid(self):
        with pytest.raises(ValueError):
            sl_chain(grid=GaussianGrid.reference_grid(dim=2))

    def test_rejects_negative_smoothing(self):
        with pytest.raises(ValueError):
            sl_chain(sign_smoothing=-1.0)


class TestInitialization:
    @pytest.mark.parametrize(
        "chain,x0",
        [
            (em_chain(), (5.0, 3.0, 2.0)),
            (em_chain(mode=ControlMode.APPROX_FREE), (5.0, 3.0, 2.0)),
            (sl_chain(), (0.0, 0.0)),
        ],
    )
    def test_filters_start_on_their_virtual_controls(self, chain, x0):
        state = chain.init_state(x0)
        signals = chain.evaluate(x0, state, 0.0)
        for k, s_k in enumerate(state.filter_states):
            assert s_k == signals.alpha[k]

    def test_fuzzy_weights_start_at_zero(self):
        state = em_chain().init_state((5.0, 3.0, 2.0))
        assert len(state.theta_hat) == 3
        for w in state.theta_hat:
            assert not w.theta_hat.any()

    def test_approx_free_has_no_weights(self):
        state = sl_chain().init_state((0.0, 0.0))
        assert state.theta_hat == []


def random_state(chain, rng, t=0.0):
    n = chain.bounds.n
    x = list(rng.uniform(-2.0, 2.0, n))
    # place the output error safely inside the funnel at time t
    eta = chain.transform.perf.eta(t)
    x[0] = chain.reference.value(t) + math.tan(0.8 * eta * rng.uniform(-1.0, 1.0))
    s = list(rng.uniform(-3.0, 3.0, n - 1))
    if chain.mode is ControlMode.FUZZY:
        theta = [AdaptiveWeights(rng.uniform(-1.0, 1.0, chain.grid.m)) for _ in range(n)]
    else:
        theta = []
    return x, ControllerState(theta_hat=theta, filter_states=s)


class TestHotPathConsistency:
    @pytest.mark.parametrize(
        "chain",
        [em_chain(), em_chain(mode=ControlMode.APPROX_FREE), sl_chain(),
         sl_chain(mode=ControlMode.FUZZY), em_chain(sign_smoothing=0.05)],
    )
    def test_hot_eval_matches_reference_path(self, chain):
        rng = np.random.default_rng(7)
        for trial in range(25):
            t = float(rng.uniform(0.0, 0.45))
            x, state = random_state(chain, rng, t)
            signals = chain.evaluate(x, state, t)
            _, theta_dot_ref = chain.state_derivatives(state, signals, t)
            theta2d = (
                np.array([w.theta_hat for w in state.theta_hat])
                if state.theta_hat else np.zeros((0, 0))
            )
            u, alpha, theta_dot = chain._hot_eval(x, state.filter_states, theta2d, t)
            assert u == signals.u
            assert alpha == signals.alpha
            for a, b in zip(theta_dot_ref, theta_dot):
                np.testing.assert_array_equal(a, b)


class TestStageFormulas:
    def test_first_virtual_control_oracle(self):
        chain = em_chain()
        rng = np.random.default_rng(3)
        t = 0.21
        x, state = random_state(chain, rng, t)
        signals = chain.evaluate(x, state, t)

        tr = chain.transform
        g = chain.gains[0]
        g_lo = chain.bounds.gain_lower[0]
        y_r = chain.reference.value(t)
        e = x[0] - y_r
        z1 = tr.transform(e, t)
        psi = tr.psi(z1, t)
        phi = tr.varphi(z1, t)
        w = z1 * phi * psi
        basis = chain.grid.basis(y_r)
        beta1 = (
            float(basis @ state.theta_hat[0].theta_hat)
            - chain.reference.derivative(t)
            - 2.0 / (math.pi * phi) * tr.perf.eta_dot(t) * math.atan(z1)
        )
        chi1 = 1.0 * abs(e)
        expected = (
            -w * beta1**2 / (g_lo * math.sqrt((w * beta1) ** 2 + g.delta**2))
            - w * chi1**2 / (g_lo * math.sqrt((w * chi1) ** 2 + g.sigma**2))
            - w / g_lo
            - g.varpi * z1 / (2.0 * g_lo * phi * psi)
        )
        assert signals.alpha[0] == pytest.approx(expected, rel=1e-10)
        assert signals.beta[0] == pytest.approx(beta1, rel=1e-10)
        assert signals.chi[0] == pytest.approx(chi1, rel=1e-12)

    def test_surface_and_coupling_signals(self):
        chain = em_chain()
        rng = np.random.default_rng(11)
        t = 0.1
        x, state = random_state(chain, rng, t)
        sig = chain.evaluate(x, state, t)
        g_hi = chain.bounds.gain_upper

        for i in (2, 3):
            assert sig.z[i - 1] == pytest.approx(x[i - 1] - state.filter_states[i - 2])
            assert sig.r[i - 2] == pytest.approx(state.filter_states[i - 2] - sig.alpha[i - 2])
            assert sig.zeta_vals[i - 2] == pytest.approx(
                zeta(sig.z[i - 1], chain.gains[i - 1].varrho)
            )
        coupling2 = g_hi[0] * sig.varphi * sig.psi * abs(sig.z[0])
        assert sig.gamma[0] == pytest.approx(
            coupling2 * abs(sig.z[1]) / sig.zeta_vals[0], rel=1e-10
        )
        assert sig.xi[0] == pytest.approx(
            coupling2 * abs(sig.r[0]) / sig.zeta_vals[0], rel=1e-10
        )
        coupling3 = g_hi[1] * abs(sig.zeta_vals[0])
        assert sig.gamma[1] == pytest.approx(
            coupling3 * abs(sig.z[2]) / sig.zeta_vals[1], rel=1e-10
        )

    def test_control_input_oracle(self):
        chain = em_chain()
        rng = np.random.default_rng(5)
        t = 0.33
        x, state = random_state(chain, rng, t)
        sig = chain.evaluate(x, state, t)
        g = chain.gains[2]
        g_lo = chain.bounds.gain_lower[2]
        zt = sig.zeta_vals[1]
        beta, chi, gamma, xi = sig.beta[2], sig.chi[2], sig.gamma[1], sig.xi[1]
        z3 = sig.z[2]
        expected = -(
            zt * beta**2 / (g_lo * math.sqrt((zt * beta) ** 2 + g.delta**2))
            + zt * chi**2 / (g_lo * math.sqrt((zt * chi) ** 2 + g.sigma**2))
            + zt * gamma**2 / (g_lo * math.sqrt((zt * gamma) ** 2 + g.rho**2))
            + zt * xi**2 / (g_lo * math.sqrt((zt * gamma) ** 2 + g.tau**2))
            + g.varpi * (math.atan(z3) + g.varrho * abs(z3)) / (g_lo * zt)
            + zt / g_lo
        )
        assert sig.u == pytest.approx(expected, rel=1e-10)

    def test_cross_guard_flag_changes_fourth_term(self):
        rng = np.random.default_rng(9)
        literal = em_chain()
        swapped = em_chain(cross_guard_literal=False)
        t = 0.2
        x, state = random_state(literal, rng, t)
        sig_a = literal.evaluate(x, state, t)
        sig_b = swapped.evaluate(x, state, t)
        # the two readings differ whenever gamma != xi at the last stage
        assert sig_a.gamma[1] != pytest.approx(sig_a.xi[1])
        assert sig_a.u != sig_b.u

    def test_approx_free_replaces_estimates_with_energy_damping(self):
        chain = sl_chain()
        x, state = (3.34, 0.1), chain.init_state((3.34, 0.1))
        t = 0.05
        sig = chain.evaluate(list(x), state, t)
        y_r = chain.reference.value(t)
        energy = chain.grid.regressor_energy(y_r)
        w = sig.z[0] * sig.varphi * sig.psi
        beta1_expected = (
            w * energy
            - chain.reference.derivative(t)
            - 2.0 / (math.pi * sig.varphi) * chain.transform.perf.eta_dot(t) * math.atan(sig.z[0])
        )
        assert sig.beta[0] == pytest.approx(beta1_expected, rel=1e-10)
        beta2_expected = sig.zeta_vals[0] * energy - (
            sig.alpha[0] - state.filter_states[0]
        ) / chain.gains[1].lam
        assert sig.beta[1] == pytest.approx(beta2_expected, rel=1e-8)


class TestAdaptiveLaw:
    def test_drives_per_stage(self):
        chain = em_chain()
        rng = np.random.default_rng(13)
        t = 0.15
        x, state = random_state(chain, rng, t)
        sig = chain.evaluate(x, state, t)
        s_dot, theta_dot = chain.state_derivatives(state, sig, t)
        basis = chain.grid.basis(sig.y_r)
        drives = [sig.z[0] * sig.varphi * sig.psi, sig.zeta_vals[0], sig.zeta_vals[1]]
        for i, g in enumerate(chain.gains):
            expected = -g.varpi * state.theta_hat[i].theta_hat + g.mu * drives[i] * basis
            np.testing.assert_allclose(theta_dot[i], expected, rtol=1e-10, atol=1e-12)
        for k in range(2):
            assert s_dot[k] == pytest.approx(
                (sig.alpha[k] - state.filter_states[k]) / chain.gains[k + 1].lam
            )


class TestBasisTabulation:
    def test_table_agrees_with_direct_evaluation(self):
        chain = em_chain()
        step = 1e-3
        chain.tabulate_basis(step, 501)
        for i in (0, 1, 7, 499):
            t = i * step
            y_r = chain.reference.value(t)
            basis, energy = chain._basis_at(t, y_r)
            np.testing.assert_allclose(basis, chain.grid.basis(y_r), rtol=1e-12, atol=1e-300)
            assert energy == pytest.approx(chain.grid.regressor_energy(y_r), rel=1e-12)
        # off-grid times fall back to the direct path
        t = 0.25 * step
        y_r = chain.reference.value(t)
        basis, _ = chain._basis_at(t, y_r)
        np.testing.assert_allclose(basis, chain.grid.basis(y_r), rtol=1e-12, atol=1e-300)


class TestBreachPropagation:
    def test_breach_surfaces_from_evaluation(self):
        chain = sl_chain()
        state = chain.init_state((3.34, 0.1))
        with pytest.raises(FunnelBreachError):
            chain.evaluate([chain.reference.value(2.0) + 1.0, 0.0], state, 2.0)
