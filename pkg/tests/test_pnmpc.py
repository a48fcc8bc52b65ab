import math

import numpy as np
import pytest

from pfguide import (GuidanceState, InputCmd, JacobianBlock, NMPCConfig,
                     NMPCSolver, PNMPCSolver, assemble_G, dynamics,
                     free_response, horizon_cost, jacobian_block, predict,
                     pnmpc_solve, sample_path, z_of_omega)
from pfguide.errdyn import rollout
from pfguide.los import clamp_inputs
from pfguide.pnmpc import (_increment_lower, sensitivity_along, stack_inputs,
                           stack_states)


class TestJacobianBlock:
    def test_aligned_heading_entries(self, demo_path):
        w = 3.0
        pt = sample_path(demo_path, w)
        x = GuidanceState(0.5, -1.0, z_of_omega(w))
        u = InputCmd(0.2, pt.phi_p, 0.1)
        J = jacobian_block(x, u, 0.0, demo_path).m
        assert J[0, 0] == pytest.approx(1.0, abs=1e-15)   # cos(0)
        assert J[1, 0] == pytest.approx(0.0, abs=1e-15)   # sin(0)
        assert J[1, 1] == pytest.approx(u.u, rel=1e-12)   # u0 cos(0)

    def test_unit_z_line(self, xaxis_path):
        J = jacobian_block(GuidanceState(0.0, 0.0, 1.0),
                           InputCmd(0.1, 0.0, 0.1), 0.0, xaxis_path).m
        assert J[2, 2] == -1.0  # -z^2/F with z = F = 1

    def test_structural_zeros_enforced(self):
        with pytest.raises(ValueError):
            JacobianBlock(np.ones((3, 3)))
        with pytest.raises(ValueError):
            JacobianBlock(np.full((3, 3), np.nan))

    def test_matches_finite_differences(self, demo_path):
        rng = np.random.default_rng(1)
        h = 1e-6
        for _ in range(50):
            x = GuidanceState(rng.uniform(-10, 10), rng.uniform(-10, 10),
                              rng.uniform(0.01, 1.0))
            u = InputCmd(rng.uniform(0, 0.225), rng.uniform(-math.pi, math.pi),
                         rng.uniform(0.01, 0.75))
            v = rng.uniform(-0.15, 0.15)
            J = jacobian_block(x, u, v, demo_path).m
            base = np.array([u.u, u.psi, u.u_tar])
            for col in range(3):
                d = np.zeros(3)
                d[col] = h
                hi = np.array(dynamics(x, InputCmd(*(base + d)), v, demo_path))
                lo = np.array(dynamics(x, InputCmd(*(base - d)), v, demo_path))
                fd = (hi - lo) / (2 * h)
                assert np.all(np.abs(fd - J[:, col])
                              <= 1e-6 * np.maximum(np.abs(J[:, col]), 1e-3))


class TestAssembleG:
    def test_identity_block_layout(self):
        J = JacobianBlock(np.eye(3))
        G = assemble_G(J, 2, 1.0)
        expect = np.block([[np.eye(3), np.zeros((3, 3))],
                           [2 * np.eye(3), np.eye(3)]])
        assert np.array_equal(G.G, expect)

    def test_single_step(self):
        J = JacobianBlock(np.diag([2.0, 3.0, 4.0]))
        G = assemble_G(J, 1, 0.5)
        assert np.array_equal(G.G, 0.5 * J.m)

    def test_block_toeplitz_structure(self):
        rng = np.random.default_rng(4)
        Jm = rng.normal(size=(3, 3))
        Jm[2, :2] = 0.0
        G = assemble_G(JacobianBlock(Jm), 4, 0.7).G
        for i in range(4):
            for j in range(4):
                blk = G[3 * i:3 * i + 3, 3 * j:3 * j + 3]
                if j > i:
                    assert np.array_equal(blk, np.zeros((3, 3)))
                else:
                    assert np.array_equal(blk, (i - j + 1) * 0.7 * Jm)

    def test_matrix_vector_matches_loop_oracle(self):
        rng = np.random.default_rng(8)
        Jm = rng.normal(size=(3, 3))
        Jm[2, :2] = 0.0
        N, Tm = 3, 1.0
        G = assemble_G(JacobianBlock(Jm), N, Tm).G
        du = rng.normal(size=3 * N)
        # explicit loop: increment at step l contributes (i-l+1) Tm J du_l
        out = np.zeros(3 * N)
        for i in range(N):
            for l in range(i + 1):
                out[3 * i:3 * i + 3] += (i - l + 1) * Tm * Jm @ du[3 * l:3 * l + 3]
        assert np.allclose(G @ du, out, atol=1e-12)

    def test_validation(self):
        with pytest.raises(ValueError):
            assemble_G(JacobianBlock(np.eye(3)), 0, 1.0)
        with pytest.raises(ValueError):
            assemble_G(JacobianBlock(np.eye(3)), 2, 0.0)


class TestFreeResponse:
    def test_equals_constant_prediction(self, demo_path, demo_config):
        x = GuidanceState(1.0, 2.0, 0.3)
        up = InputCmd(0.1, 0.2, 0.1)
        a = free_response(x, up, 0.05, demo_config, demo_path)
        b = predict(x, [up] * demo_config.N, 0.05, demo_config, demo_path)
        assert a == b

    def test_on_path_errors_stay_zero(self, xaxis_path, demo_config):
        x = GuidanceState(0.0, 0.0, 0.5)
        states = free_response(x, InputCmd(0.15, 0.0, 0.15), 0.0,
                               demo_config, xaxis_path)
        assert all(s.x_e == 0.0 and s.y_e == 0.0 for s in states)

    def test_matches_hand_rolled_recursion(self, demo_path, demo_config):
        # three explicit Euler steps written out with scalar arithmetic
        w0 = 2.5
        pt0 = sample_path(demo_path, w0)
        x = GuidanceState(1.3774706714887182, 5.853194685483319, z_of_omega(w0))
        up = InputCmd(0.0, pt0.phi_p, 0.01)

        def step(xe, ye, z):
            w = 1.0 / z - 1.0
            p = sample_path(demo_path, w)
            dpsi = up.psi - p.phi_p  # small here, no wrap needed
            kw = p.dphi_dw / p.F
            nxe = xe + up.u * math.cos(dpsi) - 0.0 + up.u_tar * (kw * ye - 1.0)
            nye = ye + up.u * math.sin(dpsi) + 0.0 - up.u_tar * kw * xe
            nz = z - z * z * up.u_tar / p.F
            return nxe, nye, nz

        ref = [(x.x_e, x.y_e, x.z)]
        for _ in range(3):
            ref.append(step(*ref[-1]))
        got = free_response(x, up, 0.0, demo_config, demo_path)
        for r, s in zip(ref, got):
            assert s.x_e == pytest.approx(r[0], rel=1e-12)
            assert s.y_e == pytest.approx(r[1], rel=1e-12)
            assert s.z == pytest.approx(r[2], rel=1e-12)


class TestSensitivity:
    def test_directional_derivative(self, demo_path, demo_config):
        cfg = demo_config
        x = GuidanceState(2.0, -1.5, 0.25)
        up = InputCmd(0.12, 0.3, 0.2)
        hold = [up] * cfg.N
        states = rollout(x, hold, 0.02, cfg.T_m, demo_path)
        S = sensitivity_along(states, hold, 0.02, cfg.T_m, demo_path)
        rng = np.random.default_rng(3)
        d = rng.normal(size=3 * cfg.N)
        h = 1e-6
        U0 = stack_inputs(hold)

        def pred(U):
            useq = [InputCmd(U[3 * j], U[3 * j + 1], U[3 * j + 2])
                    for j in range(cfg.N)]
            return stack_states(rollout(x, useq, 0.02, cfg.T_m, demo_path)[1:])

        fd = (pred(U0 + h * d) - pred(U0 - h * d)) / (2 * h)
        assert np.allclose(S @ d, fd, atol=1e-7)

    def test_first_order_residual_locked(self, demo_path, demo_config):
        """||predict(u+du) - (y_free + G du)|| <= c ||du||^2 with c locked."""
        cfg = demo_config
        L = _increment_lower(cfg.N)
        rng = np.random.default_rng(7)
        worst = 0.0
        for _ in range(40):
            x = GuidanceState(rng.uniform(-10, 10), rng.uniform(-10, 10),
                              rng.uniform(0.05, 1.0))
            up = InputCmd(rng.uniform(0, 0.225), rng.uniform(-3, 3),
                          rng.uniform(0.01, 0.75))
            hold = [up] * cfg.N
            states = rollout(x, hold, 0.0, cfg.T_m, demo_path)
            G = sensitivity_along(states, hold, 0.0, cfg.T_m, demo_path) @ L
            du = rng.normal(size=3 * cfg.N)
            du *= 1e-4 / np.linalg.norm(du)
            U = stack_inputs(hold) + L @ du
            useq = [InputCmd(U[3 * j], U[3 * j + 1], U[3 * j + 2])
                    for j in range(cfg.N)]
            pred = stack_states(rollout(x, useq, 0.0, cfg.T_m, demo_path)[1:])
            lin = stack_states(states[1:]) + G @ du
            worst = max(worst, float(np.linalg.norm(pred - lin)) / 1e-8)
        assert worst <= 4.0  # measured ~1.8 on this distribution


class TestPNMPCSolve:
    def test_equilibrium_returns_hold(self, xaxis_path):
        cfg = NMPCConfig(Q=np.array([1.0, 1.0, 0.0]))
        from pfguide import synthesize_terminal_weight
        cfg = cfg.with_terminal(synthesize_terminal_weight(xaxis_path, cfg))
        up = InputCmd(0.15, 0.0, 0.15)
        res = PNMPCSolver(cfg, xaxis_path).solve(
            GuidanceState(0.0, 0.0, 0.05), 0.0, up)
        for cmd in res.u_seq:
            assert cmd.u == pytest.approx(0.15, abs=1e-9)
            assert cmd.psi == pytest.approx(0.0, abs=1e-9)
            assert cmd.u_tar == pytest.approx(0.15, abs=1e-9)

    def test_single_step_clamped_least_squares(self, xaxis_path):
        # N = 1 with the heading and target-speed weights pinned huge:
        # the surge solves a scalar quadratic, clamped to its interval.
        from pfguide import synthesize_terminal_weight
        up = InputCmd(0.10, 0.0, 0.20)
        cfg = NMPCConfig(N=1, R=np.array([10.0, 1e9, 1e9]),
                         u_ref=InputCmd(0.15, up.psi, up.u_tar))
        cfg = cfg.with_terminal(synthesize_terminal_weight(xaxis_path, cfg))
        c = cfg.constraints
        x = GuidanceState(-0.8, 0.0, 0.3)

        def J_of_u(u):
            seq = [InputCmd(u, up.psi, up.u_tar)]
            states = rollout(x, seq, 0.0, cfg.T_m, xaxis_path)
            return horizon_cost(x, states, seq, cfg)

        # prediction is affine in u for N = 1, so J is exactly quadratic:
        # fit it through three samples and clamp the vertex
        j0, j1, j2 = J_of_u(0.0), J_of_u(0.1), J_of_u(0.2)
        a = (j2 - 2 * j1 + j0) / (2 * 0.1 ** 2)
        b = (j1 - j0) / 0.1 - a * 0.1
        u_star = -b / (2 * a)
        lo = max(0.0, up.u - c.du_max)
        hi = min(c.u_max, up.u + c.du_max)
        u_star = min(max(u_star, lo), hi)

        res = PNMPCSolver(cfg, xaxis_path).solve(x, 0.0, up)
        assert res.u_seq[0].u == pytest.approx(u_star, abs=1e-6)

    def test_linearized_cannot_beat_nonlinear(self, demo_path, demo_config):
        pt = sample_path(demo_path, 2.5)
        x = GuidanceState(1.3774706714887182, 5.853194685483319, 1.0 / 3.5)
        up = InputCmd(0.0, pt.phi_p, 0.01)
        r_lin = PNMPCSolver(demo_config, demo_path).solve(x, 0.0, up)
        r_nl = NMPCSolver(demo_config, demo_path).solve(x, 0.0, up)
        assert r_lin.J_opt >= r_nl.J_opt - 1e-6

    def test_output_feasible_exactly(self, demo_path, demo_config):
        c = demo_config.constraints
        x = GuidanceState(4.0, -6.0, 0.5)
        up = InputCmd(0.2, 1.0, 0.7)
        res = PNMPCSolver(demo_config, demo_path).solve(x, 0.1, up)
        prev = up
        for cmd in res.u_seq:
            assert clamp_inputs(cmd, prev, c) == cmd
            prev = cmd

    def test_frozen_linearization_mode(self, demo_path, demo_config):
        x = GuidanceState(0.5, 0.5, 0.3)
        up = InputCmd(0.1, 0.5, 0.1)
        res = pnmpc_solve(x, 0.0, up, demo_config, demo_path,
                          linearization="frozen")
        assert len(res.u_seq) == demo_config.N
        assert math.isfinite(res.J_opt)
        with pytest.raises(ValueError):
            PNMPCSolver(demo_config, demo_path, "other")

    def test_predictions_consistent_with_model(self, demo_path, demo_config):
        x = GuidanceState(1.0, 1.0, 0.4)
        up = InputCmd(0.1, 0.3, 0.2)
        res = PNMPCSolver(demo_config, demo_path).solve(x, 0.05, up)
        ref = rollout(x, res.u_seq, 0.05, demo_config.T_m, demo_path)
        assert tuple(ref) == res.x_pred
