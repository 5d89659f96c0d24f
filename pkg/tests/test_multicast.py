import numpy as np
import pytest
import scipy.linalg

from pddopt import multicast as mc
from pddopt import numerics
from pddopt.errors import InvalidInputError
from pddopt.verify import fd_block_gradient


@pytest.fixture(scope="module")
def inst422():
    return mc.gen_instance(4, 2, 2, 10.0, seed=0)


def unit_vec(rng, n):
    w = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return w / np.linalg.norm(w)


class TestBuildInstance:
    def test_scalar_case(self):
        inst = mc.build_instance([[1.0 + 0j]], [[0]], 1.0, 1.0)
        np.testing.assert_allclose(inst.A[0], [[1.0]])
        np.testing.assert_allclose(inst.B[0], [[1.0]])
        w = np.array([1.0 + 0j])
        assert np.real(np.vdot(w, inst.A[0] @ w)) / np.real(np.vdot(w, inst.B[0] @ w)) \
            == pytest.approx(1.0)

    def test_block_structure(self, inst422):
        n_t = inst422.n_t
        for k in range(inst422.n_users):
            i = inst422.group_of[k]
            A = inst422.A[k].copy()
            A[i * n_t:(i + 1) * n_t, i * n_t:(i + 1) * n_t] = 0.0
            assert np.abs(A).max() == 0.0

    def test_sinr_identity_against_channel_model(self, inst422):
        rng = np.random.default_rng(1)
        for _ in range(20):
            w = unit_vec(rng, inst422.dim)
            direct = mc.sinr_values(np.sqrt(inst422.p_bs) * w, inst422)
            for k in range(inst422.n_users):
                qa = np.real(np.vdot(w, inst422.A[k] @ w))
                qb = np.real(np.vdot(w, inst422.B[k] @ w))
                assert qa / qb == pytest.approx(direct[k], rel=1e-10)

    def test_matrix_properties(self, inst422):
        for k in range(inst422.n_users):
            A, B = inst422.A[k], inst422.B[k]
            assert np.abs(A - A.conj().T).max() < 1e-12
            assert np.linalg.eigvalsh(A).min() >= -1e-12
            min_b = np.linalg.eigvalsh(B).min()
            assert min_b >= inst422.sigma2[k] / inst422.p_bs - 1e-12

    def test_rejects_empty_group(self):
        with pytest.raises(InvalidInputError):
            mc.build_instance(np.ones((2, 2), dtype=complex), [[0, 1], []], 1.0, 1.0)

    def test_rejects_non_partition(self):
        with pytest.raises(InvalidInputError):
            mc.build_instance(np.ones((2, 2), dtype=complex), [[0], [0]], 1.0, 1.0)

    def test_phase_rotation_leaves_matrices_invariant(self, inst422):
        rot = mc.build_instance(inst422.channels * np.exp(0.7j),
                                inst422.groups, inst422.sigma2, inst422.p_bs)
        np.testing.assert_allclose(rot.A, inst422.A, atol=1e-12)
        np.testing.assert_allclose(rot.B, inst422.B, atol=1e-12)

    def test_amplitude_scaling_leaves_sinr_invariant(self, inst422):
        alpha = 1.7
        scaled = mc.build_instance(alpha * inst422.channels, inst422.groups,
                                   alpha**2 * inst422.sigma2, inst422.p_bs)
        rng = np.random.default_rng(2)
        w = unit_vec(rng, inst422.dim)
        np.testing.assert_allclose(
            mc.sinr_values(np.sqrt(scaled.p_bs) * w, scaled),
            mc.sinr_values(np.sqrt(inst422.p_bs) * w, inst422), rtol=1e-10)


class TestConstraint:
    def test_feasible_at_matched_levels(self, inst422):
        rng = np.random.default_rng(3)
        w = unit_vec(rng, inst422.dim)
        na, nb = mc.coupling_norms(w, inst422)
        h = mc.constraint_h(w, na / nb, inst422)
        np.testing.assert_allclose(h, 0.0, atol=1e-12)

    def test_zero_gain_user(self):
        # user 1 has a zero channel: A_1 = 0, so t_1 = 0 is feasible
        channels = np.array([[1.0 + 0j, 0.5j], [0.0 + 0j, 0.0 + 0j]])
        inst = mc.build_instance(channels, [[0], [1]], 1.0, 1.0)
        w = np.array([1.0, 0.0, 0.0, 0.0], dtype=complex)
        h = mc.constraint_h(w, np.array([np.sqrt(2.0) / np.sqrt(1.0), 0.0]), inst)
        assert abs(h[1]) < 1e-12

    def test_norm_component(self, inst422):
        rng = np.random.default_rng(4)
        w = 2.0 * unit_vec(rng, inst422.dim)
        h = mc.constraint_h(w, np.ones(inst422.n_users), inst422)
        assert h[-1] == pytest.approx(3.0)


class TestTSubproblem:
    def test_single_user(self):
        t, s = mc.solve_t_subproblem([1.0], [1.0])
        assert t[0] == pytest.approx(1.5)
        assert s == pytest.approx(1.5)
        assert t[0] - 1.0 * (t[0] - 1.0) ** 2 == pytest.approx(1.25)

    def test_two_users(self):
        t, s = mc.solve_t_subproblem([1.0, 1.0], [5.0, 1.0])
        np.testing.assert_allclose(t, [5.0, 1.5])
        assert s == pytest.approx(1.5)

    def test_all_equal(self):
        K, a, b = 4, 0.5, 2.0
        t, s = mc.solve_t_subproblem(np.full(K, a), np.full(K, b))
        expect = max(b + 1.0 / (2 * K * a), 0.0)
        np.testing.assert_allclose(t, expect)
        assert s == pytest.approx(expect)

    def test_all_equal_clamped_at_zero(self):
        t, s = mc.solve_t_subproblem(np.full(3, 1.0), np.full(3, -5.0))
        np.testing.assert_allclose(t, 0.0)
        assert s == 0.0

    def test_floor_identity_and_grid_oracle(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            K = int(rng.integers(1, 6))
            a = rng.uniform(0.05, 3.0, K)
            b = rng.uniform(-3.0, 5.0, K)
            t, s = mc.solve_t_subproblem(a, b)
            np.testing.assert_array_equal(t, np.maximum(b, s))
            assert s >= 0.0
            obj = t.min() - a @ (t - b) ** 2
            grid = np.linspace(0.0, max(b.max(), 0.0) + 1.0 / (2 * a.min()) + 1.0, 4001)
            tg = np.maximum(b[None, :], grid[:, None])
            objs = tg.min(axis=1) - (a[None, :] * (tg - b[None, :]) ** 2).sum(axis=1)
            assert obj >= objs.max() - 1e-5

    def test_penalty_dominant_limit(self):
        # rho -> 0 makes a_k huge; t collapses to b elementwise (floored at 0)
        rng = np.random.default_rng(6)
        inst = mc.gen_instance(3, 2, 1, 10.0, seed=6)
        w = unit_vec(rng, inst.dim)
        na, nb = mc.coupling_norms(w, inst)
        rho = 1e-6
        a = nb**2 / (2 * rho)
        b = na / nb
        t, _ = mc.solve_t_subproblem(a, b)
        np.testing.assert_allclose(t, np.maximum(b, 0.0), atol=1e-4)

    def test_rejects_nonpositive_a(self):
        with pytest.raises(InvalidInputError):
            mc.solve_t_subproblem([0.0], [1.0])


class TestSurrogate:
    def test_quadratic_case_exact(self, inst422):
        # lam = 0, t = 0: theta is already quadratic, C = sum A_eq, no gap
        rng = np.random.default_rng(7)
        wt = unit_vec(rng, inst422.dim)
        K = inst422.n_users
        C, const = mc.build_surrogate_C(wt, np.zeros(K), np.zeros(K), 0.5, inst422)
        np.testing.assert_allclose(C, inst422.A_eq.sum(axis=0), atol=1e-10)
        assert const == pytest.approx(0.0)
        for _ in range(20):
            w = unit_vec(rng, inst422.dim)
            we = numerics.real_embed_vec(w)
            assert we @ C @ we + const == pytest.approx(
                mc.theta_value(w, np.zeros(K), np.zeros(K), 0.5, inst422), abs=1e-8)

    def test_tightness_at_expansion_point(self, inst422):
        rng = np.random.default_rng(8)
        K = inst422.n_users
        for _ in range(20):
            wt = unit_vec(rng, inst422.dim)
            t = np.abs(rng.standard_normal(K)) * 2
            lam = rng.standard_normal(K)
            rho = float(rng.uniform(0.05, 2.0))
            C, const = mc.build_surrogate_C(wt, t, lam, rho, inst422)
            we = numerics.real_embed_vec(wt)
            assert we @ C @ we + const == pytest.approx(
                mc.theta_value(wt, t, lam, rho, inst422), abs=1e-8)

    def test_dominance_on_sphere(self, inst422):
        rng = np.random.default_rng(9)
        K = inst422.n_users
        for _ in range(5):
            wt = unit_vec(rng, inst422.dim)
            t = np.abs(rng.standard_normal(K)) * 2
            lam = rng.standard_normal(K)
            rho = float(rng.uniform(0.05, 2.0))
            C, const = mc.build_surrogate_C(wt, t, lam, rho, inst422)
            for _ in range(200):
                w = unit_vec(rng, inst422.dim)
                we = numerics.real_embed_vec(w)
                gap = we @ C @ we + const - mc.theta_value(w, t, lam, rho, inst422)
                assert gap >= -1e-8

    def test_degenerate_gain_guard(self, inst422):
        # expansion point orthogonal to user 0's channel within its group block
        inst = mc.gen_instance(2, 1, 2, 10.0, seed=10)
        h0 = inst.channels[0]
        w = np.zeros(inst.dim, dtype=complex)
        w[0], w[1] = h0[1].conj(), -h0[0].conj()  # orthogonal to h0
        w /= np.linalg.norm(w)
        na, _ = mc.coupling_norms(w, inst)
        assert na[0] < 1e-10
        lam = np.array([0.5, -0.5])
        C, const = mc.build_surrogate_C(w, np.ones(2), lam, 0.5, inst)
        assert np.all(np.isfinite(C)) and np.isfinite(const)
        # bound must remain valid even with the jittered expansion point
        rng = np.random.default_rng(11)
        for _ in range(100):
            v = unit_vec(rng, inst.dim)
            ve = numerics.real_embed_vec(v)
            assert ve @ C @ ve + const >= mc.theta_value(v, np.ones(2), lam, 0.5, inst) - 1e-6


class TestInnerStep:
    def test_al_non_increasing_100_starts(self, inst422):
        rng = np.random.default_rng(12)
        prob = mc.MulticastProblem(inst422)
        K = inst422.n_users
        for _ in range(100):
            z = mc.MulticastIterate(w=unit_vec(rng, inst422.dim),
                                    t=np.abs(rng.standard_normal(K)) * 3)
            lam = rng.standard_normal(K)
            rho = float(rng.uniform(0.1, 2.0))
            before = prob.al_value(z, lam, rho)
            z = mc.bsum_inner_step(z, lam, rho, inst422)
            after = prob.al_value(z, lam, rho)
            assert after <= before + 1e-9 * (1 + abs(before))

    def test_fixed_point_stays(self, inst422):
        # run to near-convergence, then one more sweep must not move the iterate
        prob = mc.MulticastProblem(inst422)
        rng = np.random.default_rng(13)
        z = mc.initial_iterate(inst422, rng)
        lam = np.zeros(inst422.n_users)
        rho = 0.5
        for _ in range(300):
            z = mc.bsum_inner_step(z, lam, rho, inst422)
        z2 = mc.bsum_inner_step(z, lam, rho, inst422)
        assert min(np.linalg.norm(z2.w - z.w), np.linalg.norm(z2.w + z.w)) < 1e-6
        np.testing.assert_allclose(z2.t, z.t, atol=1e-6)

    def test_unit_norm_maintained(self, inst422):
        rng = np.random.default_rng(14)
        z = mc.initial_iterate(inst422, rng)
        lam = rng.standard_normal(inst422.n_users)
        for _ in range(5):
            z = mc.bsum_inner_step(z, lam, 0.7, inst422)
            assert abs(np.linalg.norm(z.w) - 1.0) < 1e-10


class TestGradients:
    def test_fd_w_block(self, inst422):
        rng = np.random.default_rng(15)
        prob = mc.MulticastProblem(inst422)
        K = inst422.n_users
        for _ in range(5):
            z = mc.MulticastIterate(w=unit_vec(rng, inst422.dim),
                                    t=rng.uniform(0.5, 3.0, K))
            lam = rng.standard_normal(K)
            g = prob.al_block_gradient(1, z, lam, 0.7)
            fd = fd_block_gradient(prob, 1, z, lam, 0.7)
            assert np.linalg.norm(fd - g) <= 1e-4 * max(1.0, np.linalg.norm(g))

    def test_fd_t_block_with_min_subgradient(self, inst422):
        rng = np.random.default_rng(16)
        prob = mc.MulticastProblem(inst422)
        K = inst422.n_users
        for _ in range(5):
            z = mc.MulticastIterate(w=unit_vec(rng, inst422.dim),
                                    t=rng.uniform(0.5, 3.0, K))
            lam = rng.standard_normal(K)
            g = prob.al_block_gradient(0, z, lam, 0.7).copy()
            g[int(np.argmin(z.t))] -= 1.0
            fd = fd_block_gradient(prob, 0, z, lam, 0.7)
            assert np.linalg.norm(fd - g) <= 1e-4 * max(1.0, np.linalg.norm(g))

    def test_half_h_squared_gradient(self, inst422):
        # with lam = 0, rho = 1 the penalty part of the AL is 0.5 ||h||^2
        rng = np.random.default_rng(17)
        prob = mc.MulticastProblem(inst422)
        K = inst422.n_users
        z = mc.MulticastIterate(w=unit_vec(rng, inst422.dim),
                                t=rng.uniform(0.5, 3.0, K))
        g = prob.al_block_gradient(1, z, np.zeros(K), 1.0)
        we = numerics.real_embed_vec(z.w)
        step = 1e-5
        fd = np.empty_like(we)
        for j in range(we.size):
            wp, wm = we.copy(), we.copy()
            wp[j] += step
            wm[j] -= step
            hp = mc.constraint_h(numerics.complex_from_embedding(wp), z.t, inst422)[:-1]
            hm = mc.constraint_h(numerics.complex_from_embedding(wm), z.t, inst422)[:-1]
            fd[j] = (hp @ hp - hm @ hm) / (4 * step)
        assert np.linalg.norm(fd - g) <= 1e-4 * max(1.0, np.linalg.norm(g))


class TestSolveAndMetrics:
    def test_single_user_generalized_eig_oracle(self):
        for seed in range(3):
            inst = mc.gen_instance(4, 1, 1, 10.0, seed)
            w_scaled, t, trace = mc.solve(inst, mc.default_config(inst, seed=seed))
            lam_max = np.max(np.real(
                scipy.linalg.eigvals(scipy.linalg.solve(inst.B[0], inst.A[0]))))
            opt = np.log2(1.0 + lam_max)
            assert mc.min_rate(w_scaled, inst) >= 0.99 * opt
            assert mc.kkt_residual(w_scaled, inst) <= 1e-3

    def test_power_scaling_identity(self):
        inst = mc.gen_instance(4, 2, 1, 10.0, seed=5)
        w_scaled, _, _ = mc.solve(inst, mc.default_config(inst, seed=5, max_outer=8))
        assert np.linalg.norm(w_scaled) ** 2 == pytest.approx(inst.p_bs, abs=1e-8)

    def test_trace_h_over_dualized_components(self):
        inst = mc.gen_instance(4, 2, 1, 10.0, seed=6)
        problem = mc.MulticastProblem(inst)
        rng = np.random.default_rng(6)
        z = mc.initial_iterate(inst, rng)
        assert problem.constraint(z).shape == (inst.n_users,)

    def test_kkt_residual_nonnegative_and_k1_oracle(self):
        inst = mc.gen_instance(4, 1, 1, 10.0, seed=7)
        A, B = inst.A[0], inst.B[0]
        vals, vecs = scipy.linalg.eigh(A, B)
        w_star = vecs[:, -1]
        w_star /= np.linalg.norm(w_star)
        assert mc.kkt_residual(w_star, inst) <= 1e-6
        rng = np.random.default_rng(8)
        assert mc.kkt_residual(unit_vec(rng, 4), inst) >= 0.0

    def test_kkt_grid_oracle_k2(self):
        inst = mc.gen_instance(3, 2, 1, 10.0, seed=9)
        rng = np.random.default_rng(9)
        for _ in range(3):
            w = unit_vec(rng, inst.dim)
            r = mc.kkt_residual(w, inst)
            we = numerics.real_embed_vec(w)
            G = mc.rayleigh_gradients(w, inst)
            M = G - np.outer(we, we @ G)
            grid = np.linspace(0.0, 1.0, 1001)
            vals = np.linalg.norm(M @ np.vstack([grid, 1 - grid]), axis=0)
            # PG may only beat the grid by its resolution times the local slope
            assert r <= vals.min() + 1e-6
            assert vals.min() - r <= 1e-3 * (1.0 + np.linalg.norm(M, 2))

    def test_instance_json_roundtrip(self, inst422):
        data = mc.instance_to_dict(inst422)
        back = mc.instance_from_dict(data)
        np.testing.assert_allclose(back.channels, inst422.channels)
        np.testing.assert_allclose(back.A, inst422.A)
        assert back.groups == inst422.groups
