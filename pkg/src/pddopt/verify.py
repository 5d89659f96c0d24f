"""Property-verification suites behind the ``verify`` CLI subcommand.

Each suite runs a battery of seeded randomized checks of the library's
documented invariants (surrogate bounds, projection optimality, residual
contracts, schedule identities, monotone descent) and returns one record
per property. The pytest suite asserts on the same records, so a plain
``pddopt verify all`` reproduces what CI enforces.
"""

from dataclasses import dataclass

import numpy as np

from . import multicast as mc
from . import numerics
from . import relay as rl
from . import volmin as vm
from .core import BlockProblem, PddConfig, pdd_run, rbsum_run, stationarity_residuals


@dataclass
class CheckResult:
    suite: str
    name: str
    passed: bool
    detail: str = ""


def _check(results, suite, name, passed, detail=""):
    results.append(CheckResult(suite, name, bool(passed), detail))


def fd_block_gradient(problem, i, z, lam, rho, step=1e-5):
    """Central finite differences of the AL through a block's flat coordinates."""
    x = problem.block_value(i, z)
    g = np.empty_like(x)
    for j in range(x.size):
        xp = x.copy()
        xp[j] += step
        xm = x.copy()
        xm[j] -= step
        g[j] = (
            problem.al_value(problem.set_block_value(i, z, xp), lam, rho)
            - problem.al_value(problem.set_block_value(i, z, xm), lam, rho)
        ) / (2.0 * step)
    return g


def _rel_err(approx, exact):
    return float(np.linalg.norm(approx - exact) / max(1.0, np.linalg.norm(exact)))


# --------------------------------------------------------------------------
# numerics
# --------------------------------------------------------------------------

def suite_numerics(seed=0):
    rng = np.random.default_rng(seed)
    res = []

    # embedding isometry on random Hermitian quadratic forms
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(1, 8))
        G = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        M = 0.5 * (G + G.conj().T)
        w = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        w /= np.linalg.norm(w)
        we = numerics.real_embed_vec(w)
        Me = numerics.real_embed_hermitian(M)
        worst = max(worst, abs(np.real(np.vdot(w, M @ w)) - we @ Me @ we))
        worst = max(worst, abs(np.linalg.norm(we) - np.linalg.norm(w)))
    _check(res, "numerics", "embedding-isometry", worst < 1e-10, f"worst dev {worst:.2e}")

    # eigen residual bound and Rayleigh-quotient lower-bound oracle
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(2, 10))
        C = rng.standard_normal((n, n))
        C = 0.5 * (C + C.T)
        v, lam = numerics.min_eigvec_sym(C)
        nc = max(np.abs(np.linalg.eigvalsh(C)))
        worst = max(worst, np.linalg.norm(C @ v - lam * v) / max(nc, 1e-300))
    _check(res, "numerics", "eig-residual-bound", worst <= 1e-9, f"worst {worst:.2e}")

    ok = True
    for _ in range(25):
        n = int(rng.integers(2, 8))
        C = rng.standard_normal((n, n))
        C = 0.5 * (C + C.T)
        v, _ = numerics.min_eigvec_sym(C)
        samples = rng.standard_normal((1000, n))
        samples /= np.linalg.norm(samples, axis=1, keepdims=True)
        ok &= v @ C @ v <= np.einsum("ij,jk,ik->i", samples, C, samples).min() + 1e-12
    _check(res, "numerics", "eig-rayleigh-oracle", ok)

    # SVD residuals over random shapes
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(2, 10))
        k = int(rng.integers(1, n + 1))
        M = rng.standard_normal((n, k))
        U, s, V = numerics.thin_svd(M)
        scale = max(s[0], 1e-300)
        worst = max(worst, np.linalg.norm(U @ np.diag(s) @ V.T - M) / scale)
        worst = max(worst, np.linalg.norm(U.T @ U - np.eye(k)))
        worst = max(worst, np.linalg.norm(V.T @ V - np.eye(k)))
    _check(res, "numerics", "svd-residual-bound", worst <= 1e-9, f"worst {worst:.2e}")

    # Sylvester residual bound and Kronecker-vectorization oracle
    worst_res, worst_orc = 0.0, 0.0
    for trial in range(1000):
        n = int(rng.integers(1, 6))
        m = int(rng.integers(1, 6))
        cplx = trial % 2 == 1
        def mat(a, b):
            M = rng.standard_normal((a, b))
            return M + 1j * rng.standard_normal((a, b)) if cplx else M
        Ga = mat(n, n)
        A = Ga @ Ga.conj().T + np.eye(n)          # PD
        Gb = mat(m, m)
        B = Gb @ Gb.conj().T                       # PSD
        C = mat(n, m)
        F = numerics.solve_sylvester(A, B, C)
        r = np.linalg.norm(A @ F + F @ B - C)
        bound = 1e-8 * (np.linalg.norm(A) + np.linalg.norm(B)) * np.linalg.norm(F) + 1e-12
        worst_res = max(worst_res, r / bound)
        if trial % 50 == 0:
            K = np.kron(np.eye(m), A) + np.kron(B.T, np.eye(n))
            F_orc = np.linalg.solve(K, C.ravel(order="F")).reshape((n, m), order="F")
            worst_orc = max(worst_orc, np.linalg.norm(F - F_orc) / max(1.0, np.linalg.norm(F_orc)))
    _check(res, "numerics", "sylvester-residual-bound", worst_res <= 1.0,
           f"worst residual/bound {worst_res:.2e}")
    _check(res, "numerics", "sylvester-kronecker-oracle", worst_orc <= 1e-8,
           f"worst mismatch {worst_orc:.2e}")

    # projection idempotence and simplex KKT certificate
    worst_idem, worst_kkt, worst_sum = 0.0, 0.0, 0.0
    for _ in range(500):
        n = int(rng.integers(1, 12))
        x = 3.0 * rng.standard_normal(n)
        r = float(rng.uniform(0.1, 2.0))
        p1 = numerics.project_ball(x, r)
        worst_idem = max(worst_idem, np.abs(numerics.project_ball(p1, r) - p1).max())
        s = numerics.project_simplex(x)
        worst_idem = max(worst_idem, np.abs(numerics.project_simplex(s) - s).max())
        worst_sum = max(worst_sum, abs(s.sum() - 1.0))
        active = s > 0
        if active.any():
            theta = x[active] - s[active]
            worst_kkt = max(worst_kkt, theta.max() - theta.min())
            if (~active).any():
                worst_kkt = max(worst_kkt, max(0.0, (x[~active] - theta.mean()).max()))
    _check(res, "numerics", "projection-idempotence", worst_idem <= 1e-12,
           f"worst {worst_idem:.2e}")
    _check(res, "numerics", "simplex-kkt-certificate",
           worst_kkt <= 1e-9 and worst_sum <= 1e-12,
           f"theta spread {worst_kkt:.2e}, sum dev {worst_sum:.2e}")

    # monotone cubic vs bisection oracle
    worst = 0.0
    for _ in range(500):
        a = float(rng.uniform(0.01, 100.0))
        b = float(rng.uniform(0.01, 100.0))
        d = float(rng.uniform(0.0, 100.0))
        s = numerics.solve_monotone_cubic(a, b, d)
        lo, hi = 0.0, d / b
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if a * mid**3 + b * mid - d > 0:
                hi = mid
            else:
                lo = mid
        worst = max(worst, abs(s - 0.5 * (lo + hi)))
    _check(res, "numerics", "cubic-bisection-oracle", worst <= 1e-12, f"worst {worst:.2e}")
    return res


# --------------------------------------------------------------------------
# pdd-core
# --------------------------------------------------------------------------

class _ToyEquality(BlockProblem):
    """min ||z||^2 s.t. z1 - 1 = 0; one block with exact AL minimization."""

    n_blocks = 1

    def constraint(self, z):
        return np.array([z[0] - 1.0])

    def objective(self, z):
        return float(z @ z)

    def al_value(self, z, lam, rho):
        h = z[0] - 1.0
        return float(z @ z + lam[0] * h + h * h / (2.0 * rho))

    def step(self, i, z, lam, rho):
        out = np.zeros_like(z)
        out[0] = (1.0 / rho - lam[0]) / (2.0 + 1.0 / rho)
        return out

    def block_value(self, i, z):
        return z.copy()

    def set_block_value(self, i, z, v):
        return np.asarray(v, dtype=float).copy()

    def al_block_gradient(self, i, z, lam, rho):
        g = 2.0 * z
        g = g.copy()
        g[0] += lam[0] + (z[0] - 1.0) / rho
        return g


class _Quad3(BlockProblem):
    """Unconstrained convex quadratic with three coordinate blocks."""

    n_blocks = 3

    def __init__(self, Q, b):
        self.Q, self.b = Q, b

    def constraint(self, z):
        return np.zeros(0)

    def al_value(self, z, lam, rho):
        return float(0.5 * z @ self.Q @ z - self.b @ z)

    def step(self, i, z, lam, rho):
        z = z.copy()
        r = self.b[i] - self.Q[i] @ z + self.Q[i, i] * z[i]
        z[i] = r / self.Q[i, i]
        return z

    def block_value(self, i, z):
        return np.array([z[i]])

    def set_block_value(self, i, z, v):
        z = z.copy()
        z[i] = v[0]
        return z

    def al_block_gradient(self, i, z, lam, rho):
        return np.array([(self.Q @ z - self.b)[i]])


def suite_core(seed=0):
    rng = np.random.default_rng(seed)
    res = []

    # PDD branch identities replayed from a trace
    toy = _ToyEquality()
    cfg = PddConfig(mode="pdd", rho0=1.0, c=0.7, tau=0.9, eps0=1e-2,
                    max_outer=25, inner_stop="iteration-cap", max_inner=1,
                    eps_outer=1e-12)
    z0 = np.array([4.0, 1.0])
    z, lam_final, trace = pdd_run(toy, z0, np.zeros(1), cfg)
    ok_dual, ok_pen, ok_rho_mono, ok_eta = True, True, True, True
    lam = np.zeros(1)
    z_sim = z0
    eta_prev = None
    for rec in trace.records:
        z_sim = toy.step(0, z_sim, lam, rec.rho)
        h = toy.constraint(z_sim)
        if rec.branch == "dual-update":
            lam = lam + h / rec.rho
        else:
            ok_pen &= abs(h[0]) > rec.eta
        if eta_prev is not None:
            ok_eta &= rec.eta <= 0.9 * eta_prev + 1e-15
        eta_prev = rec.eta
    ok_dual &= np.allclose(lam, lam_final)
    rhos = trace.column("rho")
    ok_rho_mono = all(r2 <= r1 + 1e-15 for r1, r2 in zip(rhos, rhos[1:]))
    _check(res, "pdd-core", "dual-update-identity", ok_dual)
    _check(res, "pdd-core", "penalty-branch-condition", ok_pen)
    _check(res, "pdd-core", "rho-monotone-nonincreasing", ok_rho_mono)
    _check(res, "pdd-core", "eta-shrink-factor", ok_eta)

    # IPDD virtual-multiplier identity and toy KKT convergence
    cfg = PddConfig(mode="ipdd", rho0=1.0, c=0.8, eps0=1e-3, max_outer=50,
                    inner_stop="iteration-cap", max_inner=1, eps_outer=1e-7)
    z, lam_final, trace = pdd_run(toy, np.array([5.0, 3.0]), np.zeros(1), cfg)
    lam = np.zeros(1)
    z_sim = np.array([5.0, 3.0])
    ok = True
    for rec in trace.records:
        z_sim = toy.step(0, z_sim, lam, rec.rho)
        lam = lam + toy.constraint(z_sim) / rec.rho
    ok &= np.allclose(lam, lam_final)
    _check(res, "pdd-core", "ipdd-virtual-multiplier-identity", ok)
    _check(res, "pdd-core", "ipdd-toy-kkt-convergence",
           abs(z[0] - 1.0) < 1e-6 and abs(lam_final[0] + 2.0) < 1e-5
           and trace.records[-1].h_inf < 1e-6,
           f"z1={z[0]:.8f} lam={lam_final[0]:.6f}")

    # rBSUM: convergence to the global quadratic minimizer, monotone descent,
    # and bit-reproducibility of seeded runs
    M = rng.standard_normal((3, 3))
    quad = _Quad3(M @ M.T + 3.0 * np.eye(3), rng.standard_normal(3))
    z, _, _ = rbsum_run(quad, np.zeros(3), np.zeros(0), 1.0,
                        eps_inner=1e-14, max_inner=500)
    z_star = np.linalg.solve(quad.Q, quad.b)
    _check(res, "pdd-core", "rbsum-quadratic-oracle",
           np.abs(z - z_star).max() < 1e-6, f"err {np.abs(z - z_star).max():.2e}")
    za, _, _ = rbsum_run(quad, np.ones(3), np.zeros(0), 1.0, seed=42,
                         eps_inner=1e-10, max_inner=9)
    zb, _, _ = rbsum_run(quad, np.ones(3), np.zeros(0), 1.0, seed=42,
                         eps_inner=1e-10, max_inner=9)
    _check(res, "pdd-core", "rbsum-seeded-reproducibility", np.array_equal(za, zb))
    ok = True
    z = 5.0 * rng.standard_normal(3)
    L_prev = quad.al_value(z, np.zeros(0), 1.0)
    for _ in range(30):
        z, _, _ = rbsum_run(quad, z, np.zeros(0), 1.0, seed=rng,
                            eps_inner=0.0, max_inner=1)
        L = quad.al_value(z, np.zeros(0), 1.0)
        ok &= L <= L_prev + 1e-9 * (1.0 + abs(L_prev))
        L_prev = L
    _check(res, "pdd-core", "rbsum-monotone-descent", ok)

    # stationarity residuals: zero at an exact minimizer, FD-consistent gradient
    e, delta = stationarity_residuals(quad, z_star, np.zeros(0), 1.0)
    _check(res, "pdd-core", "residual-zero-at-minimizer",
           max(np.abs(e).max(), np.abs(delta).max()) < 1e-8)
    worst = 0.0
    for _ in range(5):
        zr = rng.standard_normal(3)
        for i in range(3):
            fd = fd_block_gradient(quad, i, zr, np.zeros(0), 1.0)
            worst = max(worst, _rel_err(fd, quad.al_block_gradient(i, zr, np.zeros(0), 1.0)))
    zr = rng.standard_normal(2) + 2.0
    fd = fd_block_gradient(toy, 0, zr, np.array([0.3]), 0.7)
    worst = max(worst, _rel_err(fd, toy.al_block_gradient(0, zr, np.array([0.3]), 0.7)))
    _check(res, "pdd-core", "fd-gradient-consistency", worst <= 1e-4, f"worst rel {worst:.2e}")
    return res


# --------------------------------------------------------------------------
# multicast
# --------------------------------------------------------------------------

def suite_multicast(seed=0):
    rng = np.random.default_rng(seed)
    res = []
    inst = mc.gen_instance(4, 2, 2, 10.0, seed=int(rng.integers(1 << 16)))
    prob = mc.MulticastProblem(inst)
    K, dim = inst.n_users, inst.dim

    def rand_unit():
        w = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
        return w / np.linalg.norm(w)

    # SINR identity of the assembled quadratic forms against the channel model
    worst = 0.0
    for _ in range(20):
        w = rand_unit()
        sinr_direct = mc.sinr_values(np.sqrt(inst.p_bs) * w, inst)
        for k in range(K):
            qa = np.real(np.vdot(w, inst.A[k] @ w))
            qb = np.real(np.vdot(w, inst.B[k] @ w))
            worst = max(worst, abs(qa / qb - sinr_direct[k]) / max(1.0, sinr_direct[k]))
    _check(res, "multicast", "sinr-quadratic-form-identity", worst < 1e-10,
           f"worst rel dev {worst:.2e}")

    # quadratic surrogate: global dominance on the sphere + tightness
    worst_gap, worst_tight = 0.0, 0.0
    for _ in range(10):
        wt = rand_unit()
        t = np.abs(rng.standard_normal(K)) * 2.0
        lam = rng.standard_normal(K)
        rho = float(rng.uniform(0.05, 2.0))
        C, const = mc.build_surrogate_C(wt, t, lam, rho, inst)
        theta_t = mc.theta_value(wt, t, lam, rho, inst)
        we = numerics.real_embed_vec(wt)
        worst_tight = max(worst_tight, abs(we @ C @ we + const - theta_t))
        for _ in range(200):
            w = rand_unit()
            we = numerics.real_embed_vec(w)
            gap = we @ C @ we + const - mc.theta_value(w, t, lam, rho, inst)
            worst_gap = max(worst_gap, -gap)
    _check(res, "multicast", "surrogate-dominance", worst_gap <= 1e-8,
           f"worst violation {worst_gap:.2e}")
    _check(res, "multicast", "surrogate-tightness", worst_tight <= 1e-8,
           f"worst dev {worst_tight:.2e}")

    # t-subproblem against a dense 1-D grid over the common floor
    worst = 0.0
    for _ in range(200):
        kk = int(rng.integers(1, 6))
        a = rng.uniform(0.05, 3.0, kk)
        b = rng.uniform(-3.0, 5.0, kk)
        t, s = mc.solve_t_subproblem(a, b)
        obj = t.min() - a @ (t - b) ** 2
        grid = np.linspace(0.0, max(b.max(), 0.0) + 1.0 / (2.0 * a.min()) + 1.0, 4001)
        tg = np.maximum(b[None, :], grid[:, None])
        objs = tg.min(axis=1) - (a[None, :] * (tg - b[None, :]) ** 2).sum(axis=1)
        worst = max(worst, objs.max() - obj)
        worst = max(worst, np.abs(t - np.maximum(b, s)).max())
    _check(res, "multicast", "t-subproblem-grid-oracle", worst <= 1e-5,
           f"worst suboptimality {worst:.2e}")

    # inner AL monotonicity across full sweeps from random starts
    ok = True
    for _ in range(100):
        z = mc.MulticastIterate(w=rand_unit(), t=np.abs(rng.standard_normal(K)) * 3.0)
        lam = rng.standard_normal(K)
        rho = float(rng.uniform(0.1, 2.0))
        L_prev = prob.al_value(z, lam, rho)
        for _ in range(3):
            z = mc.bsum_inner_step(z, lam, rho, inst)
            L = prob.al_value(z, lam, rho)
            ok &= L <= L_prev + 1e-9 * (1.0 + abs(L_prev))
            L_prev = L
    _check(res, "multicast", "inner-al-monotone", ok)

    # finite-difference check of the AL gradients (w full; t smooth + argmin part)
    worst = 0.0
    for _ in range(5):
        z = mc.MulticastIterate(w=rand_unit(), t=rng.uniform(0.5, 3.0, K))
        lam = rng.standard_normal(K)
        rho = 0.7
        g_w = prob.al_block_gradient(1, z, lam, rho)
        worst = max(worst, _rel_err(fd_block_gradient(prob, 1, z, lam, rho), g_w))
        g_t = prob.al_block_gradient(0, z, lam, rho).copy()
        g_t[int(np.argmin(z.t))] -= 1.0   # -min(t) subgradient at a unique argmin
        worst = max(worst, _rel_err(fd_block_gradient(prob, 0, z, lam, rho), g_t))
    _check(res, "multicast", "fd-al-gradient", worst <= 1e-4, f"worst rel {worst:.2e}")

    # KKT residual: simplex grid oracle at K = 2
    inst2 = mc.gen_instance(3, 2, 1, 10.0, seed=int(rng.integers(1 << 16)))
    worst = 0.0
    for _ in range(5):
        w = rng.standard_normal(inst2.dim) + 1j * rng.standard_normal(inst2.dim)
        w /= np.linalg.norm(w)
        r = mc.kkt_residual(w, inst2)
        we = numerics.real_embed_vec(w)
        G = mc.rayleigh_gradients(w, inst2)
        Mproj = G - np.outer(we, we @ G)
        grid = np.linspace(0.0, 1.0, 1001)
        vals = np.linalg.norm(Mproj @ np.vstack([grid, 1.0 - grid]), axis=0)
        worst = max(worst, r - vals.min())
        worst = max(worst, -r)
    _check(res, "multicast", "kkt-grid-oracle", worst <= 1e-3,
           f"worst gap {worst:.2e}")

    # soft report: h non-increase frequency on dual-branch iterations
    inst8 = mc.gen_instance(8, 4, 2, 10.0, seed=7)
    _, _, trace = mc.solve(inst8, mc.default_config(inst8, seed=7))
    hs = trace.column("h_inf")
    branches = trace.column("branch")
    pairs = [(h1, h2) for (h1, h2, b) in zip(hs, hs[1:], branches[1:])
             if b == "dual-update"]
    frac = (sum(1 for h1, h2 in pairs if h2 <= h1 + 1e-12) / len(pairs)) if pairs else 1.0
    _check(res, "multicast", "h-nonincrease-on-dual-branch(report)", True,
           f"non-increasing on {100 * frac:.0f}% of dual steps (soft target 95%)")

    # power scaling identity after solve
    inst_s = mc.gen_instance(4, 2, 1, 10.0, seed=11)
    w_scaled, _, _ = mc.solve(inst_s, mc.default_config(inst_s, seed=11, max_outer=8))
    _check(res, "multicast", "power-scaling-identity",
           abs(np.linalg.norm(w_scaled) ** 2 - inst_s.p_bs) <= 1e-8)
    return res


# --------------------------------------------------------------------------
# relay
# --------------------------------------------------------------------------

def _surrogate_block_gradients(z, lam, rho, inst, prob):
    """Independent gradients of the quadratic MSE surrogate for F, X, V.

    Written directly from the surrogate objective (weighted MSE plus
    penalty), as the oracle against which the closed-form block updates
    are checked.
    """
    z = prob.sync_duals(z, lam)
    G_w, D_w = rl.mse_matrices(z.u, z.w, inst)
    Gcol = inst.g.T
    H, sr = inst.H, inst.sigma_r
    M1 = z.Z + (z.X - z.F @ H @ z.V) / rho
    M2 = z.Zf + sr * (z.F - z.Fb) / rho
    M3 = z.Zx + (z.X - z.Xb) / rho
    M4 = z.Zv + (z.V - z.Vb) / rho
    HV = H @ z.V
    g_F = 2.0 * inst.sigma_r2 * G_w @ z.F - M1 @ HV.conj().T + sr * M2
    g_X = 2.0 * (G_w @ z.X - Gcol * D_w[None, :]) + M1 + M3
    FH = z.F @ H
    g_V = -FH.conj().T @ M1 + M4
    return g_F, g_X, g_V


def suite_relay(seed=0):
    rng = np.random.default_rng(seed)
    res = []
    inst = rl.gen_instance(2, 2, 2, 10.0, seed=int(rng.integers(1 << 16)))
    prob = rl.RelayProblem(inst)

    def rand_iterate(scale=1.0):
        def cm(shape):
            return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
        z = rl.RelayIterate(
            V=cm((inst.n_s, inst.n_users)), F=cm((inst.n_r, inst.n_r)),
            X=cm((inst.n_r, inst.n_users)), Vb=cm((inst.n_s, inst.n_users)),
            Fb=cm((inst.n_r, inst.n_r)), Xb=cm((inst.n_r, inst.n_users)),
            Z=cm((inst.n_r, inst.n_users)), Zf=cm((inst.n_r, inst.n_r)),
            Zx=cm((inst.n_r, inst.n_users)), Zv=cm((inst.n_s, inst.n_users)),
            u=np.zeros(inst.n_users, dtype=complex), w=np.ones(inst.n_users),
        )
        return rl.refresh_weights(z, inst)

    # weights: w = 1 + SINR identity and w >= 1
    worst = 0.0
    ok_w = True
    for _ in range(50):
        z = rand_iterate()
        u, w = rl.wmmse_weights(z.X, z.F, inst)
        ok_w &= bool(np.all(w >= 1.0 - 1e-12))
        total, _, interf = rl._received_powers(z.X, z.F, inst)
        worst = max(worst, np.abs(np.log(w) - np.log(total / interf)).max())
    _check(res, "relay", "weights-rate-identity", worst < 1e-10 and ok_w,
           f"worst dev {worst:.2e}")

    # MMSE-reformulation lower bound of the rate, tight at the expansion point
    def rate_k(X, F):
        total, _, interf = rl._received_powers(X, F, inst)
        return np.log(total / interf)

    def mse_k(u, X, F):
        Mm = inst.g.conj() @ X
        gf = inst.g.conj() @ F
        own = np.diag(Mm)
        e = np.abs(1.0 - u.conj() * own) ** 2
        e += np.abs(u[:, None].conj() * Mm) ** 2 @ np.ones(inst.n_users) \
            - np.abs(u.conj() * own) ** 2
        e += inst.sigma_r2 * np.abs(u[:, None].conj() * gf) ** 2 @ np.ones(inst.n_r)
        e += inst.sigma2 * np.abs(u) ** 2
        return e

    worst_viol, worst_eq = 0.0, 0.0
    for _ in range(10):
        zt = rand_iterate()
        ut, wt = rl.wmmse_weights(zt.X, zt.F, inst)
        eq_gap = np.abs(rate_k(zt.X, zt.F) - (np.log(wt) - wt * mse_k(ut, zt.X, zt.F) + 1.0))
        worst_eq = max(worst_eq, eq_gap.max())
        for _ in range(100):
            z = rand_iterate()
            bound = np.log(wt) - wt * mse_k(ut, z.X, z.F) + 1.0
            worst_viol = max(worst_viol, (bound - rate_k(z.X, z.F)).max())
    _check(res, "relay", "rate-lower-bound", worst_viol <= 1e-8,
           f"worst violation {worst_viol:.2e}")
    _check(res, "relay", "rate-lower-bound-tightness", worst_eq <= 1e-8,
           f"worst dev {worst_eq:.2e}")

    # closed-form block updates zero the surrogate block gradients
    worst = 0.0
    for _ in range(20):
        z = rand_iterate()
        rho = float(rng.uniform(0.1, 2.0))
        zF = rl.replace(z, F=rl.update_F(z, rho, inst))
        g_F, _, _ = _surrogate_block_gradients(zF, prob.pack_duals(z.Z, z.Zf, z.Zx, z.Zv), rho, inst, prob)
        worst = max(worst, np.abs(g_F).max())
        zX = rl.replace(z, X=rl.update_X(z, rho, inst))
        _, g_X, _ = _surrogate_block_gradients(zX, prob.pack_duals(z.Z, z.Zf, z.Zx, z.Zv), rho, inst, prob)
        worst = max(worst, np.abs(g_X).max())
        zV = rl.replace(z, V=rl.update_V(z, rho, inst))
        _, _, g_V = _surrogate_block_gradients(zV, prob.pack_duals(z.Z, z.Zf, z.Zx, z.Zv), rho, inst, prob)
        worst = max(worst, np.abs(g_V).max())
    _check(res, "relay", "block-updates-zero-gradient", worst <= 1e-7,
           f"worst grad entry {worst:.2e}")

    # barred block: projection beats random feasible candidates
    worst = 0.0
    for _ in range(5):
        z = rand_iterate(2.0)
        rho = 0.8
        Vb, Xb, Fb = rl.update_bars(z, rho, inst)
        def bar_obj(Vb_, Xb_, Fb_):
            return (np.linalg.norm(z.V + rho * z.Zv - Vb_) ** 2
                    + np.linalg.norm(z.X + rho * z.Zx - Xb_) ** 2
                    + np.linalg.norm(inst.sigma_r * z.F + rho * z.Zf
                                     - inst.sigma_r * Fb_) ** 2)
        best = bar_obj(Vb, Xb, Fb)
        ok = True
        for _ in range(1000):
            Vc = rng.standard_normal(Vb.shape) + 1j * rng.standard_normal(Vb.shape)
            Vc *= np.sqrt(inst.p_s) * rng.uniform() / np.linalg.norm(Vc)
            Tc = rng.standard_normal((inst.n_r, inst.n_users + inst.n_r)) \
                + 1j * rng.standard_normal((inst.n_r, inst.n_users + inst.n_r))
            Tc *= np.sqrt(inst.p_r) * rng.uniform() / np.linalg.norm(Tc)
            Xc, Fc = Tc[:, :inst.n_users], Tc[:, inst.n_users:] / inst.sigma_r
            ok &= best <= bar_obj(Vc, Xc, Fc) + 1e-9
        worst = max(worst, 0.0 if ok else 1.0)
    _check(res, "relay", "bars-projection-optimality", worst == 0.0)

    # AL monotone over sweeps from random starts; feasibility invariants
    ok, ok_feas = True, True
    for _ in range(50):
        z = rand_iterate()
        lam = prob.pack_duals(z.Z, z.Zf, z.Zx, z.Zv)
        rho = float(rng.uniform(0.2, 2.0))
        L_prev = prob.al_value(z, lam, rho)
        for _ in range(3):
            z = rl.bsum_inner_step(z, rho, inst)
            L = prob.al_value(z, lam, rho)
            ok &= L <= L_prev + 1e-9 * (1.0 + abs(L_prev))
            L_prev = L
            ok_feas &= np.linalg.norm(z.Vb) ** 2 <= inst.p_s + 1e-8
            ok_feas &= (np.linalg.norm(z.Xb) ** 2
                        + inst.sigma_r2 * np.linalg.norm(z.Fb) ** 2) <= inst.p_r + 1e-8
    _check(res, "relay", "inner-al-monotone", ok)
    _check(res, "relay", "bars-feasibility-invariant", ok_feas)

    # finite-difference check of the relay AL gradients, all four blocks
    worst = 0.0
    for _ in range(3):
        z = rand_iterate()
        lam = 0.3 * prob.pack_duals(z.Z, z.Zf, z.Zx, z.Zv)
        rho = 0.9
        for i in range(4):
            fd = fd_block_gradient(prob, i, z, lam, rho)
            worst = max(worst, _rel_err(fd, prob.al_block_gradient(i, z, lam, rho)))
    _check(res, "relay", "fd-al-gradient", worst <= 1e-4, f"worst rel {worst:.2e}")
    return res


# --------------------------------------------------------------------------
# volmin
# --------------------------------------------------------------------------

def suite_volmin(seed=0):
    rng = np.random.default_rng(seed)
    res = []
    inst, _ = vm.gen_data(8, 3, 40, 0.8, None, seed=int(rng.integers(1 << 16)))
    prob = vm.VolMinProblem(inst)
    N, K, L = inst.n_rows, inst.rank, inst.n_cols

    def rand_iterate(scale=1.0):
        return vm.VolMinIterate(
            X=scale * rng.standard_normal((N, K)),
            S=numerics.project_simplex_columns(rng.standard_normal((K, L))),
            Y=scale * rng.standard_normal((N, K)),
            P=0.3 * rng.standard_normal((N, L)),
            Q=0.3 * rng.standard_normal((N, K)),
        )

    # smoothed-volume C^1 property across the breakpoint
    xs = np.concatenate([np.linspace(1e-4, 3 * inst.eps, 400),
                         [inst.eps - 1e-9, inst.eps, inst.eps + 1e-9]])
    worst = 0.0
    step = 1e-8  # curvature jumps by 1/eps at the kink; error ~ step/(2 eps)
    for x in xs:
        _, d = vm.g_eps(x, inst.eps)
        vp, _ = vm.g_eps(x + step, inst.eps)
        vmn, _ = vm.g_eps(x - step, inst.eps)
        worst = max(worst, abs((vp - vmn) / (2 * step) - d))
    _check(res, "volmin", "g-eps-c1", worst <= 1e-6, f"worst dev {worst:.2e}")

    # Y update: normal-equations oracle and vanishing block gradient
    worst_g, worst_o = 0.0, 0.0
    for _ in range(20):
        z = rand_iterate()
        rho = float(rng.uniform(0.1, 2.0))
        Y = vm.update_Y(z, rho, inst)
        zy = vm.replace(z, Y=Y)
        lam = np.concatenate([z.P.ravel(), z.Q.ravel()])
        worst_g = max(worst_g, np.abs(prob.al_block_gradient(0, zy, lam, rho)).max())
        # stacked least-squares oracle: Y [S I] ~ [A + rho P, X + rho Q]
        W = np.concatenate([z.S, np.eye(K)], axis=1)
        B = np.concatenate([inst.A + rho * z.P, z.X + rho * z.Q], axis=1)
        Y_orc = np.linalg.lstsq(W.T, B.T, rcond=None)[0].T
        worst_o = max(worst_o, np.abs(Y - Y_orc).max())
    _check(res, "volmin", "y-update-zero-gradient", worst_g <= 1e-9,
           f"worst {worst_g:.2e}")
    _check(res, "volmin", "y-update-linear-solve-oracle", worst_o <= 1e-10,
           f"worst {worst_o:.2e}")

    # S update: majorization and descent of the data-fit objective
    ok_major, ok_desc = True, True
    for _ in range(100):
        z = rand_iterate()
        rho = float(rng.uniform(0.1, 2.0))
        beta = vm.default_beta(z.Y)
        S_new = vm.update_S(z, rho, inst)
        target = inst.A + rho * z.P

        def fit(S):
            return np.linalg.norm(z.Y @ S - target) ** 2

        def majorized(S):
            W = beta * np.eye(K) - z.Y.T @ z.Y
            D = S - z.S
            return fit(S) + np.einsum("kl,kl->", D, W @ D)

        ok_major &= majorized(S_new) <= majorized(z.S) + 1e-9 * (1 + abs(majorized(z.S)))
        ok_desc &= fit(S_new) <= fit(z.S) + 1e-9 * (1 + abs(fit(z.S)))
    _check(res, "volmin", "s-update-majorization", ok_major)
    _check(res, "volmin", "s-update-descent", ok_desc)

    # X update: per-sigma grid oracle and objective descent
    worst = 0.0
    ok_desc = True
    for _ in range(100):
        z = rand_iterate()
        rho = float(rng.uniform(0.05, 2.0))
        X_new = vm.update_X(z, rho, inst.eps)
        X_bar = z.Y - rho * z.Q

        def obj38(X):
            return vm.f_eps(X, inst.eps) + np.linalg.norm(X - X_bar) ** 2 / (2 * rho)

        s_tilde = np.linalg.svd(z.X, compute_uv=False)
        g_tilde, _ = vm.g_eps(s_tilde**2, inst.eps)
        s_bar = np.linalg.svd(X_bar, compute_uv=False)
        s_out = np.linalg.svd(X_new, compute_uv=False)
        # linearized objective of the chosen sigmas vs a dense grid, per index
        for i in range(K):
            grid = np.linspace(0.0, s_bar[i] + 3 * np.sqrt(inst.eps), 2000)
            gv, _ = vm.g_eps(grid**2, inst.eps)
            vals = gv / g_tilde[i] + (grid - s_bar[i]) ** 2 / (2 * rho)
            sv, _ = vm.g_eps(np.sort(s_out)[::-1][i] ** 2, inst.eps)
            mine = sv / g_tilde[i] + (np.sort(s_out)[::-1][i] - s_bar[i]) ** 2 / (2 * rho)
            worst = max(worst, mine - vals.min())
        ok_desc &= obj38(X_new) <= obj38(z.X) + 1e-9 * (1 + abs(obj38(z.X)))
    _check(res, "volmin", "x-update-sigma-grid-oracle", worst <= 1e-4,
           f"worst gap {worst:.2e}")
    _check(res, "volmin", "x-update-descent", ok_desc)

    # inner AL monotone over (Y, S, X) sweeps
    ok = True
    for _ in range(50):
        z = rand_iterate()
        lam = np.concatenate([z.P.ravel(), z.Q.ravel()])
        rho = float(rng.uniform(0.1, 2.0))
        al_prev = prob.al_value(z, lam, rho)
        for _ in range(3):
            for i in range(3):
                z = prob.step(i, z, lam, rho)
            al_now = prob.al_value(z, lam, rho)
            ok &= al_now <= al_prev + 1e-9 * (1.0 + abs(al_prev))
            al_prev = al_now
    _check(res, "volmin", "inner-al-monotone", ok)

    # FD gradients of the volmin AL
    worst = 0.0
    for _ in range(3):
        z = rand_iterate()
        lam = np.concatenate([z.P.ravel(), z.Q.ravel()])
        for i in range(3):
            fd = fd_block_gradient(prob, i, z, lam, 0.8)
            worst = max(worst, _rel_err(fd, prob.al_block_gradient(i, z, lam, 0.8)))
    _check(res, "volmin", "fd-al-gradient", worst <= 1e-4, f"worst rel {worst:.2e}")

    # singular-vector alignment: output shares the target's singular basis and
    # the identity pairing of sigmas beats permuted pairings in the quadratic term
    ok_align, ok_perm = True, True
    import itertools as it
    for _ in range(20):
        z = rand_iterate()
        rho = 0.5
        X_new = vm.update_X(z, rho, inst.eps)
        X_bar = z.Y - rho * z.Q
        U, s_bar, V = numerics.thin_svd(X_bar)
        sig = np.diag(U.T @ X_new @ V)
        ok_align &= np.linalg.norm(U @ np.diag(sig) @ V.T - X_new) <= 1e-10
        for perm in it.permutations(range(K)):
            ok_perm &= np.sum((sig - s_bar) ** 2) <= np.sum((sig[list(perm)] - s_bar) ** 2) + 1e-9
    _check(res, "volmin", "x-update-singular-alignment", ok_align)
    _check(res, "volmin", "x-update-vonneumann-pairing", ok_perm)

    # MSE metric invariances and data generator calibration
    Xt = rng.uniform(0.1, 1.0, (10, 3))
    perm = rng.permutation(3)
    scales = rng.uniform(0.5, 2.0, 3)
    ok = vm.mse_metric(Xt, Xt) == vm.MSE_DB_FLOOR
    ok &= vm.mse_metric(Xt[:, perm] * scales, Xt) == vm.MSE_DB_FLOOR
    _check(res, "volmin", "mse-permutation-scale-invariance", ok)

    inst_snr, truth = vm.gen_data(10, 3, 2000, 0.8, 30.0, seed=5)
    clean = truth.X @ truth.S
    noise = inst_snr.A - clean
    snr_emp = 10 * np.log10(np.mean(np.sum(clean**2, 0)) / np.mean(np.sum(noise**2, 0)))
    _check(res, "volmin", "gen-data-snr-calibration", abs(snr_emp - 30.0) <= 0.5,
           f"empirical {snr_emp:.2f} dB")
    return res


SUITES = {
    "numerics": suite_numerics,
    "pdd-core": suite_core,
    "multicast": suite_multicast,
    "relay": suite_relay,
    "volmin": suite_volmin,
}


def run_suites(names, seed=0):
    """Run the named suites ('all' expands to every suite) and return results."""
    if isinstance(names, str):
        names = [names]
    expanded = []
    for n in names:
        if n == "all":
            expanded.extend(SUITES)
        elif n in SUITES:
            expanded.append(n)
        else:
            raise KeyError(f"unknown suite {n!r}; choose from {sorted(SUITES)} or 'all'")
    results = []
    for n in expanded:
        results.extend(SUITES[n](seed=seed))
    return results
