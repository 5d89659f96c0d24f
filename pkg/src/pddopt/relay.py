"""Weighted sum-rate maximization for a MIMO relay broadcast channel via PDD.

The source precoder V and relay precoder F are coupled through the relay
power constraint. Splitting variables (X = FHV plus barred copies that own
the power constraints) turns the couplings into equality constraints that
PDD dualizes; the inner loop is a four-block BSUM whose rate surrogate
comes from the MMSE reformulation with receive scalars u and weights w.

All rates are natural-log.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import numerics
from .core import BlockProblem, PddConfig
from .core import pdd_run as _pdd_run
from .errors import InvalidInputError


@dataclass(frozen=True)
class RelayInstance:
    """Immutable problem data for one relay broadcast network."""

    n_s: int              # source antennas
    n_r: int              # relay antennas
    n_users: int
    H: np.ndarray         # N_r x N_s source-relay channel
    g: np.ndarray         # K x N_r conjugated relay-user channels (rows g_k)
    sigma_r2: float       # relay noise power (must be > 0)
    sigma2: np.ndarray    # K user noise powers
    p_s: float            # source power budget
    p_r: float            # relay power budget
    alpha: np.ndarray     # K positive rate weights

    @property
    def sigma_r(self):
        return float(np.sqrt(self.sigma_r2))


def build_instance(H, g, sigma_r2, sigma2, p_s, p_r, alpha=None):
    H = np.asarray(H, dtype=complex)
    g = np.asarray(g, dtype=complex)
    n_r, n_s = H.shape
    if g.ndim != 2 or g.shape[1] != n_r:
        raise InvalidInputError(f"relay-user channels must be K x {n_r}, got {g.shape}")
    K = g.shape[0]
    if sigma_r2 <= 0:
        raise InvalidInputError("relay noise power must be positive (the F-copy "
                                "constraint degenerates at sigma_R = 0)")
    sigma2 = np.broadcast_to(np.asarray(sigma2, dtype=float), (K,)).copy()
    if np.any(sigma2 <= 0):
        raise InvalidInputError("user noise powers must be positive")
    if p_s <= 0 or p_r <= 0:
        raise InvalidInputError("power budgets must be positive")
    alpha = (np.ones(K) if alpha is None
             else np.broadcast_to(np.asarray(alpha, dtype=float), (K,)).copy())
    if np.any(alpha <= 0):
        raise InvalidInputError("rate weights must be positive")
    return RelayInstance(n_s=n_s, n_r=n_r, n_users=K, H=H, g=g,
                         sigma_r2=float(sigma_r2), sigma2=sigma2,
                         p_s=float(p_s), p_r=float(p_r), alpha=alpha)


@dataclass(frozen=True)
class RelayIterate:
    """Primal blocks, barred copies, dual matrices and MMSE scalars."""

    V: np.ndarray    # N_s x K
    F: np.ndarray    # N_r x N_r
    X: np.ndarray    # N_r x K
    Vb: np.ndarray
    Fb: np.ndarray
    Xb: np.ndarray
    Z: np.ndarray    # dual of X - FHV
    Zf: np.ndarray   # dual of sigma_R (F - Fb)
    Zx: np.ndarray   # dual of X - Xb
    Zv: np.ndarray   # dual of V - Vb
    u: np.ndarray    # K complex receive scalars
    w: np.ndarray    # K weights, >= 1


def _cvec(M):
    M = np.asarray(M)
    return np.concatenate([M.real.ravel(), M.imag.ravel()])


def _cmat(v, shape):
    v = np.asarray(v, dtype=float)
    n = v.size // 2
    return v[:n].reshape(shape) + 1j * v[n:].reshape(shape)


def constraint_h(iterate, instance):
    """Stacked real embedding of the four equality residuals.

    Order: (X - FHV, sigma_R (F - Fb), X - Xb, V - Vb); the infinity norm
    of the result is the feasibility gap reported in traces.
    """
    z = iterate
    res = [
        z.X - z.F @ instance.H @ z.V,
        instance.sigma_r * (z.F - z.Fb),
        z.X - z.Xb,
        z.V - z.Vb,
    ]
    return np.concatenate([_cvec(r) for r in res])


def _received_powers(X, F, instance):
    """Per-user total power T_k, own-signal c_k, and interference+noise I_k."""
    M = instance.g.conj() @ X                        # M[k, j] = g_k^H x_j
    gf = instance.g.conj() @ F                       # rows g_k^H F
    total = (np.abs(M) ** 2).sum(axis=1) + instance.sigma_r2 * (np.abs(gf) ** 2).sum(axis=1) \
        + instance.sigma2
    own = np.diag(M).copy()
    interf = total - np.abs(own) ** 2
    return total, own, interf


def rate_value(X, F, instance):
    """Weighted sum rate (nats) as a function of the split variables."""
    total, _, interf = _received_powers(X, F, instance)
    return float(np.dot(instance.alpha, np.log(total / interf)))


def sum_rate(V, F, instance):
    """Weighted sum rate (nats) of the actual precoder pair (X = FHV)."""
    return rate_value(F @ instance.H @ V, F, instance)


def wmmse_weights(X, F, instance):
    """Optimal MMSE receive scalars u and weights w given (X, F).

    ``w_k = 1 + SINR_k`` holds exactly, so ``log(w)`` recovers the user rates.
    """
    total, own, interf = _received_powers(X, F, instance)
    u = own / total
    w = total / interf
    return u, w


def mse_matrices(u, w, instance):
    """Quadratic-form matrix G_w and diagonal D_w of the weighted MSE."""
    coef = w * instance.alpha * np.abs(u) ** 2
    Gcol = instance.g.T                              # columns g_k
    G_w = (Gcol * coef[None, :]) @ Gcol.conj().T
    D_w = w * instance.alpha * u
    return G_w, D_w


def update_F(iterate, rho, instance):
    """Relay-precoder block: solve the Sylvester optimality system."""
    z = iterate
    G_w, _ = mse_matrices(z.u, z.w, instance)
    sr = instance.sigma_r
    HV = instance.H @ z.V
    A = instance.sigma_r2 * (2.0 * rho * G_w + np.eye(instance.n_r))
    B = HV @ HV.conj().T
    C = sr * (sr * z.Fb - rho * z.Zf) + (z.X + rho * z.Z) @ HV.conj().T
    return numerics.solve_sylvester(A, B, C)


def update_bars(iterate, rho, instance):
    """Barred block: two independent ball projections that own the budgets."""
    z = iterate
    sr = instance.sigma_r
    Vb = numerics.project_ball(z.V + rho * z.Zv, np.sqrt(instance.p_s))
    K = instance.n_users
    stacked = np.concatenate([z.X + rho * z.Zx, sr * z.F + rho * z.Zf], axis=1)
    proj = numerics.project_ball(stacked, np.sqrt(instance.p_r))
    Xb = proj[:, :K]
    Fb = proj[:, K:] / sr
    return Vb, Xb, Fb


def update_X(iterate, rho, instance):
    """Auxiliary received-signal block: unconstrained quadratic minimum."""
    z = iterate
    G_w, D_w = mse_matrices(z.u, z.w, instance)
    Gcol = instance.g.T
    rhs = 2.0 * rho * (Gcol * D_w[None, :]) \
        + (z.F @ instance.H @ z.V - rho * z.Z) + (z.Xb - rho * z.Zx)
    return 0.5 * np.linalg.solve(rho * G_w + np.eye(instance.n_r), rhs)


def update_V(iterate, rho, instance):
    """Source-precoder block: unconstrained quadratic minimum."""
    z = iterate
    FH = z.F @ instance.H
    lhs = np.eye(instance.n_s) + FH.conj().T @ FH
    rhs = (z.Vb - rho * z.Zv) + FH.conj().T @ (z.X + rho * z.Z)
    return np.linalg.solve(lhs, rhs)


def refresh_weights(iterate, instance):
    u, w = wmmse_weights(iterate.X, iterate.F, instance)
    return replace(iterate, u=u, w=w)


def bsum_inner_step(iterate, rho, instance):
    """One full sweep: weight refresh, then F, bars, X, V in order."""
    z = refresh_weights(iterate, instance)
    z = replace(z, F=update_F(z, rho, instance))
    Vb, Xb, Fb = update_bars(z, rho, instance)
    z = replace(z, Vb=Vb, Xb=Xb, Fb=Fb)
    z = replace(z, X=update_X(z, rho, instance))
    return replace(z, V=update_V(z, rho, instance))


class RelayProblem(BlockProblem):
    """Four-block AL problem: F, barred copies, X, V.

    Every ``step`` refreshes (u, w) at the current point before its block
    update, which makes each individual step a tight surrogate minimization
    of the AL and keeps the descent property under any block visit order.
    The dual matrices mirrored on the iterate are kept in sync with the
    outer loop's flat dual vector.
    """

    n_blocks = 4

    def __init__(self, instance):
        self.instance = instance
        inst = instance
        self._shapes = [
            (inst.n_r, inst.n_users),   # Z
            (inst.n_r, inst.n_r),       # Zf
            (inst.n_r, inst.n_users),   # Zx
            (inst.n_s, inst.n_users),   # Zv
        ]

    # --- dual packing -----------------------------------------------------

    def pack_duals(self, Z, Zf, Zx, Zv):
        return np.concatenate([_cvec(M) for M in (Z, Zf, Zx, Zv)])

    def unpack_duals(self, lam):
        out = []
        pos = 0
        for shape in self._shapes:
            n = 2 * shape[0] * shape[1]
            out.append(_cmat(lam[pos:pos + n], shape))
            pos += n
        return tuple(out)

    def sync_duals(self, z, lam):
        Z, Zf, Zx, Zv = self.unpack_duals(lam)
        return replace(z, Z=Z, Zf=Zf, Zx=Zx, Zv=Zv)

    # --- BlockProblem interface --------------------------------------------

    def constraint(self, z):
        return constraint_h(z, self.instance)

    def al_value(self, z, lam, rho):
        h = self.constraint(z)
        return float(-rate_value(z.X, z.F, self.instance)
                     + np.dot(lam, h) + np.dot(h, h) / (2.0 * rho))

    def objective(self, z):
        """Weighted sum rate (nats) of the actual precoders (V, F)."""
        return sum_rate(z.V, z.F, self.instance)

    def step(self, i, z, lam, rho):
        inst = self.instance
        z = refresh_weights(self.sync_duals(z, lam), inst)
        if i == 0:
            return replace(z, F=update_F(z, rho, inst))
        if i == 1:
            Vb, Xb, Fb = update_bars(z, rho, inst)
            return replace(z, Vb=Vb, Xb=Xb, Fb=Fb)
        if i == 2:
            return replace(z, X=update_X(z, rho, inst))
        return replace(z, V=update_V(z, rho, inst))

    # --- diagnostics --------------------------------------------------------
    # The barred block uses (Vb, Xb, sigma_R * Fb) coordinates so that both
    # power sets are Euclidean balls and the projector is exact.

    def block_value(self, i, z):
        sr = self.instance.sigma_r
        if i == 0:
            return _cvec(z.F)
        if i == 1:
            return np.concatenate([_cvec(z.Vb), _cvec(z.Xb), _cvec(sr * z.Fb)])
        if i == 2:
            return _cvec(z.X)
        return _cvec(z.V)

    def set_block_value(self, i, z, v):
        inst = self.instance
        if i == 0:
            return replace(z, F=_cmat(v, z.F.shape))
        if i == 1:
            n_vb = 2 * z.Vb.size
            n_xb = 2 * z.Xb.size
            return replace(
                z,
                Vb=_cmat(v[:n_vb], z.Vb.shape),
                Xb=_cmat(v[n_vb:n_vb + n_xb], z.Xb.shape),
                Fb=_cmat(v[n_vb + n_xb:], z.Fb.shape) / inst.sigma_r,
            )
        if i == 2:
            return replace(z, X=_cmat(v, z.X.shape))
        return replace(z, V=_cmat(v, z.V.shape))

    def block_projector(self, i):
        if i != 1:
            return None
        inst = self.instance

        def proj(v):
            n_vb = 2 * inst.n_s * inst.n_users
            vb = numerics.project_ball(v[:n_vb], np.sqrt(inst.p_s))
            rest = numerics.project_ball(v[n_vb:], np.sqrt(inst.p_r))
            return np.concatenate([vb, rest])

        return proj

    def al_block_gradient(self, i, z, lam, rho):
        inst = self.instance
        z = self.sync_duals(z, lam)
        H = inst.H
        sr = inst.sigma_r
        M1 = z.Z + (z.X - z.F @ H @ z.V) / rho
        M2 = z.Zf + sr * (z.F - z.Fb) / rho
        M3 = z.Zx + (z.X - z.Xb) / rho
        M4 = z.Zv + (z.V - z.Vb) / rho
        if i == 0:
            total, _, interf = _received_powers(z.X, z.F, inst)
            coef = inst.alpha * (1.0 / total - 1.0 / interf)
            Gcol = inst.g.T
            grad_rate = 2.0 * inst.sigma_r2 * (Gcol * coef[None, :]) @ (Gcol.conj().T @ z.F)
            HV = H @ z.V
            return _cvec(-grad_rate - M1 @ HV.conj().T + sr * M2)
        if i == 1:
            return np.concatenate([_cvec(-M4), _cvec(-M3), _cvec(-M2)])
        if i == 2:
            total, own, interf = _received_powers(z.X, z.F, inst)
            Gcol = inst.g.T
            P = (Gcol * (inst.alpha / total - inst.alpha / interf)[None, :]) @ Gcol.conj().T
            diag_fix = Gcol * ((inst.alpha / interf) * own)[None, :]
            grad_rate = 2.0 * (P @ z.X + diag_fix)
            return _cvec(-grad_rate + M1 + M3)
        FH = z.F @ H
        return _cvec(-FH.conj().T @ M1 + M4)


def default_config(instance, seed=0, **overrides):
    """Penalty schedule with the size-scaled initial value used in experiments.

    The shrink factor 0.6 moves the penalty out of its ineffective large
    range quickly enough for the dual updates to engage well inside the
    iteration budget; the slow threshold decay (tau = 0.99) then keeps the
    dual branch active once the violation starts contracting.
    """
    K, n_r, n_s = instance.n_users, instance.n_r, instance.n_s
    rho0 = 500.0 * K / (2.0 * K * n_r + n_s**2 + K * n_s)
    cfg = dict(
        mode="pdd", rho0=rho0, c=0.6, tau=0.99,
        eps0=1e-3, eps_shrink=0.6, eps_outer=1e-3, eps_min=1e-5,
        max_outer=30, max_inner=100, seed=seed,
    )
    cfg.update(overrides)
    return PddConfig(**cfg)


def initial_iterate(instance, rng):
    """Feasible start: orthogonal source columns at full power, scaled identity F."""
    inst = instance
    G0 = rng.standard_normal((inst.n_s, inst.n_users)) \
        + 1j * rng.standard_normal((inst.n_s, inst.n_users))
    if inst.n_users <= inst.n_s:
        Q, _ = np.linalg.qr(G0)
        V0 = np.sqrt(inst.p_s / inst.n_users) * Q[:, :inst.n_users]
    else:
        V0 = G0 * np.sqrt(inst.p_s / np.linalg.norm(G0) ** 2)
    beta = np.sqrt(inst.p_r / (np.linalg.norm(inst.H @ V0) ** 2
                               + inst.sigma_r2 * inst.n_r))
    F0 = beta * np.eye(inst.n_r, dtype=complex)
    X0 = F0 @ inst.H @ V0
    zeros = lambda shape: np.zeros(shape, dtype=complex)
    z = RelayIterate(
        V=V0, F=F0, X=X0, Vb=V0.copy(), Fb=F0.copy(), Xb=X0.copy(),
        Z=zeros(X0.shape), Zf=zeros(F0.shape), Zx=zeros(X0.shape),
        Zv=zeros(V0.shape), u=np.zeros(inst.n_users, dtype=complex),
        w=np.ones(inst.n_users),
    )
    return refresh_weights(z, inst)


def repair_feasibility(V, F, instance):
    """Radially scale (V, F) to exact feasibility; returns (V, F, scales).

    V is scaled first to meet the source budget, then F to meet the relay
    budget given the scaled V. Scales are <= 1 when the pair was
    within-budget already (then both equal 1).
    """
    s_v = min(1.0, np.sqrt(instance.p_s / max(np.linalg.norm(V) ** 2, 1e-300)))
    V = s_v * V
    p_relay = np.linalg.norm(F @ instance.H @ V) ** 2 \
        + instance.sigma_r2 * np.linalg.norm(F) ** 2
    s_f = min(1.0, np.sqrt(instance.p_r / max(p_relay, 1e-300)))
    return V, s_f * F, (float(s_v), float(s_f))


def solve(instance, config=None):
    """Run PDD and return ``(V, F, trace)`` with (V, F) repaired to feasibility."""
    result = solve_detailed(instance, config)
    return result["V"], result["F"], result["trace"]


def solve_detailed(instance, config=None):
    """Like :func:`solve` but also reports the repair scales and final rate."""
    if config is None:
        config = default_config(instance)
    rng = np.random.default_rng(config.seed)
    z0 = initial_iterate(instance, rng)
    problem = RelayProblem(instance)
    lam0 = np.zeros(constraint_h(z0, instance).size)
    z, lam, trace = _pdd_run(problem, z0, lam0, config)
    V, F, scales = repair_feasibility(z.V, z.F, instance)
    return {
        "V": V, "F": F, "trace": trace, "repair_scale": scales,
        "sum_rate_nats": sum_rate(V, F, instance),
        "iterate": z, "lam": lam,
    }


def gen_instance(n_s, n_r, n_users, snr_db, seed, sigma_r2=1.0, sigma2=1.0):
    """Random network: unit-variance CN channels, P_S = P_R = 10^(snr/10)."""
    rng = np.random.default_rng(seed)
    p = 10.0 ** (snr_db / 10.0)
    H = (rng.standard_normal((n_r, n_s)) + 1j * rng.standard_normal((n_r, n_s))) / np.sqrt(2.0)
    g = (rng.standard_normal((n_users, n_r)) + 1j * rng.standard_normal((n_users, n_r))) / np.sqrt(2.0)
    return build_instance(H, g, sigma_r2, sigma2, p, p)


def random_feasible_pair(instance, rng):
    """Random (V, F) scaled to meet both power budgets with equality."""
    V = rng.standard_normal((instance.n_s, instance.n_users)) \
        + 1j * rng.standard_normal((instance.n_s, instance.n_users))
    V *= np.sqrt(instance.p_s) / np.linalg.norm(V)
    F = rng.standard_normal((instance.n_r, instance.n_r)) \
        + 1j * rng.standard_normal((instance.n_r, instance.n_r))
    p_relay = np.linalg.norm(F @ instance.H @ V) ** 2 \
        + instance.sigma_r2 * np.linalg.norm(F) ** 2
    F *= np.sqrt(instance.p_r / p_relay)
    return V, F


def _complex_nested(M):
    return [[[float(c.real), float(c.imag)] for c in row] for row in np.asarray(M)]


def _nested_complex(data):
    return np.array([[complex(re, im) for re, im in row] for row in data])


def instance_to_dict(instance):
    return {
        "N_s": instance.n_s, "N_r": instance.n_r, "K": instance.n_users,
        "H": _complex_nested(instance.H),
        "g": _complex_nested(instance.g),
        "sigma_R2": instance.sigma_r2,
        "sigma2": instance.sigma2.tolist(),
        "P_S": instance.p_s, "P_R": instance.p_r,
        "alpha": instance.alpha.tolist(),
    }


def instance_from_dict(data):
    return build_instance(
        _nested_complex(data["H"]), _nested_complex(data["g"]),
        data["sigma_R2"], np.asarray(data["sigma2"]),
        data["P_S"], data["P_R"], np.asarray(data["alpha"]),
    )
