"""Max-min fair multicast beamforming solved by PDD.

The problem maximizes the worst user rate min_k log2(1 + SINR_k) over
group beamformers under a unit-norm constraint (power folded into the
noise scaling). It is recast with per-user auxiliary levels t_k coupled by
``||A_k^(1/2) w|| = t_k ||B_k^(1/2) w||``; PDD dualizes those K equalities
while the inner BSUM alternates an exact t-update with an eigenvector
w-update on a locally tight homogeneous quadratic upper bound.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import numerics
from .core import BlockProblem, PddConfig
from .core import pdd_run as _pdd_run
from .errors import InvalidInputError

DEGENERATE_NORM_TOL = 1e-10  # guard for 1/||A_k^(1/2) w~|| factors
JITTER_SCALE = 1e-8


@dataclass(frozen=True)
class MulticastInstance:
    """Immutable problem data for one multicast network."""

    n_t: int                 # BS antennas
    groups: tuple            # tuple of tuples of user indices
    channels: np.ndarray     # K x N_t conjugated channels h_k
    sigma2: np.ndarray       # K noise powers
    p_bs: float              # BS power budget
    group_of: np.ndarray     # K, group index of each user
    A: np.ndarray            # K x n x n, n = n_g * N_t, Hermitian PSD
    B: np.ndarray            # K x n x n, Hermitian PD
    A_eq: np.ndarray         # K x 2n x 2n real embeddings
    B_eq: np.ndarray

    @property
    def n_groups(self):
        return len(self.groups)

    @property
    def n_users(self):
        return self.channels.shape[0]

    @property
    def dim(self):
        return self.n_groups * self.n_t


@dataclass(frozen=True)
class MulticastIterate:
    """Inner iterate: unit-norm stacked beamformer and user levels t >= 0."""

    w: np.ndarray   # complex, n_g * N_t, ||w|| = 1
    t: np.ndarray   # K, nonnegative


def build_instance(channels, groups, sigma2, p_bs):
    """Assemble the quadratic-form matrices A_k, B_k from channels.

    Parameters
    ----------
    channels : array_like, K x N_t complex
        Conjugated channel of each user.
    groups : sequence of sequences
        User indices of each multicast group; every user in exactly one group.
    sigma2 : scalar or array_like
        Per-user noise powers.
    p_bs : float
        Total transmit power budget.

    With the stacked unit-norm beamformer w, ``w^H A_k w / w^H B_k w``
    equals the SINR of user k when the per-group beamformers are scaled
    by sqrt(p_bs).
    """
    channels = np.asarray(channels, dtype=complex)
    if channels.ndim != 2:
        raise InvalidInputError(f"channels must be K x N_t, got shape {channels.shape}")
    K, n_t = channels.shape
    if p_bs <= 0:
        raise InvalidInputError(f"power budget must be positive, got {p_bs}")
    groups = tuple(tuple(int(u) for u in g) for g in groups)
    if any(len(g) == 0 for g in groups):
        raise InvalidInputError("every group needs at least one user")
    seen = [u for g in groups for u in g]
    if sorted(seen) != list(range(K)):
        raise InvalidInputError("groups must partition the user set exactly")
    sigma2 = np.broadcast_to(np.asarray(sigma2, dtype=float), (K,)).copy()
    if np.any(sigma2 <= 0):
        raise InvalidInputError("noise powers must be positive")

    n_g = len(groups)
    n = n_g * n_t
    group_of = np.empty(K, dtype=int)
    for i, g in enumerate(groups):
        for u in g:
            group_of[u] = i

    A = np.zeros((K, n, n), dtype=complex)
    B = np.zeros((K, n, n), dtype=complex)
    for k in range(K):
        R = np.outer(channels[k], channels[k].conj())
        i = group_of[k]
        sel = np.zeros(n_g)
        sel[i] = 1.0
        A[k] = np.kron(np.diag(sel), R)
        B[k] = np.kron(np.diag(1.0 - sel), R) + (sigma2[k] / p_bs) * np.eye(n)
    A_eq = np.stack([numerics.real_embed_hermitian(A[k]) for k in range(K)])
    B_eq = np.stack([numerics.real_embed_hermitian(B[k]) for k in range(K)])
    return MulticastInstance(
        n_t=n_t, groups=groups, channels=channels, sigma2=sigma2, p_bs=float(p_bs),
        group_of=group_of, A=A, B=B, A_eq=A_eq, B_eq=B_eq,
    )


def _quad(M, w):
    """Re(w^H M w), clipped at zero (M is PSD up to rounding)."""
    return max(float(np.real(np.vdot(w, M @ w))), 0.0)


def coupling_norms(w, instance):
    """(||A_k^(1/2) w||, ||B_k^(1/2) w||) for all k, as two K-vectors."""
    na = np.sqrt([_quad(instance.A[k], w) for k in range(instance.n_users)])
    nb = np.sqrt([_quad(instance.B[k], w) for k in range(instance.n_users)])
    return na, nb


def constraint_h(w, t, instance):
    """Equality residuals of the level-coupled formulation, length K + 1.

    Components 0..K-1 are ``||A_k^(1/2) w|| - t_k ||B_k^(1/2) w||`` (the
    ones PDD dualizes); the last is ``||w||^2 - 1``, which the inner loop
    keeps satisfied exactly through the eigenvector update.
    """
    na, nb = coupling_norms(w, instance)
    h = np.empty(instance.n_users + 1)
    h[:-1] = na - np.asarray(t, dtype=float) * nb
    h[-1] = float(np.linalg.norm(w) ** 2 - 1.0)
    return h


def solve_t_subproblem(a, b):
    """Globally maximize ``min_k t_k - sum_k a_k (t_k - b_k)^2`` over t >= 0.

    Reduces to a 1-D search over the common floor s: the optimum has
    ``t_k = max(b_k, s)`` with s from a finite candidate list obtained by
    sorting b descending and assuming the tail set {k : t_k = s}. All
    candidates are evaluated on the exact objective and the best is kept
    (robust to ties in b).

    Returns (t, s).
    """
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size != b.size or a.size == 0:
        raise InvalidInputError("a and b must be nonempty and of equal length")
    if np.any(a <= 0):
        raise InvalidInputError("all quadratic coefficients a_k must be positive")
    order = np.argsort(-b)
    a_s, b_s = a[order], b[order]
    # suffix sums of a and a*b over the sorted tail {k > kbar}
    suf_a = np.cumsum(a_s[::-1])[::-1]
    suf_ab = np.cumsum((a_s * b_s)[::-1])[::-1]
    best_obj, best_t = -np.inf, None
    for kbar in range(a.size):
        s_c = max((1.0 + 2.0 * suf_ab[kbar]) / (2.0 * suf_a[kbar]), 0.0)
        t_c = np.maximum(b, s_c)
        obj = t_c.min() - float(np.dot(a, (t_c - b) ** 2))
        if obj > best_obj:
            best_obj, best_t = obj, t_c
    # min(t) is the attained floor: t = max(b, min(t)) holds in every branch
    return best_t, float(best_t.min())


def theta_value(w, t, lam, rho, instance):
    """Penalized coupling term sum_k (||A^.5 w|| - t_k ||B^.5 w|| + rho lam_k)^2."""
    na, nb = coupling_norms(w, instance)
    return float(np.sum((na - np.asarray(t) * nb + rho * np.asarray(lam)) ** 2))


def build_surrogate_C(w_tilde, t, lam, rho, instance):
    """Quadratic upper bound matrix for the w-subproblem, expanded at w_tilde.

    Returns (C, const) with ``theta(w) <= w_eq^T C w_eq + const`` for all
    unit-norm w, with equality at w = w_tilde. The cross terms follow the
    Cauchy-Schwarz linearization; the sign of each multiplier selects which
    norm factor absorbs the ``||w|| = 1`` identity so the bound stays valid.

    If ``||A_k^(1/2) w_tilde||`` is degenerate (below 1e-10), that user's
    expansion point is nudged by a small deterministic isotropic
    perturbation and renormalized, which keeps the bound valid while
    avoiding the division.
    """
    w_tilde = np.asarray(w_tilde, dtype=complex).ravel()
    t = np.asarray(t, dtype=float)
    lam = np.asarray(lam, dtype=float)
    K = instance.n_users
    dim = 2 * instance.dim
    C = np.zeros((dim, dim))
    const = 0.0
    jitter_rng = np.random.default_rng(0)
    for k in range(K):
        Ae, Be = instance.A_eq[k], instance.B_eq[k]
        wt = w_tilde
        na = np.sqrt(_quad(instance.A[k], wt))
        if na < DEGENERATE_NORM_TOL:
            noise = jitter_rng.standard_normal(wt.size) + 1j * jitter_rng.standard_normal(wt.size)
            wt = wt + JITTER_SCALE * noise
            wt = wt / np.linalg.norm(wt)
            na = np.sqrt(_quad(instance.A[k], wt))
        nb = np.sqrt(_quad(instance.B[k], wt))
        we = numerics.real_embed_vec(wt)[:, None]
        nw = float(np.linalg.norm(we))
        Awe = Ae @ we
        Bwe = Be @ we
        cross = (t[k] / (na * nb)) * (Awe @ Bwe.T + Bwe @ Awe.T)
        rl = rho * lam[k]
        if lam[k] >= 0:
            Ck = (1.0 + rl / na) * Ae + t[k] ** 2 * Be - cross
            Ck -= (rl * t[k] / (nw * nb)) * (we @ Bwe.T + Bwe @ we.T)
            const += rl**2 + rl * na
        else:
            Ck = Ae + (t[k] ** 2 - rl * t[k] / nb) * Be - cross
            Ck += (rl / (nw * na)) * (we @ Awe.T + Awe @ we.T)
            const += rl**2 - rl * t[k] * nb
        C += Ck
    return 0.5 * (C + C.T), const


class MulticastProblem(BlockProblem):
    """Two-block AL problem: block 0 updates t, block 1 updates w."""

    n_blocks = 2

    def __init__(self, instance):
        self.instance = instance

    def constraint(self, z):
        return constraint_h(z.w, z.t, self.instance)[:-1]

    def al_value(self, z, lam, rho):
        h = self.constraint(z)
        return float(-z.t.min() + np.dot(lam, h) + np.dot(h, h) / (2.0 * rho))

    def objective(self, z):
        """Worst-user rate (bits) at the power-scaled beamformer."""
        return min_rate(np.sqrt(self.instance.p_bs) * z.w, self.instance)

    def step(self, i, z, lam, rho):
        inst = self.instance
        if i == 0:
            na, nb = coupling_norms(z.w, inst)
            a = nb**2 / (2.0 * rho)
            b = (na + rho * np.asarray(lam)) / nb
            t_new, _ = solve_t_subproblem(a, b)
            return replace(z, t=t_new)
        C, _ = build_surrogate_C(z.w, z.t, lam, rho, inst)
        v, _ = numerics.min_eigvec_sym(C)
        w_new = numerics.complex_from_embedding(v)
        return replace(z, w=w_new / np.linalg.norm(w_new))

    # --- diagnostics ------------------------------------------------------

    def block_value(self, i, z):
        return z.t.copy() if i == 0 else numerics.real_embed_vec(z.w)

    def set_block_value(self, i, z, v):
        if i == 0:
            return replace(z, t=np.asarray(v, dtype=float).copy())
        return replace(z, w=numerics.complex_from_embedding(v))

    def al_block_gradient(self, i, z, lam, rho):
        """Smooth-part AL gradient; the -min(t) term is carried by the t prox."""
        inst = self.instance
        na, nb = coupling_norms(z.w, inst)
        h = na - z.t * nb
        mult = lam + h / rho
        if i == 0:
            return -mult * nb
        we = numerics.real_embed_vec(z.w)
        g = np.zeros_like(we)
        for k in range(inst.n_users):
            grad_h = inst.A_eq[k] @ we / max(na[k], 1e-300) \
                - z.t[k] * (inst.B_eq[k] @ we) / max(nb[k], 1e-300)
            g += mult[k] * grad_h
        return g

    def block_projector(self, i):
        if i == 0:
            return lambda v: np.maximum(v, 0.0)
        return lambda v: v / max(np.linalg.norm(v), 1e-300)

    def block_nonsmooth_prox(self, i):
        if i != 0:
            return None

        # prox of -min(t) over t >= 0 has the same structure as the t-step
        def prox(z, v):
            t_new, _ = solve_t_subproblem(np.full(v.size, 0.5), v)
            return t_new

        return prox


def bsum_inner_step(iterate, lam, rho, instance):
    """One full BSUM sweep (t-update then w-update); never increases the AL."""
    problem = MulticastProblem(instance)
    z = problem.step(0, iterate, lam, rho)
    return problem.step(1, z, lam, rho)


def default_config(instance, seed=0, **overrides):
    """Penalty and tolerance schedule used by the reference experiments.

    The inner loop stops on the stationarity residual (the accuracy the
    eps schedule refers to); gradients are cheap for this problem.
    """
    cfg = dict(
        mode="pdd", rho0=0.5 * instance.n_users, c=0.6, tau=0.9,
        eps0=1e-3, eps_shrink=0.6, eps_outer=1e-4, eps_min=1e-5,
        max_outer=50, max_inner=100, seed=seed, inner_stop="residual",
    )
    cfg.update(overrides)
    return PddConfig(**cfg)


def initial_iterate(instance, rng):
    """Random unit beamformer with t chosen feasible (h = 0 at the start)."""
    n = instance.dim
    w0 = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    w0 /= np.linalg.norm(w0)
    na, nb = coupling_norms(w0, instance)
    return MulticastIterate(w=w0, t=na / nb)


def solve(instance, config=None):
    """Run PDD on a multicast instance.

    Returns ``(w_scaled, t, trace)`` where ``w_scaled`` is the stacked
    beamformer scaled to meet the power budget with equality.
    """
    if config is None:
        config = default_config(instance)
    rng = np.random.default_rng(config.seed)
    z0 = initial_iterate(instance, rng)
    problem = MulticastProblem(instance)
    lam0 = np.zeros(instance.n_users)
    z, lam, trace = _pdd_run(problem, z0, lam0, config)
    w_scaled = np.sqrt(instance.p_bs) * z.w
    return w_scaled, z.t, trace


def group_beamformers(w_scaled, instance):
    """Reshape the stacked beamformer into per-group rows (n_g x N_t)."""
    return np.asarray(w_scaled).reshape(instance.n_groups, instance.n_t)


def sinr_values(w_scaled, instance):
    """Per-user SINR evaluated directly from channels and group beamformers."""
    W = group_beamformers(w_scaled, instance)
    gains = np.abs(instance.channels.conj() @ W.T) ** 2  # K x n_g, |h_k^H w_i|^2
    K = instance.n_users
    sinr = np.empty(K)
    for k in range(K):
        i = instance.group_of[k]
        signal = gains[k, i]
        interf = gains[k].sum() - signal
        sinr[k] = signal / (interf + instance.sigma2[k])
    return sinr


def min_rate(w_scaled, instance):
    """Worst-user rate log2(1 + SINR_k) at a power-scaled beamformer."""
    return float(np.log2(1.0 + sinr_values(w_scaled, instance)).min())


def rayleigh_gradients(w, instance):
    """Real-embedded gradients of the per-user ratios w^H A_k w / w^H B_k w."""
    we = numerics.real_embed_vec(np.asarray(w, dtype=complex))
    cols = []
    for k in range(instance.n_users):
        qa = float(we @ instance.A_eq[k] @ we)
        qb = float(we @ instance.B_eq[k] @ we)
        cols.append(2.0 * (instance.A_eq[k] @ we - (qa / qb) * (instance.B_eq[k] @ we)) / qb)
    return np.column_stack(cols)


def kkt_residual(w, instance, tol=1e-8, max_iter=200_000):
    """First-order optimality gap of the max-min ratio problem at unit w.

    Minimizes ``||sum_k lam_k f_k + lam0 w||`` over the simplex of lam with
    lam0 eliminated in closed form (projection orthogonal to w), by
    projected gradient on the squared objective to ``tol`` stationarity.
    """
    w = np.asarray(w, dtype=complex).ravel()
    we = numerics.real_embed_vec(w / np.linalg.norm(w))
    G = rayleigh_gradients(w / np.linalg.norm(w), instance)
    M = G - np.outer(we, we @ G)
    Q = M.T @ M
    K = instance.n_users
    lam = np.full(K, 1.0 / K)
    lip = 2.0 * max(float(np.linalg.eigvalsh(Q).max()), 1e-300)
    for _ in range(max_iter):
        lam_next = numerics.project_simplex(lam - 2.0 * (Q @ lam) / lip)
        done = np.abs(lam_next - lam).max() <= tol
        lam = lam_next
        if done:
            break
    return float(np.sqrt(max(lam @ Q @ lam, 0.0)))


def gen_instance(n_t, n_groups, users_per_group, p_bs, seed, sigma2=1.0):
    """Random network with i.i.d. CN(0, 1) channels and equal group sizes."""
    rng = np.random.default_rng(seed)
    K = n_groups * users_per_group
    channels = (rng.standard_normal((K, n_t)) + 1j * rng.standard_normal((K, n_t))) / np.sqrt(2.0)
    groups = [list(range(i * users_per_group, (i + 1) * users_per_group))
              for i in range(n_groups)]
    return build_instance(channels, groups, sigma2, p_bs)


def instance_to_dict(instance):
    return {
        "N_t": instance.n_t,
        "groups": [list(g) for g in instance.groups],
        "channels": [[[float(c.real), float(c.imag)] for c in row]
                     for row in instance.channels],
        "sigma2": instance.sigma2.tolist(),
        "P_BS": instance.p_bs,
    }


def instance_from_dict(data):
    channels = np.array([[complex(re, im) for re, im in row]
                         for row in data["channels"]])
    return build_instance(channels, data["groups"], np.asarray(data["sigma2"]),
                          data["P_BS"])
