"""Penalty dual decomposition outer loop and randomized BSUM inner solver.

The solver is generic over a :class:`BlockProblem`: an augmented-Lagrangian
problem split into blocks, each with an exact surrogate-minimization update.
``pdd_run`` drives the outer dual/penalty schedule; ``rbsum_run`` performs
randomized block sweeps on the augmented Lagrangian at fixed multipliers.

Conventions (minimization form): the augmented Lagrangian is

    L(z; lam, rho) = f(z) + lam^T h(z) + ||h(z)||^2 / (2 rho)

so the penalty *strengthens* as rho shrinks toward zero, and the dual
update on the AL branch is ``lam <- lam + h(z)/rho``.
"""

import csv
import json
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, NumericalFailureError, UnsupportedOperationError

PDD = "pdd"
IPDD = "ipdd"

STOP_OBJECTIVE = "objective-progress"
STOP_RESIDUAL = "residual"
STOP_ITERATION_CAP = "iteration-cap"
_STOP_RULES = (STOP_OBJECTIVE, STOP_RESIDUAL, STOP_ITERATION_CAP)

BRANCH_DUAL = "dual-update"
BRANCH_PENALTY = "penalty-decrease"
BRANCH_BOTH = "dual+penalty"  # IPDD performs both updates every iteration


class BlockProblem:
    """Abstract augmented-Lagrangian problem with per-block updates.

    Subclasses must set :attr:`n_blocks` and implement :meth:`constraint`,
    :meth:`al_value` and :meth:`step`. ``step(i, z, lam, rho)`` returns a new
    iterate with only block ``i`` changed and must never increase the AL
    (surrogate contract). The optional gradient/projection hooks enable the
    stationarity-residual diagnostic.
    """

    n_blocks = 1

    def constraint(self, z):
        """Dualized equality-constraint residual h(z) as a flat real vector."""
        raise NotImplementedError

    def al_value(self, z, lam, rho):
        """Augmented Lagrangian L(z; lam, rho) (minimization form)."""
        raise NotImplementedError

    def step(self, i, z, lam, rho):
        """Exact surrogate minimization of block ``i``; returns the new iterate."""
        raise NotImplementedError

    def objective(self, z):
        """Original objective value for reporting; nan if not meaningful."""
        return float("nan")

    # --- optional hooks for stationarity residuals -----------------------

    def block_value(self, i, z):
        """Flat real representation of block ``i`` of the iterate."""
        raise UnsupportedOperationError(
            f"{type(self).__name__} does not expose block values"
        )

    def set_block_value(self, i, z, v):
        """Rebuild an iterate with block ``i`` replaced from flat coordinates.

        Inverse of :meth:`block_value`; used by finite-difference checks.
        """
        raise UnsupportedOperationError(
            f"{type(self).__name__} does not support block replacement"
        )

    def al_block_gradient(self, i, z, lam, rho):
        """Gradient of the smooth AL part w.r.t. block ``i`` (flat, real)."""
        raise UnsupportedOperationError(
            f"{type(self).__name__} does not provide AL gradients"
        )

    def block_projector(self, i):
        """Projection onto block i's constraint set, or None if unconstrained."""
        return None

    def block_nonsmooth_prox(self, i):
        """Prox operator of the block's nonsmooth term (plus set), or None.

        When present, it is called as ``prox(z, v) -> y_new`` solving
        ``argmin_y  phi_i(y) + 0.5 ||y - v||^2`` over the block's set;
        :func:`stationarity_residuals` then measures the block by its
        proximal-gradient fixed-point residual instead of a projected
        gradient.
        """
        return None


@dataclass
class PddConfig:
    """Schedules and stopping rules for the PDD/IPDD outer loop."""

    mode: str = PDD
    rho0: float = 1.0            # initial penalty parameter
    c: float = 0.6               # penalty shrink factor on the penalty branch
    tau: float = 0.9             # constraint-violation threshold shrink
    eta0: float | None = None    # None: max(1, ||h(z0)||_inf)
    eps0: float = 1e-3           # initial inner accuracy
    eps_shrink: float | None = None  # None: same as c
    max_outer: int = 50
    max_inner: int = 100
    eps_outer: float = 1e-4      # outer feasibility tolerance on ||h||_inf
    inner_stop: str = STOP_OBJECTIVE
    seed: int = 0
    rho_min: float | None = None  # None: 1e-8 * rho0; 0 disables the floor
    eps_min: float = 0.0         # floor for the inner accuracy schedule
    descent_check: bool = False  # raise if an inner sweep increases the AL

    def __post_init__(self):
        if self.mode not in (PDD, IPDD):
            raise InvalidInputError(f"mode must be '{PDD}' or '{IPDD}', got {self.mode!r}")
        if not self.rho0 > 0:
            raise InvalidInputError(f"rho0 must be positive, got {self.rho0}")
        if not 0 < self.c < 1:
            raise InvalidInputError(f"c must lie in (0, 1), got {self.c}")
        if not 0 < self.tau < 1:
            raise InvalidInputError(f"tau must lie in (0, 1), got {self.tau}")
        if self.eta0 is not None and not self.eta0 > 0:
            raise InvalidInputError(f"eta0 must be positive, got {self.eta0}")
        if not self.eps0 > 0:
            raise InvalidInputError(f"eps0 must be positive, got {self.eps0}")
        if self.eps_shrink is not None and not 0 < self.eps_shrink < 1:
            raise InvalidInputError(f"eps_shrink must lie in (0, 1), got {self.eps_shrink}")
        if self.max_outer < 1 or self.max_inner < 1:
            raise InvalidInputError("max_outer and max_inner must be >= 1")
        if self.inner_stop not in _STOP_RULES:
            raise InvalidInputError(
                f"inner_stop must be one of {_STOP_RULES}, got {self.inner_stop!r}"
            )
        if self.rho_min is not None and self.rho_min < 0:
            raise InvalidInputError(f"rho_min must be >= 0, got {self.rho_min}")
        if self.eps_min < 0:
            raise InvalidInputError(f"eps_min must be >= 0, got {self.eps_min}")

    def resolved_rho_min(self):
        return 1e-8 * self.rho0 if self.rho_min is None else self.rho_min

    def resolved_eps_shrink(self):
        return self.c if self.eps_shrink is None else self.eps_shrink


@dataclass
class PddState:
    """Mutable outer-loop state: iterate, duals, and current schedule values."""

    z: object
    lam: np.ndarray
    rho: float
    eta: float
    eps: float
    k: int = 0


@dataclass
class PddRecord:
    """One completed outer iteration."""

    k: int
    al_value: float
    objective: float
    h_inf: float
    rho: float
    eta: float
    branch: str
    inner_iters: int
    time_s: float


@dataclass
class PddTrace:
    """Per-iteration history of a PDD run."""

    records: list = field(default_factory=list)
    converged: bool = False
    rho_floor_hits: int = 0

    CSV_COLUMNS = ("k", "objective", "al_value", "h_inf", "rho", "eta",
                   "branch", "inner_iters", "time_ms")

    def append(self, rec):
        self.records.append(rec)

    def column(self, name):
        return [getattr(r, name) for r in self.records]

    def csv_row(self, rec):
        return [rec.k, repr(rec.objective), repr(rec.al_value), repr(rec.h_inf),
                repr(rec.rho), repr(rec.eta), rec.branch, rec.inner_iters,
                repr(rec.time_s * 1e3)]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.CSV_COLUMNS)
            for rec in self.records:
                writer.writerow(self.csv_row(rec))

    def to_dict(self):
        return {
            "converged": self.converged,
            "rho_floor_hits": self.rho_floor_hits,
            "iterations": len(self.records),
            "records": [vars(r) for r in self.records],
        }

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def rbsum_run(problem, z, lam, rho, stop=STOP_OBJECTIVE, seed=0, eps_inner=1e-6,
              max_inner=100, descent_check=False):
    """Randomized BSUM sweeps on the AL at fixed (lam, rho).

    Each iteration draws a lead block uniformly at random, then updates all
    blocks once, lead first and the rest in natural order. Returns
    ``(z, iters, converged)`` where ``converged`` reports whether the stop
    rule (rather than the iteration cap) ended the loop.

    ``seed`` may be an int or a ``numpy.random.Generator`` (the latter lets
    an outer loop thread one stream through successive inner solves).
    """
    if stop not in _STOP_RULES:
        raise InvalidInputError(f"unknown inner stop rule {stop!r}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n = problem.n_blocks
    L_prev = problem.al_value(z, lam, rho)
    if not np.isfinite(L_prev):
        raise NumericalFailureError(f"AL value is not finite at inner start: {L_prev}")
    it = 0
    converged = False
    for it in range(1, max_inner + 1):
        lead = int(rng.integers(n))
        order = [lead] + [i for i in range(n) if i != lead]
        for i in order:
            z = problem.step(i, z, lam, rho)
        L = problem.al_value(z, lam, rho)
        if not np.isfinite(L):
            raise NumericalFailureError(f"AL value became non-finite at inner iteration {it}")
        if descent_check and L > L_prev + 1e-9 * (1.0 + abs(L_prev)):
            raise NumericalFailureError(
                f"inner descent violated at iteration {it}: {L_prev} -> {L}"
            )
        if stop == STOP_OBJECTIVE:
            if abs(L - L_prev) <= eps_inner * (1.0 + abs(L_prev)):
                converged = True
                break
        elif stop == STOP_RESIDUAL:
            e, delta = stationarity_residuals(problem, z, lam, rho)
            if max(_inf_norm(e), _inf_norm(delta)) <= eps_inner:
                converged = True
                break
        L_prev = L
    if stop == STOP_ITERATION_CAP:
        converged = True
    return z, it, converged


def pdd_run(problem, z0, lam0, config, on_iteration=None):
    """Run the PDD or IPDD outer loop on ``problem`` from ``(z0, lam0)``.

    Returns ``(z, lam, trace)``. In PDD mode each outer iteration either
    updates the duals (when ``||h||_inf <= eta_k``) or shrinks the penalty;
    IPDD does both every iteration. Terminates when ``||h||_inf`` falls
    below ``config.eps_outer`` with the inner stop satisfied, or at
    ``config.max_outer``.

    ``on_iteration``, when given, receives each :class:`PddRecord` as soon
    as it is complete (used for crash-safe trace streaming).
    """
    rng = np.random.default_rng(config.seed)
    h0 = np.asarray(problem.constraint(z0), dtype=float)
    lam = np.asarray(lam0, dtype=float).copy()
    if lam.shape != h0.shape:
        raise InvalidInputError(
            f"dual vector shape {lam.shape} does not match constraint dim {h0.shape}"
        )
    state = PddState(
        z=z0,
        lam=lam,
        rho=config.rho0,
        eta=config.eta0 if config.eta0 is not None else max(1.0, _inf_norm(h0)),
        eps=config.eps0,
    )
    rho_min = config.resolved_rho_min()
    eps_shrink = config.resolved_eps_shrink()
    trace = PddTrace()

    for k in range(1, config.max_outer + 1):
        state.k = k
        eps_k = state.eps
        t_start = time.perf_counter()
        try:
            state.z, inner_iters, inner_ok = rbsum_run(
                problem, state.z, state.lam, state.rho,
                stop=config.inner_stop, seed=rng,
                eps_inner=state.eps, max_inner=config.max_inner,
                descent_check=config.descent_check,
            )
        except NumericalFailureError as exc:
            raise NumericalFailureError(
                f"inner solver failed at outer iteration {k}: {exc}",
                residual=exc.residual, cond=exc.cond,
            ) from exc
        h = np.asarray(problem.constraint(state.z), dtype=float)
        h_inf = _inf_norm(h)
        al = problem.al_value(state.z, state.lam, state.rho)
        if not np.isfinite(al):
            raise NumericalFailureError(f"AL value non-finite at outer iteration {k}")
        rho_k, eta_k = state.rho, state.eta

        if config.mode == IPDD:
            state.lam = state.lam + h / state.rho
            new_rho = config.c * state.rho
            if new_rho < rho_min:
                new_rho = rho_min
                trace.rho_floor_hits += 1
            state.rho = new_rho
            branch = BRANCH_BOTH
        elif h_inf <= state.eta:
            state.lam = state.lam + h / state.rho
            branch = BRANCH_DUAL
        else:
            new_rho = config.c * state.rho
            if new_rho < rho_min:
                new_rho = rho_min
                trace.rho_floor_hits += 1
            state.rho = new_rho
            branch = BRANCH_PENALTY

        rec = PddRecord(
            k=k, al_value=float(al), objective=float(problem.objective(state.z)),
            h_inf=float(h_inf), rho=float(rho_k), eta=float(eta_k), branch=branch,
            inner_iters=inner_iters, time_s=time.perf_counter() - t_start,
        )
        trace.append(rec)
        if on_iteration is not None:
            on_iteration(rec)

        # inner accuracy must have reached the outer tolerance before the
        # feasibility test alone may stop the run (eps_k -> 0 semantics)
        if h_inf <= config.eps_outer and inner_ok and eps_k <= config.eps_outer:
            trace.converged = True
            break
        state.eta = config.tau * min(state.eta, h_inf)
        state.eps = max(eps_shrink * state.eps, config.eps_min)

    return state.z, state.lam, trace


def stationarity_residuals(problem, z, lam, rho):
    """Per-block stationarity diagnostics (e, delta) of the AL at ``z``.

    Blocks that declare a nonsmooth prox contribute only to ``delta``:
    the proximal-gradient fixed-point residual ``x_i - prox(x_i - g_i)``
    with ``g_i`` the smooth-part gradient. All other blocks contribute the
    projected gradient step residual ``P(x_i - g_i) - x_i`` (reducing to
    ``-g_i`` when unconstrained) to ``e``, and ``-g_i`` to ``delta``.
    ``max(|e|_inf, |delta|_inf)`` is the inner termination measure.

    Raises :class:`UnsupportedOperationError` if the problem does not
    provide AL gradients.
    """
    e_parts, d_parts = [], []
    for i in range(problem.n_blocks):
        g = np.asarray(problem.al_block_gradient(i, z, lam, rho), dtype=float).ravel()
        x = np.asarray(problem.block_value(i, z), dtype=float).ravel()
        prox = problem.block_nonsmooth_prox(i)
        if prox is not None:
            y_new = np.asarray(prox(z, x - g), dtype=float).ravel()
            d_parts.append(x - y_new)
            continue
        proj = problem.block_projector(i)
        if proj is not None:
            e_parts.append(np.asarray(proj(x - g), dtype=float).ravel() - x)
        else:
            e_parts.append(-g)
        d_parts.append(-g)
    empty = np.zeros(0)
    e = np.concatenate(e_parts) if e_parts else empty
    delta = np.concatenate(d_parts) if d_parts else empty
    return e, delta


def _inf_norm(v):
    v = np.asarray(v)
    return float(np.abs(v).max()) if v.size else 0.0
