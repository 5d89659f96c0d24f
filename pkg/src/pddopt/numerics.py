"""Dense linear-algebra kernels and convex projections shared by the solvers.

All functions are pure: they never mutate their inputs and hold no state,
so they are safe to call from concurrent workers. Tolerances default to
the values in :data:`DEFAULT_NUMERICS` and can be overridden per call.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import InvalidInputError, NumericalFailureError


@dataclass(frozen=True)
class NumericsConfig:
    """Default tolerances for the kernels in this module."""

    hermitian_tol: float = 1e-12      # relative asymmetry allowed before rejecting input
    eig_residual_rel: float = 1e-9    # ||Cv - lam*v|| <= rel * ||C||_2
    svd_residual_rel: float = 1e-9    # reconstruction and orthonormality residuals
    sylvester_rel: float = 1e-8       # ||AF + FB - C|| <= rel*(||A||+||B||)*||F|| + abs
    sylvester_abs: float = 1e-12
    cubic_tol: float = 1e-12          # |a s^3 + b s - d| <= tol * max(1, |d|)
    sign_tol: float = 1e-12           # threshold for "first nonzero component"


DEFAULT_NUMERICS = NumericsConfig()


def fix_sign(v, tol=DEFAULT_NUMERICS.sign_tol):
    """Flip a real vector so its first non-negligible component is positive.

    Returns (v, sign) where sign is +1 or -1; used to make eigenvector and
    singular-vector outputs reproducible across runs and LAPACK builds.
    """
    v = np.asarray(v)
    idx = np.flatnonzero(np.abs(v) > tol)
    if idx.size == 0:
        return v, 1.0
    s = 1.0 if v[idx[0]].real > 0 else -1.0
    return s * v, s


def real_embed_vec(w):
    """Embed a complex vector into R^{2n} as (Re w, Im w).

    The embedding is an isometry: ``norm(real_embed_vec(w)) == norm(w)``.
    """
    w = np.asarray(w, dtype=complex).ravel()
    return np.concatenate([w.real, w.imag])


def complex_from_embedding(v):
    """Inverse of :func:`real_embed_vec`."""
    v = np.asarray(v, dtype=float).ravel()
    if v.size % 2 != 0:
        raise InvalidInputError(f"embedded vector length must be even, got {v.size}")
    n = v.size // 2
    return v[:n] + 1j * v[n:]


def real_embed_hermitian(M, cfg=DEFAULT_NUMERICS):
    """Embed a Hermitian matrix M into the real symmetric matrix
    ``[[Re M, -Im M], [Im M, Re M]]``.

    For any complex w and Hermitian M, ``w^H M w == w_eq^T M_eq w_eq`` with
    w_eq from :func:`real_embed_vec`.

    Raises
    ------
    InvalidInputError
        If M is not square, or deviates from Hermitian symmetry by more
        than ``cfg.hermitian_tol`` relative to its magnitude. Smaller
        asymmetries are removed by averaging M with its conjugate transpose.
    """
    M = np.asarray(M, dtype=complex)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InvalidInputError(f"expected a square matrix, got shape {M.shape}")
    scale = max(1.0, np.abs(M).max()) if M.size else 1.0
    asym = np.abs(M - M.conj().T).max() if M.size else 0.0
    if asym > cfg.hermitian_tol * scale:
        raise InvalidInputError(
            f"matrix is not Hermitian: max asymmetry {asym:.3e} exceeds "
            f"{cfg.hermitian_tol:.1e} * {scale:.3e}"
        )
    M = 0.5 * (M + M.conj().T)
    re, im = M.real, M.imag
    return np.block([[re, -im], [im, re]])


def min_eigvec_sym(C, cfg=DEFAULT_NUMERICS):
    """Smallest eigenpair of a real symmetric matrix.

    Returns (v, lam) with ``v`` unit norm, sign-normalized so its first
    non-negligible component is positive.

    Raises
    ------
    NumericalFailureError
        If the eigensolver does not converge or the residual
        ``||Cv - lam*v||`` exceeds ``cfg.eig_residual_rel * ||C||_2``.
    """
    C = np.asarray(C, dtype=float)
    C = 0.5 * (C + C.T)
    try:
        vals, vecs = np.linalg.eigh(C)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailureError(f"eigensolver failed to converge: {exc}") from exc
    lam = vals[0]
    v = vecs[:, 0]
    norm_c = max(np.abs(vals[0]), np.abs(vals[-1]))
    resid = np.linalg.norm(C @ v - lam * v)
    if resid > cfg.eig_residual_rel * max(norm_c, 1e-300):
        raise NumericalFailureError(
            f"eigenpair residual {resid:.3e} exceeds {cfg.eig_residual_rel:.1e} * ||C||",
            residual=resid,
        )
    v, _ = fix_sign(v, cfg.sign_tol)
    return v, lam


def thin_svd(M, cfg=DEFAULT_NUMERICS):
    """Thin SVD of a real matrix with rows >= cols.

    Returns (U, s, V) with ``M = U @ diag(s) @ V.T``, singular values sorted
    descending, and columns of U (and V jointly) sign-normalized.

    Raises
    ------
    NumericalFailureError
        On non-convergence or residuals above ``cfg.svd_residual_rel``.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise InvalidInputError(f"expected a matrix, got ndim={M.ndim}")
    try:
        U, s, Vh = np.linalg.svd(M, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailureError(f"SVD failed to converge: {exc}") from exc
    V = Vh.T
    for j in range(U.shape[1]):
        _, sgn = fix_sign(U[:, j], cfg.sign_tol)
        U[:, j] *= sgn
        V[:, j] *= sgn
    norm_m = max(s[0] if s.size else 0.0, 1e-300)
    resid = np.linalg.norm(U @ np.diag(s) @ V.T - M)
    orth = max(
        np.linalg.norm(U.T @ U - np.eye(U.shape[1])),
        np.linalg.norm(V.T @ V - np.eye(V.shape[1])),
    )
    if resid > cfg.svd_residual_rel * norm_m or orth > cfg.svd_residual_rel:
        raise NumericalFailureError(
            f"SVD residuals too large (reconstruction {resid:.3e}, orthonormality {orth:.3e})",
            residual=max(resid, orth),
        )
    return U, s, V


def solve_sylvester(A, B, C, cfg=DEFAULT_NUMERICS):
    """Solve A F + F B = C for F (A, B square, real or complex).

    Uses the Schur-based Bartels-Stewart solver; the result is validated
    against the relative residual bound
    ``||AF + FB - C|| <= rel * (||A|| + ||B||) * ||F|| + abs``.

    Raises
    ------
    NumericalFailureError
        If the triangular solve breaks down (spectra of A and -B too close)
        or the residual bound fails; the error carries a condition estimate
        of the Kronecker system when it is cheap to form.
    """
    A = np.asarray(A)
    B = np.asarray(B)
    C = np.asarray(C)
    try:
        F = scipy.linalg.solve_sylvester(A, B, C)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise NumericalFailureError(
            f"Sylvester solve failed: {exc}", cond=_sylvester_cond(A, B)
        ) from exc
    resid = np.linalg.norm(A @ F + F @ B - C)
    bound = (
        cfg.sylvester_rel * (np.linalg.norm(A) + np.linalg.norm(B)) * np.linalg.norm(F)
        + cfg.sylvester_abs
    )
    if not np.isfinite(resid) or resid > bound:
        raise NumericalFailureError(
            f"Sylvester residual {resid:.3e} exceeds bound {bound:.3e}",
            residual=resid,
            cond=_sylvester_cond(A, B),
        )
    return F


def _sylvester_cond(A, B, size_cap=4096):
    """Condition estimate of I (x) A + B^T (x) I, or None if too large."""
    n, m = A.shape[0], B.shape[0]
    if n * m > size_cap:
        return None
    K = np.kron(np.eye(m), A) + np.kron(B.T, np.eye(n))
    return float(np.linalg.cond(K))


def project_ball(M, radius):
    """Project a vector/matrix onto the Frobenius-norm ball of given radius."""
    if radius < 0:
        raise InvalidInputError(f"ball radius must be >= 0, got {radius}")
    M = np.asarray(M)
    nrm = np.linalg.norm(M)
    if nrm <= radius:
        return M.copy()
    return (radius / nrm) * M


def project_simplex(v):
    """Euclidean projection onto the probability simplex {s >= 0, sum s = 1}.

    Sort-and-threshold construction: the output is ``max(v - theta, 0)``
    for the unique theta making the result sum to one.
    """
    v = np.asarray(v, dtype=float).ravel()
    if v.size == 0:
        raise InvalidInputError("cannot project an empty vector onto the simplex")
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    j = np.arange(1, v.size + 1)
    rho = np.nonzero(u + (1.0 - css) / j > 0)[0][-1]
    theta = (css[rho] - 1.0) / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def project_simplex_columns(S):
    """Column-wise simplex projection of a K x L matrix (vectorized)."""
    S = np.asarray(S, dtype=float)
    K = S.shape[0]
    if K == 0:
        raise InvalidInputError("cannot project an empty matrix onto the simplex")
    u = -np.sort(-S, axis=0)
    css = np.cumsum(u, axis=0)
    j = np.arange(1, K + 1)[:, None]
    mask = u + (1.0 - css) / j > 0
    rho = K - 1 - np.argmax(mask[::-1, :], axis=0)
    theta = (css[rho, np.arange(S.shape[1])] - 1.0) / (rho + 1.0)
    return np.maximum(S - theta[None, :], 0.0)


def solve_monotone_cubic(a, b, d, cfg=DEFAULT_NUMERICS):
    """Nonnegative root of the strictly increasing cubic a*s^3 + b*s - d = 0.

    Requires a > 0, b > 0, d >= 0; the root is unique because the left side
    is strictly increasing in s. Closed-form (Cardano) evaluation followed
    by Newton polishing to ``cfg.cubic_tol * max(1, |d|)``.
    """
    if not (a > 0 and b > 0):
        raise InvalidInputError(f"cubic requires a > 0 and b > 0, got a={a}, b={b}")
    if d < 0:
        raise InvalidInputError(f"cubic requires d >= 0, got d={d}")
    if d == 0:
        return 0.0
    p = b / a
    q = d / a
    disc = np.sqrt((q / 2.0) ** 2 + (p / 3.0) ** 3)
    s = np.cbrt(q / 2.0 + disc) + np.cbrt(q / 2.0 - disc)
    s = max(s, 0.0)
    tol = cfg.cubic_tol * max(1.0, abs(d))
    for _ in range(100):
        r = a * s**3 + b * s - d
        if abs(r) <= tol:
            break
        s -= r / (3.0 * a * s**2 + b)
        if s < 0.0:
            s = 0.0
    else:
        raise NumericalFailureError(
            f"cubic root polish stalled at residual {a * s ** 3 + b * s - d:.3e}",
            residual=abs(a * s**3 + b * s - d),
        )
    return float(s)
