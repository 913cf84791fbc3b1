"""Generalized symmetric eigenproblems ``K u = lam M u`` through the resolvent.

The pencil is solved through ``T = (K + M)^{-1} M``, which is self-adjoint
in the ``(K + M)`` inner product; its eigenvalues are ``1 / (1 + lam)``, so
the smallest ``lam`` are the largest eigenvalues of ``T``. ``M`` may be
singular (boundary mass); ``K + M`` must be positive definite.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigError, NumericsError, ShapeError

__all__ = ["Resolvent", "EigenSet", "smallest_eigenpairs", "apply_resolvent"]

log = logging.getLogger(__name__)

SEED = 0x5EED
DENSE_LIMIT = 2000


class Resolvent:
    """Factorized ``K + M`` with ``apply(f) = (K + M)^{-1} M f``.

    The factorization is a symmetric-mode LU without row pivoting, which
    for an SPD matrix is a Cholesky factorization in disguise; a negative
    pivot is reported as loss of definiteness.
    """

    def __init__(self, K, M):
        K = sp.csc_matrix(K)
        M = sp.csc_matrix(M)
        if K.shape != M.shape or K.shape[0] != K.shape[1]:
            raise ShapeError(f"pencil shapes differ: {K.shape} vs {M.shape}")
        self.K, self.M = K, M
        self.A = (K + M).tocsc()
        self.n = K.shape[0]
        try:
            self._lu = spla.splu(self.A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                                 options={"SymmetricMode": True})
        except RuntimeError as exc:
            raise NumericsError(f"factorization of K+M failed: {exc}") from None
        diag = self._lu.U.diagonal()
        if not np.array_equal(self._lu.perm_r, self._lu.perm_c) or np.any(diag <= 0) \
                or not np.all(np.isfinite(diag)):
            raise NumericsError("K+M is not positive definite")

    def solve(self, rhs):
        return self._lu.solve(np.asarray(rhs, dtype=float))

    def apply(self, f):
        """Discrete solution ``u`` of ``(K + M) u = M f``."""
        f = np.asarray(f, dtype=float)
        if f.shape[0] != self.n:
            raise ShapeError(f"field has length {f.shape[0]}, expected {self.n}")
        return self.solve(self.M @ f)

    __call__ = apply

    def inner(self, u, v):
        """``(K + M)`` inner product, the discrete eps-inner product."""
        return float(u @ (self.A @ v))


def apply_resolvent(K, M, f, resolvent: Resolvent | None = None):
    """``(K + M)^{-1} M f``; pass ``resolvent`` to reuse a factorization."""
    res = resolvent if resolvent is not None else Resolvent(K, M)
    return res.apply(f)


@dataclass
class EigenSet:
    values: np.ndarray
    vectors: np.ndarray          # columns, M-orthonormal
    residuals: np.ndarray
    pencil_id: str = ""
    degenerate: list = field(default_factory=list)
    resolvent: Resolvent | None = None

    def __len__(self):
        return len(self.values)

    @property
    def thetas(self):
        return 1.0 / (1.0 + self.values)


def _annotate(values, tol=1e-8):
    out = []
    for i in range(len(values) - 1):
        if abs(values[i + 1] - values[i]) < tol * max(abs(values[i]), abs(values[i + 1]), 1e-300):
            out.append((i, i + 1))
    return out


def _finish(K, M, thetas, vecs, pencil_id, res):
    order = np.argsort(-thetas, kind="stable")
    thetas = thetas[order]
    vecs = vecs[:, order]
    lam = 1.0 / thetas - 1.0
    mnorm = np.sqrt(np.maximum(np.einsum("ij,ij->j", vecs, M @ vecs), 1e-300))
    vecs = vecs / mnorm
    r = K @ vecs - (M @ vecs) * lam
    resid = np.linalg.norm(r, axis=0) / np.linalg.norm(vecs, axis=0)
    return EigenSet(values=lam, vectors=vecs, residuals=resid, pencil_id=pencil_id,
                    degenerate=_annotate(lam), resolvent=res)


def _dense(K, M, k):
    Kd = K.toarray() if sp.issparse(K) else np.asarray(K, dtype=float)
    Md = M.toarray() if sp.issparse(M) else np.asarray(M, dtype=float)
    n = Kd.shape[0]
    try:
        th, vec = sla.eigh(Md, Kd + Md, subset_by_index=[n - k, n - 1])
    except np.linalg.LinAlgError as exc:
        raise NumericsError(f"dense generalized eigensolve failed: {exc}") from None
    return th, vec


def _lanczos(res: Resolvent, k, tol, max_iter):
    """Thick-restart Lanczos for the top of T with locking.

    Converged Ritz pairs are locked and deflated; once ``k`` are locked a
    pass from a fresh random start confirms that nothing larger (e.g. a
    second copy of a multiple eigenvalue) was missed.
    """
    n = res.n
    A = res.A
    m = int(min(n, max(2 * k + 20, 40)))
    keep = max(1, min(k + 10, m // 2))
    rng = np.random.default_rng(SEED)
    L = np.zeros((n, 0))
    AL = np.zeros((n, 0))
    Lt = np.zeros(0)

    def orth(w, V, AV):
        for _ in range(2):
            if L.shape[1]:
                w = w - L @ (AL.T @ w)
            if V.shape[1]:
                w = w - V @ (AV.T @ w)
        return w

    def anorm(w):
        return np.sqrt(max(w @ (A @ w), 0.0))

    def fresh():
        w = orth(rng.standard_normal(n), np.zeros((n, 0)), np.zeros((n, 0)))
        nrm = anorm(w)
        return (w / nrm)[:, None] if nrm > 0 else np.zeros((n, 0))

    V = fresh()
    confirming = False
    for _ in range(max_iter):
        cap = n - L.shape[1]
        if V.shape[1] == 0 or cap <= 0:
            break
        AV = A @ V
        while V.shape[1] < min(m, cap):
            w = orth(res.apply(V[:, -1]), V, AV)
            nrm = anorm(w)
            if nrm < 1e-12 * anorm(V[:, -1]):
                # invariant subspace; extend with a random direction
                w = orth(rng.standard_normal(n), V, AV)
                nrm = anorm(w)
                if nrm < 1e-300:
                    break
            V = np.column_stack([V, w / nrm])
            AV = np.column_stack([AV, A @ V[:, -1]])
        H = V.T @ (res.M @ V)
        th, Y = np.linalg.eigh(0.5 * (H + H.T))
        th, Y = th[::-1], Y[:, ::-1]
        X = V @ Y
        n_chk = min(len(th), k + 4)
        TX = np.column_stack([res.apply(X[:, i]) for i in range(n_chk)])
        R = TX - X[:, :n_chk] * th[:n_chk]
        if L.shape[1]:
            # residual of the deflated operator
            R = R - L @ (AL.T @ R)
        rn = np.sqrt(np.maximum(np.einsum("ij,ij->j", R, A @ R), 0.0))
        conv = rn <= tol * np.maximum(np.abs(th[:n_chk]), 1e-300)
        log.debug('lanczos basis=%d locked=%d top=%s rn=%s', V.shape[1], len(Lt), th[:3], rn[:3])
        kth = np.sort(Lt)[::-1][k - 1] if len(Lt) >= k else -np.inf
        n_new = 0
        while n_new < n_chk and conv[n_new] and th[n_new] > 0 and th[n_new] > kth:
            n_new += 1
        if n_new:
            L = np.column_stack([L, X[:, :n_new]])
            AL = np.column_stack([AL, A @ X[:, :n_new]])
            Lt = np.concatenate([Lt, th[:n_new]])
            confirming = False
        if len(Lt) >= k:
            kth = np.sort(Lt)[::-1][k - 1]
            rest_top = th[n_new] + rn[n_new] if n_new < n_chk else -np.inf
            if n_new == 0 and rest_top <= kth:
                if confirming:
                    break
                confirming = True
                V = fresh()
                continue
        # thick restart: unconverged Ritz vectors plus the next Krylov direction
        Xk = X[:, n_new:n_new + keep]
        w = orth(res.apply(V[:, -1]), V, AV)
        basis = np.column_stack([Xk, w]) if Xk.shape[1] else w[:, None]
        V, AVn = np.zeros((n, 0)), np.zeros((n, 0))
        for i in range(basis.shape[1]):
            v = orth(basis[:, i], V, AVn)
            nrm = anorm(v)
            if nrm > 1e-12 * max(anorm(basis[:, i]), 1e-300):
                V = np.column_stack([V, v / nrm])
                AVn = np.column_stack([AVn, A @ V[:, -1]])
        if V.shape[1] == 0:
            V = fresh()
    else:
        raise NumericsError(f"Lanczos did not converge in {max_iter} restarts")
    if len(Lt) < k:
        raise NumericsError("Lanczos found fewer eigenpairs than requested")
    order = np.argsort(-Lt)[:k]
    return Lt[order], L[:, order]


def smallest_eigenpairs(K, M, k: int, tol: float = 1e-10, method: str = "auto",
                        max_iter: int = 500, pencil_id: str = "",
                        resolvent: Resolvent | None = None) -> EigenSet:
    """The ``k`` smallest eigenvalues of ``K u = lam M u`` with M-orthonormal vectors.

    ``method`` is ``"dense"``, ``"lanczos"`` or ``"auto"`` (dense up to
    2000 unknowns).
    """
    n = K.shape[0]
    if not 0 < k < n:
        raise ConfigError(f"k={k} must be in (0, {n})")
    res = resolvent if resolvent is not None else Resolvent(K, M)
    if method == "auto":
        method = "dense" if n <= DENSE_LIMIT else "lanczos"
    if method == "dense":
        th, vec = _dense(K, M, k)
    elif method == "lanczos":
        th, vec = _lanczos(res, k, tol, max_iter)
    else:
        raise ConfigError(f"unknown eigensolver method {method!r}")
    if np.any(th <= 0):
        raise NumericsError("pencil has fewer than k finite eigenvalues")
    return _finish(sp.csr_matrix(K), sp.csr_matrix(M), np.asarray(th), np.asarray(vec),
                   pencil_id, res)
