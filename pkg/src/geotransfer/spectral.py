"""Dense spectral kernel: SVD, nuclear/spectral norms, ranks, subgradients
and principal angles.

The SVD is a one-sided (Hestenes) Jacobi method with a round-robin pair
ordering, so each step rotates n/2 disjoint column pairs at once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_RANK_TOL = 1e-6
DEFAULT_SV_FLOOR = 1e-8
_ORTHO_TOL = 1e-8
# column count up to which the scalar pair loop beats vectorized rounds
_NARROW_MAX = 6


class NumericalError(RuntimeError):
    """Raised when an iterative kernel fails to converge."""


class ContractError(ValueError):
    """Raised when an input violates an operation's precondition."""


@dataclass(frozen=True)
class SpectralDecomposition:
    """Thin SVD ``M = U @ diag(sigma) @ V.T`` with ``r = min(rows, cols)``."""

    U: np.ndarray
    sigma: np.ndarray
    V: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.U * self.sigma) @ self.V.T


def as_matrix(M) -> np.ndarray:
    """Coerce to a finite 2-D float64 array with at least one row."""
    A = np.asarray(M, dtype=np.float64)
    if A.ndim == 1:
        A = A.reshape(-1, 1)
    if A.ndim != 2 or A.shape[0] < 1:
        raise ContractError(f"expected a 2-D matrix with rows >= 1, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ContractError("matrix has non-finite entries")
    return A


def _round_robin(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    # circle method; index n (when n is odd) is a bye
    m = n + (n % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        p, q = [], []
        for i in range(m // 2):
            a, b = players[i], players[m - 1 - i]
            if a < n and b < n:
                p.append(min(a, b))
                q.append(max(a, b))
        rounds.append((np.array(p, dtype=int), np.array(q, dtype=int)))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


_SCHEDULES: dict[int, list[tuple[np.ndarray, np.ndarray]]] = {}


def _schedule(n: int):
    sched = _SCHEDULES.get(n)
    if sched is None:
        sched = _SCHEDULES[n] = _round_robin(n)
    return sched


def _complete_basis(U: np.ndarray, keep: np.ndarray) -> np.ndarray:
    """Replace columns of U not in ``keep`` by an orthonormal completion."""
    m, r = U.shape
    basis = [U[:, j] for j in range(r) if keep[j]]
    out = U.copy()
    candidates = iter(np.eye(m))
    for j in range(r):
        if keep[j]:
            continue
        for e in candidates:
            v = e.copy()
            for _ in range(2):
                for b in basis:
                    v -= (b @ v) * b
            nv = np.linalg.norm(v)
            if nv > 1e-6:
                v /= nv
                basis.append(v)
                out[:, j] = v
                break
    return out


def _jacobi_square(R: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    m, n = R.shape
    W = R.copy()
    V = np.eye(n)
    if n == 1:
        return W, np.linalg.norm(W, axis=0), V
    tol = np.finfo(float).eps * m
    max_sweeps = 100 * n
    sched = _schedule(n)
    tiny = (np.finfo(float).eps * np.linalg.norm(R)) ** 2
    for _ in range(max_sweeps):
        rotated = False
        for p, q in sched:
            G = W.T @ W
            alpha, beta, gamma = G[p, p], G[q, q], G[p, q]
            active = (np.abs(gamma) > tol * np.sqrt(alpha * beta)) & (alpha > tiny) & (beta > tiny)
            if not active.any():
                continue
            rotated = True
            if not active.all():
                p, q = p[active], q[active]
                alpha, beta, gamma = alpha[active], beta[active], gamma[active]
            zeta = (beta - alpha) / (2.0 * gamma)
            t = np.where(zeta >= 0, 1.0, -1.0) / (np.abs(zeta) + np.sqrt(1.0 + zeta * zeta))
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = c * t
            Wp, Wq = W[:, p], W[:, q]
            W[:, p], W[:, q] = c * Wp - s * Wq, s * Wp + c * Wq
            Vp, Vq = V[:, p], V[:, q]
            V[:, p], V[:, q] = c * Vp - s * Vq, s * Vp + c * Vq
        if not rotated:
            return W, np.linalg.norm(W, axis=0), V
    raise NumericalError(f"Jacobi SVD did not converge in {max_sweeps} sweeps")


def _jacobi_narrow(A: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # cyclic-by-rows ordering, one pair at a time; cheaper than the
    # vectorized rounds when there are only a handful of columns
    m, n = A.shape
    cols = [A[:, j].copy() for j in range(n)]
    vcols = [np.eye(n)[:, j].copy() for j in range(n)]
    tol = np.finfo(float).eps * m
    max_sweeps = 100 * n
    pairs = [(p, q) for p in range(n - 1) for q in range(p + 1, n)]
    # columns at rounding level carry no direction; rotating them never settles
    tiny = (np.finfo(float).eps * np.linalg.norm(A)) ** 2
    for _ in range(max_sweeps):
        rotated = False
        for p, q in pairs:
            a, b = cols[p], cols[q]
            alpha, beta, gamma = float(a @ a), float(b @ b), float(a @ b)
            if alpha <= tiny or beta <= tiny or abs(gamma) <= tol * (alpha * beta) ** 0.5:
                continue
            rotated = True
            zeta = (beta - alpha) / (2.0 * gamma)
            t = (1.0 if zeta >= 0 else -1.0) / (abs(zeta) + (1.0 + zeta * zeta) ** 0.5)
            c = 1.0 / (1.0 + t * t) ** 0.5
            s = c * t
            cols[p], cols[q] = c * a - s * b, s * a + c * b
            va, vb = vcols[p], vcols[q]
            vcols[p], vcols[q] = c * va - s * vb, s * va + c * vb
        if not rotated:
            W = np.column_stack(cols)
            return W, np.sqrt(np.einsum("ij,ij->j", W, W)), np.column_stack(vcols)
    raise NumericalError(f"Jacobi SVD did not converge in {max_sweeps} sweeps")


def _jacobi_tall(A: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    m, n = A.shape
    if n <= _NARROW_MAX:
        return _jacobi_narrow(A)
    if m == n:
        return _jacobi_square(A)
    # QR preconditioning: rotate the small triangular factor, then lift back
    Q, R = np.linalg.qr(A)
    W, sigma, V = _jacobi_square(R)
    return Q @ W, sigma, V


def svd(M) -> SpectralDecomposition:
    """Thin SVD with descending singular values and a fixed sign convention.

    Each column of U has its largest-magnitude entry positive; V is flipped
    to match.  Raises NumericalError if the Jacobi sweeps fail to converge.
    """
    A = as_matrix(M)
    rows, cols = A.shape
    if cols == 0:
        return SpectralDecomposition(np.zeros((rows, 0)), np.zeros(0), np.zeros((0, 0)))
    transpose = rows < cols
    if transpose:
        A = A.T
    W, sigma, V = _jacobi_tall(A)
    order = np.argsort(-sigma, kind="stable")
    W, sigma, V = W[:, order], sigma[order], V[:, order]
    # directions of negligible columns are unreliable; complete them instead
    cutoff = sigma[0] * np.finfo(float).eps * A.shape[0]
    keep = sigma > cutoff if sigma[0] > 0 else np.zeros(sigma.shape, dtype=bool)
    U = np.zeros_like(W)
    U[:, keep] = W[:, keep] / sigma[keep]
    if not keep.all():
        sigma = np.where(keep, sigma, 0.0)
        U = _complete_basis(U, keep)
    if transpose:
        U, V = V, U
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return SpectralDecomposition(U * signs, sigma, V * signs)


def singular_values(M) -> np.ndarray:
    return svd(M).sigma


def nuclear_norm(M) -> float:
    """Sum of singular values."""
    return float(np.sum(singular_values(M)))


def spectral_norm(M) -> float:
    s = singular_values(M)
    return float(s[0]) if s.size else 0.0


def numerical_rank(M, rel_tol: float = DEFAULT_RANK_TOL) -> int:
    """Number of singular values above ``rel_tol * sigma_1`` (0 for M = 0)."""
    if rel_tol <= 0:
        raise ContractError("rel_tol must be positive")
    s = singular_values(M)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > rel_tol * s[0]))


def nuclear_norm_subgradient(M, sv_floor: float = DEFAULT_SV_FLOOR) -> np.ndarray:
    """``U_r V_r^T`` over singular triplets with sigma above ``sv_floor``.

    At rank-deficient points this picks the zero element on the null part of
    the subdifferential; at full-rank points with distinct singular values it
    is the gradient of the nuclear norm.
    """
    if sv_floor < 0:
        raise ContractError("sv_floor must be non-negative")
    A = as_matrix(M)
    dec = svd(A)
    keep = dec.sigma > sv_floor
    return dec.U[:, keep] @ dec.V[:, keep].T


def nuclear_norm_and_subgradient(M, sv_floor: float = DEFAULT_SV_FLOOR):
    """Value and subgradient from a single decomposition."""
    dec = svd(M)
    keep = dec.sigma > sv_floor
    return float(dec.sigma.sum()), dec.U[:, keep] @ dec.V[:, keep].T


def orthonormal_basis(M, rel_tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Orthonormal basis of the column space, truncated at ``rel_tol * sigma_1``."""
    if rel_tol <= 0:
        raise ContractError("rel_tol must be positive")
    dec = svd(M)
    if dec.sigma.size == 0 or dec.sigma[0] == 0.0:
        raise ContractError("empty column space")
    return dec.U[:, dec.sigma > rel_tol * dec.sigma[0]]


def _check_orthonormal(B: np.ndarray, name: str) -> None:
    G = B.T @ B
    if not np.allclose(G, np.eye(G.shape[0]), atol=_ORTHO_TOL, rtol=0):
        raise ContractError(f"{name} does not have orthonormal columns")


def principal_angles(B1, B2) -> np.ndarray:
    """Principal angles (radians, ascending) between span(B1) and span(B2).

    Both inputs must already have orthonormal columns.
    """
    B1, B2 = as_matrix(B1), as_matrix(B2)
    if B1.shape[0] != B2.shape[0]:
        raise ContractError("bases live in different ambient dimensions")
    _check_orthonormal(B1, "B1")
    _check_orthonormal(B2, "B2")
    r = min(B1.shape[1], B2.shape[1])
    if r == 0:
        return np.zeros(0)
    cos = singular_values(B1.T @ B2)[:r]
    return np.sort(np.arccos(np.clip(cos, -1.0, 1.0)))
