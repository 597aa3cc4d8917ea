"""Dense linear algebra: one-sided Jacobi SVD, pseudoinverse solves, rank."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

DEFAULT_SV_CUTOFF = 1e-10
# columns this small relative to the largest are rounding noise; Jacobi zeroes them
NEGLIGIBLE_COLUMN = 1e-13


class ConvergenceError(RuntimeError):
    pass


class RankDeficiencyWarning(UserWarning):
    pass


@dataclass(frozen=True)
class SvdResult:
    u: np.ndarray
    singular_values: np.ndarray
    vt: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.singular_values) @ self.vt


def _as_finite_matrix(a, name="a") -> np.ndarray:
    arr = np.array(a, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must be a non-empty 2-D matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        bad = np.argwhere(~np.isfinite(arr))[0]
        raise ValueError(f"{name} has non-finite entry at {tuple(bad)}")
    return arr


def householder_qr(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Thin QR of a tall matrix (m >= n) by Householder reflections."""
    # work on the transpose so each column is a contiguous row
    rt = np.array(a, dtype=np.float64).T.copy()
    n, m = rt.shape
    vs = []
    for j in range(n):
        x = rt[j, j:]
        norm = np.sqrt(x @ x)
        if norm == 0.0:
            vs.append(None)
            continue
        v = x.copy()
        v[0] += np.copysign(norm, x[0])
        v /= np.sqrt(v @ v)
        block = rt[j:, j:]
        block -= np.outer(block @ v, 2.0 * v)
        vs.append(v)
    qt = np.eye(n, m)
    for j in reversed(range(n)):
        v = vs[j]
        if v is not None:
            block = qt[:, j:]
            block -= np.outer(block @ v, 2.0 * v)
    return qt.T, np.triu(rt.T[:n, :])


def _round_robin(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Tournament ordering: n-1 rounds of disjoint column pairs covering all pairs."""
    players = list(range(n)) + ([-1] if n % 2 else [])
    size = len(players)
    rounds = []
    for _ in range(size - 1):
        ps, qs = [], []
        for i in range(size // 2):
            p, q = players[i], players[size - 1 - i]
            if p >= 0 and q >= 0:
                ps.append(min(p, q))
                qs.append(max(p, q))
        rounds.append((np.array(ps, dtype=int), np.array(qs, dtype=int)))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def _complete_basis(u: np.ndarray, keep: np.ndarray) -> np.ndarray:
    """Replace columns not in `keep` by unit vectors orthogonal to the rest."""
    m, k = u.shape
    out = u.copy()
    basis = [out[:, j] for j in range(k) if keep[j]]
    for j in range(k):
        if keep[j]:
            continue
        for e in range(m):
            cand = np.zeros(m)
            cand[e] = 1.0
            for b in basis:
                cand -= (b @ cand) * b
            for b in basis:
                cand -= (b @ cand) * b
            nrm = np.linalg.norm(cand)
            if nrm > 1e-6:
                cand /= nrm
                out[:, j] = cand
                basis.append(cand)
                break
    return out


def _jacobi_small(r: np.ndarray, tol: float, max_sweeps: int):
    # pure-Python floats: numpy call overhead dominates below ~8 columns
    n = r.shape[1]
    m = r.shape[0]
    cols = [list(map(float, r[:, j])) for j in range(n)]
    vcols = [[1.0 if i == j else 0.0 for i in range(n)] for j in range(n)]
    for _sweep in range(max_sweeps):
        # exact norms each sweep; rotations update them in between
        norms = [sum(x * x for x in c) for c in cols]
        floor = max(norms) * NEGLIGIBLE_COLUMN**2
        for j in range(n):
            if 0.0 < norms[j] <= floor:
                cols[j] = [0.0] * m
                norms[j] = 0.0
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                up, uq = cols[p], cols[q]
                alpha, beta = norms[p], norms[q]
                gamma = sum(x * y for x, y in zip(up, uq))
                scale = (alpha * beta) ** 0.5
                if scale == 0.0 or abs(gamma) <= tol * scale:
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                if zeta == 0.0:
                    t = 1.0
                else:
                    t = (1.0 if zeta > 0 else -1.0) / (abs(zeta) + (1.0 + zeta * zeta) ** 0.5)
                c = 1.0 / (1.0 + t * t) ** 0.5
                s = c * t
                cols[p] = [c * x - s * y for x, y in zip(up, uq)]
                cols[q] = [s * x + c * y for x, y in zip(up, uq)]
                norms[p] = max(alpha - t * gamma, 0.0)
                norms[q] = max(beta + t * gamma, 0.0)
                vp, vq = vcols[p], vcols[q]
                vcols[p] = [c * x - s * y for x, y in zip(vp, vq)]
                vcols[q] = [s * x + c * y for x, y in zip(vp, vq)]
        if not rotated:
            return np.array(cols).T.reshape(m, n), np.array(vcols).T.reshape(n, n)
    raise ConvergenceError(f"Jacobi SVD did not converge within max_sweeps={max_sweeps}")


def _jacobi_square(r: np.ndarray, tol: float, max_sweeps: int):
    n = r.shape[1]
    if n <= 8:
        return _jacobi_small(r, tol, max_sweeps)
    u = r.copy()
    v = np.eye(n)
    rounds = _round_robin(n)
    for _sweep in range(max_sweeps):
        rotated = False
        norms = np.einsum("ij,ij->j", u, u)
        u[:, norms <= norms.max() * NEGLIGIBLE_COLUMN**2] = 0.0
        for ps, qs in rounds:
            if ps.size == 0:
                continue
            up, uq = u[:, ps], u[:, qs]
            alpha = np.einsum("ij,ij->j", up, up)
            beta = np.einsum("ij,ij->j", uq, uq)
            gamma = np.einsum("ij,ij->j", up, uq)
            scale = np.sqrt(alpha * beta)
            active = (np.abs(gamma) > tol * scale) & (scale > 0.0)
            if not np.any(active):
                continue
            rotated = True
            g = np.where(active, gamma, 1.0)
            zeta = (beta - alpha) / (2.0 * g)
            t = np.sign(zeta) / (np.abs(zeta) + np.sqrt(1.0 + zeta * zeta))
            t = np.where(zeta == 0.0, 1.0, t)
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = c * t
            c = np.where(active, c, 1.0)
            s = np.where(active, s, 0.0)
            vp, vq = v[:, ps], v[:, qs]
            u[:, ps] = c * up - s * uq
            u[:, qs] = s * up + c * uq
            v[:, ps] = c * vp - s * vq
            v[:, qs] = s * vp + c * vq
        if not rotated:
            return u, v
    raise ConvergenceError(f"Jacobi SVD did not converge within max_sweeps={max_sweeps}")


def svd(a, tol: float = 1e-12, max_sweeps: int = 60) -> SvdResult:
    """Thin SVD via one-sided (Hestenes) Jacobi rotations.

    Tall inputs are first reduced with a Householder QR so the rotations act on
    an n-by-n triangle. Singular values come back in non-increasing order.
    """
    return _svd(_as_finite_matrix(a), tol, max_sweeps, complete=True)


def _svd(arr: np.ndarray, tol: float, max_sweeps: int, complete: bool) -> SvdResult:
    m, n = arr.shape
    if m < n:
        res = _svd(arr.T, tol, max_sweeps, complete)
        return SvdResult(res.vt.T, res.singular_values, res.u.T)
    # unit max-abs scaling keeps squared norms clear of under/overflow
    amax = float(np.abs(arr).max())
    if amax == 0.0:
        u = _complete_basis(np.zeros((m, n)), np.zeros(n, dtype=bool)) if complete else np.zeros((m, n))
        return SvdResult(u, np.zeros(n), np.eye(n))
    q, r = householder_qr(arr / amax)
    w, v = _jacobi_square(r, tol, max_sweeps)
    sv = np.linalg.norm(w, axis=0)
    order = np.argsort(-sv, kind="stable")
    sv, w, v = sv[order], w[:, order], v[:, order]
    floor = sv[0] * 1e-300 if sv[0] > 0 else 0.0
    keep = sv > floor
    ur = np.zeros_like(w)
    ur[:, keep] = w[:, keep] / sv[keep]
    if not np.all(keep):
        # zero columns are harmless when the caller discards null directions
        if complete:
            ur = _complete_basis(ur, keep)
        sv = np.where(keep, sv, 0.0)
    return SvdResult(q @ ur, sv * amax, v.T)


def lstsq_min_norm(a, b, sv_cutoff: float = DEFAULT_SV_CUTOFF) -> tuple[np.ndarray, int]:
    """Minimum-norm least-squares solution of A X = B and the numerical rank used.

    Singular values below ``sv_cutoff * s_max`` are treated as zero.
    """
    arr = _as_finite_matrix(a)
    rhs = np.array(b, dtype=np.float64)
    vector_rhs = rhs.ndim == 1
    if vector_rhs:
        rhs = rhs[:, None]
    rhs = _as_finite_matrix(rhs, "b")
    if rhs.shape[0] != arr.shape[0]:
        raise ValueError(f"row mismatch: a has {arr.shape[0]} rows, b has {rhs.shape[0]}")
    res = _svd(arr, 1e-12, 60, complete=False)
    s = res.singular_values
    keep = s > sv_cutoff * s[0] if s[0] > 0 else np.zeros_like(s, dtype=bool)
    if not np.any(keep):
        warnings.warn("all singular values below cutoff; returning zero solution",
                      RankDeficiencyWarning, stacklevel=3)
        x = np.zeros((arr.shape[1], rhs.shape[1]))
    else:
        inv = np.where(keep, 1.0 / np.where(keep, s, 1.0), 0.0)
        x = res.vt.T @ (inv[:, None] * (res.u.T @ rhs))
    return (x[:, 0] if vector_rhs else x), int(keep.sum())


def pinv_solve(a, b, sv_cutoff: float = DEFAULT_SV_CUTOFF) -> np.ndarray:
    """Minimum-norm least-squares solution of A X = B (see ``lstsq_min_norm``)."""
    return lstsq_min_norm(a, b, sv_cutoff)[0]


def pinv(a, sv_cutoff: float = DEFAULT_SV_CUTOFF) -> np.ndarray:
    arr = _as_finite_matrix(a)
    return pinv_solve(arr, np.eye(arr.shape[0]), sv_cutoff)


def orthogonal_init(rows: int, cols: int, rng) -> np.ndarray:
    """Random matrix with orthonormal columns (rows >= cols) or rows (rows < cols)."""
    if rows < 1 or cols < 1:
        raise ValueError(f"shape must be positive, got ({rows}, {cols})")
    gen = getattr(rng, "generator", rng)
    big, small = max(rows, cols), min(rows, cols)
    g = gen.standard_normal((big, small))
    q, r = householder_qr(g)
    # sign fix makes the draw Haar-distributed
    d = np.sign(np.diag(r))
    d[d == 0] = 1.0
    q = q * d
    return q if rows >= cols else q.T


def matrix_rank_estimate(batch, atol: float = 1e-2, rtol: float = 1e-2) -> int:
    """Count singular values greater than max(atol, s_max * rtol)."""
    arr = np.asarray(batch, dtype=np.float64)
    if arr.ndim != 2 or arr.size == 0:
        raise ValueError("matrix_rank_estimate needs a non-empty 2-D batch")
    s = svd(arr).singular_values
    return int(np.sum(s > max(atol, s[0] * rtol)))
