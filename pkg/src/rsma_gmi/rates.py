"""Achievable rates under imperfect CSIT/CSIR and their quadratic-form view.

Rates follow the generalized-mutual-information (GMI) model for a nearest
neighbour decoder: the expected error leakage ``E|e_k^H p_j|^2 =
sigma_e2 * ||p_j||^2`` of *every* stream, including the common stream after
SIC, is counted as interference.

With the stacked precoder ``p = [p_1; ...; p_K; p_c]`` and full power
``||p||^2 = p_t`` every rate becomes a log-ratio of Hermitian forms::

    R_ck = log2(p^H A_k p / p^H B_k p)
    R_k  = log2(p^H B_k p / p^H D_k p)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import CsiModel
from .errors import DomainError

__all__ = [
    "PrecoderSet",
    "StackedMatrices",
    "RateReport",
    "gmi_scalar",
    "rate_common",
    "rate_private",
    "rate_report",
    "build_stacked",
    "quad_forms",
    "objective_f",
    "objective_parts",
]


@dataclass(frozen=True)
class PrecoderSet:
    """Private precoders (row ``k`` of ``p_private``) and the common precoder."""

    p_private: np.ndarray
    p_common: np.ndarray

    def __post_init__(self):
        pp = np.atleast_2d(np.asarray(self.p_private, dtype=complex))
        pc = np.asarray(self.p_common, dtype=complex).ravel()
        if pp.shape[1] != pc.shape[0]:
            raise DomainError("private and common precoders must have the same length")
        object.__setattr__(self, "p_private", pp)
        object.__setattr__(self, "p_common", pc)

    @classmethod
    def from_stacked(cls, p, k_users: int) -> "PrecoderSet":
        p = np.asarray(p, dtype=complex).ravel()
        nt = p.shape[0] // (k_users + 1)
        if nt * (k_users + 1) != p.shape[0]:
            raise DomainError(f"stacked length {p.shape[0]} is not a multiple of K+1={k_users + 1}")
        return cls(p[: k_users * nt].reshape(k_users, nt), p[k_users * nt :])

    @property
    def p_stacked(self) -> np.ndarray:
        return np.concatenate([self.p_private.ravel(), self.p_common])

    @property
    def k_users(self) -> int:
        return self.p_private.shape[0]

    @property
    def nt(self) -> int:
        return self.p_common.shape[0]

    def stream_powers(self) -> np.ndarray:
        """``[||p_1||^2, ..., ||p_K||^2, ||p_c||^2]``."""
        return np.append(np.sum(np.abs(self.p_private) ** 2, axis=1), np.sum(np.abs(self.p_common) ** 2))

    def total_power(self) -> float:
        return float(np.sum(self.stream_powers()))

    def scaled_to(self, p_t: float) -> "PrecoderSet":
        total = self.total_power()
        if total <= 0.0:
            raise DomainError("cannot rescale an all-zero precoder")
        s = np.sqrt(p_t / total)
        return PrecoderSet(self.p_private * s, self.p_common * s)


@dataclass(frozen=True)
class StackedMatrices:
    """``A_k``, ``B_k``, ``D_k`` for one user.

    ``block_sizes`` records the stream layout of the stacked vector: one
    entry per private stream followed by the common stream.
    """

    a: np.ndarray
    b: np.ndarray
    d: np.ndarray
    p_t: float
    block_sizes: tuple

    @property
    def dim(self) -> int:
        return self.a.shape[0]

    def block_slices(self) -> list[slice]:
        edges = np.concatenate([[0], np.cumsum(self.block_sizes)])
        return [slice(int(lo), int(hi)) for lo, hi in zip(edges[:-1], edges[1:])]

    def congruence(self, t: np.ndarray, block_sizes) -> "StackedMatrices":
        """Matrices of the forms ``q -> (t q)^H M (t q)``."""
        th = t.conj().T
        return StackedMatrices(th @ self.a @ t, th @ self.b @ t, th @ self.d @ t, self.p_t, tuple(block_sizes))


@dataclass(frozen=True)
class RateReport:
    """Rates in bits/s/Hz."""

    r_common_per_user: np.ndarray
    r_private: np.ndarray

    @property
    def r_common(self) -> float:
        return float(np.min(self.r_common_per_user))

    @property
    def r_sum(self) -> float:
        return self.r_common + float(np.sum(self.r_private))


def gmi_scalar(h_hat, err_var: float, input_power: float, noise_var: float) -> float:
    """Point-to-point GMI of ``y = (h_hat + e) x + n`` with Gaussian input."""
    snr = abs(h_hat) ** 2 * input_power / (err_var * input_power + noise_var)
    return float(np.log2(1.0 + snr))


def _gains(csi: CsiModel, prec: PrecoderSet):
    # gains[k, j] = |h_hat_k^H p_j|, j = 0..K-1 private, j = K common
    p_all = np.vstack([prec.p_private, prec.p_common[None, :]])
    g = np.abs(csi.h_hat.conj() @ p_all.T) ** 2
    leak = csi.sigma_e2 * prec.total_power()
    return g, leak


def rate_common(csi: CsiModel, prec: PrecoderSet, user_k: int) -> float:
    g, leak = _gains(csi, prec)
    k_users = csi.k_users
    interference = np.sum(g[user_k, :k_users]) + leak + csi.sigma_n2
    return float(np.log2(1.0 + g[user_k, k_users] / interference))


def rate_private(csi: CsiModel, prec: PrecoderSet, user_k: int) -> float:
    g, leak = _gains(csi, prec)
    k_users = csi.k_users
    others = np.sum(g[user_k, :k_users]) - g[user_k, user_k]
    interference = others + leak + csi.sigma_n2
    return float(np.log2(1.0 + g[user_k, user_k] / interference))


def rate_report(csi: CsiModel, prec: PrecoderSet) -> RateReport:
    """All rates from the direct GMI formulas."""
    k_users = csi.k_users
    rc = np.array([rate_common(csi, prec, k) for k in range(k_users)])
    rp = np.array([rate_private(csi, prec, k) for k in range(k_users)])
    return RateReport(rc, rp)


def build_stacked(csi: CsiModel, p_t: float) -> list[StackedMatrices]:
    if not p_t > 0:
        raise DomainError(f"p_t must be positive, got {p_t}")
    k_users, nt = csi.k_users, csi.nt
    n = nt * (k_users + 1)
    shift = (csi.sigma_n2 / p_t + csi.sigma_e2) * np.eye(n)
    blocks = [slice(j * nt, (j + 1) * nt) for j in range(k_users + 1)]
    out = []
    for k in range(k_users):
        hh = np.outer(csi.h_hat[k], csi.h_hat[k].conj())
        a = shift.astype(complex)
        for blk in blocks:
            a[blk, blk] += hh
        b = a.copy()
        b[blocks[-1], blocks[-1]] -= hh
        d = b.copy()
        d[blocks[k], blocks[k]] -= hh
        out.append(StackedMatrices(a, b, d, float(p_t), (nt,) * (k_users + 1)))
    return out


def quad_forms(mats: np.ndarray, p: np.ndarray) -> np.ndarray:
    """``Re(p^H M p)`` for a stack of matrices ``(m, n, n)`` and vectors ``(..., n)``."""
    mp = np.einsum("mij,...j->...mi", mats, p)
    return np.einsum("...i,...mi->...m", p.conj(), mp).real


def objective_parts(stacked: list[StackedMatrices], p: np.ndarray):
    """Per-user common and private rates (bits) from the quadratic forms.

    Accepts a single stacked vector or a batch ``(m, n)`` of them.
    """
    p = np.asarray(p, dtype=complex)
    if np.any(np.all(p == 0, axis=-1)):
        raise DomainError("objective is undefined at the zero vector")
    mats = np.stack([m for s in stacked for m in (s.a, s.b, s.d)])
    q = quad_forms(mats, p)
    qa, qb, qd = q[..., 0::3], q[..., 1::3], q[..., 2::3]
    return np.log2(qa / qb), np.log2(qb / qd)


def objective_f(stacked: list[StackedMatrices], p: np.ndarray):
    """Sum-rate objective ``sum_k R_k + min_k R_ck`` as a function of ``p``.

    Invariant under ``p -> alpha p`` for any nonzero ``alpha``.
    """
    rc, rp = objective_parts(stacked, p)
    return np.sum(rp, axis=-1) + np.min(rc, axis=-1)
