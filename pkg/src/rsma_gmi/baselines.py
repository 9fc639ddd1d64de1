"""Reference schemes: OMA, RSMA with fixed ZF/MRT private directions, and
the variants where the transmitter ignores the estimation error.

Fixed-direction RSMA reuses the general optimizer. Writing
``p_k = sqrt(P_k) v_k`` makes the stacked vector a linear image ``p = T q``
of ``q = [sqrt(P_1), ..., sqrt(P_K), p_c]`` with
``T = blockdiag(v_1, ..., v_K, I)``, so every rate is again a ratio of
Hermitian forms in ``q`` with matrices ``T^H A_k T`` etc. Since the ``v_k``
have unit norm, ``||q|| = ||p||`` and the power normalization carries over.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import block_diag

from .channel import CsiModel
from .errors import DomainError
from .optimizer import (
    OptimizationResult,
    OptimizerConfig,
    optimize_stacked,
    random_anchors,
    rank1_ratio,
    run,
    scheme_mask,
)
from .rates import PrecoderSet, RateReport, StackedMatrices, build_stacked, rate_report

__all__ = [
    "ALL_SCHEMES",
    "FixedDirections",
    "zf_directions",
    "mrt_directions",
    "reduced_stacked",
    "optimize_fixed_directions",
    "oma_rate",
    "SchemeOutcome",
    "run_scheme",
    "no_info_variant",
]

ALL_SCHEMES = ("RSMA", "NOMA", "SDMA", "OMA", "RSMA_ZF", "RSMA_MRT")


@dataclass(frozen=True)
class FixedDirections:
    v_private: np.ndarray
    kind: str

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.v_private, dtype=complex))
        if not np.allclose(np.linalg.norm(v, axis=1), 1.0, atol=1e-12):
            raise DomainError("fixed directions must have unit norm")
        object.__setattr__(self, "v_private", v)


def zf_directions(csi: CsiModel) -> FixedDirections:
    """Normalized columns of the right pseudo-inverse of ``H_hat``."""
    h = csi.h_hat.conj()  # row k is h_hat_k^H
    k_users, nt = h.shape
    if k_users > nt:
        raise DomainError(f"zero-forcing needs K <= Nt, got K={k_users}, Nt={nt}")
    rank = np.linalg.matrix_rank(h)
    if rank < k_users:
        raise DomainError(f"H_hat is rank deficient: rank {rank} < K={k_users}")
    w = h.conj().T @ np.linalg.inv(h @ h.conj().T)
    v = (w / np.linalg.norm(w, axis=0)).T
    return FixedDirections(v, "ZF")


def mrt_directions(csi: CsiModel) -> FixedDirections:
    norms = np.linalg.norm(csi.h_hat, axis=1)
    if np.any(norms == 0):
        raise DomainError(f"MRT undefined for zero channel of user(s) {np.flatnonzero(norms == 0).tolist()}")
    return FixedDirections(csi.h_hat / norms[:, None], "MRT")


def _direction_map(dirs: FixedDirections) -> np.ndarray:
    nt = dirs.v_private.shape[1]
    return block_diag(*[v[:, None] for v in dirs.v_private], np.eye(nt))


def reduced_stacked(csi: CsiModel, dirs: FixedDirections, p_t: float) -> tuple[list[StackedMatrices], np.ndarray]:
    """Matrices of the reduced problem in ``q`` and the map ``T``."""
    t = _direction_map(dirs)
    sizes = (1,) * csi.k_users + (csi.nt,)
    return [s.congruence(t, sizes) for s in build_stacked(csi, p_t)], t


def _reduced_start(csi: CsiModel, p_t: float, mask) -> np.ndarray:
    k_users, nt = csi.k_users, csi.nt
    common = np.sum(csi.h_hat, axis=0)
    if np.linalg.norm(common) == 0:
        common = np.eye(nt, dtype=complex)[0]
    active = [j for j in range(k_users + 1) if j not in mask]
    amp = math.sqrt(p_t / len(active))
    q = np.zeros(k_users + nt, dtype=complex)
    for j in active:
        if j < k_users:
            q[j] = amp
        else:
            q[k_users:] = amp * common / np.linalg.norm(common)
    return q


def optimize_fixed_directions(
    csi: CsiModel, dirs: FixedDirections, p_t: float, cfg: OptimizerConfig, backend=None
) -> OptimizationResult:
    stacked, _ = reduced_stacked(csi, dirs, p_t)
    mask = scheme_mask(csi, cfg.scheme)
    raw = optimize_stacked(
        stacked,
        p_t,
        mask,
        _reduced_start(csi, p_t, mask),
        lambda rng: random_anchors(csi, p_t, rng),
        cfg,
        backend,
    )
    k_users = csi.k_users
    amps = np.abs(raw.p[:k_users])
    prec = PrecoderSet(amps[:, None] * dirs.v_private, raw.p[k_users:])
    return OptimizationResult(
        precoders=prec,
        rates=rate_report(csi, prec),
        objective_trace=raw.objective_trace,
        iterations=raw.iterations,
        rank1_ratio=rank1_ratio(raw.x_star),
        converged=raw.converged,
        x_star=raw.x_star,
        retried=raw.retried,
    )


def oma_rate(csi: CsiModel, p_t: float) -> RateReport:
    """Equal time sharing, full power on one MRT-steered private stream per slot."""
    if p_t < 0:
        raise DomainError("p_t must be nonnegative")
    gains = np.sum(np.abs(csi.h_hat) ** 2, axis=1)
    gmi = np.log2(1.0 + p_t * gains / (csi.sigma_e2 * p_t + csi.sigma_n2))
    k_users = csi.k_users
    return RateReport(np.zeros(k_users), gmi / k_users)


@dataclass
class SchemeOutcome:
    rates: RateReport
    iterations: int
    converged: bool
    precoders: PrecoderSet | None = None


def run_scheme(
    csi: CsiModel, p_t: float, cfg: OptimizerConfig, scheme: str, no_info: bool = False, backend=None
) -> SchemeOutcome:
    """Design precoders for ``scheme`` and evaluate them under the true error.

    With ``no_info`` the design step assumes ``sigma_e2 = 0``.
    """
    if scheme not in ALL_SCHEMES:
        raise DomainError(f"unknown scheme {scheme!r}; expected one of {ALL_SCHEMES}")
    if scheme == "OMA":
        # fixed precoder and power: the design ignores sigma_e2 either way
        return SchemeOutcome(oma_rate(csi, p_t), 0, True)
    design = csi.with_sigma_e2(0.0) if no_info else csi
    if scheme in ("RSMA_ZF", "RSMA_MRT"):
        dirs = zf_directions(design) if scheme == "RSMA_ZF" else mrt_directions(design)
        res = optimize_fixed_directions(design, dirs, p_t, _with_scheme(cfg, "RSMA"), backend)
    else:
        res = run(design, p_t, _with_scheme(cfg, scheme), backend)
    return SchemeOutcome(rate_report(csi, res.precoders), res.iterations, res.converged, res.precoders)


def _with_scheme(cfg: OptimizerConfig, scheme: str) -> OptimizerConfig:
    return cfg if cfg.scheme == scheme else replace(cfg, scheme=scheme)


def no_info_variant(csi: CsiModel, p_t: float, cfg: OptimizerConfig, scheme: str, backend=None) -> RateReport:
    return run_scheme(csi, p_t, cfg, scheme, no_info=True, backend=backend).rates
