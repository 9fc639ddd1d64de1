"""Alternating SDR/CCCP sum-rate maximization and rank-one recovery.

Each iteration solves the convex sub-problem assembled around the current
anchors, then moves the anchors to the new ``b``, ``d``. Because the
previous iterate stays feasible after the move, the sub-problem value is
nondecreasing. The loop may also relinearize at an extrapolated point
along the last step when that point has a strictly larger lifted value;
this keeps the guarantee and shortens the slow crawls the plain update
shows along flat directions. Once the anchors settle the lifted solution ``X`` is turned
into a precoder by Gaussian randomization around its eigen-decomposition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import conic
from .channel import CsiModel, complex_normal, user_strength_order
from .errors import DomainError, OptimizationError
from .rates import (
    PrecoderSet,
    RateReport,
    StackedMatrices,
    build_stacked,
    objective_f,
    rate_report,
)

__all__ = [
    "SCHEMES",
    "INITS",
    "OptimizerConfig",
    "OptimizationResult",
    "StackedRun",
    "scheme_mask",
    "mrt_uniform_start",
    "anchors_at",
    "random_anchors",
    "initialize_anchors",
    "lifted_value",
    "optimize_stacked",
    "recover_vector",
    "recover_rank1",
    "run",
]

SCHEMES = ("RSMA", "NOMA", "SDMA")
INITS = ("mrt_uniform", "random")


@dataclass(frozen=True)
class OptimizerConfig:
    max_iters: int = 100
    eps: float = 1e-4
    n_random: int = 1000
    rng_seed: int = 0
    scheme: str = "RSMA"
    init: str = "mrt_uniform"
    tol: float = conic.DEFAULT_TOL
    accelerate: bool = True

    def __post_init__(self):
        if self.max_iters < 1:
            raise DomainError("max_iters must be at least 1")
        if self.n_random < 1:
            raise DomainError("n_random must be at least 1")
        if not self.eps > 0:
            raise DomainError("eps must be positive")
        if self.scheme not in SCHEMES:
            raise DomainError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.init not in INITS:
            raise DomainError(f"init must be one of {INITS}, got {self.init!r}")


@dataclass
class OptimizationResult:
    """Outcome of one optimizer run.

    ``objective_trace`` holds the sub-problem value of every iteration in
    bits/s/Hz; it lower-bounds the sum-rate of the lifted solution.
    """

    precoders: PrecoderSet
    rates: RateReport
    objective_trace: list
    iterations: int
    rank1_ratio: float
    converged: bool
    x_star: np.ndarray = field(repr=False, default=None)
    retried: bool = False


@dataclass
class StackedRun:
    """Raw result of :func:`optimize_stacked` in the stacked coordinates."""

    p: np.ndarray
    x_star: np.ndarray
    objective_trace: list
    iterations: int
    converged: bool
    retried: bool


def scheme_mask(csi: CsiModel, scheme: str) -> frozenset:
    """Stream blocks switched off by a scheme (block ``K`` is the common stream)."""
    k_users = csi.k_users
    if scheme == "RSMA":
        return frozenset()
    if scheme == "SDMA":
        return frozenset({k_users})
    if scheme == "NOMA":
        if k_users < 2:
            raise DomainError("NOMA needs at least two users")
        return frozenset({user_strength_order(csi)[-1]})
    raise DomainError(f"unknown scheme {scheme!r}")


def _unit(v, fallback):
    nrm = np.linalg.norm(v)
    return v / nrm if nrm > 0 else fallback


def mrt_uniform_start(csi: CsiModel, p_t: float, mask=frozenset()) -> np.ndarray:
    """Stacked start point: every active stream MRT-steered, equal power."""
    k_users, nt = csi.k_users, csi.nt
    e1 = np.zeros(nt, dtype=complex)
    e1[0] = 1.0
    strongest = csi.h_hat[user_strength_order(csi)[0]]
    dirs = [_unit(csi.h_hat[k], e1) for k in range(k_users)]
    dirs.append(_unit(np.sum(csi.h_hat, axis=0), _unit(strongest, e1)))
    active = [j for j in range(k_users + 1) if j not in mask]
    amp = math.sqrt(p_t / len(active))
    p = np.zeros((k_users + 1, nt), dtype=complex)
    for j in active:
        p[j] = amp * dirs[j]
    return p.ravel()


def anchors_at(stacked: list[StackedMatrices], p: np.ndarray):
    """Anchors ``ln(p^H B_k p)``, ``ln(p^H D_k p)`` at a full-power point."""
    b = np.array([np.log(np.real(np.vdot(p, s.b @ p))) for s in stacked])
    d = np.array([np.log(np.real(np.vdot(p, s.d @ p))) for s in stacked])
    return b, d


def random_anchors(csi: CsiModel, p_t: float, rng: np.random.Generator):
    lo = math.log(csi.sigma_n2)
    hi = math.log(csi.sigma_n2 + p_t * float(np.max(np.sum(np.abs(csi.h_hat) ** 2, axis=1))))
    k_users = csi.k_users
    return rng.uniform(lo, hi, k_users), rng.uniform(lo, hi, k_users)


def _streams(seed: int):
    init_ss, rand_ss = np.random.SeedSequence(int(seed)).spawn(2)
    return np.random.default_rng(init_ss), np.random.default_rng(rand_ss)


def initialize_anchors(csi: CsiModel, p_t: float, cfg: OptimizerConfig):
    if cfg.init == "random":
        return random_anchors(csi, p_t, _streams(cfg.rng_seed)[0])
    mask = scheme_mask(csi, cfg.scheme)
    return anchors_at(build_stacked(csi, p_t), mrt_uniform_start(csi, p_t, mask))


def lifted_value(stacked, x) -> float:
    """Sum-rate of a lifted point in nats, ``-inf`` outside the domain."""
    t = np.array([[np.real(np.vdot(m, x)) for m in (s.a, s.b, s.d)] for s in stacked])
    if np.any(t <= 0):
        return -math.inf
    la, lb, ld = np.log(t).T
    return float(np.sum(lb - ld) + np.min(la - lb))


def _extrapolate(stacked, x, step, beta, p_t):
    # only the diagonal stream blocks enter any trace
    xe = np.zeros_like(x)
    for blk in stacked[0].block_slices():
        m = x[blk, blk] + beta * step[blk, blk]
        lam, u = np.linalg.eigh(0.5 * (m + m.conj().T))
        xe[blk, blk] = (u * np.clip(lam, 0.0, None)) @ u.conj().T
    tr = np.real(np.trace(xe))
    return xe * (p_t / tr) if tr > 0 else None


_BETA_MIN, _BETA_MAX, _BETA_TRIES = 0.125, 64.0, 4


def _alternate(stacked, p_t, mask, anchors, cfg, backend):
    b_bar, d_bar = anchors
    trace, x_best, converged = [], None, False
    x_prev, beta = None, 1.0
    for _ in range(cfg.max_iters):
        sub = conic.assemble(stacked, b_bar, d_bar, p_t, mask)
        sol = conic.solve(sub, cfg.tol, backend)
        if not sol.usable:
            break
        trace.append(sol.objective / math.log(2.0))
        x = sol.x_star
        b_new, d_new = sol.b, sol.d
        if cfg.accelerate and x_prev is not None:
            base = lifted_value(stacked, x)
            for _ in range(_BETA_TRIES):
                xe = _extrapolate(stacked, x, x - x_prev, beta, p_t)
                if xe is not None and lifted_value(stacked, xe) > base:
                    b_new = np.log([np.real(np.vdot(s.b, xe)) for s in stacked])
                    d_new = np.log([np.real(np.vdot(s.d, xe)) for s in stacked])
                    beta = min(2.0 * beta, _BETA_MAX)
                    break
                beta = max(0.5 * beta, _BETA_MIN)
        x_best, x_prev = x, x
        change = float(np.max(np.abs(b_new - b_bar) + np.abs(d_new - d_bar)))
        b_bar, d_bar = b_new, d_new
        if change < cfg.eps:
            converged = True
            break
    return x_best, trace, converged


def optimize_stacked(
    stacked: list[StackedMatrices],
    p_t: float,
    mask,
    start,
    fallback_anchors,
    cfg: OptimizerConfig,
    backend=None,
) -> StackedRun:
    """Run the alternating loop and rank-one recovery on given matrices.

    ``start`` is a full-power point whose anchors seed the loop (ignored when
    ``cfg.init == "random"``); ``fallback_anchors`` is a zero-argument
    callable producing random anchors, used for the initial draw in random
    mode and for the single retry when the first sub-problem fails.
    """
    init_rng, rand_rng = _streams(cfg.rng_seed)
    if cfg.init == "random":
        anchors = fallback_anchors(init_rng)
    else:
        anchors = anchors_at(stacked, start)
    x, trace, converged = _alternate(stacked, p_t, mask, anchors, cfg, backend)
    retried = False
    if x is None:
        retried = True
        x, trace, converged = _alternate(stacked, p_t, mask, fallback_anchors(init_rng), cfg, backend)
        if x is None:
            raise OptimizationError("first sub-problem failed with both initializations")
    active = _active(stacked, mask)
    p, _ = recover_vector(x, stacked, cfg.n_random, rand_rng, p_t, active)
    return StackedRun(p, x, trace, len(trace), converged, retried)


def _active(stacked, mask):
    slices = stacked[0].block_slices()
    return np.concatenate([np.arange(s.start, s.stop) for j, s in enumerate(slices) if j not in mask])


def _normalize_phase(cands: np.ndarray) -> np.ndarray:
    mags = np.abs(cands)
    thresh = 1e-12 * np.max(mags, axis=1, keepdims=True)
    first = np.argmax(mags > thresh, axis=1)
    lead = cands[np.arange(cands.shape[0]), first]
    out = cands * (np.abs(lead) / np.where(lead == 0, 1.0, lead))[:, None]
    rows = np.arange(cands.shape[0])
    out[rows, first] = np.abs(lead)
    return out


def recover_vector(x_star, stacked, n_random: int, rng, p_t: float, active=None):
    """Best stacked vector among the dominant eigenvector and random draws.

    Returns the vector (scaled to ``p_t``) and its objective value. Only the
    ``active`` coordinates of ``x_star`` are decomposed; the rest stay 0.
    """
    n = x_star.shape[0]
    active = np.arange(n) if active is None else np.asarray(active)
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    xa = x_star[np.ix_(active, active)]
    lam, u = np.linalg.eigh(0.5 * (xa + xa.conj().T))
    lam = np.clip(lam, 0.0, None)
    factor = u * np.sqrt(lam)
    r = complex_normal(rng, (n_random, active.size))
    cands = np.vstack([factor[:, -1][None, :], r @ factor.T])
    norms = np.linalg.norm(cands, axis=1)
    cands = cands[norms > 0] * (np.sqrt(p_t) / norms[norms > 0])[:, None]
    cands = _normalize_phase(cands)
    full = np.zeros((cands.shape[0], n), dtype=complex)
    full[:, active] = cands
    values = objective_f(stacked, full)
    best = int(np.argmax(values))
    return full[best], float(values[best])


def recover_rank1(x_star, stacked, n_random: int, rng_seed: int, p_t: float, active=None) -> PrecoderSet:
    p, _ = recover_vector(x_star, stacked, n_random, np.random.default_rng(rng_seed), p_t, active)
    return PrecoderSet.from_stacked(p, len(stacked))


def rank1_ratio(x: np.ndarray) -> float:
    lam = np.linalg.eigvalsh(0.5 * (x + x.conj().T))
    return float(lam[-1] / np.sum(lam))


def run(csi: CsiModel, p_t: float, cfg: OptimizerConfig, backend=None) -> OptimizationResult:
    stacked = build_stacked(csi, p_t)
    mask = scheme_mask(csi, cfg.scheme)
    raw = optimize_stacked(
        stacked,
        p_t,
        mask,
        mrt_uniform_start(csi, p_t, mask),
        lambda rng: random_anchors(csi, p_t, rng),
        cfg,
        backend,
    )
    prec = PrecoderSet.from_stacked(raw.p, csi.k_users)
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
