"""One convexified sub-problem of the alternating SDR/CCCP loop.

Given linearization anchors ``b_bar``, ``d_bar`` the sub-problem reads::

    maximize    sum_k (c_k - d_k) + l_c
    subject to  a_k - b_k >= l_c
                tr(A_k X) >= exp(a_k),   tr(B_k X) >= exp(c_k)
                tr(B_k X) <= exp(b_bar_k) (b_k - b_bar_k + 1)
                tr(D_k X) <= exp(d_bar_k) (d_k - d_bar_k + 1)
                X >= 0,  tr(X) = p_t,  masked blocks of X = 0

The trace normalization fixes the otherwise free scale of ``X``. Masked
blocks are removed from the problem before it reaches the solver.

Complex Hermitian data is handed to the solver through the real embedding
``M -> [[Re M, -Im M], [Im M, Re M]]``, under which
``tr(M X) = tr(embed(M) embed(X)) / 2`` for Hermitian ``M`` and ``X``.
"""

from __future__ import annotations

import hashlib
import threading
import warnings
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .rates import StackedMatrices

__all__ = [
    "ConicSubproblem",
    "SubproblemSolution",
    "assemble",
    "real_embed",
    "real_unembed",
    "solve",
    "CvxpyBackend",
    "exact_value",
    "DEFAULT_TOL",
]

DEFAULT_TOL = 1e-7

OPTIMAL = "optimal"
INACCURATE = "inaccurate"
INFEASIBLE = "infeasible"
FAILED = "failed"


@dataclass(frozen=True)
class ConicSubproblem:
    """An assembled sub-problem.

    ``mask`` holds 0-based stream-block indices forced to zero: ``0..K-1``
    are the private streams and ``K`` is the common stream.
    """

    stacked: tuple
    anchors_b: np.ndarray
    anchors_d: np.ndarray
    p_t: float
    mask: frozenset = field(default_factory=frozenset)

    @property
    def k_users(self) -> int:
        return len(self.stacked)

    @property
    def dim(self) -> int:
        return self.stacked[0].dim

    def active_indices(self) -> np.ndarray:
        """Coordinates of the stacked vector that are not masked out."""
        slices = self.stacked[0].block_slices()
        keep = [np.arange(s.start, s.stop) for j, s in enumerate(slices) if j not in self.mask]
        return np.concatenate(keep) if keep else np.zeros(0, dtype=int)


@dataclass
class SubproblemSolution:
    x_star: np.ndarray | None
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray
    l_c: float
    objective: float
    solver_status: str
    solver_objective: float = float("nan")

    @property
    def usable(self) -> bool:
        return self.solver_status in (OPTIMAL, INACCURATE) and self.x_star is not None


def assemble(stacked, anchors_b, anchors_d, p_t: float, mask=()) -> ConicSubproblem:
    stacked = tuple(stacked)
    k_users = len(stacked)
    anchors_b = np.asarray(anchors_b, dtype=float).copy()
    anchors_d = np.asarray(anchors_d, dtype=float).copy()
    if anchors_b.shape != (k_users,) or anchors_d.shape != (k_users,):
        raise DomainError("need one b and one d anchor per user")
    if not (np.all(np.isfinite(anchors_b)) and np.all(np.isfinite(anchors_d))):
        raise DomainError("anchors must be finite")
    n_blocks = len(stacked[0].block_sizes)
    mask = frozenset(int(j) for j in mask)
    if not mask <= set(range(n_blocks)):
        raise DomainError(f"mask {sorted(mask)} outside block range 0..{n_blocks - 1}")
    if len(mask) == n_blocks:
        raise DomainError("mask removes every stream")
    if not p_t > 0:
        raise DomainError("p_t must be positive")
    anchors_b.setflags(write=False)
    anchors_d.setflags(write=False)
    return ConicSubproblem(stacked, anchors_b, anchors_d, float(p_t), mask)


def real_embed(m: np.ndarray, atol: float = 1e-10) -> np.ndarray:
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DomainError("expected a square matrix")
    scale = max(1.0, float(np.max(np.abs(m)))) if m.size else 1.0
    if np.max(np.abs(m - m.conj().T), initial=0.0) > atol * scale:
        raise DomainError("matrix is not Hermitian")
    re, im = m.real, m.imag
    return np.block([[re, -im], [im, re]])


def real_unembed(m_r: np.ndarray) -> np.ndarray:
    """Inverse of :func:`real_embed`, averaging the duplicated blocks."""
    n = m_r.shape[0] // 2
    re = 0.5 * (m_r[:n, :n] + m_r[n:, n:])
    im = 0.5 * (m_r[n:, :n] - m_r[:n, n:])
    x = re + 1j * im
    return 0.5 * (x + x.conj().T)


def _traces(sub: ConicSubproblem, x: np.ndarray):
    ta = np.array([np.real(np.vdot(s.a, x)) for s in sub.stacked])
    tb = np.array([np.real(np.vdot(s.b, x)) for s in sub.stacked])
    td = np.array([np.real(np.vdot(s.d, x)) for s in sub.stacked])
    return ta, tb, td


def exact_value(sub: ConicSubproblem, x: np.ndarray):
    """Best auxiliaries and objective value for a fixed ``X``.

    ``a``, ``c`` sit on their exponential bounds, ``b``, ``d`` on their
    linearized bounds; ``b`` is the smallest feasible value, which makes the
    anchor update well defined when a user does not attain the min.
    """
    ta, tb, td = _traces(sub, x)
    eb, ed = np.exp(-sub.anchors_b), np.exp(-sub.anchors_d)
    a = np.log(ta)
    c = np.log(tb)
    b = sub.anchors_b - 1.0 + tb * eb
    d = sub.anchors_d - 1.0 + td * ed
    l_c = float(np.min(a - b))
    return a, b, c, d, l_c, float(np.sum(c - d) + l_c)


class CvxpyBackend:
    """Solve sub-problems with cvxpy and the Clarabel interior-point solver.

    The compiled problem depends on the matrices and the mask only; anchors
    enter as parameters, so successive CCCP iterations on one channel skip
    recompilation. Compiled problems are cached per thread.
    """

    def __init__(self, solver: str = "CLARABEL", cache_size: int = 8):
        self.solver = solver
        self.cache_size = cache_size
        self._local = threading.local()

    def _cache(self) -> OrderedDict:
        if not hasattr(self._local, "cache"):
            self._local.cache = OrderedDict()
        return self._local.cache

    @staticmethod
    def _key(sub: ConicSubproblem) -> str:
        h = hashlib.sha1()
        for s in sub.stacked:
            for m in (s.a, s.b, s.d):
                h.update(np.ascontiguousarray(m).tobytes())
        h.update(repr((sorted(sub.mask), sub.p_t, sub.stacked[0].block_sizes)).encode())
        return h.hexdigest()

    def _template(self, sub: ConicSubproblem):
        cache = self._cache()
        key = self._key(sub)
        if key in cache:
            cache.move_to_end(key)
            return cache[key]
        tpl = self._build(sub)
        cache[key] = tpl
        while len(cache) > self.cache_size:
            cache.popitem(last=False)
        return tpl

    @staticmethod
    def _build(sub: ConicSubproblem):
        import cvxpy as cp

        k_users = sub.k_users
        idx = sub.active_indices()
        n = idx.size
        x = cp.Variable((2 * n, 2 * n), symmetric=True)
        a, b, c, d = (cp.Variable(k_users) for _ in range(4))
        l_c = cp.Variable()
        eb, cb, ed, cd = (cp.Parameter(k_users) for _ in range(4))

        def tr(m):
            m_r = real_embed(m[np.ix_(idx, idx)])
            return 0.5 * cp.sum(cp.multiply(m_r, x))

        cons = [
            x >> 0,
            0.5 * cp.trace(x) == sub.p_t,
            x[:n, :n] == x[n:, n:],
            x[:n, n:] == -x[n:, :n],
        ]
        for k, s in enumerate(sub.stacked):
            t_a, t_b, t_d = tr(s.a), tr(s.b), tr(s.d)
            cons += [
                a[k] - b[k] >= l_c,
                cp.exp(a[k]) <= t_a,
                cp.exp(c[k]) <= t_b,
                t_b <= cp.multiply(eb[k], b[k]) + cb[k],
                t_d <= cp.multiply(ed[k], d[k]) + cd[k],
            ]
        prob = cp.Problem(cp.Maximize(cp.sum(c - d) + l_c), cons)
        return prob, x, (eb, cb, ed, cd), idx

    def solve(self, sub: ConicSubproblem, tol: float = DEFAULT_TOL) -> SubproblemSolution:
        import cvxpy as cp

        prob, x, (eb, cb, ed, cd), idx = self._template(sub)
        e_b, e_d = np.exp(sub.anchors_b), np.exp(sub.anchors_d)
        eb.value, cb.value = e_b, e_b * (1.0 - sub.anchors_b)
        ed.value, cd.value = e_d, e_d * (1.0 - sub.anchors_d)
        opts = {}
        if self.solver == "CLARABEL":
            opts = dict(tol_gap_abs=tol, tol_gap_rel=tol, tol_feas=tol, max_iter=200)
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                # no solver-object reuse: a data update takes a slightly
                # different numerical path, which breaks bitwise determinism
                prob.solve(solver=self.solver, warm_start=False, **opts)
        except (cp.error.SolverError, ArithmeticError, ValueError):
            return _failed(sub.k_users, FAILED)
        status = {
            cp.OPTIMAL: OPTIMAL,
            cp.OPTIMAL_INACCURATE: INACCURATE,
            cp.INFEASIBLE: INFEASIBLE,
            cp.INFEASIBLE_INACCURATE: INFEASIBLE,
        }.get(prob.status, FAILED)
        if status not in (OPTIMAL, INACCURATE) or x.value is None:
            return _failed(sub.k_users, status)
        x_full = np.zeros((sub.dim, sub.dim), dtype=complex)
        x_full[np.ix_(idx, idx)] = real_unembed(x.value)
        a, b, c, d, l_c, obj = exact_value(sub, x_full)
        if not np.isfinite(obj):
            return _failed(sub.k_users, FAILED)
        return SubproblemSolution(x_full, a, b, c, d, l_c, obj, status, float(prob.value))


def _failed(k_users, status):
    nan = np.full(k_users, np.nan)
    return SubproblemSolution(None, nan, nan, nan, nan, np.nan, np.nan, status)


_default_backend = CvxpyBackend()


def solve(sub: ConicSubproblem, tol: float = DEFAULT_TOL, backend=None) -> SubproblemSolution:
    """Solve ``sub``; failures come back as a status, never as an exception."""
    return (backend or _default_backend).solve(sub, tol)
