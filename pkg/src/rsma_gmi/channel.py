"""Channel estimates and estimation-error draws for the MISO downlink.

Every user sees ``h_k = h_hat_k + e_k`` where the estimate and the error are
independent circularly-symmetric complex Gaussian vectors with per-entry
variances ``1 - sigma_e2`` and ``sigma_e2``. The error covariance is always
``sigma_e2 * I`` so only the scalar is stored.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace

import numpy as np

from .errors import DomainError

__all__ = [
    "CsiModel",
    "ChannelRealization",
    "complex_normal",
    "draw_csi",
    "draw_error",
    "user_strength_order",
    "trial_seed",
]


@dataclass(frozen=True)
class CsiModel:
    """Channel knowledge shared by the base station and the users.

    Attributes
    ----------
    h_hat : ndarray, shape (k_users, nt), complex
        Row ``k`` is the estimated channel of user ``k``.
    sigma_e2 : float
        Per-entry variance of the estimation error, in ``[0, 1)``.
    sigma_n2 : float
        Receiver noise variance, strictly positive.
    """

    h_hat: np.ndarray
    sigma_e2: float
    sigma_n2: float

    def __post_init__(self):
        h = np.asarray(self.h_hat, dtype=complex)
        if h.ndim != 2 or h.shape[0] < 1 or h.shape[1] < 1:
            raise DomainError(f"h_hat must be a (k_users, nt) array, got shape {h.shape}")
        _check_variances(self.sigma_e2, self.sigma_n2)
        h = h.copy()
        h.setflags(write=False)
        object.__setattr__(self, "h_hat", h)
        object.__setattr__(self, "sigma_e2", float(self.sigma_e2))
        object.__setattr__(self, "sigma_n2", float(self.sigma_n2))

    @property
    def nt(self) -> int:
        return self.h_hat.shape[1]

    @property
    def k_users(self) -> int:
        return self.h_hat.shape[0]

    def with_sigma_e2(self, sigma_e2: float) -> "CsiModel":
        """Same estimates, different assumed error variance."""
        return replace(self, sigma_e2=sigma_e2)

    def fingerprint(self) -> str:
        """Stable hash of the model, used to check that runs share a channel."""
        m = hashlib.sha256()
        m.update(np.ascontiguousarray(self.h_hat).tobytes())
        m.update(np.array([self.sigma_e2, self.sigma_n2]).tobytes())
        return m.hexdigest()[:16]


@dataclass(frozen=True)
class ChannelRealization:
    """A true channel draw ``h_true = csi.h_hat + error``."""

    h_true: np.ndarray
    csi: CsiModel

    @property
    def error(self) -> np.ndarray:
        return self.h_true - self.csi.h_hat


def _check_variances(sigma_e2, sigma_n2):
    if not np.isfinite(sigma_e2) or not 0.0 <= sigma_e2 < 1.0:
        raise DomainError(f"sigma_e2 must lie in [0, 1), got {sigma_e2}")
    if not np.isfinite(sigma_n2) or sigma_n2 <= 0.0:
        raise DomainError(f"sigma_n2 must be positive, got {sigma_n2}")


def complex_normal(rng: np.random.Generator, shape, variance: float = 1.0) -> np.ndarray:
    """Circularly-symmetric complex Gaussian samples with the given variance."""
    x = rng.standard_normal(shape)
    y = rng.standard_normal(shape)
    return np.sqrt(variance / 2.0) * (x + 1j * y)


def draw_csi(nt: int, k_users: int, sigma_e2: float, sigma_n2: float, rng_seed: int) -> CsiModel:
    """Draw channel estimates with per-entry variance ``1 - sigma_e2``.

    The underlying unit-variance draw depends only on the seed, so calls
    that differ only in ``sigma_e2`` return scaled copies of one another.
    """
    if int(nt) < 1 or int(k_users) < 1:
        raise DomainError("nt and k_users must be positive")
    _check_variances(sigma_e2, sigma_n2)
    rng = np.random.default_rng(rng_seed)
    h_hat = complex_normal(rng, (int(k_users), int(nt)), 1.0 - sigma_e2)
    return CsiModel(h_hat, sigma_e2, sigma_n2)


def draw_error(csi: CsiModel, rng_seed: int) -> ChannelRealization:
    rng = np.random.default_rng(rng_seed)
    e = complex_normal(rng, csi.h_hat.shape, csi.sigma_e2)
    return ChannelRealization(csi.h_hat + e, csi)


def user_strength_order(csi: CsiModel) -> list[int]:
    """User indices sorted by descending ``||h_hat_k||^2``; ties keep index order."""
    gains = np.sum(np.abs(csi.h_hat) ** 2, axis=1)
    return [int(k) for k in np.argsort(-gains, kind="stable")]


def trial_seed(master_seed: int, *counters: int) -> int:
    """Derive an independent 63-bit seed from a master seed and counters.

    The counters are mixed in as a spawn key, so the derived seed does not
    depend on the order in which trials are generated.
    """
    ss = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(c) for c in counters))
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))
