"""Spectral efficiencies of both hops and power-allocation scaling.

The relay decodes and forwards in two equal half-duplex phases, so the
end-to-end figure is half the smaller hop rate. Unit-covariance symbols are
assumed throughout; all transmit power lives in the digital stages and the
per-user allocation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .beamforming import HbfStages


class NumericalFailure(ArithmeticError):
    """A covariance that must be positive definite was not."""


class AllZeroAlloc(ValueError):
    """Power scaling requested for an allocation with no power anywhere."""


class ZeroPrecoder(ValueError):
    """Digital precoder has zero total gain, equal-power scaling undefined."""


@dataclass
class PowerAlloc:
    """Per-user transmit powers in mW; P = diag(sqrt(p))."""

    p: np.ndarray

    def __post_init__(self):
        self.p = np.atleast_1d(np.asarray(self.p, dtype=float))
        if np.any(self.p < 0.0) or not np.all(np.isfinite(self.p)):
            raise ValueError("powers must be finite and nonnegative")

    @property
    def num_users(self) -> int:
        return self.p.size


@dataclass
class RateReport:
    r1: float
    r2: float
    r_total: float
    sinr: np.ndarray


def rate_first_link(stages: HbfStages, sigma2_mw: float) -> float:
    """Multiplexed rate of the BS->UAV hop in bps/Hz.

    log2 det(I + Q^-1 S) with S the combined stream covariance and Q the
    combined noise covariance; evaluated as a difference of log-dets so the
    combiner's non-orthogonality is handled exactly.
    """
    m = stages.b_ur @ stages.eff1 @ stages.b_b
    s = m @ m.conj().T
    w = stages.b_ur @ stages.f_ur
    q = sigma2_mw * (w @ w.conj().T)
    q = 0.5 * (q + q.conj().T)
    total = q + s
    total = 0.5 * (total + total.conj().T)
    sign_q, logdet_q = np.linalg.slogdet(q)
    sign_t, logdet_t = np.linalg.slogdet(total)
    if sign_q.real <= 0.0 or sign_t.real <= 0.0 or not (
            np.isfinite(logdet_q) and np.isfinite(logdet_t)):
        raise NumericalFailure("noise covariance lost positive definiteness")
    return float((logdet_t - logdet_q) / math.log(2.0))


def coupling_matrix(stages: HbfStages) -> np.ndarray:
    """K x K map from stream inputs to user observations, h_k^T F b_j."""
    return stages.eff2 @ stages.b_ut


def sinr_per_user(stages: HbfStages, alloc: PowerAlloc, sigma2_mw: float
                  ) -> np.ndarray:
    """Per-user SINR on the UAV->users hop for a given allocation."""
    c = coupling_matrix(stages)
    if alloc.num_users != c.shape[0]:
        raise ValueError("allocation size does not match the user count")
    gains = np.abs(c) ** 2
    signal = alloc.p * np.diag(gains)
    off_diag = gains.copy()
    np.fill_diagonal(off_diag, 0.0)
    interference = off_diag @ alloc.p
    return signal / (interference + sigma2_mw)


def interference_split(stages: HbfStages, alloc: PowerAlloc,
                       group_sizes: list[int]) -> tuple[np.ndarray, np.ndarray]:
    """Interference power split into own-group and other-group parts.

    The two parts partition the off-diagonal coupling sum exactly.
    """
    c = coupling_matrix(stages)
    gains = np.abs(c) ** 2
    k = c.shape[0]
    group_of = np.repeat(np.arange(len(group_sizes)), group_sizes)
    if group_of.size != k:
        raise ValueError("group sizes do not sum to the user count")
    intra = np.zeros(k)
    inter = np.zeros(k)
    for i in range(k):
        same = group_of == group_of[i]
        same_i = same.copy()
        same_i[i] = False
        intra[i] = gains[i, same_i] @ alloc.p[same_i]
        inter[i] = gains[i, ~same] @ alloc.p[~same]
    return intra, inter


def rate_second_link(stages: HbfStages, alloc: PowerAlloc, sigma2_mw: float
                     ) -> float:
    """Sum rate of the UAV->users hop in bps/Hz."""
    sinr = sinr_per_user(stages, alloc, sigma2_mw)
    return float(np.sum(np.log2(1.0 + sinr)))


def precoder_gains(b_ut: np.ndarray) -> np.ndarray:
    """Column energies b_k^H b_k of the digital precoder."""
    return np.sum(np.abs(b_ut) ** 2, axis=0)


def kappa(p_hat: np.ndarray, b_ut: np.ndarray, p_t_mw: float) -> float:
    """Scale factor kappa making the allocation meet the power budget
    with equality: sum_k (kappa^2 p_hat_k) b_k^H b_k = P_T."""
    p_hat = np.asarray(p_hat, dtype=float)
    if np.any(p_hat < 0.0):
        raise ValueError("relative powers must be nonnegative")
    weighted = float(p_hat @ precoder_gains(b_ut))
    if weighted <= 0.0:
        raise AllZeroAlloc("allocation carries no power on any active column")
    return math.sqrt(p_t_mw / weighted)


def scale_alloc(p_hat: np.ndarray, b_ut: np.ndarray, p_t_mw: float
                ) -> PowerAlloc:
    """Budget-normalized allocation kappa^2 * p_hat."""
    k = kappa(p_hat, b_ut, p_t_mw)
    return PowerAlloc(k ** 2 * np.asarray(p_hat, dtype=float))


def equal_power_eps(b_ut: np.ndarray, p_t_mw: float) -> float:
    """Uniform power level eps with sum_k eps^2 b_k^H b_k = P_T."""
    total = float(np.sum(precoder_gains(b_ut)))
    if total <= 0.0:
        raise ZeroPrecoder("digital precoder has zero total gain")
    return math.sqrt(p_t_mw / total)


def equal_alloc(b_ut: np.ndarray, p_t_mw: float) -> PowerAlloc:
    eps = equal_power_eps(b_ut, p_t_mw)
    return PowerAlloc(np.full(b_ut.shape[1], eps ** 2))


def rate_report(stages: HbfStages, alloc: PowerAlloc, sigma2_mw: float
                ) -> RateReport:
    """Both hop rates and the half-duplex end-to-end rate."""
    r1 = rate_first_link(stages, sigma2_mw)
    sinr = sinr_per_user(stages, alloc, sigma2_mw)
    r2 = float(np.sum(np.log2(1.0 + sinr)))
    return RateReport(r1=r1, r2=r2, r_total=0.5 * min(r1, r2), sinr=sinr)
