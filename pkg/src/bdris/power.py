"""MRT precoding, Monte-Carlo hardening-bound statistics, and max-min power control.

The downlink SINR lower bound for user k only needs two ergodic quantities,
a_k = |E{g_k^H w_k}|^2 and b_ki = E{|g_k^H w_i|^2}; both are estimated by
simulating the full per-coherence-block chain (channel draw, uplink training,
LMMSE estimate, MRT precoder) many times. Power control then maximizes the
minimum SINR by bisecting on a target and checking feasibility through a
balanced K x K linear solve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateUserError, InvalidStatisticsError, NumericError
from .estimation import (
    PilotBook,
    StackedTrainingMatrix,
    build_lmmse,
    simulate_uplink_training,
)
from .geometry import BsRisChannel, UserChannelModel, sample_channels
from .ris_opt import RisMatrix


def mrt_precoder(
    channel: BsRisChannel,
    theta: RisMatrix | np.ndarray,
    estimate: np.ndarray,
    phi: np.ndarray,
) -> np.ndarray:
    """Maximum ratio transmission towards the estimated composite channel.

    w = H Theta hhat / sqrt(tr(H Theta Phi Theta^H H^H)), so E{||w||^2} = 1
    when hhat ~ CN(0, Phi).
    """
    t = theta.theta if isinstance(theta, RisMatrix) else np.asarray(theta)
    effective = channel.h @ t  # (M, N)
    normalizer = float(np.sum((effective @ phi) * effective.conj()).real)
    if normalizer <= 0:
        raise DegenerateUserError("precoder normalizer tr(H Theta Phi Theta^H H^H) <= 0")
    return (effective @ estimate) / math.sqrt(normalizer)


@dataclass(frozen=True)
class LinkScenario:
    """Everything needed to simulate one coherence block of the downlink chain."""

    channel: BsRisChannel
    users: tuple[UserChannelModel, ...]
    pilots: PilotBook
    stacked: StackedTrainingMatrix
    uplink_power: float
    uplink_noise: float
    downlink_noise: float
    perfect_csi: bool = False

    @property
    def num_users(self) -> int:
        return len(self.users)


@dataclass(frozen=True)
class LinkStatistics:
    """Hardening-bound coefficients with their Monte-Carlo standard errors."""

    a: np.ndarray  # (K,) |E{g_k^H w_k}|^2
    b: np.ndarray  # (K, K) E{|g_k^H w_i|^2}, self term raw
    noise_power: float
    mc_count: int
    a_se: np.ndarray | None = None
    b_se: np.ndarray | None = None

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        b = np.asarray(self.b, dtype=float)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        if np.any(a < 0) or np.any(b < 0):
            raise InvalidStatisticsError("hardening coefficients must be non-negative")
        se = np.zeros_like(a) if self.a_se is None else np.asarray(self.a_se)
        slack = np.maximum(se, 1e-12 * np.maximum(a, 1.0))
        if np.any(np.diag(b) < a - slack):
            raise InvalidStatisticsError("b_kk < a_k beyond Monte-Carlo error (Jensen)")

    @property
    def num_users(self) -> int:
        return self.a.shape[0]


def estimate_link_statistics(
    scenario: LinkScenario,
    theta: RisMatrix,
    mc_count: int,
    rng: np.random.Generator,
) -> LinkStatistics:
    """Monte-Carlo estimate of the hardening-bound coefficients for a fixed Theta.

    Each realization draws fresh channels and training noise on its own
    sub-stream (deterministically derived from the parent stream), runs the
    estimator, forms all K precoders and accumulates the K x K inner products
    g_k^H w_i. With perfect_csi the estimate is the true channel and the
    precoder normalizer conditions on it (w = g / ||g||).
    """
    if mc_count < 2:
        raise ValueError("mc_count must be >= 2")
    k = scenario.num_users
    t = theta.theta
    effective = scenario.channel.h @ t  # (M, N)

    estimator = None
    normalizers = None
    if not scenario.perfect_csi:
        estimator = build_lmmse(
            scenario.stacked,
            list(scenario.users),
            scenario.pilots,
            scenario.uplink_power,
            scenario.uplink_noise,
        )
        normalizers = np.array(
            [
                np.sum((effective @ estimator.estimate_cov[i]) * effective.conj()).real
                for i in range(k)
            ]
        )
        if np.any(normalizers <= 0):
            raise DegenerateUserError("a user's estimated composite channel has no energy")
        normalizers = np.sqrt(normalizers)

    z = np.empty((mc_count, k, k), dtype=complex)
    streams = rng.spawn(mc_count)
    for trial, sub in enumerate(streams):
        h = sample_channels(list(scenario.users), sub)  # (K, N)
        g = effective @ h.T  # (M, K), column k = composite channel of user k
        if scenario.perfect_csi:
            norms = np.linalg.norm(g, axis=0)
            if np.any(norms <= 0):
                raise DegenerateUserError("zero composite channel in perfect-CSI draw")
            w = g / norms[None, :]
        else:
            y = simulate_uplink_training(
                scenario.stacked,
                h,
                scenario.pilots,
                scenario.uplink_power,
                scenario.uplink_noise,
                sub,
            )
            hhat = np.stack([estimator.filters[i] @ y[i] for i in range(k)])
            w = (effective @ hhat.T) / normalizers[None, :]
        z[trial] = g.conj().T @ w  # entry (k, i) = g_k^H w_i

    mean_diag = np.einsum("tkk->k", z) / mc_count
    a = np.abs(mean_diag) ** 2
    b = np.mean(np.abs(z) ** 2, axis=0)
    # delta-method standard error for |mean|^2 and plain one for the second moments
    diag_var = np.var(np.einsum("tkk->tk", z).real, axis=0, ddof=1) + np.var(
        np.einsum("tkk->tk", z).imag, axis=0, ddof=1
    )
    a_se = 2 * np.abs(mean_diag) * np.sqrt(diag_var / mc_count)
    b_se = np.std(np.abs(z) ** 2, axis=0, ddof=1) / math.sqrt(mc_count)
    return LinkStatistics(a, b, scenario.downlink_noise, mc_count, a_se, b_se)


def sinr_lower_bound(powers: np.ndarray, stats: LinkStatistics, user: int) -> float:
    """Hardening-bound SINR of one user under the given power allocation."""
    powers = np.asarray(powers, dtype=float)
    if np.any(powers < 0):
        raise ValueError("powers must be non-negative")
    signal = powers[user] * stats.a[user]
    denom = float(powers @ stats.b[user]) - signal + stats.noise_power
    if denom <= 0:
        raise InvalidStatisticsError(f"non-positive SINR denominator for user {user}")
    return signal / denom


def se_lower_bound(sinr: float, tau_up: int, tau: int) -> float:
    """Net spectral efficiency in bits/s/Hz after the training overhead."""
    if not 0 <= tau_up < tau:
        raise ValueError(f"need 0 <= tau_up < tau, got {tau_up}, {tau}")
    return (1.0 - tau_up / tau) * math.log2(1.0 + sinr)


def check_feasibility(
    gamma: float, stats: LinkStatistics, total_power: float
) -> np.ndarray | None:
    """Powers meeting SINR target `gamma` for every user, or None if infeasible.

    At a common target the SINR constraints hold with equality, which turns
    feasibility into the K x K balanced solve
    (diag(a) - gamma * B') rho = gamma sigma^2 1 with B' the b matrix after
    subtracting a_k on the diagonal; the target is feasible iff the solution
    is entrywise positive and fits the power budget.
    """
    if gamma < 0:
        raise ValueError("SINR target must be >= 0")
    k = stats.num_users
    if gamma == 0.0:
        return np.zeros(k)
    b_prime = stats.b.copy()
    np.fill_diagonal(b_prime, np.diag(stats.b) - stats.a)
    lhs = np.diag(stats.a) - gamma * b_prime
    rhs = gamma * stats.noise_power * np.ones(k)
    try:
        rho = np.linalg.solve(lhs, rhs)
    except np.linalg.LinAlgError:
        return None
    if np.any(rho <= 0) or rho.sum() > total_power:
        return None
    return rho


@dataclass
class BisectionSettings:
    tolerance: float = 1e-4
    gamma_max_init: float | None = None
    max_iterations: int = 200

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ValueError("bisection tolerance must be positive")


@dataclass(frozen=True)
class PowerSolution:
    powers: np.ndarray
    achieved_sinr: float
    iterations: int


def bisection_maxmin(
    stats: LinkStatistics,
    total_power: float,
    settings: BisectionSettings | None = None,
) -> PowerSolution:
    """Max-min SINR power allocation by bisection over feasibility checks.

    The initial upper bracket is the best interference-free single-user SINR
    max_k total_power * a_k / sigma^2, which no allocation can beat; if Monte
    Carlo noise makes it feasible the bracket is widened once by 10x.
    """
    settings = settings or BisectionSettings()
    if total_power <= 0:
        raise ValueError("total power must be positive")
    gamma_max = settings.gamma_max_init
    if gamma_max is None:
        gamma_max = float(np.max(stats.a) * total_power / stats.noise_power)
    if gamma_max <= 0:
        raise InvalidStatisticsError("cannot bracket: all users have zero gain")
    if check_feasibility(gamma_max, stats, total_power) is not None:
        gamma_max *= 10.0
        if check_feasibility(gamma_max, stats, total_power) is not None:
            raise InvalidStatisticsError(
                "upper SINR bracket is feasible even after widening"
            )
    lo = 0.0
    best: np.ndarray | None = None
    iterations = 0
    # keep halving until the bracket closes AND a feasible allocation exists;
    # the second condition matters when the optimum sits below the tolerance
    while (gamma_max - lo > settings.tolerance or best is None) and (
        iterations < settings.max_iterations
    ):
        mid = (lo + gamma_max) / 2
        rho = check_feasibility(mid, stats, total_power)
        if rho is not None:
            lo, best = mid, rho
        else:
            gamma_max = mid
        iterations += 1
    if best is None or np.any(best <= 0):
        raise InvalidStatisticsError("bisection found no strictly positive allocation")
    if best.sum() > total_power + 1e-9:
        raise NumericError("allocation exceeds the power budget")
    return PowerSolution(best, lo, iterations)
