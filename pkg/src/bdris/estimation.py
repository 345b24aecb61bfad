"""Uplink pilot training through the RIS and LMMSE estimation of the RIS-user links.

The BS knows the BS-RIS channel H, so training only has to resolve the
N-dimensional RIS-user channels. Each user repeats its pilot over Q = ceil(N/M)
epochs while the RIS cycles through Q different diagonal configurations; the
stacked observation then sees the full N-dimensional space and a standard LMMSE
filter applies, written in the SVD basis of the stacked training matrix.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import hadamard

from .errors import EstimationRankError, ModelError, NumericError
from .geometry import BsRisChannel, UserChannelModel


@dataclass(frozen=True)
class PilotBook:
    """Real pilot sequences, one column per user; gram holds all inner products."""

    pilots: np.ndarray
    gram: np.ndarray = field(init=False)

    def __post_init__(self):
        p = np.asarray(self.pilots, dtype=float)
        object.__setattr__(self, "pilots", p)
        object.__setattr__(self, "gram", p.T @ p)

    @property
    def length(self) -> int:
        return self.pilots.shape[0]

    @property
    def num_users(self) -> int:
        return self.pilots.shape[1]


def _is_power_of_two(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


def make_pilots(num_users: int, length: int) -> PilotBook:
    """Pilot book with phi_k' phi_k == length exactly for every user.

    For length >= num_users the columns are mutually orthogonal (Hadamard rows
    when the length is a power of two, scaled canonical vectors otherwise).
    Shorter books reuse columns cyclically, which contaminates the gram matrix;
    that is allowed, the LMMSE filter accounts for it.
    """
    if length < 1:
        raise ValueError(f"pilot length must be >= 1, got {length}")
    if length < num_users:
        warnings.warn(
            f"pilot length {length} < {num_users} users: pilots are reused and "
            "estimates suffer pilot contamination",
            stacklevel=2,
        )
    if _is_power_of_two(length):
        basis = hadamard(length).astype(float)
    else:
        basis = math.sqrt(length) * np.eye(length)
    cols = [basis[:, k % length] for k in range(num_users)]
    return PilotBook(np.stack(cols, axis=1))


@dataclass(frozen=True)
class TrainingSchedule:
    """Diagonal unit-modulus RIS configurations used during the Q training epochs."""

    diagonals: np.ndarray  # shape (Q, N)

    def __post_init__(self):
        d = np.asarray(self.diagonals, dtype=complex)
        if d.ndim != 2:
            raise ValueError("diagonals must be a (Q, N) array")
        if np.max(np.abs(np.abs(d) - 1.0)) > 1e-12:
            raise ValueError("training configs must have unit-modulus diagonals")
        object.__setattr__(self, "diagonals", d)

    @property
    def epochs(self) -> int:
        return self.diagonals.shape[0]

    def config(self, q: int) -> np.ndarray:
        return np.diag(self.diagonals[q])


def make_training_configs(n: int, m: int, rng) -> TrainingSchedule:
    """ceil(n/m) diagonal configs with i.i.d. uniform random phases."""
    if n < 1 or m < 1:
        raise ValueError("n and m must be >= 1")
    rng = np.random.default_rng(rng)
    q = -(-n // m)
    phases = rng.uniform(0.0, 2 * np.pi, size=(q, n))
    return TrainingSchedule(np.exp(1j * phases))


@dataclass(frozen=True)
class StackedTrainingMatrix:
    """Vertical stack of H @ Theta_tr^(q) with its thin SVD cached.

    The thin factors (u: MQ x N, s: N, vh: N x N) carry the same information as
    the padded MQ x MQ decomposition because the stack has exactly N columns.
    """

    matrix: np.ndarray
    u: np.ndarray = field(init=False)
    s: np.ndarray = field(init=False)
    vh: np.ndarray = field(init=False)

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=complex)
        mq, n = mat.shape
        if mq < n:
            raise EstimationRankError(
                f"{mq} observables cannot resolve {n} unknowns; increase epochs"
            )
        u, s, vh = np.linalg.svd(mat, full_matrices=False)
        # numerical-rank criterion; the deterministic near-field channel makes the
        # stack ill-conditioned at large N even when it is structurally full rank
        if s[-1] <= max(mq, n) * np.finfo(float).eps * s[0]:
            raise EstimationRankError(
                f"training stack is rank deficient (sigma_min/sigma_max = {s[-1] / s[0]:.2e})"
            )
        object.__setattr__(self, "matrix", mat)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "vh", vh)

    @property
    def num_observables(self) -> int:
        return self.matrix.shape[0]

    @property
    def dimension(self) -> int:
        return self.matrix.shape[1]


def stack_training_matrix(
    channel: BsRisChannel, schedule: TrainingSchedule
) -> StackedTrainingMatrix:
    """Stack the per-epoch effective channels; raises if the result loses rank."""
    if schedule.diagonals.shape[1] != channel.num_elements:
        raise ValueError("schedule dimension does not match the channel")
    blocks = [channel.h * diag[None, :] for diag in schedule.diagonals]
    return StackedTrainingMatrix(np.vstack(blocks))


def simulate_uplink_training(
    stacked: StackedTrainingMatrix,
    realization: np.ndarray,
    pilots: PilotBook,
    uplink_power: float,
    noise_power: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Pilot-projected stacked observations y_k for every user, shape (K, MQ).

    y_k = tau_p sqrt(rho) Htr h_k + sum_{i != k} psi_ki sqrt(rho) Htr h_i + n_k.
    The noise is drawn once per epoch at the antenna ports and projected onto
    each pilot, so non-orthogonal pilots see correlated noise like real hardware.
    """
    realization = np.asarray(realization)
    k = pilots.num_users
    if realization.shape != (k, stacked.dimension):
        raise ValueError("channel realization does not match users/dimension")
    if uplink_power <= 0 or noise_power < 0:
        raise ValueError("powers must be positive (noise may be zero)")
    mq = stacked.num_observables
    # signal part: sqrt(rho) * Htr @ h_i weighted by the pilot gram column
    signals = stacked.matrix @ realization.T  # (MQ, K)
    y = math.sqrt(uplink_power) * signals @ pilots.gram  # column k = sum_i psi_ki * s_i
    if noise_power > 0:
        scale = math.sqrt(noise_power / 2.0)
        raw = rng.standard_normal((mq, pilots.length)) + 1j * rng.standard_normal(
            (mq, pilots.length)
        )
        noise = scale * raw @ pilots.pilots  # (MQ, K), covariance tau_p sigma^2 I per user
        y = y + noise
    return y.T


@dataclass(frozen=True)
class LmmseEstimator:
    """Per-user LMMSE filters with estimate/error covariances."""

    filters: np.ndarray  # (K, N, MQ)
    estimate_cov: np.ndarray  # (K, N, N), Phi_k
    error_cov: np.ndarray  # (K, N, N), R_k - Phi_k

    def __post_init__(self):
        for k in range(self.filters.shape[0]):
            phi_min = float(np.linalg.eigvalsh(self.estimate_cov[k]).min())
            scale = float(np.trace(self.estimate_cov[k] + self.error_cov[k]).real)
            n = self.estimate_cov[k].shape[0]
            if phi_min < -1e-8 * scale / n:
                raise ModelError(f"estimate covariance of user {k} is not PSD")
            err_min = float(np.linalg.eigvalsh(self.error_cov[k]).min())
            if err_min < -1e-8 * scale / n:
                raise ModelError(f"error covariance of user {k} is not PSD")

    @property
    def num_users(self) -> int:
        return self.filters.shape[0]


def build_lmmse(
    stacked: StackedTrainingMatrix,
    models: list[UserChannelModel],
    pilots: PilotBook,
    uplink_power: float,
    noise_power: float,
) -> LmmseEstimator:
    """LMMSE filters in the SVD basis of the training stack.

    With Htr = U diag(s) V^H (thin), B_j = V^H R_j V and
    C_k = sum_j psi_jk^2 rho S B_j S + sigma^2 tau_p I, the filter is
    W_k = tau_p sqrt(rho) V B_k S C_k^{-1} U^H and Phi_k the matched quadratic
    form; the padded-SVD expressions reduce to exactly this because the extra
    MQ - N observation directions carry noise only.
    """
    if noise_power <= 0:
        raise NumericError("LMMSE build needs sigma^2 > 0 for an invertible gram")
    n = stacked.dimension
    v = stacked.vh.conj().T
    s = stacked.s
    tau_p = float(pilots.length)
    psi = pilots.gram
    k_users = pilots.num_users

    b = np.empty((k_users, n, n), dtype=complex)
    for j, model in enumerate(models):
        b[j] = stacked.vh @ model.correlation @ v

    filters = np.empty((k_users, n, stacked.num_observables), dtype=complex)
    est_cov = np.empty((k_users, n, n), dtype=complex)
    err_cov = np.empty((k_users, n, n), dtype=complex)
    for k in range(k_users):
        c = noise_power * tau_p * np.eye(n, dtype=complex)
        for j in range(k_users):
            w = psi[j, k] ** 2 * uplink_power
            if w != 0.0:
                c += w * (s[:, None] * b[j] * s[None, :])
        m1 = b[k] * s[None, :]  # B_k S
        try:
            # C is Hermitian: M1 C^{-1} = solve(C, M1^H)^H
            m1c = np.linalg.solve(c, m1.conj().T).conj().T
        except np.linalg.LinAlgError as exc:
            raise NumericError(f"singular observation covariance for user {k}") from exc
        filters[k] = tau_p * math.sqrt(uplink_power) * v @ m1c @ stacked.u.conj().T
        phi = tau_p**2 * uplink_power * (v @ m1c @ m1.conj().T @ v.conj().T)
        phi = (phi + phi.conj().T) / 2
        est_cov[k] = phi
        err_cov[k] = models[k].correlation - phi
    return LmmseEstimator(filters, est_cov, err_cov)


def estimate(estimator: LmmseEstimator, observation: np.ndarray, user: int) -> np.ndarray:
    """Apply user `user`'s LMMSE filter to its stacked observation."""
    return estimator.filters[user] @ np.asarray(observation)
