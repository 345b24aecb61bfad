"""Array geometry, deterministic BS-RIS channel, and correlated RIS-user channels.

Conventions used throughout:
  * planar arrays live in a plane with a unit normal; the "horizontal" axis is
    cross(z_up, normal) and the "vertical" axis completes the right-handed frame,
  * element index runs horizontally fastest (index = i_v * count_h + i_h),
  * all powers are linear mW, all gains linear, all angles radians.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import toeplitz

from .errors import GeometryError, ModelError

SPEED_OF_LIGHT = 299_792_458.0

# Gauss-Hermite rule used for the local-scattering expectation; 96 nodes keeps the
# rule accurate for lag phases up to ~2*pi*(N_H-1)/2 at 10 deg spread.
_GH_NODES, _GH_WEIGHTS = np.polynomial.hermite.hermgauss(96)


def db_to_linear(value_db: float) -> float:
    return 10.0 ** (value_db / 10.0)


def _orthonormal_plane_axes(normal: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Horizontal/vertical unit vectors spanning the plane orthogonal to `normal`."""
    up = np.array([0.0, 0.0, 1.0])
    horizontal = np.cross(up, normal)
    if np.linalg.norm(horizontal) < 1e-12:
        # normal points along z: fall back to the x axis as "horizontal"
        horizontal = np.array([1.0, 0.0, 0.0])
    horizontal = horizontal / np.linalg.norm(horizontal)
    vertical = np.cross(normal, horizontal)
    vertical = vertical / np.linalg.norm(vertical)
    return horizontal, vertical


@dataclass(frozen=True)
class UpaConfig:
    """Uniform planar array: count_h x count_v elements on a regular grid."""

    count_h: int
    count_v: int
    spacing: float
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)
    normal: tuple[float, float, float] = (1.0, 0.0, 0.0)

    def __post_init__(self):
        if not (self.count_h >= self.count_v >= 1):
            raise GeometryError(
                f"UPA requires count_h >= count_v >= 1, got {self.count_h}x{self.count_v}"
            )
        if self.spacing <= 0:
            raise GeometryError(f"UPA spacing must be positive, got {self.spacing}")
        n = np.linalg.norm(self.normal)
        if abs(n - 1.0) > 1e-9:
            raise GeometryError("UPA normal must be a unit vector")

    @property
    def total(self) -> int:
        return self.count_h * self.count_v


def build_upa_positions(config: UpaConfig) -> np.ndarray:
    """3D element positions, shape (total, 3), horizontal index fastest."""
    normal = np.asarray(config.normal, dtype=float)
    horizontal, vertical = _orthonormal_plane_axes(normal)
    origin = np.asarray(config.origin, dtype=float)
    ih = np.arange(config.count_h)
    iv = np.arange(config.count_v)
    # row-major over (i_v, i_h) -> horizontal fastest
    grid_h, grid_v = np.meshgrid(ih, iv)
    steps = np.stack([grid_h.ravel(), grid_v.ravel()], axis=1) * config.spacing
    return origin + steps[:, :1] * horizontal + steps[:, 1:] * vertical


@dataclass(frozen=True)
class SystemGeometry:
    """Active array + RIS placement and carrier wavelength."""

    array: UpaConfig
    ris: UpaConfig
    wavelength: float
    ris_height: float = 10.0
    user_height: float = 1.5

    def __post_init__(self):
        if self.wavelength <= 0:
            raise GeometryError("wavelength must be positive")
        for name, upa in (("array", self.array), ("ris", self.ris)):
            if upa.spacing < self.wavelength / 2 * (1 - 1e-12):
                raise GeometryError(
                    f"{name} spacing {upa.spacing:.4g} m is below half wavelength "
                    f"{self.wavelength / 2:.4g} m"
                )

    @property
    def array_positions(self) -> np.ndarray:
        return build_upa_positions(self.array)

    @property
    def ris_positions(self) -> np.ndarray:
        return build_upa_positions(self.ris)


def make_bs_ris_geometry(
    wavelength: float,
    m_h: int,
    m_v: int,
    n_h: int,
    n_v: int,
    ris_height: float = 10.0,
    user_height: float = 1.5,
    gap_wavelengths: float = 5.0,
) -> SystemGeometry:
    """Place both UPAs at half-wavelength spacing in parallel vertical planes.

    The RIS is centered at (0, 0, ris_height) facing +x; the active array sits
    gap_wavelengths in front of it, its center shifted sideways by half the RIS
    horizontal aperture plus one wavelength so it does not shadow the surface.
    """
    s = wavelength / 2
    ris_center = np.array([0.0, 0.0, ris_height])
    ris_origin = ris_center - np.array([0.0, (n_h - 1) * s / 2, (n_v - 1) * s / 2])
    ris = UpaConfig(n_h, n_v, s, tuple(ris_origin))

    lateral = (n_h - 1) * s / 2 + wavelength
    array_center = np.array([gap_wavelengths * wavelength, lateral, ris_height])
    array_origin = array_center - np.array([0.0, (m_h - 1) * s / 2, (m_v - 1) * s / 2])
    array = UpaConfig(m_h, m_v, s, tuple(array_origin))
    return SystemGeometry(array, ris, wavelength, ris_height, user_height)


@dataclass(frozen=True)
class BsRisChannel:
    """Deterministic channel from the M active antennas to the N RIS elements."""

    h: np.ndarray
    gram: np.ndarray = field(init=False)

    def __post_init__(self):
        h = np.asarray(self.h, dtype=complex)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "gram", h.conj().T @ h)

    @property
    def num_antennas(self) -> int:
        return self.h.shape[0]

    @property
    def num_elements(self) -> int:
        return self.h.shape[1]


def build_bs_ris_channel(
    geometry: SystemGeometry,
    reflection_efficiency: float = 1.0,
    gain_a_db: float = 3.0,
    gain_r_db: float = 3.0,
) -> BsRisChannel:
    """Free-space element-to-element channel with constant look-angle gains.

    Entry (i, j) has magnitude sqrt(eff * G_A * G_R) * lam / (4 pi d_ij) and
    phase -2 pi d_ij / lam, with d_ij the antenna-to-element distance.
    """
    pos_a = geometry.array_positions
    pos_r = geometry.ris_positions
    d = np.linalg.norm(pos_a[:, None, :] - pos_r[None, :, :], axis=2)
    if np.any(d <= 0):
        raise GeometryError("antenna/RIS element pair at non-positive distance")
    lam = geometry.wavelength
    amp = math.sqrt(
        reflection_efficiency * db_to_linear(gain_a_db) * db_to_linear(gain_r_db)
    )
    h = amp * lam / (4 * np.pi * d) * np.exp(-2j * np.pi * d / lam)
    return BsRisChannel(h)


def pathloss_db(distance_3d: float) -> float:
    """Urban macro path loss in dB at a 3D distance in meters."""
    if distance_3d <= 0:
        raise GeometryError(f"path loss needs a positive distance, got {distance_3d}")
    return -35.3 - 37.6 * math.log10(distance_3d)


def pathloss_linear(distance_3d: float) -> float:
    return db_to_linear(pathloss_db(distance_3d))


@dataclass(frozen=True)
class UserChannelModel:
    """Spatial correlation of one RIS-user link, path loss folded in."""

    correlation: np.ndarray
    sqrt_correlation: np.ndarray
    pathloss_linear: float

    def __post_init__(self):
        r = self.correlation
        n = r.shape[0]
        trace = float(np.trace(r).real)
        expected = n * self.pathloss_linear
        if abs(trace - expected) > 1e-9 * max(expected, 1e-300):
            raise ModelError(
                f"correlation trace {trace:.6e} != N*beta {expected:.6e}"
            )
        recon = self.sqrt_correlation @ self.sqrt_correlation.conj().T
        err = np.linalg.norm(recon - r) / max(np.linalg.norm(r), 1e-300)
        if err > 1e-9:
            raise ModelError(f"sqrt factor reproduces correlation only to {err:.2e}")

    @property
    def dimension(self) -> int:
        return self.correlation.shape[0]


def _gaussian_scattering_lags(
    num_lags: int, spacing_wavelengths: float, angle: float, spread: float,
    projection: float = 1.0,
) -> np.ndarray:
    """E{exp(i 2 pi d_lam * lag * sin(x) * projection)} for x ~ N(angle, spread^2)."""
    x = angle + math.sqrt(2.0) * spread * _GH_NODES
    phase_unit = 2 * np.pi * spacing_wavelengths * np.sin(x) * projection
    lags = np.arange(num_lags)
    vals = np.exp(1j * np.outer(lags, phase_unit)) @ _GH_WEIGHTS
    return vals / math.sqrt(math.pi)


def _ula_gaussian_correlation(
    n: int, spacing_wavelengths: float, angle: float, spread: float,
    projection: float = 1.0,
) -> np.ndarray:
    """Hermitian Toeplitz local-scattering correlation of an n-element ULA."""
    if n == 1:
        return np.ones((1, 1), dtype=complex)
    col = _gaussian_scattering_lags(n, spacing_wavelengths, angle, spread, projection)
    return toeplitz(col, col.conj())


def _psd_sqrt(r: np.ndarray, clamp_tol: float) -> np.ndarray:
    """Hermitian PSD square root with small negative eigenvalues clamped to zero."""
    eigvals, eigvecs = np.linalg.eigh(r)
    most_negative = float(eigvals.min())
    if most_negative < -clamp_tol:
        raise ModelError(
            f"correlation eigenvalue {most_negative:.3e} below clamping tolerance"
        )
    clamped = np.clip(eigvals, 0.0, None)
    return (eigvecs * np.sqrt(clamped)) @ eigvecs.conj().T


def upa_spatial_correlation(
    upa: UpaConfig,
    wavelength: float,
    azimuth: float,
    elevation: float,
    azimuth_spread: float,
    elevation_spread: float,
    pathloss_linear: float,
) -> UserChannelModel:
    """Kronecker-separable local-scattering correlation for one UPA link.

    The horizontal and vertical axes each get a Gaussian-spread ULA correlation;
    the horizontal phase is projected by cos(elevation). Element ordering is
    horizontal-fastest, so the full matrix is beta * kron(R_V, R_H): the vertical
    factor varies over the slow index, matching build_upa_positions.
    """
    if azimuth_spread < 0 or elevation_spread < 0:
        raise ModelError("angular spreads must be non-negative")
    d_lam = upa.spacing / wavelength
    r_h = _ula_gaussian_correlation(
        upa.count_h, d_lam, azimuth, azimuth_spread, projection=math.cos(elevation)
    )
    r_v = _ula_gaussian_correlation(upa.count_v, d_lam, elevation, elevation_spread)
    r = pathloss_linear * np.kron(r_v, r_h)
    # exact unit diagonal before scaling, so trace(R) == N * beta holds exactly
    np.fill_diagonal(r, pathloss_linear)
    n = upa.total
    clamp_tol = 1e-6 * float(np.trace(r).real) / n
    return UserChannelModel(r, _psd_sqrt(r, clamp_tol), pathloss_linear)


def spatial_correlation(
    geometry: SystemGeometry,
    user_azimuth: float,
    user_elevation: float,
    azimuth_spread: float,
    elevation_spread: float,
    pathloss_linear: float,
) -> UserChannelModel:
    """Correlation of the RIS-user link for a user seen at the given angles."""
    return upa_spatial_correlation(
        geometry.ris,
        geometry.wavelength,
        user_azimuth,
        user_elevation,
        azimuth_spread,
        elevation_spread,
        pathloss_linear,
    )


def upa_steering_vector(
    upa: UpaConfig, wavelength: float, azimuth: float, elevation: float
) -> np.ndarray:
    """Unit-modulus array response consistent with the correlation model above."""
    d_lam = upa.spacing / wavelength
    ph = 2 * np.pi * d_lam * np.arange(upa.count_h) * math.sin(azimuth) * math.cos(elevation)
    pv = 2 * np.pi * d_lam * np.arange(upa.count_v) * math.sin(elevation)
    return np.kron(np.exp(1j * pv), np.exp(1j * ph))


def sample_channels(models: list[UserChannelModel], rng: np.random.Generator) -> np.ndarray:
    """One correlated Rayleigh realization per user, shape (K, N).

    Each channel is sqrt(R_k) @ hbar with hbar ~ CN(0, I_N); users are drawn
    sequentially from the supplied stream, so a fixed seed reproduces the draw.
    """
    dims = {m.dimension for m in models}
    if len(dims) != 1:
        raise ModelError(f"user models disagree on dimension: {sorted(dims)}")
    n = dims.pop()
    out = np.empty((len(models), n), dtype=complex)
    for k, model in enumerate(models):
        hbar = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / math.sqrt(2.0)
        out[k] = model.sqrt_correlation @ hbar
    return out


def composite_channel(channel: BsRisChannel, theta: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Effective M-dimensional downlink channel H @ Theta @ h."""
    theta = np.asarray(theta)
    h = np.asarray(h)
    if theta.shape != (channel.num_elements, channel.num_elements) or h.shape != (
        channel.num_elements,
    ):
        raise ValueError(
            f"dimension mismatch: H {channel.h.shape}, Theta {theta.shape}, h {h.shape}"
        )
    return channel.h @ (theta @ h)
