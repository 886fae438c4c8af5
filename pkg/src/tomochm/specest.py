"""Classical vertical spectral estimation: beamforming and Capon.

These operate on the multilooked covariance and serve as the
full-tomography comparator for the feature-based pipeline: per pixel,
steer to the ground, estimate the covariance, scan a vertical grid with a
power spectrum, and read the canopy height off the profile.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .model import HeightRaster
from .tomoproc import estimate_covariance, ground_steer

HERMITIAN_RTOL = 1e-6


class NumericalError(RuntimeError):
    """Raised when a linear-algebra step cannot proceed (singular system)."""


@dataclass(frozen=True)
class VerticalGrid:
    """Regular elevation grid z_k = z_min + k dz, inclusive of z_max."""
    z_min: float
    z_max: float
    dz: float

    def __post_init__(self):
        if self.dz <= 0:
            raise ValueError("dz must be > 0")
        if self.z_max <= self.z_min:
            raise ValueError("z_max must exceed z_min")
        if self.n_samples < 8:
            raise ValueError("grid needs at least 8 samples")

    @property
    def n_samples(self):
        return int(math.floor((self.z_max - self.z_min) / self.dz + 1e-9)) + 1

    @property
    def values(self):
        return self.z_min + self.dz * np.arange(self.n_samples)


def default_grid():
    """z in [-10, 40] m at 0.5 m: canopy range with sub-ground margin."""
    return VerticalGrid(-10.0, 40.0, 0.5)


@dataclass(frozen=True)
class PowerProfile:
    """Non-negative vertical power profile sampled on a VerticalGrid."""
    values: np.ndarray
    grid: VerticalGrid

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (self.grid.n_samples,):
            raise ValueError("profile length must match the grid")
        if not np.isfinite(v).all() or (v < 0).any():
            raise ValueError("profile values must be finite and >= 0")
        object.__setattr__(self, "values", v)


def steering_vector(kz, z):
    """Unit-modulus steering vector a_i(z) = exp(j kz_i z).

    `kz` is the per-image vertical wavenumber vector (pass `geometry.kz`,
    possibly restricted to a subset); the master entry is 1 for every z.
    """
    kz = np.asarray(kz, dtype=np.float64)
    return np.exp(1j * kz * float(z))


def _steering_matrix(kz, grid):
    kz = np.asarray(kz, dtype=np.float64)
    return np.exp(1j * np.outer(kz, grid.values))  # (n, K)


def _check_hermitian(r):
    r = np.asarray(r, dtype=np.complex128)
    if r.ndim != 2 or r.shape[0] != r.shape[1]:
        raise ValueError("covariance must be a square matrix")
    scale = np.abs(r).max()
    dev = np.abs(r - r.conj().T).max()
    if scale > 0 and dev > HERMITIAN_RTOL * scale:
        raise ValueError(f"matrix is not Hermitian within tolerance "
                         f"(rel dev {dev / scale:.2e})")
    return 0.5 * (r + r.conj().T)


def beamforming_spectrum(r, kz, grid):
    """Matched-filter spectrum P(z) = a(z)^H R a(z) / n^2."""
    r = _check_hermitian(r)
    n = r.shape[0]
    a = _steering_matrix(kz, grid)
    p = np.einsum("ik,ij,jk->k", a.conj(), r, a).real / n ** 2
    # sample covariances are PSD; clip away rounding-level negatives
    return PowerProfile(np.maximum(p, 0.0), grid)


def capon_spectrum(r, kz, grid, loading_beta=1e-3):
    """Minimum-variance spectrum P(z) = 1 / (a(z)^H (R + eps I)^-1 a(z)).

    eps = loading_beta * trace(R) / n. The loaded matrix is factorized
    once (Hermitian solve, no explicit inverse); a singular system raises
    NumericalError.
    """
    r = _check_hermitian(r)
    n = r.shape[0]
    if loading_beta < 0:
        raise ValueError("loading_beta must be >= 0")
    eps = loading_beta * np.trace(r).real / n
    loaded = r + eps * np.eye(n)
    try:
        chol = scipy.linalg.cho_factor(loaded, lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise NumericalError(f"loaded covariance is singular: {exc}") from exc
    a = _steering_matrix(kz, grid)
    x = scipy.linalg.cho_solve(chol, a)
    denom = np.einsum("ik,ik->k", a.conj(), x).real
    if (denom <= 0).any():
        raise NumericalError("Capon denominator not positive definite")
    return PowerProfile(1.0 / denom, grid)


def chm_from_profile(profile, rel_threshold_db=-6.0):
    """Largest z whose power clears the relative threshold, floored at 0.

    Assumes a ground-steered profile (terrain response at z = 0). The
    threshold is peak_power * 10^(rel_threshold_db / 10); if only z <= 0
    qualifies the canopy height is 0.
    """
    v = profile.values
    peak = v.max()
    if peak <= 0.0:
        raise ValueError("profile is identically zero")
    thr = peak * 10.0 ** (rel_threshold_db / 10.0)
    z = profile.grid.values
    zq = z[v >= thr].max()
    return float(zq) if zq > 0 else 0.0


def mainlobe_width(profile, rel_db=-3.0):
    """Width of the contiguous region around the peak above rel_db, meters."""
    v = profile.values
    k = int(np.argmax(v))
    thr = v[k] * 10.0 ** (rel_db / 10.0)
    lo = k
    while lo > 0 and v[lo - 1] >= thr:
        lo -= 1
    hi = k
    while hi < v.size - 1 and v[hi + 1] >= thr:
        hi += 1
    return (hi - lo) * profile.grid.dz


def tomo_chm_baseline(stack, dtm, window=(9, 9), grid=None,
                      method="beamforming", rel_threshold_db=-6.0,
                      loading_beta=1e-3, threads=1):
    """Full-tomography CHM: steer, multilook, scan spectrum, threshold.

    Runs the whole grid at once; per-pixel results are independent of any
    parallel schedule. Returns a CHM HeightRaster in meters.
    """
    if method not in ("beamforming", "capon"):
        raise ValueError("method must be 'beamforming' or 'capon'")
    if grid is None:
        grid = default_grid()
    steered = ground_steer(stack, dtm)
    cov = estimate_covariance(steered, window=window, threads=threads)
    r = cov.data  # (H, W, n, n)
    h, w, n, _ = r.shape
    a = _steering_matrix(stack.geometry.kz, grid)  # (n, K)

    if method == "beamforming":
        power = np.einsum("ik,hwij,jk->hwk", a.conj(), r, a).real / n ** 2
    else:
        eps = loading_beta * np.einsum("hwii->hw", r).real / n
        loaded = r + eps[:, :, None, None] * np.eye(n)
        flat = loaded.reshape(h * w, n, n)
        try:
            x = np.linalg.solve(flat, np.broadcast_to(a, (h * w, n, a.shape[1])))
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"Capon solve failed: {exc}") from exc
        denom = np.einsum("ik,pik->pk", a.conj(), x).real.reshape(h, w, -1)
        if (denom <= 0).any():
            raise NumericalError("Capon denominator not positive definite")
        power = 1.0 / denom

    power = np.maximum(power, 0.0)
    peak = power.max(axis=-1)
    if (peak <= 0).any():
        raise NumericalError("identically zero profile encountered")
    thr = peak * 10.0 ** (rel_threshold_db / 10.0)
    qualifies = power >= thr[:, :, None]
    last = power.shape[-1] - 1 - np.argmax(qualifies[:, :, ::-1], axis=-1)
    z = grid.values[last]
    return HeightRaster(np.where(z > 0, z, 0.0), kind="CHM")
