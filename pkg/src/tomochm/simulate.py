"""Forward model: synthetic SLC stacks with known DTM/CHM ground truth.

Two discrete scattering layers per pixel (ground at the DTM, canopy top at
DTM + CHM), optional fully developed speckle, optional thermal noise:

    u_i(p) = s_g(p) exp(j kz_i z_g(p)) + s_c(p) exp(j kz_i z_c(p)) + w_i(p)

With speckle off, s_g and s_c are the configured amplitudes at phase 0;
with speckle on they are circular complex Gaussians with the configured
mean power. Noise is circular Gaussian sized against the total mean signal
power. All draws come from per-pixel splitmix64 streams keyed on
(seed, row, col); a fixed draw order (ground pair, canopy pair, then one
pair per image for noise) makes outputs bit-reproducible and independent
of any row-level parallelism.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .model import HeightRaster, SLCStack, rayleigh_resolution  # noqa: F401

RECIPE_KINDS = ("constant", "ramp", "blocks")


@dataclass(frozen=True)
class RasterRecipe:
    """Parametric height raster: constant, axis ramp, or two-value blocks."""
    kind: str = "constant"
    value: float = 0.0
    start: float = 0.0
    stop: float = 0.0
    axis: int = 0
    values: tuple = (0.0, 0.0)
    block: int = 16

    def __post_init__(self):
        if self.kind not in RECIPE_KINDS:
            raise ValueError(f"recipe kind must be one of {RECIPE_KINDS}")
        object.__setattr__(self, "values", tuple(self.values))

    def render(self, shape):
        h, w = shape
        if self.kind == "constant":
            return np.full((h, w), float(self.value))
        if self.kind == "ramp":
            n = h if self.axis == 0 else w
            line = np.linspace(self.start, self.stop, n)
            return (np.repeat(line[:, None], w, axis=1) if self.axis == 0
                    else np.repeat(line[None, :], h, axis=0))
        rr = (np.arange(h)[:, None] // self.block)
        cc = (np.arange(w)[None, :] // self.block)
        parity = (rr + cc) % 2
        lo, hi = self.values
        return np.where(parity == 0, float(lo), float(hi))

    def to_dict(self):
        d = {"kind": self.kind}
        if self.kind == "constant":
            d["value"] = self.value
        elif self.kind == "ramp":
            d.update(start=self.start, stop=self.stop, axis=self.axis)
        else:
            d.update(values=list(self.values), block=self.block)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        kind = d.pop("kind", "constant")
        if "values" in d:
            d["values"] = tuple(d["values"])
        return cls(kind=kind, **d)


@dataclass(frozen=True)
class SceneSpec:
    """Synthetic scene: shape, terrain/canopy recipes, powers, noise, seed."""
    shape: tuple
    dtm: RasterRecipe = field(default_factory=RasterRecipe)
    chm: RasterRecipe = field(default_factory=lambda: RasterRecipe(value=20.0))
    ground_amplitude: float = 1.0
    canopy_amplitude: float = 1.0
    speckle: bool = True
    snr_db: float | None = 20.0  # None means noiseless
    rng_seed: int = 42

    def __post_init__(self):
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))
        if len(self.shape) != 2 or min(self.shape) < 1:
            raise ValueError("scene shape must be a positive (H, W)")
        if self.ground_amplitude < 0 or self.canopy_amplitude < 0:
            raise ValueError("amplitudes must be >= 0")
        if self.ground_amplitude == 0 and self.canopy_amplitude == 0:
            raise ValueError("at least one amplitude must be positive")

    def to_dict(self):
        return {
            "shape": list(self.shape),
            "dtm": self.dtm.to_dict(),
            "chm": self.chm.to_dict(),
            "ground_amplitude": self.ground_amplitude,
            "canopy_amplitude": self.canopy_amplitude,
            "speckle": self.speckle,
            "snr_db": "noiseless" if self.snr_db is None else self.snr_db,
            "rng_seed": self.rng_seed,
        }

    @classmethod
    def from_dict(cls, d):
        snr = d.get("snr_db", 20.0)
        if isinstance(snr, str):
            if snr != "noiseless":
                raise ValueError("snr_db must be a number or 'noiseless'")
            snr = None
        return cls(shape=tuple(d["shape"]),
                   dtm=RasterRecipe.from_dict(d.get("dtm", {"kind": "constant"})),
                   chm=RasterRecipe.from_dict(d.get("chm", {"kind": "constant",
                                                            "value": 20.0})),
                   ground_amplitude=d.get("ground_amplitude", 1.0),
                   canopy_amplitude=d.get("canopy_amplitude", 1.0),
                   speckle=d.get("speckle", True),
                   snr_db=snr,
                   rng_seed=d.get("rng_seed", 42))


def synthesize_slc_stack(scene, geometry):
    """Render a SceneSpec into (SLCStack, dtm, chm) with exact truth.

    Deterministic in (scene, geometry); identical seeds give bit-identical
    stacks.
    """
    h, w = scene.shape
    dtm_values = scene.dtm.render(scene.shape)
    chm_values = scene.chm.render(scene.shape)
    if chm_values[np.isfinite(chm_values)].min(initial=0.0) < 0:
        raise ValueError("chm recipe produced negative heights")
    z_ground = dtm_values
    z_canopy = dtm_values + chm_values

    states = rng.pixel_states(scene.rng_seed, h, w)
    if scene.speckle:
        g0, g1, states = rng.gaussian_pair(states)
        s_ground = (g0 + 1j * g1) * (scene.ground_amplitude / math.sqrt(2))
        c0, c1, states = rng.gaussian_pair(states)
        s_canopy = (c0 + 1j * c1) * (scene.canopy_amplitude / math.sqrt(2))
    else:
        s_ground = np.full((h, w), scene.ground_amplitude + 0j)
        s_canopy = np.full((h, w), scene.canopy_amplitude + 0j)

    signal_power = scene.ground_amplitude ** 2 + scene.canopy_amplitude ** 2
    noise_power = (0.0 if scene.snr_db is None
                   else signal_power / 10.0 ** (scene.snr_db / 10.0))
    noise_sigma = math.sqrt(noise_power / 2.0)

    kz = geometry.kz
    layers = []
    for i in range(geometry.n_images):
        u = (s_ground * np.exp(1j * kz[i] * z_ground)
             + s_canopy * np.exp(1j * kz[i] * z_canopy))
        if noise_power > 0.0:
            n0, n1, states = rng.gaussian_pair(states)
            u = u + (n0 + 1j * n1) * noise_sigma
        layers.append(u)

    stack = SLCStack(geometry, tuple(layers))
    return (stack,
            HeightRaster(dtm_values, kind="DTM"),
            HeightRaster(chm_values, kind="CHM"))
