"""Microspine grip physics on synthetic rough surfaces.

Pipeline: synthesize a rough height field, trace it with a spine tip of
radius ``r_s`` (a grey-scale dilation by a disk), find where the traced
normal is steep enough for a spine to hold, bound each spine's load by the
Hertz-type strength limit, and sum engaged spines into a robot's grip
capacity.  The grip force itself follows a sigmoid in the demanded load.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter
from scipy.special import expit
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_grid, check_positive

__all__ = [
    "MicroSurface",
    "SpineModel",
    "GripSiteReport",
    "GripSiteDetector",
    "gen_surface",
    "trace_profile",
    "min_grip_angle",
    "surface_angle",
    "find_grip_sites",
    "asperity_radii",
    "effective_radius",
    "spine_max_load",
    "grip_force",
    "aggregate_load",
    "grip_site_report",
]


@dataclass(frozen=True)
class MicroSurface:
    heights: np.ndarray
    resolution: float
    target_rms: float
    seed: int | None = None

    @property
    def rms(self):
        h = self.heights - self.heights.mean()
        return float(np.sqrt(np.mean(h * h)))

    @property
    def shape(self):
        return self.heights.shape

    def profile(self, row):
        return self.heights[row]

    def to_csv(self, path=None):
        buf = io.StringIO()
        buf.write(f"# resolution={self.resolution!r}\n# target_rms={self.target_rms!r}\n# seed={self.seed}\n")
        writer = csv.writer(buf, lineterminator="\n")
        for row in self.heights:
            writer.writerow([repr(float(x)) for x in row])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path):
        meta, rows = {}, []
        with open(path, newline="") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    key, _, value = line[1:].strip().partition("=")
                    meta[key.strip()] = value.strip()
                    continue
                try:
                    rows.append([float(x) for x in line.split(",")])
                except ValueError as exc:
                    raise ValueError(f"{path}: line {lineno}: {exc}") from exc
        if "resolution" not in meta:
            raise ValueError(f"{path}: missing '# resolution=' header")
        seed = meta.get("seed", "None")
        return cls(check_grid(rows, "heights"), float(meta["resolution"]),
                   float(meta.get("target_rms", "nan")), None if seed == "None" else int(seed))


@dataclass(frozen=True)
class SpineModel:
    """Spine tip geometry, friction, and material strength.

    Material constants have no defaults on purpose: the strength bound is
    meaningless without them.
    """

    r_s: float
    sigma_max: float
    E_mod: float
    nu: float
    psi_load: float = 0.0
    mu_f: float = 0.5
    count_s: int = 100

    def __post_init__(self):
        check_positive(self.r_s, "r_s")
        check_positive(self.mu_f, "mu_f")
        check_positive(self.sigma_max, "sigma_max")
        check_positive(self.E_mod, "E_mod")
        if not 0.0 <= self.nu < 0.5:
            raise ValueError(f"nu must lie in [0, 0.5), got {self.nu}")
        if int(self.count_s) < 1:
            raise ValueError("count_s must be >= 1")

    @property
    def psi_min(self):
        return min_grip_angle(self.psi_load, self.mu_f)


@dataclass(frozen=True)
class GripSiteReport:
    site_indices: np.ndarray
    traced: np.ndarray
    psi_profile: np.ndarray
    per_site_fmax: np.ndarray

    def to_json(self):
        return json.dumps({
            "site_indices": [int(i) for i in self.site_indices],
            "traced": [float(x) for x in self.traced],
            "psi_profile": [float(x) for x in self.psi_profile],
            "per_site_fmax": [float(x) for x in self.per_site_fmax],
        }, indent=2)


def gen_surface(target_rms, extent, resolution, seed, corr_length=None):
    """Gaussian random surface with a prescribed RMS roughness.

    White noise is smoothed by an isotropic Gaussian kernel of width
    ``corr_length`` (default ten samples) with periodic boundaries, then
    mean-removed and rescaled so the RMS equals ``target_rms``.
    """
    check_positive(target_rms, "target_rms", allow_zero=True)
    extent = check_positive(extent, "extent")
    resolution = check_positive(resolution, "resolution")
    if extent <= resolution:
        raise ValueError("extent must exceed resolution")
    n = max(2, int(round(extent / resolution)))
    if target_rms == 0:
        return MicroSurface(np.zeros((n, n)), resolution, 0.0, seed)
    corr = 10.0 * resolution if corr_length is None else check_positive(corr_length, "corr_length")
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((n, n))
    h = gaussian_filter(noise, sigma=corr / resolution, mode="wrap")
    h -= h.mean()
    rms = np.sqrt(np.mean(h * h))
    h *= target_rms / rms
    return MicroSurface(h, resolution, float(target_rms), seed)


def trace_profile(profile, r_s, resolution):
    """Path of a round spine tip's centre rolled over a 1D profile.

    A grey-scale dilation with a half-disk structuring element:
    ``traced[j] = max_k profile[k] + sqrt(r_s**2 - ((j - k) * resolution)**2)``
    over the samples with ``|j - k| * resolution <= r_s``.
    """
    profile = np.asarray(profile, dtype=float).reshape(-1)
    if profile.size == 0:
        raise ValueError("profile is empty")
    r_s = check_positive(r_s, "r_s")
    resolution = check_positive(resolution, "resolution")
    half = int(math.floor(r_s / resolution + 1e-12))
    traced = profile + r_s
    n = profile.size
    for off in range(1, min(half, n - 1) + 1):
        lift = math.sqrt(max(0.0, r_s * r_s - (off * resolution) ** 2))
        np.maximum(traced[off:], profile[:-off] + lift, out=traced[off:])
        np.maximum(traced[:-off], profile[off:] + lift, out=traced[:-off])
    return traced


def min_grip_angle(psi_load, mu_f):
    """Smallest surface-normal angle a spine loaded at ``psi_load`` can hold."""
    if not mu_f > 0:
        raise ValueError(f"mu_f must be > 0, got {mu_f}")
    return psi_load + math.atan(1.0 / mu_f)


def surface_angle(traced, resolution):
    """Signed inclination of the traced surface (radians), positive where it rises."""
    traced = np.asarray(traced, dtype=float).reshape(-1)
    if traced.size < 3:
        raise ValueError("traced profile needs at least 3 samples")
    return np.arctan(np.gradient(traced, resolution))


def find_grip_sites(traced, resolution, psi_min):
    """Indices where the traced normal is steeper than ``psi_min``.

    The spine is dragged toward +x, so it catches faces rising in +x.
    """
    return np.flatnonzero(surface_angle(traced, resolution) > psi_min)


def asperity_radii(profile, resolution, indices=None):
    """Local radius of curvature from the second difference, floored at ``resolution``."""
    profile = np.asarray(profile, dtype=float).reshape(-1)
    d2 = np.zeros_like(profile)
    d2[1:-1] = (profile[2:] - 2.0 * profile[1:-1] + profile[:-2]) / resolution ** 2
    d2[0], d2[-1] = d2[1] if profile.size > 2 else 0.0, d2[-2] if profile.size > 2 else 0.0
    if indices is not None:
        d2 = d2[np.asarray(indices, dtype=int)]
    with np.errstate(divide="ignore"):
        radius = 1.0 / np.abs(d2)
    return np.maximum(radius, resolution)


def effective_radius(r_s, r_a):
    return 1.0 / (1.0 / r_s + 1.0 / r_a)


def spine_max_load(spine, r_a):
    """Strength-limited load of one spine on an asperity of radius ``r_a``."""
    r_a = np.asarray(r_a, dtype=float)
    if np.any(r_a <= 0):
        raise ValueError("asperity radius must be > 0")
    if not spine.nu < 0.5:
        raise ValueError("nu must be < 0.5")
    R = effective_radius(spine.r_s, r_a)
    coeff = (math.pi * spine.sigma_max / (1.0 - 2.0 * spine.nu)) ** 3 / (2.0 * spine.E_mod ** 2)
    out = coeff * R * R
    return float(out) if out.ndim == 0 else out


def grip_force(demand, f_load, k=15.0):
    """Sigmoid grip force for a demanded load: midpoint at f_load/2, saturating at f_load."""
    return f_load * expit(k * (np.asarray(demand, dtype=float) - 0.5 * f_load))


def grip_site_report(profile, spine, resolution):
    traced = trace_profile(profile, spine.r_s, resolution)
    psi = surface_angle(traced, resolution)
    sites = np.flatnonzero(psi > spine.psi_min)
    fmax = np.atleast_1d(spine_max_load(spine, asperity_radii(profile, resolution, sites)))
    return GripSiteReport(sites, traced, psi, fmax)


def aggregate_load(spine, surface, psi_min=None, seed=None):
    """Grip capacity of one robot: ``count_s`` spines engage random detected sites.

    Sites are detected on every row profile of the surface; each spine
    independently engages one uniformly chosen site (with replacement).
    Returns 0 when the surface offers no site at all.
    """
    psi_min = spine.psi_min if psi_min is None else psi_min
    fmax = []
    for row in surface.heights:
        traced = trace_profile(row, spine.r_s, surface.resolution)
        sites = find_grip_sites(traced, surface.resolution, psi_min)
        if sites.size:
            fmax.append(np.atleast_1d(spine_max_load(spine, asperity_radii(row, surface.resolution, sites))))
    if not fmax:
        return 0.0
    fmax = np.concatenate(fmax)
    rng = np.random.default_rng(surface.seed if seed is None else seed)
    picks = rng.integers(0, fmax.size, size=int(spine.count_s))
    return float(fmax[picks].sum())


class GripSiteDetector(TransformerMixin, BaseEstimator):
    """Flag grippable samples on a batch of surface profiles.

    ``transform`` maps an (n_profiles, n_samples) height array to a boolean
    array of the same shape, True where a spine of tip radius ``r_s`` can
    hold.  Counts per profile are available through ``count_sites``.
    """

    def __init__(self, r_s=10e-6, resolution=2e-6, psi_load=0.0, mu_f=0.5):
        self.r_s = r_s
        self.resolution = resolution
        self.psi_load = psi_load
        self.mu_f = mu_f

    def fit(self, X, y=None):
        X = check_grid(X, "X", min_shape=(1, 3))
        check_positive(self.r_s, "r_s")
        check_positive(self.resolution, "resolution")
        self.psi_min_ = min_grip_angle(self.psi_load, self.mu_f)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "psi_min_")
        X = check_grid(X, "X", min_shape=(1, 3))
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} samples per profile, got {X.shape[1]}")
        out = np.zeros(X.shape, dtype=bool)
        for i, row in enumerate(X):
            traced = trace_profile(row, self.r_s, self.resolution)
            out[i] = surface_angle(traced, self.resolution) > self.psi_min_
        return out

    def count_sites(self, X):
        return self.transform(X).sum(axis=1)
