"""Band-partitioned Fourier-series inverse Laplace transform.

A time function on ``[0, 2T)`` is represented by its Laplace values on the
vertical line ``s_k = gamma + i*k*pi/T``::

    f(t) = exp(gamma*t)/T * [ Re F(s_0)/2 + sum_k Re{ F(s_k) exp(i*k*pi*t/T) } ]

Term ``k`` is a cosine wave at ``k/(2T)`` cycles per time unit, so truncating
the sum at ``N`` removes everything above ``N/(2T)``.  A ladder of sampling
resolutions ``f_r`` maps onto truncation anchors ``N = T*f_r`` and splits the
index axis into consecutive bands; band ``i`` owns ``k`` in
``(N_{i-1}, N_i]`` and band 1 also owns the DC term ``k = 0``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "BandPartition",
    "SGrid",
    "CoefficientSet",
    "TemporalComponentSet",
    "LaplaceEstimate",
    "build_band_partition",
    "make_s_grid",
    "ilt_evaluate",
    "temporal_components",
    "numeric_forward_laplace",
    "crump_gamma",
    "ilt_basis",
    "spectral_content_above",
]

_ROUND_TOL = 1e-9


@dataclass(frozen=True)
class BandPartition:
    """Frequency bands induced by a ladder of resolutions.

    ``resolutions`` are in samples per time unit (per hour for energy data),
    ``anchors[i]`` is the largest coefficient index of band ``i + 1``.
    """

    horizon: float
    gamma: float
    resolutions: tuple[float, ...]
    anchors: tuple[int, ...]

    @property
    def m(self) -> int:
        return len(self.anchors)

    @property
    def n_coefficients(self) -> int:
        return self.anchors[-1] + 1

    def _check_band(self, band: int) -> None:
        if not 1 <= band <= self.m:
            raise IndexError(f"band must be in 1..{self.m}, got {band}")

    def band_indices(self, band: int) -> np.ndarray:
        """Integer coefficient indices owned by ``band`` (1-based), ascending."""
        self._check_band(band)
        lo = 0 if band == 1 else self.anchors[band - 2] + 1
        return np.arange(lo, self.anchors[band - 1] + 1)

    def band_size(self, band: int) -> int:
        return len(self.band_indices(band))

    def band_coordinates(self, band: int) -> np.ndarray:
        """Normalised position of each index inside its band.

        ``u_k = (k - N_{i-1}) / (N_i - N_{i-1})`` so the band's own indices
        fall in ``(0, 1]``; the DC term of band 1 sits at ``u = 0``.
        """
        k = self.band_indices(band).astype(float)
        lower = 0 if band == 1 else self.anchors[band - 2]
        return (k - lower) / (self.anchors[band - 1] - lower)

    def cutoff(self, band: int) -> float:
        """Highest frequency (cycles per time unit) present through ``band``."""
        self._check_band(band)
        return self.anchors[band - 1] / (2.0 * self.horizon)

    @classmethod
    def from_anchors(cls, anchors: Sequence[int], horizon: float, gamma: float = 0.0) -> "BandPartition":
        """Partition with explicit anchors (single-decoder baselines use this)."""
        anchors = tuple(int(a) for a in anchors)
        if not anchors or any(a <= 0 for a in anchors):
            raise ValueError("anchors must be positive integers")
        if any(b <= a for a, b in zip(anchors, anchors[1:])):
            raise ValueError("anchors must be strictly ascending")
        if horizon <= 0:
            raise ValueError("horizon must be positive")
        return cls(float(horizon), float(gamma), tuple(a / horizon for a in anchors), anchors)


def build_band_partition(
    resolutions: Sequence[float],
    horizon: float = 24.0,
    gamma: float = 0.0,
    strict: bool = False,
) -> BandPartition:
    """Anchors ``N_i = round(T * f_r^i)`` for an ascending resolution ladder.

    With ``strict=True`` a non-integer product ``T * f_r`` is an error rather
    than being rounded.
    """
    res = tuple(float(r) for r in resolutions)
    if not res:
        raise ValueError("at least one resolution is required")
    if any(not math.isfinite(r) or r <= 0 for r in res):
        raise ValueError(f"resolutions must be positive, got {res}")
    if any(b <= a for a, b in zip(res, res[1:])):
        raise ValueError(f"resolutions must be strictly ascending, got {res}")
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    anchors = []
    for r in res:
        exact = horizon * r
        n = int(round(exact))
        if strict and abs(exact - n) > _ROUND_TOL:
            raise ValueError(f"T*f_r = {exact} is not an integer")
        anchors.append(n)
    if anchors[0] < 1 or any(b <= a for a, b in zip(anchors, anchors[1:])):
        raise ValueError(f"rounded anchors {anchors} are not strictly ascending")
    return BandPartition(float(horizon), float(gamma), res, tuple(anchors))


@dataclass(frozen=True)
class SGrid:
    band: int
    indices: np.ndarray
    points: np.ndarray


def make_s_grid(partition: BandPartition, band: int) -> SGrid:
    k = partition.band_indices(band)
    s = partition.gamma + 1j * k * np.pi / partition.horizon
    return SGrid(band, k, s)


@dataclass
class CoefficientSet:
    """Laplace values grouped by band; ``bands[0][0]`` is ``F(gamma)``."""

    partition: BandPartition
    bands: list[np.ndarray]

    def __post_init__(self):
        if len(self.bands) > self.partition.m:
            raise ValueError("more coefficient bands than partition bands")
        for i, vals in enumerate(self.bands, start=1):
            if vals.shape[-1] != self.partition.band_size(i):
                raise ValueError(
                    f"band {i} holds {vals.shape[-1]} values, expected {self.partition.band_size(i)}"
                )

    @property
    def populated(self) -> int:
        return len(self.bands)

    @classmethod
    def from_array(cls, partition: BandPartition, values: np.ndarray) -> "CoefficientSet":
        """Split a flat ``(..., N_m + 1)`` complex array into bands."""
        values = np.asarray(values, dtype=complex)
        bands, start = [], 0
        for i in range(1, partition.m + 1):
            size = partition.band_size(i)
            bands.append(values[..., start:start + size])
            start += size
        if start != values.shape[-1]:
            raise ValueError(f"expected {start} coefficients, got {values.shape[-1]}")
        return cls(partition, bands)

    @classmethod
    def from_function(cls, partition: BandPartition, func) -> "CoefficientSet":
        """Sample an analytic Laplace function on every band's s-grid."""
        return cls(partition, [np.asarray(func(make_s_grid(partition, i).points), dtype=complex)
                               for i in range(1, partition.m + 1)])

    def to_array(self) -> np.ndarray:
        return np.concatenate(self.bands, axis=-1)

    def as_pairs(self) -> list[np.ndarray]:
        """(real, imaginary) pairs per band, shape ``(..., size, 2)``."""
        return [np.stack([b.real, b.imag], axis=-1) for b in self.bands]

    def truncated(self, max_band: int) -> "CoefficientSet":
        return CoefficientSet(self.partition, self.bands[:max_band])


@dataclass
class TemporalComponentSet:
    times: np.ndarray
    components: list[np.ndarray]

    def total(self) -> np.ndarray:
        out = self.components[0].copy()
        for tc in self.components[1:]:
            out = out + tc
        return out


def _check_times(times, horizon: float) -> np.ndarray:
    t = np.asarray(times, dtype=float)
    if np.any(t < 0):
        raise ValueError("evaluation times must be non-negative")
    if np.any(t >= 2.0 * horizon):
        raise ValueError(
            f"evaluation time {t.max()} exceeds the reconstruction period 2T = {2.0 * horizon}"
        )
    return t


def temporal_components(
    coeffs: CoefficientSet,
    times,
    partition: BandPartition | None = None,
    max_band: int | None = None,
) -> TemporalComponentSet:
    """Per-band real time signals whose sum is the reconstruction.

    Coefficient arrays may carry leading batch dimensions; the time axis is
    appended last.  Within a band the terms are accumulated in ascending ``k``.
    """
    partition = partition or coeffs.partition
    if max_band is None:
        max_band = coeffs.populated
    if not 1 <= max_band <= partition.m:
        raise IndexError(f"max_band must be in 1..{partition.m}")
    if coeffs.populated < max_band:
        raise ValueError(f"coefficients populated through band {coeffs.populated}, need {max_band}")
    t = _check_times(times, partition.horizon)
    T = partition.horizon
    pref = np.exp(partition.gamma * t) / T
    comps = []
    for band in range(1, max_band + 1):
        vals = coeffs.bands[band - 1]
        if not np.all(np.isfinite(vals)):
            raise ValueError(f"non-finite coefficient in band {band}")
        ks = partition.band_indices(band)
        acc = np.zeros(vals.shape[:-1] + t.shape)
        for j, k in enumerate(ks):
            c = vals[..., j, None]
            if k == 0:
                acc = acc + c.real / 2.0
            else:
                theta = k * np.pi * t / T
                acc = acc + (c.real * np.cos(theta) - c.imag * np.sin(theta))
        comps.append(pref * acc)
    return TemporalComponentSet(t, comps)


def ilt_evaluate(
    coeffs: CoefficientSet,
    times,
    partition: BandPartition | None = None,
    max_band: int | None = None,
) -> np.ndarray:
    """Truncated Fourier-series inverse Laplace transform through ``max_band``."""
    return temporal_components(coeffs, times, partition, max_band).total()


def ilt_basis(partition: BandPartition, times, max_band: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Matrices ``(C, S)`` with ``f(t) = C @ Re F + S @ Im F``.

    Columns run over coefficient indices ``0..N_maxband``.  This is the same
    linear map as :func:`ilt_evaluate` in matrix form, used where gradients
    with respect to the coefficients are needed.
    """
    max_band = partition.m if max_band is None else max_band
    t = _check_times(times, partition.horizon)
    k = np.arange(partition.anchors[max_band - 1] + 1)
    T = partition.horizon
    pref = (np.exp(partition.gamma * t) / T)[:, None]
    theta = np.outer(t, k) * np.pi / T
    C = pref * np.cos(theta)
    C[:, 0] = pref[:, 0] / 2.0
    S = -pref * np.sin(theta)
    S[:, 0] = 0.0
    return C, S


def crump_gamma(alpha_max: float, horizon: float, digits: float = 6.0) -> float:
    """Abscissa giving a discretisation error of roughly ``10**-digits``."""
    return alpha_max + digits * math.log(10.0) / (2.0 * horizon)


@dataclass(frozen=True)
class LaplaceEstimate:
    value: complex
    truncation_bound: float
    warning: bool


def numeric_forward_laplace(t, f, s: complex) -> LaplaceEstimate:
    """Trapezoid estimate of ``int_0^Tmax exp(-s t) f(t) dt``.

    Only meant as a test oracle.  ``truncation_bound`` is
    ``|f(Tmax)| exp(-Re(s) Tmax) / Re(s)``, the tail left out if ``f`` stays
    at its final magnitude.  ``warning`` is set when ``Re(s) <= 0`` and the
    samples have not decayed, in which case the integral does not converge.
    """
    t = np.asarray(t, dtype=float)
    f = np.asarray(f)
    if t.ndim != 1 or t.shape != f.shape or len(t) < 2:
        raise ValueError("t and f must be equal-length 1-d arrays with >= 2 samples")
    dt = np.diff(t)
    if np.any(dt <= 0) or not np.allclose(dt, dt[0], rtol=1e-9, atol=0):
        raise ValueError("samples must be uniformly spaced and increasing")
    s = complex(s)
    integrand = np.exp(-s * t) * f
    value = complex(dt[0] * (integrand.sum() - 0.5 * (integrand[0] + integrand[-1])))
    tail = abs(f[-1])
    decayed = tail <= 1e-8 * max(np.max(np.abs(f)), 1e-300)
    if s.real > 0:
        bound = float(tail * math.exp(-s.real * t[-1]) / s.real)
    else:
        bound = 0.0 if decayed else math.inf
    warn = s.real <= 0 and not decayed
    if warn:
        warnings.warn("Re(s) <= 0 with non-decaying samples; Laplace integral diverges", RuntimeWarning)
    return LaplaceEstimate(value, bound, warn)


def spectral_content_above(partition: BandPartition, coeffs: CoefficientSet, band: int,
                           oversample: int = 2) -> float:
    """Largest DFT amplitude above ``N_band / 2T`` of the band-truncated signal.

    The reconstruction is sampled over its full period ``[0, 2T)`` at
    ``oversample`` times the finest ladder resolution, so every cosine term
    lands exactly on a DFT bin and bins above the cutoff exist.  Only
    meaningful for ``gamma = 0`` (otherwise the exponential envelope is not
    band-limited).
    """
    T = partition.horizon
    rate = oversample * partition.anchors[-1] / T
    n = int(round(2 * T * rate))
    t = np.arange(n) / rate
    y = ilt_evaluate(coeffs, t, partition, max_band=band)
    amp = np.abs(np.fft.rfft(y, axis=-1)) * 2.0 / n
    freqs = np.fft.rfftfreq(n, d=1.0 / rate)
    above = freqs > partition.cutoff(band) + 1e-12
    return float(amp[..., above].max()) if np.any(above) else 0.0
