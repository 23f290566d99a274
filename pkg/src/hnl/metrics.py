"""Time-domain, frequency-domain and cross-resolution consistency metrics."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Spectrum",
    "MetricsReport",
    "block_downsample",
    "integer_ratio",
    "rmse_time",
    "rmse_time_dataset",
    "fft_radix2",
    "dft_direct",
    "dft_amplitudes",
    "rmse_freq",
    "rmse_freq_dataset",
    "mce",
    "tce",
    "tce_dataset",
]


def integer_ratio(high: float, low: float, tol: float = 1e-9) -> int:
    """``high / low`` as an integer, or ``ValueError``."""
    if low <= 0 or high <= 0:
        raise ValueError("resolutions must be positive")
    r = high / low
    n = int(round(r))
    if n < 1 or abs(r - n) > tol * max(1.0, r):
        raise ValueError(f"resolution ratio {high}/{low} = {r} is not an integer")
    return n


def block_downsample(series, source_resolution: float, target_resolution: float) -> np.ndarray:
    """Non-overlapping block means along the last axis.

    ``source_resolution / target_resolution`` must be an integer that divides
    the series length.  A composite ratio is applied as a chain of prime-size
    means, largest prime first, so that e.g. 12 -> 4 -> 1 and 12 -> 1 give
    bit-identical results.
    """
    x = np.asarray(series, dtype=float)
    if target_resolution > source_resolution:
        raise ValueError(
            f"cannot downsample from {source_resolution}/h to a finer {target_resolution}/h")
    r = integer_ratio(source_resolution, target_resolution)
    if r == 1:
        return x.copy()
    n = x.shape[-1]
    if n % r:
        raise ValueError(f"series length {n} is not a multiple of the block size {r}")
    for p in _prime_factors(r):
        x = x.reshape(x.shape[:-1] + (x.shape[-1] // p, p)).mean(axis=-1)
    return x


def _prime_factors(r: int) -> list[int]:
    out, p = [], 2
    while p * p <= r:
        while r % p == 0:
            out.append(p)
            r //= p
        p += 1
    if r > 1:
        out.append(r)
    return sorted(out, reverse=True)


def _check_pair(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    return a, b


def rmse_time(forecast, actual) -> np.ndarray | float:
    """Root mean squared error over the last axis (one value per forecast)."""
    f, y = _check_pair(forecast, actual)
    out = np.sqrt(np.mean((y - f) ** 2, axis=-1))
    return float(out) if out.ndim == 0 else out


def rmse_time_dataset(forecasts, actuals) -> float:
    """Test-set mean of the per-forecast RMSE."""
    return float(np.mean(np.atleast_1d(rmse_time(forecasts, actuals))))


def fft_radix2(x) -> np.ndarray:
    """Iterative Cooley-Tukey FFT along the last axis; length must be 2**p."""
    x = np.asarray(x, dtype=complex)
    n = x.shape[-1]
    if n < 1 or n & (n - 1):
        raise ValueError(f"radix-2 FFT needs a power-of-two length, got {n}")
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=int)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    a = x[..., rev].copy()
    size = 2
    while size <= n:
        half = size // 2
        tw = np.exp(-2j * np.pi * np.arange(half) / size)
        a = a.reshape(x.shape[:-1] + (n // size, size))
        even = a[..., :half].copy()
        odd = a[..., half:] * tw
        a[..., :half] = even + odd
        a[..., half:] = even - odd
        a = a.reshape(x.shape[:-1] + (n,))
        size *= 2
    return a


def dft_direct(x) -> np.ndarray:
    """O(n^2) discrete Fourier transform along the last axis."""
    x = np.asarray(x, dtype=complex)
    n = x.shape[-1]
    k = np.arange(n)
    W = np.exp(-2j * np.pi * np.outer(k, k) / n)
    return x @ W.T


@dataclass
class Spectrum:
    """One-sided amplitude spectrum; ``freqs`` in cycles per time unit."""

    freqs: np.ndarray
    amplitudes: np.ndarray

    @property
    def M(self) -> int:
        return self.freqs.shape[0]


def dft_amplitudes(series, resolution: float = 1.0) -> Spectrum:
    """Amplitudes scaled by ``2/n`` for interior bins and ``1/n`` for DC and Nyquist.

    A sinusoid of amplitude ``A`` on an exact bin reads ``A``; a constant
    ``c`` reads ``c`` at DC.
    """
    x = np.asarray(series, dtype=float)
    n = x.shape[-1]
    if n < 2:
        raise ValueError("need at least two samples for a spectrum")
    X = fft_radix2(x) if n & (n - 1) == 0 else dft_direct(x)
    M = n // 2 + 1
    amp = np.abs(X[..., :M]) * (2.0 / n)
    amp[..., 0] /= 2.0
    if n % 2 == 0:
        amp[..., -1] /= 2.0
    freqs = np.arange(M) * resolution / n
    return Spectrum(freqs, amp)


def rmse_freq(forecast, actual, resolution: float = 1.0) -> np.ndarray | float:
    """RMSE between the amplitude spectra of forecast and actual."""
    f, y = _check_pair(forecast, actual)
    af = dft_amplitudes(f, resolution).amplitudes
    ay = dft_amplitudes(y, resolution).amplitudes
    out = np.sqrt(np.mean((ay - af) ** 2, axis=-1))
    return float(out) if out.ndim == 0 else out


def rmse_freq_dataset(forecasts, actuals, resolution: float = 1.0) -> float:
    return float(np.mean(np.atleast_1d(rmse_freq(forecasts, actuals, resolution))))


def mce(coarse, fine, coarse_resolution: float, fine_resolution: float) -> np.ndarray | float:
    """Mean consistency error ``||ds(fine) - coarse||^2 / n_coarse``."""
    c = np.asarray(coarse, dtype=float)
    d = block_downsample(fine, fine_resolution, coarse_resolution)
    if d.shape != c.shape:
        raise ValueError(f"downsampled shape {d.shape} does not match {c.shape}")
    out = np.sum((d - c) ** 2, axis=-1) / c.shape[-1]
    return float(out) if out.ndim == 0 else out


def _pairs(resolutions):
    res = sorted(resolutions)
    return [(a, b) for i, a in enumerate(res) for b in res[i + 1:]]


def tce(bundle: dict[float, np.ndarray]) -> np.ndarray | float:
    """Sum of MCE over every (coarser, finer) pair of a resolution bundle."""
    pairs = _pairs(bundle)
    total = 0.0
    for lo, hi in pairs:
        total = total + mce(bundle[lo], bundle[hi], lo, hi)
    return total


def tce_dataset(bundle: dict[float, np.ndarray]) -> float:
    return float(np.mean(np.atleast_1d(tce(bundle))))


@dataclass
class MetricsReport:
    """Scores for one model on one test set."""

    model: str
    rmse_time: dict[float, float]
    rmse_freq: float
    mce: dict[tuple[float, float], float]
    n_samples: int
    extra: dict[str, str] = field(default_factory=dict)

    @property
    def tce(self) -> float:
        return float(sum(self.mce.values()))

    @classmethod
    def compute(cls, model: str, forecasts: dict[float, np.ndarray],
                actuals: dict[float, np.ndarray], **extra) -> "MetricsReport":
        res = sorted(forecasts)
        top = res[-1]
        n = int(np.atleast_2d(forecasts[top]).shape[0])
        return cls(
            model=model,
            rmse_time={r: rmse_time_dataset(forecasts[r], actuals[r]) for r in res},
            rmse_freq=rmse_freq_dataset(forecasts[top], actuals[top], top),
            mce={(lo, hi): float(np.mean(np.atleast_1d(
                mce(forecasts[lo], forecasts[hi], lo, hi)))) for lo, hi in _pairs(res)},
            n_samples=n,
            extra={k: str(v) for k, v in extra.items()},
        )

    def to_text(self) -> str:
        """``key = value`` lines."""
        lines = [f"model = {self.model}", f"n_samples = {self.n_samples}"]
        lines += [f"{k} = {v}" for k, v in sorted(self.extra.items())]
        lines += [f"rmse_time[{r:g}] = {v!r}" for r, v in self.rmse_time.items()]
        lines.append(f"rmse_freq = {self.rmse_freq!r}")
        lines += [f"mce[{a:g},{b:g}] = {v!r}" for (a, b), v in self.mce.items()]
        lines.append(f"tce = {self.tce!r}")
        return "\n".join(lines) + "\n"

    def csv_rows(self) -> list[dict]:
        """One row per resolution; frequency RMSE and TCE repeat on every row."""
        return [
            {"model": self.model, **self.extra, "resolution": f"{r:g}", "rmse_time": repr(v),
             "rmse_freq": repr(self.rmse_freq), "tce": repr(self.tce), "n_samples": self.n_samples}
            for r, v in self.rmse_time.items()
        ]


def reports_to_csv(reports: list[MetricsReport]) -> str:
    rows = [row for r in reports for row in r.csv_rows()]
    if not rows:
        return ""
    fields = list(rows[0])
    for row in rows[1:]:
        fields += [k for k in row if k not in fields]
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()
