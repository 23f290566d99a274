"""Band partition on the 60/15/5-minute ladder and what each band contributes.

A daily cycle, a 2-hour ripple and a 20-minute ripple are written straight
into the coefficient array (term k is a cosine at k/2T cycles per hour, so
amplitude a at index k needs the value T*a).  Each lands in exactly one
band, and truncating at a coarser level drops the faster ripples.
Run: python3 demos/bands_and_ilt.py
"""
import numpy as np

from hnl.laplace import CoefficientSet, build_band_partition, ilt_evaluate, temporal_components

T = 24.0
p = build_band_partition([1.0, 4.0, 12.0], T, gamma=0.0)
print("anchors:", p.anchors, " cutoffs (cycles/h):", [p.cutoff(b) for b in (1, 2, 3)])

terms = {2: 1.0, 24: 0.3, 144: 0.1}  # index -> amplitude: 1/24, 1/2 and 3 cycles per hour
values = np.zeros(p.n_coefficients, dtype=complex)
for k, a in terms.items():
    values[k] = T * a
coeffs = CoefficientSet.from_array(p, values)

t = np.arange(288) / 12.0
for b, comp in enumerate(temporal_components(coeffs, t).components, start=1):
    print(f"band {b}: rms {np.sqrt(np.mean(comp ** 2)):.4f}")

truth = sum(a * np.cos(np.pi * k * t / T) for k, a in terms.items())
print(f"max error of the full reconstruction: {np.max(np.abs(ilt_evaluate(coeffs, t) - truth)):.2e}")
hourly = np.arange(24) + 0.5
coarse = ilt_evaluate(coeffs, hourly, max_band=1)
expected = np.cos(2 * np.pi * hourly / T) + 0.3 * np.cos(np.pi * hourly)
print(f"band 1 alone at the hourly midpoints: max error {np.max(np.abs(coarse - expected)):.2e}")
