"""Truncation index as a low-pass filter on the three-sinusoid toy signal.

With T = 10 the cutoff is N/(2T) cycles per unit time, so N = 33 stops short
of the omega = 12 component and N = 161 includes it.  Takes about 40 s on one core.
Run: python3 demos/toy_filter.py
"""
import numpy as np

from hnl.data import SyntheticSpec, synthesize_toy
from hnl.forecasters import fit_toy

t, y = synthesize_toy(SyntheticSpec(kind="toy", duration=6 * np.pi, resolution=20.0))
for n in (33, 161):
    fit = fit_toy(t, y, n, horizon=10.0)
    cutoff = 2 * np.pi * n / 20.0
    amps = ", ".join(f"w={w}: {fit.amplitude_at(w):.3f}" for w in (1, 2, 12))
    print(f"N={n:3d}  angular cutoff {cutoff:5.1f}  {amps}  mse {fit.loss:.4f}")
