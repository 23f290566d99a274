"""One synthetic day through day-ahead scheduling and real-time settlement.

Compares a perfect forecast with two perturbed ones and prints the extra
cost each forecast error causes.  Run: python3 demos/dispatch_day.py
"""
import numpy as np

from hnl.data import SyntheticSpec, synthesize_energy
from hnl.dispatch import day_ahead_pipeline, day_ahead_schedule, default_system
from hnl.metrics import block_downsample

system = default_system()
load = synthesize_energy(SyntheticSpec(duration=2, seed=3))["load"].values[:288]
actual = block_downsample(load, 12, 1)
perfect = day_ahead_schedule(actual, system)
print(perfect.summary())

rng = np.random.default_rng(0)
for name, forecast in [("perfect", actual),
                       ("+5% bias", actual * 1.05),
                       ("3% noise", actual * (1 + 0.03 * rng.normal(size=24)))]:
    r = day_ahead_pipeline(forecast, actual, system, perfect=perfect)
    flags = "; ".join(r.flags) or "-"
    print(f"{name:9s} C_da {r.c_da:9.2f}  C_rt {r.c_rt:9.2f}  additional {r.additional_cost:8.2f}  {flags}")
