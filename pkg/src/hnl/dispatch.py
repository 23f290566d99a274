"""Generator and battery scheduling against load and wind forecasts.

Two pipelines are provided:

* day-ahead scheduling of generators and battery, followed by a real-time
  settlement in which only the battery may move;
* an integrated day with an hourly generator schedule, 4-hour intra-day
  battery windows on 5-minute forecasts, and a real-time imbalance charge.

Quadratic generator costs are replaced by convex chord approximations so
every stage is a linear program.  The charge/discharge exclusivity binaries
are dropped; the solution is checked for complementarity afterwards.
"""
from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .lp import LPProblem, solve_lp

__all__ = [
    "GeneratorSpec",
    "BatterySpec",
    "SystemSpec",
    "PWLCost",
    "ScheduleSolution",
    "DispatchInfeasible",
    "ComplementarityError",
    "default_system",
    "load_system",
    "save_system",
    "pwl_linearize",
    "day_ahead_schedule",
    "realtime_settle",
    "day_ahead_pipeline",
    "integrated_day_ahead",
    "intraday_battery",
    "realtime_imbalance",
    "integrated_schedule",
    "scale_wind",
]

log = logging.getLogger(__name__)

COMPLEMENTARITY_TOL = 1e-6
SYSTEM_SCHEMA_VERSION = 1


class DispatchInfeasible(RuntimeError):
    """No schedule satisfies the constraints; ``report`` says where."""

    def __init__(self, message: str, report: dict | None = None):
        super().__init__(message)
        self.report = report or {}


class ComplementarityError(RuntimeError):
    """The relaxed optimum charges and discharges in the same step."""

    def __init__(self, message: str, steps):
        super().__init__(message)
        self.steps = list(steps)


@dataclass(frozen=True)
class GeneratorSpec:
    a: float
    b: float
    c: float
    capacity: float
    ramp_up: float
    ramp_down: float

    def __post_init__(self):
        if self.a < 0:
            raise ValueError("generator cost must be convex (a >= 0)")
        if self.capacity <= 0 or self.ramp_up <= 0 or self.ramp_down <= 0:
            raise ValueError("generator capacity and ramp rates must be positive")


@dataclass(frozen=True)
class BatterySpec:
    capacity: float
    soc_low: float
    soc_high: float
    soc_init: float
    eta_c: float
    eta_d: float
    power: float
    degradation: float

    def __post_init__(self):
        if not 0 <= self.soc_low <= self.soc_init <= self.soc_high <= 1:
            raise ValueError("need 0 <= soc_low <= soc_init <= soc_high <= 1")
        if not (0 < self.eta_c < 1 and 0 < self.eta_d < 1):
            raise ValueError("efficiencies must lie strictly between 0 and 1")
        if self.capacity <= 0 or self.power < 0 or self.degradation < 0:
            raise ValueError("battery capacity must be positive, power and price non-negative")


@dataclass(frozen=True)
class SystemSpec:
    generators: tuple[GeneratorSpec, ...]
    battery: BatterySpec
    wind_penalty: float = 5.0
    price_pos: float = 10.0
    price_neg: float = 15.0
    segments: int = 8

    def __post_init__(self):
        object.__setattr__(self, "generators", tuple(self.generators))
        if not self.generators:
            raise ValueError("at least one generator is required")
        if min(self.wind_penalty, self.price_pos, self.price_neg) < 0:
            raise ValueError("prices must be non-negative")
        if self.segments < 1:
            raise ValueError("need at least one cost segment")

    @property
    def total_capacity(self) -> float:
        return sum(g.capacity for g in self.generators)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["generators"] = [asdict(g) for g in self.generators]
        return {"version": SYSTEM_SCHEMA_VERSION, **d}

    @classmethod
    def from_dict(cls, d: dict) -> "SystemSpec":
        d = dict(d)
        version = d.pop("version", SYSTEM_SCHEMA_VERSION)
        if version != SYSTEM_SCHEMA_VERSION:
            raise ValueError(f"unsupported system schema version {version}")
        known = {"generators", "battery", "wind_penalty", "price_pos", "price_neg", "segments"}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown system keys: {sorted(extra)}")
        gens = tuple(GeneratorSpec(**g) for g in d.pop("generators"))
        return cls(gens, BatterySpec(**d.pop("battery")), **d)


def default_system() -> SystemSpec:
    """Three generators and one battery sized for loads of roughly 100-250 kW."""
    return SystemSpec(
        generators=(
            GeneratorSpec(0.02, 2.0, 0.0, 150.0, 60.0, 60.0),
            GeneratorSpec(0.04, 3.0, 0.0, 100.0, 80.0, 80.0),
            GeneratorSpec(0.06, 4.0, 0.0, 80.0, 120.0, 120.0),
        ),
        battery=BatterySpec(capacity=100.0, soc_low=0.1, soc_high=0.9, soc_init=0.5,
                            eta_c=0.95, eta_d=0.95, power=50.0, degradation=0.5),
    )


def load_system(path) -> SystemSpec:
    """Read a system spec from YAML or JSON."""
    import yaml

    text = Path(path).read_text()
    return SystemSpec.from_dict(yaml.safe_load(text))


def save_system(system: SystemSpec, path) -> Path:
    import yaml

    path = Path(path)
    path.write_text(yaml.safe_dump(system.to_dict(), sort_keys=True))
    return path


@dataclass(frozen=True)
class PWLCost:
    """Convex chord approximation of ``a P^2 + b P + c`` on ``[0, capacity]``."""

    a: float
    b: float
    c: float
    capacity: float
    slopes: np.ndarray
    width: float

    @property
    def K(self) -> int:
        return len(self.slopes)

    def segment_fill(self, P) -> np.ndarray:
        """Segment loadings that fill the cheapest segments first, shape ``P.shape + (K,)``."""
        P = np.asarray(P, dtype=float)[..., None]
        starts = np.arange(self.K) * self.width
        return np.clip(P - starts, 0.0, self.width)

    def evaluate(self, P) -> np.ndarray:
        return self.c + self.segment_fill(P) @ self.slopes

    def quadratic(self, P) -> np.ndarray:
        P = np.asarray(P, dtype=float)
        return self.a * P * P + self.b * P + self.c

    @property
    def error_bound(self) -> float:
        return self.a * self.width ** 2 / 4.0


def pwl_linearize(a: float, b: float, c: float, capacity: float, K: int = 8) -> PWLCost:
    """Chords of the quadratic on ``K`` equal segments; one segment if ``a == 0``."""
    if a < 0:
        raise ValueError("quadratic coefficient must be non-negative for a convex cost")
    if K < 1:
        raise ValueError("need at least one segment")
    if capacity <= 0:
        raise ValueError("capacity must be positive")
    if a == 0:
        return PWLCost(a, b, c, capacity, np.array([float(b)]), float(capacity))
    w = capacity / K
    s = np.arange(K)
    return PWLCost(a, b, c, capacity, b + a * w * (2 * s + 1), w)


@dataclass
class ScheduleSolution:
    """Decisions and costs of one scheduling stage over ``N`` steps of ``dt`` hours."""

    dt: float
    generators: np.ndarray  # (N, J)
    charge: np.ndarray
    discharge: np.ndarray
    soc: np.ndarray
    wind_used: np.ndarray
    curtailed: np.ndarray
    imbalance_pos: np.ndarray
    imbalance_neg: np.ndarray
    costs: dict
    status: str = "optimal"
    flags: list[str] = field(default_factory=list)

    @property
    def N(self) -> int:
        return self.generators.shape[0]

    @property
    def total_cost(self) -> float:
        return self.costs["total"]

    def complementarity(self) -> np.ndarray:
        return np.minimum(self.charge, self.discharge)

    def balance_residual(self, load) -> np.ndarray:
        supply = self.generators.sum(axis=1) + self.wind_used + self.discharge + self.imbalance_pos
        return supply - (np.asarray(load, dtype=float) + self.charge + self.imbalance_neg)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        J = self.generators.shape[1]
        w.writerow(["step", *[f"P{j + 1}" for j in range(J)], "Pc", "Pd", "SOC", "W", "Wc", "Pp", "Pn"])
        for i in range(self.N):
            w.writerow([i + 1, *[repr(float(v)) for v in self.generators[i]],
                        *[repr(float(v[i])) for v in (self.charge, self.discharge, self.soc,
                                                       self.wind_used, self.curtailed,
                                                       self.imbalance_pos, self.imbalance_neg)]])
        return buf.getvalue()

    def summary(self) -> str:
        lines = [f"status = {self.status}"]
        lines += [f"{k} = {v!r}" for k, v in self.costs.items()]
        if self.flags:
            lines.append("flags = " + ";".join(self.flags))
        return "\n".join(lines) + "\n"


class _Builder:
    """Accumulates variable blocks and constraint rows for one LP."""

    def __init__(self):
        self.n = 0
        self.lb, self.ub, self.c = [], [], []
        self.eq, self.b_eq, self.ub_rows, self.b_ub = [], [], [], []

    def block(self, shape, lb, ub, cost=0.0) -> np.ndarray:
        size = int(np.prod(shape))
        idx = np.arange(self.n, self.n + size).reshape(shape)
        self.n += size
        self.lb.append(np.broadcast_to(np.asarray(lb, dtype=float), shape).reshape(-1))
        self.ub.append(np.broadcast_to(np.asarray(ub, dtype=float), shape).reshape(-1))
        self.c.append(np.broadcast_to(np.asarray(cost, dtype=float), shape).reshape(-1))
        return idx

    def add_eq(self, terms, rhs):
        self.eq.append(terms)
        self.b_eq.append(float(rhs))

    def add_le(self, terms, rhs):
        self.ub_rows.append(terms)
        self.b_ub.append(float(rhs))

    def _matrix(self, rows):
        A = np.zeros((len(rows), self.n))
        for r, terms in enumerate(rows):
            for idx, coef in terms:
                np.add.at(A[r], np.atleast_1d(idx), coef)
        return A

    def problem(self, constant=0.0) -> LPProblem:
        return LPProblem(np.concatenate(self.c), self._matrix(self.ub_rows) if self.ub_rows else None,
                         np.array(self.b_ub) if self.ub_rows else None,
                         self._matrix(self.eq) if self.eq else None,
                         np.array(self.b_eq) if self.eq else None,
                         np.concatenate(self.lb), np.concatenate(self.ub), constant)


def _as_series(x, name) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite values")
    return x


def _battery_block(B: _Builder, battery: BatterySpec, N: int, dt: float, price_scale: float,
                   soc_start: float | None = None):
    """Charge, discharge and SOC variables with the SOC recursion."""
    pc = B.block((N,), 0.0, battery.power, price_scale * battery.degradation * battery.eta_c)
    pd = B.block((N,), 0.0, battery.power, price_scale * battery.degradation / battery.eta_d)
    soc = B.block((N,), battery.soc_low, battery.soc_high)
    start = battery.soc_init if soc_start is None else soc_start
    for i in range(N):
        terms = [(soc[i], battery.capacity), (pc[i], -dt * battery.eta_c), (pd[i], dt / battery.eta_d)]
        if i == 0:
            B.add_eq(terms, battery.capacity * start)
        else:
            B.add_eq(terms + [(soc[i - 1], -battery.capacity)], 0.0)
    return pc, pd, soc


def _generator_block(B: _Builder, system: SystemSpec, N: int, dt: float, price_scale: float):
    """Segment variables per generator and step, with ramp limits between steps."""
    segs = []
    for g in system.generators:
        pwl = pwl_linearize(g.a, g.b, g.c, g.capacity, system.segments)
        seg = B.block((N, pwl.K), 0.0, pwl.width, price_scale * np.tile(pwl.slopes, (N, 1)))
        segs.append((pwl, seg))
        for i in range(1, N):
            B.add_le([(seg[i], 1.0), (seg[i - 1], -1.0)], g.ramp_up * dt)
            B.add_le([(seg[i - 1], 1.0), (seg[i], -1.0)], g.ramp_down * dt)
    return segs


def _battery_cost(battery: BatterySpec, pc, pd) -> float:
    return float(battery.degradation * np.sum(battery.eta_c * pc + pd / battery.eta_d))


def _generation_cost(system: SystemSpec, P: np.ndarray) -> float:
    total = 0.0
    for j, g in enumerate(system.generators):
        total += float(np.sum(pwl_linearize(g.a, g.b, g.c, g.capacity, system.segments).evaluate(P[:, j])))
    return total


def _solve(problem: LPProblem, backend: str, stage: str, **report):
    sol = solve_lp(problem, backend=backend)
    if not sol.ok:
        raise DispatchInfeasible(f"{stage}: LP {sol.status} ({sol.message})",
                                 {"stage": stage, "status": sol.status, **report})
    return sol


def _milp_resolve(problem: LPProblem, pairs, stage: str):
    """Re-solve with an explicit charge/discharge exclusivity binary per step."""
    from scipy.optimize import Bounds, LinearConstraint, milp

    n = problem.n
    k = len(pairs)
    c = np.concatenate([problem.c, np.zeros(k)])
    rows, lo, hi = [], [], []
    if problem.A_ub.shape[0]:
        rows.append(np.hstack([problem.A_ub, np.zeros((problem.A_ub.shape[0], k))]))
        lo.append(np.full(problem.A_ub.shape[0], -np.inf))
        hi.append(problem.b_ub)
    if problem.A_eq.shape[0]:
        rows.append(np.hstack([problem.A_eq, np.zeros((problem.A_eq.shape[0], k))]))
        lo.append(problem.b_eq)
        hi.append(problem.b_eq)
    link = np.zeros((2 * k, n + k))
    for r, (ic, id_, cap) in enumerate(pairs):
        link[2 * r, ic] = 1.0
        link[2 * r, n + r] = -cap
        link[2 * r + 1, id_] = 1.0
        link[2 * r + 1, n + r] = cap
    rows.append(link)
    lo.append(np.full(2 * k, -np.inf))
    hi.append(np.concatenate([[0.0, cap] for _, _, cap in pairs]))
    res = milp(c, constraints=LinearConstraint(np.vstack(rows), np.concatenate(lo), np.concatenate(hi)),
               integrality=np.concatenate([np.zeros(n), np.ones(k)]),
               bounds=Bounds(np.concatenate([problem.lb, np.zeros(k)]),
                             np.concatenate([problem.ub, np.ones(k)])))
    if res.status != 0:
        raise DispatchInfeasible(f"{stage}: binary re-solve failed ({res.message})", {"stage": stage})
    return np.asarray(res.x[:n])


def _check_complementarity(x, pc, pd, stage: str, hard: bool):
    bad = np.flatnonzero(np.minimum(x[pc], x[pd]) > COMPLEMENTARITY_TOL)
    if bad.size and hard:
        raise ComplementarityError(
            f"{stage}: simultaneous charge and discharge at steps {bad.tolist()}", bad)
    return bad


def day_ahead_schedule(load, system: SystemSpec | None = None, dt: float = 1.0,
                       backend: str = "simplex") -> ScheduleSolution:
    """Minimum generation plus battery cost meeting the forecast load exactly."""
    system = system or default_system()
    L = _as_series(load, "load forecast")
    N = L.size
    bat = system.battery
    short = np.flatnonzero(L > system.total_capacity + bat.power + 1e-9)
    if short.size:
        raise DispatchInfeasible("day-ahead: load exceeds generation plus battery capacity",
                                 {"stage": "day_ahead", "status": "infeasible", "steps": short.tolist()})
    B = _Builder()
    segs = _generator_block(B, system, N, dt, 1.0)
    pc, pd, soc = _battery_block(B, bat, N, dt, 1.0)
    for i in range(N):
        B.add_eq([(seg[i], 1.0) for _, seg in segs] + [(pd[i], 1.0), (pc[i], -1.0)], L[i])
    const = N * sum(g.c for g in system.generators)
    prob = B.problem(const)
    sol = _solve(prob, backend, "day_ahead")
    x = sol.x
    _check_complementarity(x, pc, pd, "day-ahead", hard=True)
    P = np.stack([x[seg].sum(axis=1) for _, seg in segs], axis=1)
    gen_cost = float(sum(x[seg].ravel() @ np.tile(pwl.slopes, N) for pwl, seg in segs)) + const
    bat_cost = _battery_cost(bat, x[pc], x[pd])
    z = np.zeros(N)
    return ScheduleSolution(dt, P, x[pc], x[pd], x[soc], z, z.copy(), z.copy(), z.copy(),
                            {"generation": gen_cost, "battery": bat_cost, "total": gen_cost + bat_cost})


def _battery_only(gap, system: SystemSpec, dt, backend, stage, with_imbalance, wind=None,
                  soc_start=None, price_scale=1.0):
    """Battery (and optionally wind and imbalance) covering ``gap = demand - fixed supply``."""
    bat = system.battery
    N = gap.size
    B = _Builder()
    pc, pd, soc = _battery_block(B, bat, N, dt, price_scale, soc_start)
    blocks = {"pc": pc, "pd": pd, "soc": soc}
    terms_extra = [[] for _ in range(N)]
    if wind is not None:
        w = B.block((N,), 0.0, wind)
        wc = B.block((N,), 0.0, wind, price_scale * system.wind_penalty)
        for i in range(N):
            B.add_eq([(w[i], 1.0), (wc[i], 1.0)], wind[i])
            terms_extra[i].append((w[i], 1.0))
        blocks.update(w=w, wc=wc)
    if with_imbalance:
        pp = B.block((N,), 0.0, np.inf, price_scale * system.price_pos)
        pn = B.block((N,), 0.0, np.inf, price_scale * system.price_neg)
        for i in range(N):
            terms_extra[i] += [(pp[i], 1.0), (pn[i], -1.0)]
        blocks.update(pp=pp, pn=pn)
    for i in range(N):
        B.add_eq([(pd[i], 1.0), (pc[i], -1.0)] + terms_extra[i], gap[i])
    prob = B.problem()
    sol = _solve(prob, backend, stage)
    x = sol.x
    flags = []
    if _check_complementarity(x, pc, pd, stage, hard=False).size:
        x = _milp_resolve(prob, [(pc[i], pd[i], bat.power) for i in range(N)], stage)
        flags.append(f"{stage}: binary re-solve for charge/discharge exclusivity")
    return {k: x[v] for k, v in blocks.items()}, flags


def realtime_settle(schedule: ScheduleSolution, actual_load, system: SystemSpec | None = None,
                    backend: str = "simplex") -> ScheduleSolution:
    """Re-dispatch only the battery against the realised load.

    Generator cost is carried over unchanged.  When the battery cannot close
    the gap, the residual is bought or sold at the imbalance prices and the
    result is flagged.
    """
    system = system or default_system()
    L = _as_series(actual_load, "actual load")
    if L.size != schedule.N:
        raise ValueError(f"actual load has {L.size} steps, schedule has {schedule.N}")
    gap = L - schedule.generators.sum(axis=1)
    flags = []
    try:
        out, f = _battery_only(gap, system, schedule.dt, backend, "real-time", with_imbalance=False)
    except DispatchInfeasible:
        out, f = _battery_only(gap, system, schedule.dt, backend, "real-time", with_imbalance=True)
        flags.append("real-time: battery could not balance the load; residual priced as imbalance")
    flags += f
    N = schedule.N
    pp = out.get("pp", np.zeros(N))
    pn = out.get("pn", np.zeros(N))
    gen_cost = schedule.costs["generation"]
    bat_cost = _battery_cost(system.battery, out["pc"], out["pd"])
    imb_cost = float(np.sum(system.price_pos * pp + system.price_neg * pn))
    z = np.zeros(N)
    return ScheduleSolution(schedule.dt, schedule.generators.copy(), out["pc"], out["pd"], out["soc"],
                            z, z.copy(), pp, pn,
                            {"generation": gen_cost, "battery": bat_cost, "imbalance": imb_cost,
                             "total": gen_cost + bat_cost + imb_cost},
                            "optimal" if not flags else "flagged", flags)


@dataclass
class DayAheadResult:
    c_da: float
    c_rt: float
    c_da_perfect: float
    schedule: ScheduleSolution
    settlement: ScheduleSolution

    @property
    def additional_cost(self) -> float:
        return self.c_rt - self.c_da_perfect

    @property
    def flags(self) -> list[str]:
        return self.settlement.flags


def day_ahead_pipeline(forecast, actual, system: SystemSpec | None = None, dt: float = 1.0,
                       backend: str = "simplex", perfect: ScheduleSolution | None = None) -> DayAheadResult:
    """Schedule on ``forecast``, settle on ``actual`` and compare with the perfect-forecast cost."""
    system = system or default_system()
    da = day_ahead_schedule(forecast, system, dt, backend)
    rt = realtime_settle(da, actual, system, backend)
    perfect = perfect or day_ahead_schedule(actual, system, dt, backend)
    return DayAheadResult(da.total_cost, rt.total_cost, perfect.total_cost, da, rt)


def integrated_day_ahead(load_low, wind_low, system: SystemSpec | None = None, dt: float = 1.0,
                         backend: str = "simplex") -> ScheduleSolution:
    """Hourly generator schedule with wind use and curtailment; costs scaled by ``dt``."""
    system = system or default_system()
    L = _as_series(load_low, "load forecast")
    W = np.maximum(_as_series(wind_low, "wind forecast"), 0.0)
    if L.size != W.size:
        raise ValueError("load and wind forecasts differ in length")
    N = L.size
    B = _Builder()
    segs = _generator_block(B, system, N, dt, dt)
    w = B.block((N,), 0.0, W)
    wc = B.block((N,), 0.0, W, dt * system.wind_penalty)
    for i in range(N):
        B.add_eq([(seg[i], 1.0) for _, seg in segs] + [(w[i], 1.0)], L[i])
        B.add_eq([(w[i], 1.0), (wc[i], 1.0)], W[i])
    const = dt * N * sum(g.c for g in system.generators)
    sol = _solve(B.problem(const), backend, "integrated day-ahead")
    x = sol.x
    P = np.stack([x[seg].sum(axis=1) for _, seg in segs], axis=1)
    gen_cost = dt * (float(sum(x[seg].ravel() @ np.tile(pwl.slopes, N) for pwl, seg in segs))
                     + N * sum(g.c for g in system.generators))
    wind_cost = dt * system.wind_penalty * float(np.sum(x[wc]))
    z = np.zeros(N)
    return ScheduleSolution(dt, P, z, z.copy(), np.full(N, system.battery.soc_init), x[w], x[wc],
                            z.copy(), z.copy(),
                            {"generation": gen_cost, "wind": wind_cost, "total": gen_cost + wind_cost})


def _hold(P_low: np.ndarray, factor: int) -> np.ndarray:
    return np.repeat(P_low, factor, axis=0)


def intraday_battery(day_ahead: ScheduleSolution, load_high, wind_high,
                     system: SystemSpec | None = None, dt: float = 1.0 / 12.0,
                     window_hours: float = 4.0, on_infeasible: str = "raise",
                     backend: str = "simplex") -> ScheduleSolution:
    """Battery and wind schedule on high-resolution forecasts in consecutive windows.

    Generators hold their hourly set points.  SOC at the end of one window
    seeds the next.  ``on_infeasible="slack"`` re-solves an infeasible window
    with imbalance variables instead of raising.
    """
    if on_infeasible not in ("raise", "slack"):
        raise ValueError("on_infeasible must be 'raise' or 'slack'")
    system = system or default_system()
    L = _as_series(load_high, "load forecast")
    W = np.maximum(_as_series(wind_high, "wind forecast"), 0.0)
    factor = int(round(day_ahead.dt / dt))
    if abs(factor * dt - day_ahead.dt) > 1e-9 or L.size != day_ahead.N * factor or W.size != L.size:
        raise ValueError("high-resolution forecasts do not tile the day-ahead schedule")
    per_window = int(round(window_hours / dt))
    if per_window < 1 or L.size % per_window:
        raise ValueError(f"window of {window_hours} h does not tile {L.size} steps")
    P = _hold(day_ahead.generators, factor)
    n = L.size
    keys = ("pc", "pd", "soc", "w", "wc", "pp", "pn")
    out = {k: np.zeros(n) for k in keys}
    flags = []
    soc = system.battery.soc_init
    for wi, start in enumerate(range(0, n, per_window)):
        sl = slice(start, start + per_window)
        gap = L[sl] - P[sl].sum(axis=1)
        try:
            res, f = _battery_only(gap, system, dt, backend, f"intra-day window {wi + 1}", False,
                                   wind=W[sl], soc_start=soc, price_scale=dt)
        except DispatchInfeasible as exc:
            if on_infeasible == "raise":
                exc.report["window"] = wi + 1
                raise
            res, f = _battery_only(gap, system, dt, backend, f"intra-day window {wi + 1}", True,
                                   wind=W[sl], soc_start=soc, price_scale=dt)
            flags.append(f"intra-day window {wi + 1}: imbalance slack used")
        flags += f
        for k in keys:
            if k in res:
                out[k][sl] = res[k]
        soc = float(res["soc"][-1])
    gen_cost = dt * _generation_cost(system, P)
    bat_cost = dt * _battery_cost(system.battery, out["pc"], out["pd"])
    wind_cost = dt * system.wind_penalty * float(out["wc"].sum())
    imb_cost = dt * float(np.sum(system.price_pos * out["pp"] + system.price_neg * out["pn"]))
    return ScheduleSolution(dt, P, out["pc"], out["pd"], out["soc"], out["w"], out["wc"],
                            out["pp"], out["pn"],
                            {"generation": gen_cost, "battery": bat_cost, "wind": wind_cost,
                             "imbalance": imb_cost,
                             "total": gen_cost + bat_cost + wind_cost + imb_cost},
                            "optimal" if not flags else "flagged", flags)


def realtime_imbalance(intraday: ScheduleSolution, actual_load, actual_wind,
                       system: SystemSpec | None = None) -> ScheduleSolution:
    """Price the realised residual once generators and battery are fixed.

    Per step the wind use ``W`` in ``[0, W_actual]`` minimises curtailment
    plus imbalance cost; the remaining residual is split into a shortfall
    ``P^p`` and a surplus ``P^n``.
    """
    system = system or default_system()
    L = _as_series(actual_load, "actual load")
    Wa = np.maximum(_as_series(actual_wind, "actual wind"), 0.0)
    if L.size != intraday.N or Wa.size != intraday.N:
        raise ValueError("actuals do not match the schedule length")
    gap = L + intraday.charge - intraday.discharge - intraday.generators.sum(axis=1)
    if system.price_neg >= system.wind_penalty:
        w = np.clip(gap, 0.0, Wa)
    else:
        w = Wa.copy()
    resid = gap - w
    pp = np.maximum(resid, 0.0)
    pn = np.maximum(-resid, 0.0)
    wc = Wa - w
    dt = intraday.dt
    gen_cost = dt * _generation_cost(system, intraday.generators)
    bat_cost = dt * _battery_cost(system.battery, intraday.charge, intraday.discharge)
    wind_cost = dt * system.wind_penalty * float(wc.sum())
    imb_cost = dt * float(np.sum(system.price_pos * pp + system.price_neg * pn))
    return ScheduleSolution(dt, intraday.generators.copy(), intraday.charge.copy(),
                            intraday.discharge.copy(), intraday.soc.copy(), w, wc, pp, pn,
                            {"generation": gen_cost, "battery": bat_cost, "wind": wind_cost,
                             "imbalance": imb_cost,
                             "total": gen_cost + bat_cost + wind_cost + imb_cost},
                            intraday.status, list(intraday.flags))


@dataclass
class IntegratedResult:
    day_ahead: ScheduleSolution
    intraday: ScheduleSolution
    realtime: ScheduleSolution

    @property
    def total_cost(self) -> float:
        return self.realtime.total_cost

    @property
    def flags(self) -> list[str]:
        return self.realtime.flags


def integrated_schedule(load_low, wind_low, load_high, wind_high, load_actual, wind_actual,
                        system: SystemSpec | None = None, low_dt: float = 1.0,
                        high_dt: float = 1.0 / 12.0, on_infeasible: str = "slack",
                        backend: str = "simplex") -> IntegratedResult:
    """Day-ahead, intra-day and real-time stages for one day."""
    system = system or default_system()
    da = integrated_day_ahead(load_low, wind_low, system, low_dt, backend)
    idy = intraday_battery(da, load_high, wind_high, system, high_dt, on_infeasible=on_infeasible,
                           backend=backend)
    rt = realtime_imbalance(idy, load_actual, wind_actual, system)
    return IntegratedResult(da, idy, rt)


def scale_wind(wind, capacity: float, penetration: float, peak_load: float) -> np.ndarray:
    """Rescale a wind series so its nameplate equals ``penetration * peak_load``."""
    if capacity <= 0:
        raise ValueError("wind capacity must be positive")
    return np.asarray(wind, dtype=float) * (penetration * peak_load / capacity)


def system_summary(system: SystemSpec) -> str:
    return json.dumps(system.to_dict(), sort_keys=True)
