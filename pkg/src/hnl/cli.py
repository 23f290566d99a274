"""Command-line front door: ``hnl train|evaluate|schedule|toy``.

Every command reads one YAML run configuration, writes CSV outputs under
``--out`` through temp-file-and-rename, and records a manifest with the
config hash and library versions.  Outputs contain no timestamps, so a rerun
with the same config and seeds reproduces them byte for byte.

Exit codes: 0 success, 1 configuration error, 2 runtime or solver error.
The ``HNL_THREADS`` environment variable caps BLAS threads.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import platform
import sys
import tempfile
from contextlib import nullcontext
from importlib import metadata
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, config_hash, load_config
from .data import SyntheticSpec, align, build_windows, load_csv, synthesize_energy, synthesize_toy
from .dispatch import (ComplementarityError, DispatchInfeasible, day_ahead_pipeline,
                       day_ahead_schedule, default_system, integrated_schedule, load_system,
                       scale_wind)
from .forecasters import (ForecastBundle, PersistenceForecaster, fit_toy, forecast_bundle,
                          load_forecaster, save_forecaster, train_direct, train_hnl, train_nl)
from .laplace import spectral_content_above
from .metrics import MetricsReport, dft_amplitudes, reports_to_csv
from .reconcile import bu_reconcile, opt_reconcile

__all__ = ["main", "cmd_train", "cmd_evaluate", "cmd_schedule", "cmd_toy", "read_forecast_csv"]

log = logging.getLogger("hnl")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2
THREADS_ENV = "HNL_THREADS"
_NS_PER_HOUR = 3_600_000_000_000


# ---------------------------------------------------------------- file output

def _atomic_write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    with os.fdopen(fd, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)
    return path


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _f(x) -> str:
    return repr(float(x))


def _versions() -> dict:
    out = {"python": platform.python_version()}
    for pkg in ("artifact", "numpy", "scipy", "pydantic", "PyYAML", "threadpoolctl"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = "unknown"
    return out


def _write_manifest(out: Path, command: str, cfg: RunConfig, files: list[Path]) -> Path:
    doc = {
        "command": command,
        "config_hash": config_hash(cfg),
        "config": cfg.model_dump(mode="json"),
        "versions": _versions(),
        "outputs": {str(p.relative_to(out)): hashlib.sha256(p.read_bytes()).hexdigest()
                    for p in sorted(files)},
    }
    return _atomic_write(out / f"manifest_{command}.json", json.dumps(doc, indent=1, sort_keys=True) + "\n")


# ---------------------------------------------------------------- data

def _windows(cfg: RunConfig) -> dict:
    """WindowSet per target."""
    d = cfg.data
    if d.synthetic is not None:
        s = d.synthetic
        series = synthesize_energy(SyntheticSpec(duration=s.days, seed=s.seed,
                                                 resolution=s.resolution, noise=s.noise))
    else:
        series = {}
        for target in cfg.targets:
            path = getattr(d.csv, target)
            if path is None:
                raise ConfigError(f"data.csv.{target}: no CSV path for target {target!r}")
            series[target] = load_csv(path, d.csv.value_column)
    out = {}
    for target in cfg.targets:
        ds = align(series[target], d.splits)
        out[target] = build_windows(ds, d.history_hours, cfg.horizon, d.stride_hours)
    return out


def _wind_capacity(cfg: RunConfig, ws) -> float:
    if cfg.data.synthetic is not None:
        return SyntheticSpec().wind_capacity
    return float(np.max(ws.subset("train").target))


# ---------------------------------------------------------------- train

def _ckpt_path(out: Path, target: str, model: str, seed: int) -> Path:
    return out / "checkpoints" / f"{target}_{model}_s{seed}.json"


def _fit(cfg: RunConfig, ws, model: str, seed: int):
    net = cfg.net.for_seed(seed)
    if model == "hnl":
        return train_hnl(ws, cfg.ladder, net)
    if model == "nl":
        return {r: train_nl(ws, r, net, n_terms=cfg.nl_terms) for r in cfg.ladder}
    if model == "direct":
        return {r: train_direct(ws, r, net) for r in cfg.ladder}
    return PersistenceForecaster(cfg.horizon)


def _log_rows(model) -> list[list]:
    members = model.items() if isinstance(model, dict) else [("all", model)]
    rows = []
    for res, m in members:
        lg = getattr(m, "log", None)
        if lg is None:
            continue
        tag = res if res == "all" else f"{res:g}"
        rows += [[tag, e, _f(t), _f(v)] for e, t, v in zip(lg.epochs, lg.train_mse, lg.val_mse)]
    return rows


def cmd_train(cfg: RunConfig, out: Path) -> list[Path]:
    """One checkpoint and one training log per (target, model, seed)."""
    data = _windows(cfg)
    files = []
    for target, ws in data.items():
        for model in cfg.models:
            for seed in cfg.seeds:
                log.info("training %s/%s seed %d", target, model, seed)
                fitted = _fit(cfg, ws, model, seed)
                path = _ckpt_path(out, target, model, seed)
                path.parent.mkdir(parents=True, exist_ok=True)
                files.append(save_forecaster(fitted, path, {"target": target, "model": model,
                                                            "seed": seed}))
                files.append(_atomic_write(out / "logs" / f"{target}_{model}_s{seed}.csv",
                                           _csv_text(["resolution", "epoch", "train_mse", "val_mse"],
                                                     _log_rows(fitted))))
    files.append(_write_manifest(out, "train", cfg, files))
    return files


# ---------------------------------------------------------------- evaluate

def _load(out: Path, target: str, model: str, seed: int):
    path = _ckpt_path(out, target, model, seed)
    if not path.exists():
        raise FileNotFoundError(f"missing checkpoint {path}; run 'train' first")
    return load_forecaster(path)


def _coordinate(bundle: ForecastBundle, method: str, weighting: str, horizon: float):
    if method == "none":
        return bundle
    if method == "bu":
        return bu_reconcile(bundle)
    return opt_reconcile(bundle, weighting, horizon)


def _bundle_rows(values: dict, origins) -> list[list]:
    """One row per (origin, resolution): ``origin, resolution, v1 .. vn``."""
    stamps = [o + "Z" for o in np.datetime_as_string(origins, unit="s")]
    return [[o, f"{r:g}", *(_f(x) for x in v)]
            for r in sorted(values) for o, v in zip(stamps, values[r])]


def _write_bundle(path: Path, values: dict, origins) -> Path:
    return _atomic_write(path, _csv_text(["origin", "resolution", "values"],
                                         _bundle_rows(values, origins)))


def read_forecast_csv(path) -> dict:
    """Inverse of the forecast CSV writer: ``{resolution: (n_origins, n_steps)}``."""
    acc: dict = {}
    with open(path, newline="") as fh:
        rows = csv.reader(fh)
        next(rows)
        for row in rows:
            acc.setdefault(float(row[1]), []).append([float(x) for x in row[2:]])
    return {r: np.array(v) for r, v in acc.items()}


def _summary_rows(reports: list[tuple[dict, MetricsReport]]) -> list[list]:
    groups: dict = {}
    for key, rep in reports:
        g = groups.setdefault((key["target"], key["model"], key["coordination"]), [])
        g.append(rep)
    rows = []
    for (target, model, coord), reps in groups.items():
        for r in reps[0].rmse_time:
            v = [rp.rmse_time[r] for rp in reps]
            rows.append([target, model, coord, f"rmse_time[{r:g}]", _f(np.mean(v)), _f(np.std(v)), len(v)])
        for name, get in (("rmse_freq", lambda rp: rp.rmse_freq), ("tce", lambda rp: rp.tce)):
            v = [get(rp) for rp in reps]
            rows.append([target, model, coord, name, _f(np.mean(v)), _f(np.std(v)), len(v)])
        for pair in reps[0].mce:
            v = [rp.mce[pair] for rp in reps]
            rows.append([target, model, coord, f"mce[{pair[0]:g},{pair[1]:g}]", _f(np.mean(v)),
                         _f(np.std(v)), len(v)])
    return rows


def cmd_evaluate(cfg: RunConfig, out: Path) -> list[Path]:
    """Metrics per (target, model, seed, coordination) on the test split."""
    data = _windows(cfg)
    files, reports, spectral = [], [], []
    for target, ws in data.items():
        test = ws.subset("test")
        actual = {r: test.targets_at(r) for r in cfg.ladder}
        files.append(_write_bundle(out / "forecasts" / f"{target}_actual.csv", actual, test.origins))
        for model in cfg.models:
            for seed in cfg.seeds:
                fitted = _load(out, target, model, seed)
                raw = forecast_bundle(fitted, test, cfg.ladder, model=model, seed=seed)
                if model == "hnl":
                    spectral.append([target, seed] + _containment(fitted, test, cfg))
                for method in cfg.reconciliation.methods:
                    b = _coordinate(raw, method, cfg.reconciliation.weighting, cfg.horizon)
                    key = {"target": target, "model": model, "seed": seed, "coordination": method}
                    reports.append((key, MetricsReport.compute(model, b.values, actual, target=target,
                                                               seed=seed, coordination=method)))
                    files.append(_write_bundle(
                        out / "forecasts" / f"{target}_{model}_s{seed}_{method}.csv", b.values,
                        test.origins))
    files.append(_atomic_write(out / "metrics.csv", reports_to_csv([r for _, r in reports])))
    summary = _summary_rows(reports)
    files.append(_atomic_write(out / "summary.csv", _csv_text(
        ["target", "model", "coordination", "metric", "mean", "std", "n_seeds"], summary)))
    if spectral:
        files.append(_atomic_write(out / "spectral_containment.csv", _csv_text(
            ["target", "seed"] + [f"max_above_cutoff[{r:g}]" for r in cfg.ladder], spectral)))
    files.append(_atomic_write(out / "report.txt", _report_text(summary)))
    files.append(_write_manifest(out, "evaluate", cfg, files))
    return files


def _containment(model, test, cfg) -> list[str]:
    """Largest forecast amplitude above each level's cutoff, one entry per level."""
    from .forecasters import design_matrix

    X = design_matrix(test, model.target_stats, model.exog_stats)
    coeffs = model.coefficients(X)
    out = []
    for r in cfg.ladder:
        band = model.band_for(r)
        out.append(_f(np.max(spectral_content_above(model.partition, coeffs, band))))
    return out


def _report_text(summary_rows) -> str:
    lines = []
    current = None
    for target, model, coord, metric, mean, std, n in summary_rows:
        head = (target, model, coord)
        if head != current:
            lines.append(f"\n[{target}] {model} ({coord})")
            current = head
        lines.append(f"  {metric:<16} {float(mean):12.6g} +/- {float(std):.6g}  (n={n})")
    return "\n".join(lines).lstrip("\n") + "\n"


# ---------------------------------------------------------------- schedule

def _midnight_days(ws, n_days: int) -> np.ndarray:
    test = ws.subset("test")
    hours = test.origins.astype("datetime64[ns]").astype(np.int64) // _NS_PER_HOUR
    idx = np.flatnonzero(hours % 24 == 0)
    return idx[:n_days]


def _forecasts_for(out, cfg, target, ws, models, seed, idx):
    """Per model name: {resolution: (n_days, steps)} forecasts, clipped at zero."""
    test = ws.subset("test")
    res = {}
    for model in models:
        if model == "perfect":
            res[model] = {r: test.targets_at(r)[idx] for r in cfg.ladder}
            continue
        b = forecast_bundle(_load(out, target, model, seed), test, cfg.ladder).values
        res[model] = {r: np.maximum(v[idx], 0.0) for r, v in b.items()}
    return res


def _day_ahead_rows(cfg, system, forecasts, actual, origins, seed) -> list[list]:
    lo = cfg.ladder[0]
    dt = 1.0 / lo
    rows = []
    perfect = {}
    for model, fc in forecasts.items():
        for d, origin in enumerate(origins):
            act = actual[lo][d]
            try:
                if d not in perfect:
                    perfect[d] = day_ahead_schedule(act, system, dt, cfg.dispatch.backend)
                r = day_ahead_pipeline(fc[lo][d], act, system, dt, cfg.dispatch.backend, perfect[d])
                rows.append([model, seed, origin, _f(r.c_da), _f(r.c_rt), _f(r.c_da_perfect),
                             _f(r.additional_cost), "ok", ";".join(r.flags)])
            except (DispatchInfeasible, ComplementarityError) as exc:
                log.warning("day-ahead %s seed %d day %s: %s", model, seed, origin, exc)
                rows.append([model, seed, origin, "", "", "", "", "infeasible", str(exc).replace("\n", " ")])
    return rows


def _integrated_rows(cfg, system, load_fc, wind_fc, load_act, wind_act, origins, seed,
                     penetration, capacity) -> list[list]:
    lo, hi = cfg.ladder[0], cfg.ladder[-1]
    peak = float(np.max(load_act[hi]))

    def scaled(x):
        return scale_wind(x, capacity, penetration, peak)

    rows = []
    for lm, lf in load_fc.items():
        for wm, wf in wind_fc.items():
            for d, origin in enumerate(origins):
                try:
                    r = integrated_schedule(lf[lo][d], scaled(wf[lo][d]), lf[hi][d], scaled(wf[hi][d]),
                                            load_act[hi][d], scaled(wind_act[hi][d]), system,
                                            1.0 / lo, 1.0 / hi, backend=cfg.dispatch.backend)
                    rt = r.realtime.costs
                    rows.append([f"{penetration:g}", lm, wm, seed, origin, _f(r.total_cost),
                                 _f(r.day_ahead.total_cost),
                                 *(_f(rt.get(k, 0.0)) for k in ("generation", "battery", "wind",
                                                                 "imbalance")),
                                 "ok", ";".join(r.flags)])
                except (DispatchInfeasible, ComplementarityError) as exc:
                    log.warning("integrated %s x %s day %s: %s", lm, wm, origin, exc)
                    rows.append([f"{penetration:g}", lm, wm, seed, origin, "", "", "", "", "", "",
                                 "infeasible", str(exc).replace("\n", " ")])
    return rows


def _matrix_rows(rows) -> list[list]:
    """Mean integrated cost per (penetration, load model, wind model) over seeds and days."""
    acc: dict = {}
    for pen, lm, wm, _seed, _day, total, *_rest, status, _flags in rows:
        if status == "ok":
            acc.setdefault((pen, lm, wm), []).append(float(total))
    return [[pen, lm, wm, _f(np.mean(v)), _f(np.std(v)), len(v)] for (pen, lm, wm), v in acc.items()]


def cmd_schedule(cfg: RunConfig, out: Path) -> list[Path]:
    """Day-ahead costs per load model and the integrated load x wind cost matrix."""
    system = load_system(cfg.dispatch.system) if cfg.dispatch.system else default_system()
    data = _windows(cfg)
    if "load" not in data:
        raise ConfigError("targets: scheduling needs the 'load' target")
    models = ["perfect", *cfg.models]
    ws_load = data["load"]
    idx = _midnight_days(ws_load, cfg.dispatch.days)
    if idx.size == 0:
        raise RuntimeError("no test window starts at midnight; cannot schedule whole days")
    test = ws_load.subset("test")
    origins = [o + "Z" for o in np.datetime_as_string(test.origins[idx], unit="s")]
    load_act = {r: test.targets_at(r)[idx] for r in cfg.ladder}
    files = []

    da_rows, int_rows = [], []
    for seed in cfg.seeds:
        load_fc = _forecasts_for(out, cfg, "load", ws_load, models, seed, idx)
        da_rows += _day_ahead_rows(cfg, system, load_fc, load_act, origins, seed)
        if "wind" in data:
            ws_wind = data["wind"]
            wtest = ws_wind.subset("test")
            if not np.array_equal(wtest.origins, test.origins):
                raise RuntimeError("load and wind test windows are not aligned")
            wind_fc = _forecasts_for(out, cfg, "wind", ws_wind, models, seed, idx)
            wind_act = {r: wtest.targets_at(r)[idx] for r in cfg.ladder}
            cap = _wind_capacity(cfg, ws_wind)
            for pen in cfg.dispatch.penetrations:
                int_rows += _integrated_rows(cfg, system, load_fc, wind_fc, load_act, wind_act,
                                             origins, seed, pen, cap)

    files.append(_atomic_write(out / "schedule" / "day_ahead_costs.csv", _csv_text(
        ["model", "seed", "day", "c_da", "c_rt", "c_da_perfect", "additional_cost", "status", "flags"],
        da_rows)))
    if int_rows:
        files.append(_atomic_write(out / "schedule" / "integrated_costs.csv", _csv_text(
            ["penetration", "load_model", "wind_model", "seed", "day", "total_cost", "day_ahead_cost",
             "rt_generation", "rt_battery", "rt_wind", "rt_imbalance", "status", "flags"], int_rows)))
        files.append(_atomic_write(out / "schedule" / "cost_matrix.csv", _csv_text(
            ["penetration", "load_model", "wind_model", "mean_total_cost", "std", "n"],
            _matrix_rows(int_rows))))
    files.append(_write_manifest(out, "schedule", cfg, files))
    return files


# ---------------------------------------------------------------- toy

def cmd_toy(cfg: RunConfig, out: Path) -> list[Path]:
    """Truncation-index experiment on the three-sinusoid toy signal plus the
    single-large-decoder diagnostic on the energy data."""
    tc = cfg.toy
    t, y = synthesize_toy(SyntheticSpec(kind="toy", duration=tc.duration, resolution=tc.resolution))
    files, summary = [], []
    for seed in cfg.seeds:
        for n in tc.n_terms:
            fit = fit_toy(t, y, n, tc.horizon, tc.hidden, tc.steps, tc.lr, tc.coord_scale, seed)
            tag = f"N{n}_s{seed}"
            files.append(_atomic_write(out / "toy" / f"reconstruction_{tag}.csv", _csv_text(
                ["t", "target", "fitted"], [[_f(a), _f(b), _f(c)] for a, b, c in zip(t, y, fit.fitted)])))
            spec = dft_amplitudes(fit.fitted, tc.resolution)
            files.append(_atomic_write(out / "toy" / f"spectrum_{tag}.csv", _csv_text(
                ["omega", "amplitude"], [[_f(2 * np.pi * f), _f(a)]
                                         for f, a in zip(spec.freqs, spec.amplitudes)])))
            summary.append([n, seed, _f(n / (2 * tc.horizon)), *(_f(fit.amplitude_at(w)) for w in (1, 2, 12)),
                            _f(fit.loss)])
    files.append(_atomic_write(out / "toy" / "summary.csv", _csv_text(
        ["n_terms", "seed", "cutoff_cycles", "amp_w1", "amp_w2", "amp_w12", "train_mse"], summary)))
    if tc.diagnostic.enabled:
        files.append(_atomic_write(out / "toy" / "single_decoder_diagnostic.csv", _csv_text(
            ["seed", "model", "n_terms", "resolution", "best_val_mse"], _diagnostic_rows(cfg))))
    files.append(_write_manifest(out, "toy", cfg, files))
    return files


def _diagnostic_rows(cfg: RunConfig) -> list[list]:
    diag = cfg.toy.diagnostic
    sub = cfg.model_copy(update={"targets": (diag.target,)})
    ws = _windows(sub)[diag.target]
    top = cfg.ladder[-1]
    rows = []
    for seed in cfg.seeds:
        net = cfg.net.for_seed(seed)
        h = train_hnl(ws, cfg.ladder, net)
        big = train_nl(ws, top, net, n_terms=diag.n_terms, name="nl-large")
        rows.append([seed, "hnl", h.partition.n_coefficients - 1, f"{top:g}", _f(h.log.best_val)])
        rows.append([seed, "nl-large", diag.n_terms, f"{top:g}", _f(big.log.best_val)])
    return rows


# ---------------------------------------------------------------- entry point

COMMANDS = {"train": cmd_train, "evaluate": cmd_evaluate, "schedule": cmd_schedule, "toy": cmd_toy}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _parse_seeds(text: str) -> tuple[int, ...]:
    try:
        seeds = tuple(int(s) for s in text.split(",") if s.strip())
    except ValueError:
        raise ConfigError(f"--seeds: expected comma-separated integers, got {text!r}") from None
    if not seeds or len(set(seeds)) != len(seeds):
        raise ConfigError("--seeds: need at least one seed and no duplicates")
    return seeds


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hnl", description="Hierarchical Neural Laplace experiments.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="YAML run configuration")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seeds", help="comma-separated seeds overriding the config")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _thread_limit():
    value = os.environ.get(THREADS_ENV)
    if not value:
        return nullcontext()
    try:
        n = int(value)
        if n < 1:
            raise ValueError
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {value!r}") from None
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seeds:
            cfg = cfg.model_copy(update={"seeds": _parse_seeds(args.seeds)})
        limit = _thread_limit()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out)
    try:
        with limit:
            out.mkdir(parents=True, exist_ok=True)
            COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001  surfaced as an exit code
        log.debug("command failed", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
