"""Hierarchical Neural Laplace forecaster and its benchmarks.

The Laplace forecaster encodes a history window plus exogenous features into
a hidden state ``h``.  One decoder per frequency band maps ``(h, u_k)`` to
``(Re, Im)`` of the Laplace value at ``s_k``, and the assembler evaluates the
truncated inverse transform using only the bands needed for the requested
resolution.  A single-band instance with a fixed anchor is the plain Neural
Laplace benchmark.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .data import Normalizer, WindowSet
from .laplace import BandPartition, CoefficientSet, build_band_partition, ilt_basis, ilt_evaluate
from .metrics import integer_ratio
from .nn import AdamState, DenseNet, TrainingAborted, load_checkpoint, net_init, save_checkpoint

__all__ = [
    "NetConfig",
    "ForecastBundle",
    "LaplaceForecaster",
    "DirectForecaster",
    "PersistenceForecaster",
    "TrainingLog",
    "midpoint_times",
    "design_matrix",
    "train_hnl",
    "train_nl",
    "train_direct",
    "predict_persistence",
    "forecast_bundle",
    "save_forecaster",
    "load_forecaster",
    "ToyFit",
    "fit_toy",
]

log = logging.getLogger(__name__)


@dataclass
class NetConfig:
    d_h: int = 64
    encoder_hidden: tuple[int, ...] = (128,)
    decoder_hidden: tuple[int, ...] = (128, 128)
    direct_hidden: tuple[int, ...] = (128, 128)
    coord_scale: float = 1.0
    coef_scale: float = 1.0
    coord_sharpness: float = 0.0
    gamma: float = 0.0
    lr: float = 1e-3
    batch_size: int = 32
    max_epochs: int = 200
    patience: int = 20
    seed: int = 0

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d: dict) -> "NetConfig":
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})


def midpoint_times(resolution: float, horizon: float) -> np.ndarray:
    """Centres of the ``horizon * resolution`` forecast intervals."""
    n = int(round(horizon * resolution))
    return (np.arange(1, n + 1) - 0.5) / resolution


def design_matrix(ws: WindowSet, target_stats: Normalizer, exog_stats: Normalizer) -> np.ndarray:
    """Normalised history followed by the flattened normalised exogenous block."""
    hist = target_stats.transform(ws.history)
    parts = [hist]
    if ws.exog.shape[-1]:
        parts.append(exog_stats.transform(ws.exog).reshape(len(ws), -1))
    return np.concatenate(parts, axis=1)


@dataclass
class TrainingLog:
    epochs: list[int] = field(default_factory=list)
    train_mse: list[float] = field(default_factory=list)
    val_mse: list[float] = field(default_factory=list)
    best_epoch: int = 0

    def record(self, epoch, tr, va):
        self.epochs.append(epoch)
        self.train_mse.append(tr)
        self.val_mse.append(va)

    @property
    def best_val(self) -> float:
        return self.val_mse[self.epochs.index(self.best_epoch)]

    def to_csv(self) -> str:
        lines = ["epoch,train_mse,val_mse"]
        lines += [f"{e},{t!r},{v!r}" for e, t, v in zip(self.epochs, self.train_mse, self.val_mse)]
        return "\n".join(lines) + "\n"


@dataclass
class ForecastBundle:
    """Forecasts for a batch of origins at several resolutions.

    ``values[r]`` has shape ``(n_origins, horizon * r)``.
    """

    values: dict[float, np.ndarray]
    origins: np.ndarray | None = None
    provenance: dict = field(default_factory=dict)

    @property
    def resolutions(self) -> list[float]:
        return sorted(self.values)

    def with_values(self, values, **prov) -> "ForecastBundle":
        return ForecastBundle(values, self.origins, {**self.provenance, **prov})


def _train_loop(params, loss_and_grads, val_loss, snapshot, restore, n_train, cfg: NetConfig,
                rng) -> TrainingLog:
    """Minibatch Adam with early stopping on validation MSE.

    ``loss_and_grads(idx)`` returns the batch loss and gradients aligned with
    ``params``; the best-validation parameters are restored at the end.
    """
    opt = AdamState(lr=cfg.lr)
    logbook = TrainingLog()
    best = val_loss()
    logbook.record(0, float("nan"), best)
    best_state, since = snapshot(), 0
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(n_train)
        total = 0.0
        for b, start in enumerate(range(0, n_train, cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            loss, grads = loss_and_grads(idx)
            if not np.isfinite(loss):
                raise TrainingAborted(f"non-finite loss at epoch {epoch}, batch {b}")
            try:
                opt.step_params(params, grads)
            except TrainingAborted as exc:
                raise TrainingAborted(f"{exc} (epoch {epoch}, batch {b})") from None
            total += loss * len(idx)
        va = val_loss()
        logbook.record(epoch, total / n_train, va)
        if va < best:
            best, best_state, since = va, snapshot(), 0
            logbook.best_epoch = epoch
        else:
            since += 1
            if since >= cfg.patience:
                break
    restore(best_state)
    return logbook


def _spread_coordinate_units(net: DenseNet, slope: float, seed: int) -> None:
    """Place the first-layer tanh transitions evenly along the band coordinate.

    Unit ``j`` switches near ``u = (j + 0.5) / width`` with a width of roughly
    one coefficient, so every coefficient index gets its own active units.
    """
    W, b = net.weights[0], net.biases[0]
    width = W.shape[0]
    sign = np.random.default_rng(seed).choice([-1.0, 1.0], size=width)
    centres = (np.arange(width) + 0.5) / width
    W[:, -1] = sign * slope
    b[:] = -W[:, -1] * centres


@dataclass
class LaplaceForecaster:
    """Encoder, one decoder per band, and the band-truncating assembler."""

    partition: BandPartition
    encoder: DenseNet
    decoders: list[DenseNet]
    target_stats: Normalizer
    exog_stats: Normalizer
    config: NetConfig
    band_map: dict[float, int]
    name: str = "hnl"
    log: TrainingLog | None = None

    @classmethod
    def initialise(cls, partition: BandPartition, input_dim: int, target_stats, exog_stats,
                   config: NetConfig, band_map=None, name="hnl") -> "LaplaceForecaster":
        seed = config.seed
        enc = net_init([input_dim, *config.encoder_hidden, config.d_h], seed=seed * 1000 + 1)
        decs = [net_init([config.d_h + 1, *config.decoder_hidden, 2], seed=seed * 1000 + 2 + i)
                for i in range(partition.m)]
        if config.coord_sharpness > 0:
            for i, d in enumerate(decs):
                _spread_coordinate_units(d, partition.band_size(i + 1) * config.coord_sharpness,
                                         seed * 1000 + 50 + i)
        if band_map is None:
            band_map = {r: i + 1 for i, r in enumerate(partition.resolutions)}
        return cls(partition, enc, decs, target_stats, exog_stats, config, dict(band_map), name)

    @property
    def resolutions(self) -> list[float]:
        return sorted(self.band_map)

    @property
    def _out_scale(self) -> float:
        return self.partition.horizon * self.config.coef_scale

    def band_for(self, resolution: float) -> int:
        for r, band in self.band_map.items():
            if abs(r - resolution) <= 1e-9 * max(1.0, r):
                return band
        raise ValueError(f"resolution {resolution}/h is not served by this model "
                         f"(available: {self.resolutions})")

    def params(self) -> list[np.ndarray]:
        out = self.encoder.params()
        for d in self.decoders:
            out += d.params()
        return out

    def encode(self, X) -> np.ndarray:
        return self.encoder.forward(np.atleast_2d(X), cache=False)

    def _decoder_input(self, band: int, h: np.ndarray) -> np.ndarray:
        """Explicit ``(h, u_k)`` rows, shape ``(batch * size, d_h + 1)``."""
        u = self.partition.band_coordinates(band) * self.config.coord_scale
        B, K = h.shape[0], len(u)
        Z = np.empty((B, K, h.shape[1] + 1))
        Z[:, :, :-1] = h[:, None, :]
        Z[:, :, -1] = u
        return Z.reshape(B * K, -1)

    def _decoder_forward(self, band: int, h: np.ndarray):
        """Decoder outputs ``(batch, size, 2)`` without materialising the input rows.

        The first layer splits into an ``h`` part shared by every index and a
        ``u`` part shared by every window; later layers see ``batch * size`` rows.
        """
        net = self.decoders[band - 1]
        u = self.partition.band_coordinates(band) * self.config.coord_scale
        W0, b0 = net.weights[0], net.biases[0]
        B, K = h.shape[0], len(u)
        z = (h @ W0[:, :-1].T)[:, None, :] + (np.outer(u, W0[:, -1]) + b0)[None, :, :]
        last = len(net.weights) - 1
        acts = [np.tanh(z).reshape(B * K, -1) if last else z.reshape(B * K, -1)]
        for l in range(1, last + 1):
            z = acts[-1] @ net.weights[l].T + net.biases[l]
            acts.append(z if l == last else np.tanh(z))
        return acts[-1].reshape(B, K, -1), (h, u, acts)

    def _decoder_backward(self, band: int, cache, grad_out: np.ndarray):
        """Parameter gradients and ``d loss / d h`` for :meth:`_decoder_forward`."""
        net = self.decoders[band - 1]
        h, u, acts = cache
        B, K = h.shape[0], len(u)
        last = len(net.weights) - 1
        gw, gb = [None] * (last + 1), [None] * (last + 1)
        delta = grad_out.reshape(B * K, -1)
        for l in range(last, 0, -1):
            gw[l] = delta.T @ acts[l - 1]
            gb[l] = delta.sum(axis=0)
            delta = (delta @ net.weights[l]) * (1.0 - acts[l - 1] ** 2)
        delta = delta.reshape(B, K, -1)
        per_window = delta.sum(axis=1)
        per_index = delta.sum(axis=0)
        gw0 = np.empty_like(net.weights[0])
        gw0[:, :-1] = per_window.T @ h
        gw0[:, -1] = per_index.T @ u
        gw[0] = gw0
        gb[0] = per_index.sum(axis=0)
        dh = per_window @ net.weights[0][:, :-1]
        return gw, gb, dh

    def decode_band(self, band: int, h: np.ndarray) -> np.ndarray:
        """Complex Laplace values on ``band``'s s-grid, shape ``(batch, size)``."""
        if not 1 <= band <= self.partition.m:
            raise IndexError(f"band must be in 1..{self.partition.m}, got {band}")
        h = np.atleast_2d(h)
        out = self._decoder_forward(band, h)[0] * self._out_scale
        return out[..., 0] + 1j * out[..., 1]

    def coefficients(self, X, max_band: int | None = None) -> CoefficientSet:
        h = self.encode(X)
        max_band = max_band or self.partition.m
        return CoefficientSet(self.partition, [self.decode_band(b, h) for b in range(1, max_band + 1)])

    def predict_normalized(self, X, resolution: float) -> np.ndarray:
        band = self.band_for(resolution)
        coeffs = self.coefficients(X, band)
        return ilt_evaluate(coeffs, midpoint_times(resolution, self.partition.horizon),
                            self.partition, max_band=band)

    def predict(self, ws: WindowSet, resolution: float) -> np.ndarray:
        X = design_matrix(ws, self.target_stats, self.exog_stats)
        return self.target_stats.inverse(self.predict_normalized(X, resolution))

    def assemble(self, ws: WindowSet, resolution: float) -> np.ndarray:
        return self.predict(ws, resolution)

    # training internals
    def _loss_and_grads(self, X, Y, C, S):
        T = self._out_scale
        h = self.encoder.forward(X)
        outs, caches = [], []
        for b in range(1, self.partition.m + 1):
            out, cache = self._decoder_forward(b, h)
            outs.append(out * T)
            caches.append(cache)
        out = np.concatenate(outs, axis=1)
        f = out[..., 0] @ C.T + out[..., 1] @ S.T
        r = f - Y
        loss = float(np.mean(r * r))
        dF = 2.0 * r / r.size
        g = np.stack([dF @ C, dF @ S], axis=-1) * T
        dh = np.zeros_like(h)
        dec_w, dec_b = [], []
        start = 0
        for b in range(1, self.partition.m + 1):
            K = self.partition.band_size(b)
            gw, gb, dhb = self._decoder_backward(b, caches[b - 1], g[:, start:start + K])
            dh += dhb
            dec_w.append(gw)
            dec_b.append(gb)
            start += K
        eg = self.encoder.backward(X, dh)
        grads = eg.weights + eg.biases
        for gw, gb in zip(dec_w, dec_b):
            grads += gw + gb
        return loss, grads

    def fit(self, X, Y, times, X_val, Y_val) -> TrainingLog:
        """Jointly train encoder and decoders on the full-band reconstruction
        at ``times`` (normalised targets ``Y``)."""
        if len(X) == 0:
            raise ValueError("empty training set")
        if len(X_val) == 0:
            raise ValueError("empty validation set")
        C, S = ilt_basis(self.partition, times)

        def val_loss():
            coeffs = self.coefficients(X_val).to_array()
            f = coeffs.real @ C.T + coeffs.imag @ S.T
            return float(np.mean((f - Y_val) ** 2))

        def snapshot():
            return [p.copy() for p in self.params()]

        def restore(state):
            for p, s in zip(self.params(), state):
                p[...] = s

        self.log = _train_loop(self.params(), lambda idx: self._loss_and_grads(X[idx], Y[idx], C, S),
                               val_loss, snapshot, restore, len(X),
                               self.config, np.random.default_rng(self.config.seed))
        return self.log


@dataclass
class DirectForecaster:
    """One dense network emitting the whole horizon at one resolution."""

    net: DenseNet
    resolution: float
    horizon: float
    target_stats: Normalizer
    exog_stats: Normalizer
    config: NetConfig
    name: str = "direct"
    log: TrainingLog | None = None

    @property
    def resolutions(self) -> list[float]:
        return [self.resolution]

    def predict(self, ws: WindowSet, resolution: float | None = None) -> np.ndarray:
        if resolution is not None and abs(resolution - self.resolution) > 1e-9:
            raise ValueError(f"this model forecasts at {self.resolution}/h only")
        X = design_matrix(ws, self.target_stats, self.exog_stats)
        return self.target_stats.inverse(self.net.forward(X, cache=False))


@dataclass
class PersistenceForecaster:
    """Repeats the last observed value for every lead time."""

    horizon: float = 24.0
    name: str = "persistence"

    def predict(self, ws: WindowSet, resolution: float) -> np.ndarray:
        return np.stack([predict_persistence(h, resolution, self.horizon) for h in ws.history]) \
            if len(ws) else np.zeros((0, int(round(self.horizon * resolution))))


def predict_persistence(history, resolution: float, horizon: float = 24.0) -> np.ndarray:
    history = np.asarray(history, dtype=float)
    if history.size == 0:
        raise ValueError("persistence needs a non-empty history")
    return np.full(int(round(horizon * resolution)), history[-1])


def _split_xy(ws: WindowSet, resolution: float):
    tr, va = ws.subset("train"), ws.subset("val")
    if len(tr) == 0:
        raise ValueError("empty training set")
    if len(va) == 0:
        raise ValueError("empty validation set")
    ts, es = ws.target_stats, ws.exog_stats
    Xtr, Xva = design_matrix(tr, ts, es), design_matrix(va, ts, es)
    Ytr = ts.transform(tr.targets_at(resolution))
    Yva = ts.transform(va.targets_at(resolution))
    return Xtr, Ytr, Xva, Yva


def train_hnl(ws: WindowSet, resolutions=(1.0, 4.0, 12.0), config: NetConfig | None = None,
              name: str = "hnl") -> LaplaceForecaster:
    """Train one hierarchical model; loss is MSE at the finest resolution."""
    config = config or NetConfig()
    part = build_band_partition(resolutions, ws.horizon, config.gamma)
    top = part.resolutions[-1]
    integer_ratio(ws.resolution, top)
    Xtr, Ytr, Xva, Yva = _split_xy(ws, top)
    model = LaplaceForecaster.initialise(part, Xtr.shape[1], ws.target_stats, ws.exog_stats,
                                         config, name=name)
    model.fit(Xtr, Ytr, midpoint_times(top, ws.horizon), Xva, Yva)
    return model


def train_nl(ws: WindowSet, resolution: float, config: NetConfig | None = None,
             n_terms: int = 33, name: str = "nl") -> LaplaceForecaster:
    """Single-decoder Neural Laplace benchmark for one resolution.

    ``n_terms`` is the truncation index; ``n_terms = T * f_r`` of the finest
    resolution gives the large single-decoder diagnostic.
    """
    config = config or NetConfig()
    part = BandPartition.from_anchors([n_terms], ws.horizon, config.gamma)
    Xtr, Ytr, Xva, Yva = _split_xy(ws, resolution)
    model = LaplaceForecaster.initialise(part, Xtr.shape[1], ws.target_stats, ws.exog_stats,
                                         config, band_map={float(resolution): 1}, name=name)
    model.fit(Xtr, Ytr, midpoint_times(resolution, ws.horizon), Xva, Yva)
    return model


def train_direct(ws: WindowSet, resolution: float, config: NetConfig | None = None,
                 name: str = "direct") -> DirectForecaster:
    config = config or NetConfig()
    Xtr, Ytr, Xva, Yva = _split_xy(ws, resolution)
    n_out = Ytr.shape[1]
    net = net_init([Xtr.shape[1], *config.direct_hidden, n_out], seed=config.seed * 1000 + 7)
    model = DirectForecaster(net, float(resolution), ws.horizon, ws.target_stats, ws.exog_stats,
                             config, name)

    def loss_and_grads(idx):
        X, Y = Xtr[idx], Ytr[idx]
        f = net.forward(X)
        r = f - Y
        g = net.backward(X, 2.0 * r / r.size)
        return float(np.mean(r * r)), g.weights + g.biases

    def val_loss():
        return float(np.mean((net.forward(Xva, cache=False) - Yva) ** 2))

    model.log = _train_loop(net.params(), loss_and_grads, val_loss,
                            lambda: [p.copy() for p in net.params()],
                            lambda s: [p.__setitem__(Ellipsis, v) for p, v in zip(net.params(), s)],
                            len(Xtr), config, np.random.default_rng(config.seed))
    return model


def forecast_bundle(models, ws: WindowSet, resolutions, **provenance) -> ForecastBundle:
    """Collect forecasts at each resolution.

    ``models`` is one multi-resolution model or a mapping resolution -> model.
    """
    values = {}
    for r in resolutions:
        m = models[r] if isinstance(models, dict) else models
        values[float(r)] = m.predict(ws, r)
    return ForecastBundle(values, ws.origins, dict(provenance))


@dataclass
class ToyFit:
    n_terms: int
    horizon: float
    t: np.ndarray
    target: np.ndarray
    fitted: np.ndarray
    coefficients: CoefficientSet
    partition: BandPartition
    loss: float

    def amplitude_at(self, omega: float) -> float:
        """Amplitude of the fitted signal at angular frequency ``omega``.

        Projects onto ``sin`` and ``cos`` over the sample grid, which is exact
        when the grid spans whole periods of every component.
        """
        c, s = np.cos(omega * self.t), np.sin(omega * self.t)
        basis = np.stack([c, s], 1)
        ab, *_ = np.linalg.lstsq(basis, self.fitted, rcond=None)
        return float(np.hypot(*ab))


def fit_toy(t, y, n_terms: int, horizon: float = 10.0, hidden=(128, 128), steps: int = 20000,
            lr: float = 3e-3, coord_scale: float = 20.0, seed: int = 0) -> ToyFit:
    """Fit one Laplace decoder ``u -> f(s_k)`` directly to a sampled signal.

    No encoder is involved: the decoder sees only the scaled frequency
    coordinate, so the fit isolates the effect of the truncation index.
    Full-batch Adam on the time-domain MSE.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    part = BandPartition.from_anchors([n_terms], horizon)
    C, S = ilt_basis(part, t)
    X = (np.arange(n_terms + 1) / n_terms)[:, None] * coord_scale
    dec = net_init([1, *hidden, 2], seed=seed)
    opt = AdamState(lr=lr)
    loss = float("nan")
    for _ in range(steps):
        out = dec.forward(X) * horizon
        f = C @ out[:, 0] + S @ out[:, 1]
        r = f - y
        loss = float(np.mean(r * r))
        g = 2.0 * r / r.size
        grads = dec.backward(X, np.stack([C.T @ g, S.T @ g], 1) * horizon)
        opt.step_params(dec.params(), grads.arrays())
    out = dec.forward(X, cache=False) * horizon
    coeffs = CoefficientSet.from_array(part, out[:, 0] + 1j * out[:, 1])
    fitted = C @ out[:, 0] + S @ out[:, 1]
    return ToyFit(n_terms, horizon, t, y, fitted, coeffs, part, loss)


def _payload(model):
    meta = {"kind": type(model).__name__, "name": model.name}
    arrays = {}
    nets = {}
    if isinstance(model, PersistenceForecaster):
        meta["horizon"] = model.horizon
        return nets, meta, arrays
    arrays = {"target_mean": np.atleast_1d(model.target_stats.mean),
              "target_std": np.atleast_1d(model.target_stats.std),
              "exog_mean": np.atleast_1d(model.exog_stats.mean),
              "exog_std": np.atleast_1d(model.exog_stats.std)}
    meta["config"] = model.config.to_dict()
    if model.log is not None:
        meta["best_epoch"] = model.log.best_epoch
    if isinstance(model, LaplaceForecaster):
        p = model.partition
        meta.update(horizon=p.horizon, gamma=p.gamma, resolutions=list(p.resolutions),
                    anchors=list(p.anchors),
                    band_map=[[r, b] for r, b in sorted(model.band_map.items())])
        nets["encoder"] = model.encoder
        nets.update({f"decoder{i + 1}": d for i, d in enumerate(model.decoders)})
    elif isinstance(model, DirectForecaster):
        meta.update(resolution=model.resolution, horizon=model.horizon)
        nets["net"] = model.net
    else:
        raise TypeError(f"cannot checkpoint {type(model).__name__}")
    return nets, meta, arrays


def _from_payload(nets, meta, arrays):
    kind = meta["kind"]
    if kind == "PersistenceForecaster":
        return PersistenceForecaster(meta["horizon"], meta["name"])
    ts = Normalizer(arrays["target_mean"].reshape(()), arrays["target_std"].reshape(()))
    es = Normalizer(arrays["exog_mean"], arrays["exog_std"])
    cfg = NetConfig.from_dict(meta["config"])
    if kind == "LaplaceForecaster":
        part = BandPartition(meta["horizon"], meta["gamma"], tuple(meta["resolutions"]),
                             tuple(meta["anchors"]))
        decs = [nets[f"decoder{i + 1}"] for i in range(part.m)]
        return LaplaceForecaster(part, nets["encoder"], decs, ts, es, cfg,
                                 {float(r): int(b) for r, b in meta["band_map"]}, meta["name"])
    if kind == "DirectForecaster":
        return DirectForecaster(nets["net"], meta["resolution"], meta["horizon"], ts, es, cfg,
                                meta["name"])
    raise ValueError(f"unknown forecaster kind {kind!r}")


def save_forecaster(model, path, extra_meta: dict | None = None) -> Path:
    """Checkpoint one model, or a mapping resolution -> model as one file."""
    if not isinstance(model, dict):
        nets, meta, arrays = _payload(model)
        return save_checkpoint(path, nets, {**meta, **(extra_meta or {})}, arrays)
    nets, arrays, members = {}, {}, []
    for i, (r, m) in enumerate(sorted(model.items())):
        n_i, meta_i, a_i = _payload(m)
        nets.update({f"m{i}.{k}": v for k, v in n_i.items()})
        arrays.update({f"m{i}.{k}": v for k, v in a_i.items()})
        members.append({"resolution": float(r), "meta": meta_i})
    meta = {"kind": "PerResolution", "members": members, **(extra_meta or {})}
    return save_checkpoint(path, nets, meta, arrays)


def load_forecaster(path):
    """Inverse of :func:`save_forecaster`."""
    nets, meta, arrays = load_checkpoint(path)
    if meta["kind"] != "PerResolution":
        return _from_payload(nets, meta, arrays)
    out = {}
    for i, mem in enumerate(meta["members"]):
        pre = f"m{i}."
        out[mem["resolution"]] = _from_payload(
            {k[len(pre):]: v for k, v in nets.items() if k.startswith(pre)}, mem["meta"],
            {k[len(pre):]: v for k, v in arrays.items() if k.startswith(pre)})
    return out
