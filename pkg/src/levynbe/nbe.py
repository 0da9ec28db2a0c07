"""Amortized neural point estimation for Levy model parameters.

A permutation-invariant estimator maps a fixed-length set of increments
to a parameter vector: every increment runs through a shared summary
network, the embeddings are reduced by a symmetric aggregation, and an
inference network maps the pooled embedding to raw outputs that a
scaled sigmoid squashes into the prior box.

Training minimizes a Monte Carlo estimate of the average risk over the
prior: sample parameter vectors from the prior, simulate replicate
datasets for each, and descend the mean loss with Adam. The returned
weights are those of the epoch with the lowest validation risk.
"""

from __future__ import annotations

import base64
import hashlib
import json
import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import (
    CorruptArtifact,
    FormatVersionMismatch,
    GammaShapeUnderflow,
    InputLengthMismatch,
    OutOfBox,
)
from .models import (
    IncrementSeries,
    ModelSpec,
    ParamVector,
    PriorBox,
    SeedSpec,
    simulate_increments_array,
    stream_rng,
)
from .nets import Activation, AdamOptimizer, Aggregation, DenseNet, aggregate, aggregate_backward

ARTIFACT_VERSION = 1

# Sub-stream purposes under one training seed.
_STREAM_PRIOR = 0
_STREAM_SIM = 1
_STREAM_INIT = 2
_STREAM_SHUFFLE = 3

_FORWARD_CHUNK = 131_072  # rows through the summary net at once


class LossKind:
    """Training loss, evaluated on box-normalized parameters."""

    MSLE = "msle"
    MAE = "mae"
    MSE = "mse"

    def __init__(self, name: str, alpha: float | None = None):
        if name == "linlin":
            if alpha is None or not (0.0 < alpha < 1.0):
                raise ValueError("linlin requires alpha strictly inside (0, 1)")
        elif name in (self.MSLE, self.MAE, self.MSE):
            if alpha is not None:
                raise ValueError(f"{name} takes no alpha")
        else:
            raise ValueError(f"unknown loss {name!r}")
        self.name = name
        self.alpha = alpha

    @classmethod
    def msle(cls) -> "LossKind":
        return cls(cls.MSLE)

    @classmethod
    def mae(cls) -> "LossKind":
        return cls(cls.MAE)

    @classmethod
    def mse(cls) -> "LossKind":
        return cls(cls.MSE)

    @classmethod
    def linlin(cls, alpha: float) -> "LossKind":
        return cls("linlin", alpha)

    @classmethod
    def parse(cls, text: str) -> "LossKind":
        if text.startswith("linlin"):
            _, _, a = text.partition(":")
            if not a:
                raise ValueError("linlin loss needs an alpha, e.g. linlin:0.05")
            return cls.linlin(float(a))
        return cls(text)

    def tag(self) -> str:
        if self.name == "linlin":
            return f"linlin:{self.alpha:g}"
        return self.name

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, LossKind)
            and self.name == other.name
            and self.alpha == other.alpha
        )

    def __repr__(self) -> str:
        return f"LossKind({self.tag()!r})"


def _loss_terms(kind: LossKind, est_n: np.ndarray, truth_n: np.ndarray) -> np.ndarray:
    """Per-dimension loss terms on normalized coordinates."""
    if kind.name == LossKind.MSLE:
        d = np.log1p(est_n) - np.log1p(truth_n)
        return d * d
    if kind.name == LossKind.MAE:
        return np.abs(est_n - truth_n)
    if kind.name == LossKind.MSE:
        d = est_n - truth_n
        return d * d
    ind = (truth_n <= est_n).astype(np.float64)
    return (ind - kind.alpha) * (est_n - truth_n)


def _loss_grad(kind: LossKind, est_n: np.ndarray, truth_n: np.ndarray) -> np.ndarray:
    """d(loss term)/d(normalized estimate), elementwise."""
    if kind.name == LossKind.MSLE:
        return 2.0 * (np.log1p(est_n) - np.log1p(truth_n)) / (1.0 + est_n)
    if kind.name == LossKind.MAE:
        return np.sign(est_n - truth_n)
    if kind.name == LossKind.MSE:
        return 2.0 * (est_n - truth_n)
    return (truth_n <= est_n).astype(np.float64) - kind.alpha


def loss_value(
    kind: LossKind, estimate: ParamVector, truth: ParamVector, box: PriorBox
) -> float:
    """Mean per-dimension loss on box-normalized parameters.

    Normalization keeps the loss well defined for negative parameters
    and weighs coordinates of different scales comparably.
    """
    for v in (estimate, truth):
        if not box.contains(v.values):
            raise OutOfBox(f"{v.values} outside {box.lower}..{box.upper}")
    est_n = (estimate.values - box.lower) / box.width
    truth_n = (truth.values - box.lower) / box.width
    return float(np.mean(_loss_terms(kind, est_n, truth_n)))


@dataclass
class DeepSetsEstimator:
    """Permutation-invariant parameter estimator with a fixed input length."""

    summary: DenseNet
    aggregation: Aggregation
    inference: DenseNet
    output_box: PriorBox
    input_len: int

    def __post_init__(self):
        if self.summary.in_dim != 1:
            raise ValueError("summary network must take scalar increments")
        if self.summary.out_dim != self.inference.in_dim:
            raise ValueError("summary embedding dim must match inference input dim")
        if self.inference.out_dim != self.output_box.model.dim:
            raise ValueError("inference output dim must match the parameter count")
        if self.input_len < 1:
            raise ValueError("input_len must be >= 1")

    @property
    def embed_dim(self) -> int:
        return self.summary.out_dim

    def parameters(self) -> list[np.ndarray]:
        return (
            self.summary.weights
            + self.summary.biases
            + self.inference.weights
            + self.inference.biases
        )

    def forward_batch(self, x: np.ndarray) -> np.ndarray:
        """Estimates for a (batch, input_len) array of datasets."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.input_len:
            raise InputLengthMismatch(
                f"expected (-1, {self.input_len}) datasets, got {x.shape}"
            )
        b, n = x.shape
        rows_per = max(1, _FORWARD_CHUNK // n)
        outs = []
        for start in range(0, b, rows_per):
            chunk = x[start : start + rows_per]
            embeds = self.summary.forward(chunk.reshape(-1, 1))
            pooled = aggregate(self.aggregation, embeds.reshape(chunk.shape[0], n, -1))
            raw = self.inference.forward(pooled)
            outs.append(self._squash(raw))
        return np.concatenate(outs, axis=0)

    def forward(self, data: IncrementSeries | np.ndarray) -> ParamVector:
        values = data.values if isinstance(data, IncrementSeries) else np.asarray(data)
        if values.shape != (self.input_len,):
            raise InputLengthMismatch(
                f"expected {self.input_len} increments, got {values.shape}"
            )
        out = self.forward_batch(values[None, :])[0]
        return ParamVector(out, self.output_box.model)

    def forward_resampled(self, values: np.ndarray, idx: np.ndarray) -> np.ndarray:
        """Estimates for index-resamplings of one base dataset.

        ``idx`` is (batch, input_len) of indices into ``values``. Each
        element's embedding is computed once and gathered per resample,
        which is bit-identical to forward_batch(values[idx]) because
        embeddings are per-element and the aggregation consumes them in
        the same order.
        """
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (self.input_len,):
            raise InputLengthMismatch(
                f"expected {self.input_len} increments, got {values.shape}"
            )
        if idx.ndim != 2 or idx.shape[1] != self.input_len:
            raise InputLengthMismatch(
                f"expected (-1, {self.input_len}) index rows, got {idx.shape}"
            )
        embeds = self.summary.forward(values[:, None])
        b, n = idx.shape
        rows_per = max(1, _FORWARD_CHUNK // n)
        outs = []
        for start in range(0, b, rows_per):
            pooled = aggregate(self.aggregation, embeds[idx[start : start + rows_per]])
            outs.append(self._squash(self.inference.forward(pooled)))
        return np.concatenate(outs, axis=0)

    def _squash(self, raw: np.ndarray) -> np.ndarray:
        box = self.output_box
        return box.lower + box.width * _sigmoid(raw)

    def backward(
        self, x: np.ndarray, truths: np.ndarray, kind: LossKind
    ) -> tuple[float, list[np.ndarray]]:
        """Batch risk and its exact gradients w.r.t. every parameter.

        ``x`` is (batch, input_len); ``truths`` is (batch, dim). The
        gradient list is aligned with :meth:`parameters`.
        """
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.input_len:
            raise InputLengthMismatch(
                f"expected (-1, {self.input_len}) datasets, got {x.shape}"
            )
        b, n = x.shape
        box = self.output_box
        d = box.model.dim

        embeds_flat, sum_cache = self.summary.forward_cached(x.reshape(-1, 1))
        embeds = embeds_flat.reshape(b, n, -1)
        pooled = aggregate(self.aggregation, embeds)
        raw, inf_cache = self.inference.forward_cached(pooled)

        sig = _sigmoid(raw)
        truth_n = (truths - box.lower) / box.width
        risk = float(np.mean(_loss_terms(kind, sig, truth_n)))

        # risk = mean over batch of mean over dims; chain through the
        # squashing sigmoid (normalized estimate is exactly sigmoid(raw)).
        d_raw = _loss_grad(kind, sig, truth_n) * sig * (1.0 - sig) / (b * d)
        d_pooled, d_w_inf, d_b_inf = self.inference.backward(inf_cache, d_raw)
        d_embeds = aggregate_backward(self.aggregation, embeds, d_pooled)
        _, d_w_sum, d_b_sum = self.summary.backward(
            sum_cache, d_embeds.reshape(b * n, -1)
        )
        return risk, d_w_sum + d_b_sum + d_w_inf + d_b_inf

    def batch_risk(self, x: np.ndarray, truths: np.ndarray, kind: LossKind) -> float:
        """Mean loss over a batch without gradients (chunked)."""
        box = self.output_box
        truth_n = (truths - box.lower) / box.width
        est = self.forward_batch(x)
        est_n = (est - box.lower) / box.width
        return float(np.mean(_loss_terms(kind, est_n, truth_n)))

    def copy(self) -> "DeepSetsEstimator":
        return DeepSetsEstimator(
            self.summary.copy(),
            self.aggregation,
            self.inference.copy(),
            self.output_box,
            self.input_len,
        )


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def build_estimator(
    model: ModelSpec,
    prior: PriorBox,
    input_len: int,
    embed_dim: int,
    aggregation: Aggregation,
    activation: Activation,
    rng: np.random.Generator,
    hidden: tuple[int, ...] = (32, 32, 32),
) -> DeepSetsEstimator:
    """Fresh estimator with fan-in initialized 3x32 (by default) networks."""
    summary = DenseNet.initialize([1, *hidden, embed_dim], activation, rng)
    inference = DenseNet.initialize([embed_dim, *hidden, model.dim], activation, rng)
    return DeepSetsEstimator(summary, aggregation, inference, prior, input_len)


@dataclass
class TrainConfig:
    """Monte Carlo training configuration.

    K parameter draws from the prior, J replicate datasets per draw,
    n_t increments per dataset. The train/validation split happens at
    the parameter-draw level so no draw leaks replicates across sides.
    """

    k: int
    j: int
    n_t: int
    epochs: int
    seed: SeedSpec
    batch_size: int = 128
    learning_rate: float = 1e-3
    embed_dim: int = 32
    loss: LossKind = field(default_factory=LossKind.msle)
    val_fraction: float = 0.1
    aggregation: Aggregation = Aggregation.MEAN
    activation: Activation = Activation.LEAKY_RELU
    hidden: tuple[int, ...] = (32, 32, 32)

    def __post_init__(self):
        for name in ("k", "j", "n_t", "epochs", "batch_size", "embed_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not (0.0 < self.val_fraction < 0.5):
            raise ValueError("val_fraction must be in (0, 0.5)")
        if self.learning_rate <= 0.0:
            raise ValueError("learning_rate must be > 0")

    def echo(self) -> dict:
        return {
            "k": self.k,
            "j": self.j,
            "n_t": self.n_t,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "embed_dim": self.embed_dim,
            "loss": self.loss.tag(),
            "val_fraction": self.val_fraction,
            "aggregation": self.aggregation.value,
            "activation": self.activation.value,
            "hidden": list(self.hidden),
            "seed": [self.seed.root_seed, self.seed.stream_id],
        }


@dataclass
class TrainReport:
    epoch_train_risk: list[float]
    epoch_val_risk: list[float]
    best_epoch: int  # 1-based; 0 means no epoch beat the initialization
    wall_time: float
    init_val_risk: float
    resampled_draws: int

    def to_json_dict(self) -> dict:
        return {
            "epoch_train_risk": self.epoch_train_risk,
            "epoch_val_risk": self.epoch_val_risk,
            "best_epoch": self.best_epoch,
            "wall_time_s": self.wall_time,
            "init_val_risk": self.init_val_risk,
            "resampled_draws": self.resampled_draws,
        }

    def to_csv(self) -> str:
        lines = ["epoch,train_risk,val_risk"]
        for i, (tr, vr) in enumerate(zip(self.epoch_train_risk, self.epoch_val_risk)):
            lines.append(f"{i + 1},{tr:.17g},{vr:.17g}")
        return "\n".join(lines) + "\n"


def simulate_training_pool(
    model: ModelSpec, prior: PriorBox, cfg: TrainConfig
) -> tuple[np.ndarray, np.ndarray, int]:
    """Simulate the K x J training pool.

    Returns (thetas (K, dim), datasets (K*J, n_t), resampled count).
    Dataset row k*J + j belongs to draw k. A draw whose simulation hits
    a gamma-shape underflow is redrawn from the prior on a fresh stream
    and counted.
    """
    k_total, j_total, n_t = cfg.k, cfg.j, cfg.n_t
    thetas = np.empty((k_total, model.dim))
    pool = np.empty((k_total * j_total, n_t))
    resampled = 0
    for k in range(k_total):
        for attempt in range(200):
            rng_p = stream_rng(cfg.seed, _STREAM_PRIOR, k, attempt)
            theta = prior.lower + rng_p.random(model.dim) * prior.width
            params = ParamVector(theta, model)
            try:
                for j in range(j_total):
                    rng_s = stream_rng(cfg.seed, _STREAM_SIM, k, j, attempt)
                    pool[k * j_total + j] = simulate_increments_array(
                        params, n_t, rng_s
                    )
            except GammaShapeUnderflow:
                resampled += 1
                continue
            thetas[k] = theta
            break
        else:
            raise GammaShapeUnderflow(
                f"draw {k}: no simulable parameter vector after 200 attempts"
            )
    return thetas, pool, resampled


def train(
    model: ModelSpec, prior: PriorBox, cfg: TrainConfig
) -> tuple[DeepSetsEstimator, TrainReport]:
    """Train an estimator by stochastic minimization of the Monte Carlo risk."""
    thetas, pool, resampled = simulate_training_pool(model, prior, cfg)
    return _train_on_pool(model, prior, cfg, thetas, pool, resampled)


def _train_on_pool(
    model: ModelSpec,
    prior: PriorBox,
    cfg: TrainConfig,
    thetas: np.ndarray,
    pool: np.ndarray,
    resampled: int,
    init_stream: int = 0,
) -> tuple[DeepSetsEstimator, TrainReport]:
    t0 = time.perf_counter()
    k_total, j_total = cfg.k, cfg.j
    n_val_draws = max(1, int(round(k_total * cfg.val_fraction)))
    n_train_draws = k_total - n_val_draws
    if n_train_draws < 1:
        raise ValueError("validation split leaves no training draws")

    truths = np.repeat(thetas, j_total, axis=0)
    split = n_train_draws * j_total
    x_train, y_train = pool[:split], truths[:split]
    x_val, y_val = pool[split:], truths[split:]

    est = build_estimator(
        model,
        prior,
        cfg.n_t,
        cfg.embed_dim,
        cfg.aggregation,
        cfg.activation,
        stream_rng(cfg.seed, _STREAM_INIT, init_stream),
        cfg.hidden,
    )
    params = est.parameters()
    opt = AdamOptimizer(params, cfg.learning_rate)

    init_val_risk = est.batch_risk(x_val, y_val, cfg.loss)
    best_val = init_val_risk
    best_epoch = 0
    best_weights = [p.copy() for p in params]

    n_train = x_train.shape[0]
    epoch_train, epoch_val = [], []
    for epoch in range(1, cfg.epochs + 1):
        order = stream_rng(cfg.seed, _STREAM_SHUFFLE, init_stream, epoch).permutation(
            n_train
        )
        seen = 0
        risk_acc = 0.0
        for start in range(0, n_train, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            risk, grads = est.backward(x_train[idx], y_train[idx], cfg.loss)
            opt.step(grads)
            risk_acc += risk * idx.shape[0]
            seen += idx.shape[0]
        epoch_train.append(risk_acc / seen)
        val_risk = est.batch_risk(x_val, y_val, cfg.loss)
        epoch_val.append(val_risk)
        if val_risk < best_val:
            best_val = val_risk
            best_epoch = epoch
            best_weights = [p.copy() for p in params]

    for p, w in zip(params, best_weights):
        p[...] = w
    report = TrainReport(
        epoch_train, epoch_val, best_epoch, time.perf_counter() - t0,
        init_val_risk, resampled,
    )
    return est, report


def save(est: DeepSetsEstimator, path) -> None:
    """Write a versioned, checksummed artifact; the round trip is bit exact."""
    payload = {
        "format_version": ARTIFACT_VERSION,
        "model": est.output_box.model.tag(),
        "prior": {
            "lower": [float(x) for x in est.output_box.lower],
            "upper": [float(x) for x in est.output_box.upper],
        },
        "input_len": est.input_len,
        "aggregation": est.aggregation.value,
        "activation": est.summary.activation.value,
        "summary_dims": list(est.summary.layer_dims),
        "inference_dims": list(est.inference.layer_dims),
        "weights": {
            "summary": _encode_net(est.summary),
            "inference": _encode_net(est.inference),
        },
    }
    payload["checksum"] = _payload_checksum(payload)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def load(path) -> DeepSetsEstimator:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptArtifact(f"unreadable artifact: {exc}") from exc
    if not isinstance(payload, dict) or "format_version" not in payload:
        raise CorruptArtifact("missing format_version")
    version = payload["format_version"]
    if version != ARTIFACT_VERSION:
        raise FormatVersionMismatch(
            f"artifact version {version}, supported {ARTIFACT_VERSION}"
        )
    stored = payload.get("checksum")
    if stored != _payload_checksum(payload):
        raise CorruptArtifact("checksum mismatch")
    try:
        model = ModelSpec.from_tag(payload["model"])
        prior = PriorBox(payload["prior"]["lower"], payload["prior"]["upper"], model)
        activation = Activation(payload["activation"])
        summary = _decode_net(
            payload["summary_dims"], payload["weights"]["summary"], activation
        )
        inference = _decode_net(
            payload["inference_dims"], payload["weights"]["inference"], activation
        )
        return DeepSetsEstimator(
            summary,
            Aggregation(payload["aggregation"]),
            inference,
            prior,
            int(payload["input_len"]),
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise CorruptArtifact(f"malformed artifact: {exc}") from exc


def _encode_net(net: DenseNet) -> list[dict]:
    return [
        {"w": _b64(w), "b": _b64(b)} for w, b in zip(net.weights, net.biases)
    ]


def _decode_net(dims: list[int], blocks: list[dict], activation: Activation) -> DenseNet:
    dims = [int(d) for d in dims]
    weights, biases = [], []
    for i, block in enumerate(blocks):
        w = _unb64(block["w"]).reshape(dims[i + 1], dims[i])
        b = _unb64(block["b"])
        weights.append(w)
        biases.append(b)
    return DenseNet(dims, weights, biases, activation)


def _b64(arr: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(arr, dtype="<f8").tobytes()).decode()


def _unb64(text: str) -> np.ndarray:
    return np.frombuffer(base64.b64decode(text), dtype="<f8").copy()


def _payload_checksum(payload: dict) -> str:
    body = {k: v for k, v in payload.items() if k != "checksum"}
    blob = json.dumps(body, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()
