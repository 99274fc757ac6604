"""Losses, loss balancing, Adam and the epoch loop for both architectures.

All losses are measured on scaled quantities: states divided by the box
half-width and time divided by the horizon T_s. The physics residual is then

    d(x_hat / half) / d(t / T_s) - T_s * f(x_hat, u_t) / half

which is dimensionless and of order one for every state channel.
"""
from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import diffcore as dc, excitation
from .diffcore import MlpParameters, Tape
from .integrate import Dataset, generate_dataset
from .models import DdPinnModel, PincModel
from .sample import SamplingBox, lhs_box

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    arch: str = "ddpinn"
    f: float = 100.0
    order: int = 0
    n_g: int = 5
    damped: bool = True
    base_function: str = "sin"
    neurons: int = 32
    layers: int = 1
    epochs: int = 100
    batches: int = 10
    n_collo: int = 10_000
    n_ic: int = 0
    n_data: int = 0
    lr_init: float = 1e-3
    lr_min: float = 5e-8
    plateau_factor: float = 0.5
    plateau_patience: int = 20
    plateau_threshold: float = 1e-3
    lra_rate: float = 0.1
    validation_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.arch not in ("ddpinn", "pinc"):
            raise ValueError(f"arch must be 'ddpinn' or 'pinc', got {self.arch!r}")
        for name in ("epochs", "n_collo", "n_ic", "n_data"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.batches < 1 or self.neurons < 1 or self.layers < 1 or self.n_g < 1:
            raise ValueError("batches, neurons, layers and n_g must be positive")
        if not self.lr_init > self.lr_min > 0:
            raise ValueError("need lr_init > lr_min > 0")
        if self.arch == "pinc" and self.order != 0:
            raise ValueError("the PINC supports zero-order hold only")
        excitation.n_knots(self.order)

    @property
    def hidden(self) -> list[int]:
        return [self.neurons] * self.layers


@dataclass
class LossWeights:
    ic: float = 1.0
    phys: float = 1.0
    data: float = 1.0


@dataclass
class Collocation:
    x0: np.ndarray
    knots: np.ndarray
    t: np.ndarray

    def __len__(self):
        return len(self.t)

    def subset(self, idx) -> "Collocation":
        return Collocation(self.x0[idx], self.knots[idx], self.t[idx])


def build_model(cfg: TrainConfig, box: SamplingBox):
    from .ansatz import base_function
    if cfg.arch == "pinc":
        return PincModel.create(box, cfg.f, cfg.hidden, seed=cfg.seed)
    return DdPinnModel.create(box, cfg.f, cfg.hidden, n_g=cfg.n_g, damped=cfg.damped,
                              order=cfg.order, phi=base_function(cfg.base_function),
                              seed=cfg.seed)


def sample_collocation(n: int, box: SamplingBox, order: int, seed, with_time=True) -> Collocation:
    k = excitation.n_knots(order)
    m, p = box.m, box.p
    if n == 0:
        return Collocation(np.zeros((0, m)), np.zeros((0, k, p)), np.zeros(0))
    pts = lhs_box(n, box, k, seed)
    t = pts[:, -1] if with_time else np.zeros(n)
    return Collocation(pts[:, :m], pts[:, m:m + k * p].reshape(n, k, p), t)


# --- losses -------------------------------------------------------------------

def _excitation_at(model, knots, t):
    if model.order == 0:
        return knots[:, 0, :]
    return excitation.interpolate(knots, model.order, t, model.T, t_limit=model.T_s)


def physics_residual(model, net, batch: Collocation, rhs):
    x_hat, rate = model.state_and_rate(net, batch.x0, batch.knots, batch.t)
    u_t = _excitation_at(model, batch.knots, batch.t)
    scale = model.T_s / model.box.x_half
    return rate - rhs(x_hat, u_t) * scale


def physics_loss(model, net, batch: Collocation, rhs):
    """Mean squared scaled residual between the model's rate and the dynamics."""
    if len(batch) == 0:
        raise ValueError("physics loss needs a non-empty batch")
    r = physics_residual(model, net, batch, rhs)
    rv = dc.value_of(r)
    bad = ~np.all(np.isfinite(rv), axis=-1)
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise FloatingPointError(
            f"non-finite physics residual at x0={batch.x0[i]}, t={batch.t[i]}")
    return dc.mse(r)


def ic_loss(model, net, batch: Collocation):
    """Initial-condition loss; defined for the PINC only."""
    if not isinstance(model, PincModel):
        raise TypeError("initial-condition loss is identically zero for the DD-PINN; "
                        "computing it indicates a misconfigured loss")
    y0, target = model.initial_output(net, batch.x0, batch.knots)
    return dc.mse(y0 - target)


def data_loss(model, net, data: Dataset):
    """Scaled MSE between predictions and dataset targets; 0.0 for an empty batch."""
    if len(data) == 0:
        return 0.0
    if data.x0.shape[-1] != model.m or data.x_t.shape[-1] != model.m:
        raise ValueError("dataset state width does not match the model")
    x_hat, _ = model.state_and_rate(net, data.x0, data.knots, data.t)
    return dc.mse((x_hat - data.x_t) / model.box.x_half)


# --- loss balancing and optimization ------------------------------------------

def _flat(grads) -> np.ndarray:
    return np.concatenate([np.ravel(g) for g in grads])


def lra_update(weights: LossWeights, grad_phys, aux_grads: dict, rate: float = 0.1) -> LossWeights:
    """Learning-rate annealing of auxiliary loss weights.

    lambda_hat = max|grad L_phys| / mean|grad L_i|, smoothed with rate ``rate``.
    Losses whose gradient vanishes keep their weight.
    """
    gp = np.max(np.abs(_flat(grad_phys)))
    if gp == 0:
        raise ValueError("physics-loss gradient is zero; cannot balance")
    new = LossWeights(**asdict(weights))
    for name, g in aux_grads.items():
        mean_abs = np.mean(np.abs(_flat(g)))
        if mean_abs == 0 or not np.isfinite(mean_abs):
            continue
        target = gp / mean_abs
        setattr(new, name, (1 - rate) * getattr(weights, name) + rate * target)
    new.phys = 1.0
    return new


@dataclass
class AdamState:
    m: list
    v: list
    step: int = 0

    @classmethod
    def zeros_like(cls, params) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(params, grads, state: AdamState, lr: float,
              beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update; returns (new_params, new_state)."""
    if len(params) != len(grads):
        raise ValueError("parameter and gradient lists differ in length")
    step = state.step + 1
    new_p, new_m, new_v = [], [], []
    c1 = 1.0 - beta1 ** step
    c2 = 1.0 - beta2 ** step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        new_p.append(p - lr * (m / c1) / (np.sqrt(v / c2) + eps))
        new_m.append(m)
        new_v.append(v)
    return new_p, AdamState(new_m, new_v, step)


class PlateauScheduler:
    """Halve the learning rate after ``patience`` epochs without relative improvement."""

    def __init__(self, lr, factor=0.5, patience=20, threshold=1e-3):
        self.lr = lr
        self.factor = factor
        self.patience = patience
        self.threshold = threshold
        self.best = np.inf
        self.bad_epochs = 0

    def step(self, metric: float) -> float:
        if metric < self.best * (1 - self.threshold):
            self.best = metric
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
            if self.bad_epochs > self.patience:
                self.lr *= self.factor
                self.bad_epochs = 0
        return self.lr


# --- epoch loop -------------------------------------------------------------

LOG_COLUMNS = ("epoch", "train_total", "train_phys", "train_ic", "train_data",
               "val_phys", "val_ic", "val_data", "val_total",
               "lambda_ic", "lambda_data", "lr")


@dataclass
class TrainResult:
    model: object
    log: list[dict] = field(default_factory=list)
    epoch_ms: list[float] = field(default_factory=list)
    diverged: bool = False
    weights: LossWeights = field(default_factory=LossWeights)
    summary: dict = field(default_factory=dict)


@dataclass
class _Split:
    train: object
    val: object


def _split(n: int, frac: float, rng):
    idx = rng.permutation(n)
    n_val = int(round(frac * n)) if n else 0
    return idx[n_val:], idx[:n_val]


def _batches(idx: np.ndarray, n_batches: int):
    return np.array_split(idx, n_batches)


def prepare_data(cfg: TrainConfig, box: SamplingBox, rhs):
    """Collocation, IC and data sets with their validation splits."""
    rng = np.random.default_rng([cfg.seed, 1])
    model_order = cfg.order if cfg.arch == "ddpinn" else 0
    collo = sample_collocation(cfg.n_collo, box, model_order, [cfg.seed, 2])
    ic = sample_collocation(cfg.n_ic, box, 0, [cfg.seed, 3], with_time=False)
    data = generate_dataset(rhs, box, model_order, 1.0 / cfg.f, cfg.n_data, [cfg.seed, 4])
    out = {}
    for name, ds in (("collo", collo), ("ic", ic), ("data", data)):
        tr, va = _split(len(ds), cfg.validation_fraction, rng)
        out[name] = _Split(ds.subset(tr), ds.subset(va))
    return out


def _losses(model, net, rhs, collo, ic, data, weights: LossWeights):
    parts = {"phys": physics_loss(model, net, collo, rhs)}
    if isinstance(model, PincModel) and len(ic):
        parts["ic"] = ic_loss(model, net, ic)
    if len(data):
        parts["data"] = data_loss(model, net, data)
    total = parts["phys"] * weights.phys
    for name in ("ic", "data"):
        if name in parts:
            total = total + parts[name] * getattr(weights, name)
    return total, parts


def evaluate_losses(model, rhs, sets, weights: LossWeights) -> dict:
    net = model.net
    out = {"phys": float(physics_loss(model, net, sets["collo"], rhs)) if len(sets["collo"]) else np.nan,
           "ic": float(ic_loss(model, net, sets["ic"])) if isinstance(model, PincModel) and len(sets["ic"]) else 0.0,
           "data": float(data_loss(model, net, sets["data"]))}
    out["total"] = out["phys"] + weights.ic * out["ic"] + weights.data * out["data"]
    return out


def _run_batches(cfg, model, rhs, sets, sizes, params, adam, weights, lr, idx, sums,
                 balance, use_ic, use_data):
    """One pass over the shuffled batches; accumulates batch losses into ``sums``."""
    c_idx, i_idx, d_idx = idx
    sums["n"] = 0
    for b in range(cfg.batches):
        if len(c_idx[b]) == 0:
            continue
        collo = sets["collo"].train.subset(c_idx[b])
        ic = sets["ic"].train.subset(i_idx[b])
        data = sets["data"].train.subset(d_idx[b])
        if b == 0 and balance:
            # separate passes give per-loss gradients for the weight update
            per_loss = {}
            values = {}
            for name in ("phys",) + (("ic",) if use_ic and len(ic) else ()) + \
                    (("data",) if use_data and len(data) else ()):
                tape = Tape()
                net = MlpParameters.from_arrays(sizes, [tape.var(p) for p in params])
                leaves = net.arrays
                if name == "phys":
                    val = physics_loss(model, net, collo, rhs)
                elif name == "ic":
                    val = ic_loss(model, net, ic)
                else:
                    val = data_loss(model, net, data)
                per_loss[name] = tape.gradients(val, leaves)
                values[name] = float(val.value)
            aux = {k: v for k, v in per_loss.items() if k != "phys"}
            weights = lra_update(weights, per_loss["phys"], aux, cfg.lra_rate)
            grads = [g.copy() for g in per_loss["phys"]]
            for name, g_list in aux.items():
                lam = getattr(weights, name)
                grads = [g + lam * ga for g, ga in zip(grads, g_list)]
            total = values["phys"] + sum(getattr(weights, k) * values[k] for k in aux)
        else:
            tape = Tape()
            net = MlpParameters.from_arrays(sizes, [tape.var(p) for p in params])
            loss, parts = _losses(model, net, rhs, collo, ic, data, weights)
            grads = tape.gradients(loss, net.arrays)
            values = {k: float(dc.value_of(v)) for k, v in parts.items()}
            total = float(loss.value)
        params, adam = adam_step(params, grads, adam, lr)
        sums["total"] += total
        for k, v in values.items():
            sums[k] += v
        sums["n"] += 1
    return params, adam, weights


def train_run(cfg: TrainConfig, box: SamplingBox, rhs, model=None, progress=None) -> TrainResult:
    """Train a surrogate for ``rhs`` on ``box``; deterministic for a given config."""
    model = model if model is not None else build_model(cfg, box)
    weights = LossWeights(ic=1.0 if cfg.arch == "pinc" else 0.0, phys=1.0, data=1.0)
    result = TrainResult(model=model, weights=weights)
    if cfg.epochs == 0:
        result.summary = {"epochs": 0}
        return result
    sets = prepare_data(cfg, box, rhs)
    if len(sets["collo"].train) == 0:
        raise ValueError("no collocation points left for training")
    rng = np.random.default_rng([cfg.seed, 5])
    params = [np.array(a, dtype=float) for a in model.net.arrays]
    sizes = model.net.layer_sizes
    adam = AdamState.zeros_like(params)
    sched = PlateauScheduler(cfg.lr_init, cfg.plateau_factor, cfg.plateau_patience,
                             cfg.plateau_threshold)
    use_ic = cfg.arch == "pinc" and len(sets["ic"].train) > 0
    use_data = len(sets["data"].train) > 0
    balance = use_ic or use_data
    last_good = model
    t_start = time.perf_counter()

    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        c_idx = _batches(rng.permutation(len(sets["collo"].train)), cfg.batches)
        i_idx = _batches(rng.permutation(len(sets["ic"].train)), cfg.batches)
        d_idx = _batches(rng.permutation(len(sets["data"].train)), cfg.batches)
        sums = {"total": 0.0, "phys": 0.0, "ic": 0.0, "data": 0.0}
        try:
            params, adam, weights = _run_batches(
                cfg, model, rhs, sets, sizes, params, adam, weights, sched.lr,
                (c_idx, i_idx, d_idx), sums, balance, use_ic, use_data)
        except FloatingPointError as e:
            log.error("training diverged at epoch %d: %s", epoch, e)
            result.diverged = True
            model = last_good
            break
        n_done = sums.pop("n")
        if not all(np.all(np.isfinite(p)) for p in params):
            log.error("parameters became non-finite at epoch %d", epoch)
            result.diverged = True
            model = last_good
            break
        model = model.with_net(MlpParameters.from_arrays(sizes, params))
        try:
            val = evaluate_losses(model, rhs, {k: s.val if len(s.val) else s.train
                                               for k, s in sets.items()}, weights)
        except FloatingPointError:
            val = {"phys": np.nan, "ic": np.nan, "data": np.nan, "total": np.nan}
        row = {
            "epoch": epoch,
            "train_total": sums["total"] / n_done, "train_phys": sums["phys"] / n_done,
            "train_ic": sums["ic"] / n_done, "train_data": sums["data"] / n_done,
            "val_phys": val["phys"], "val_ic": val["ic"], "val_data": val["data"],
            "val_total": val["total"],
            "lambda_ic": weights.ic, "lambda_data": weights.data, "lr": sched.lr,
        }
        result.epoch_ms.append((time.perf_counter() - t0) * 1e3)
        if not np.isfinite(val["total"]):
            log.error("validation loss became non-finite at epoch %d", epoch)
            result.diverged = True
            model = last_good
            break
        result.log.append(row)
        last_good = model
        if progress is not None:
            progress(row)
        lr = sched.step(val["total"])
        if lr < cfg.lr_min:
            log.info("learning rate %.3g below threshold, stopping at epoch %d", lr, epoch)
            break

    result.model = model
    result.weights = weights
    last = result.log[-1] if result.log else {}
    result.summary = {
        "epochs": len(result.log),
        "diverged": result.diverged,
        "final_val_phys": last.get("val_phys"),
        "final_val_ic": last.get("val_ic"),
        "final_val_data": last.get("val_data"),
        "final_lr": last.get("lr"),
        "wall_clock_s": time.perf_counter() - t_start,
    }
    return result
