"""Learned conditional-expectation fields and their quadratic regression loss.

One weight-shared network maps ``(alpha, x)`` to all ``K+1`` heads at once.
Training minimises, per joint sample and simplex draw,

    sum_k |g_k(alpha, x(alpha))|^2 - 2 x_k . g_k(alpha, x(alpha))

whose minimiser is ``g_k = E[x_k | x(alpha)]``.
"""

from __future__ import annotations

import base64
import csv
import io
import json
import logging
from dataclasses import asdict, dataclass

import numpy as np

from .couplings import interpolant, sample_coupling, substream
from .mlp import MLP, Adam
from .simplex import format_alpha_mode, parse_alpha_mode, sample_alpha

log = logging.getLogger(__name__)

DEFAULT_EPS_ALPHA = 1e-3

__all__ = [
    "FieldModel",
    "TrainConfig",
    "TrainingDivergedError",
    "ScoreUndefinedError",
    "eval_fields",
    "loss_batch",
    "loss_and_grad",
    "train",
    "score",
    "save_checkpoint",
    "load_checkpoint",
    "trace_to_csv",
]


class TrainingDivergedError(FloatingPointError):
    def __init__(self, step):
        super().__init__(f"loss became non-finite at step {step}")
        self.step = step


class ScoreUndefinedError(ValueError):
    """The score identity needs ``alpha_0`` bounded away from zero."""


class FieldModel:
    """Network ``(alpha, x) -> (g_0, ..., g_K)`` with ``K+1`` heads of size ``d``."""

    def __init__(self, K, d, hidden=(128, 128, 128), activation="silu", seed=0, params=None):
        self.K = int(K)
        self.d = int(d)
        self.hidden = tuple(int(h) for h in hidden)
        self.activation = activation
        self.seed = int(seed)
        sizes = (self.K + 1 + self.d,) + self.hidden + ((self.K + 1) * self.d,)
        self.net = MLP(sizes, activation, params=params, rng=np.random.default_rng(self.seed))

    @property
    def dim(self):
        return self.d

    @property
    def params(self):
        return self.net.params

    def copy(self, params=None):
        return FieldModel(self.K, self.d, self.hidden, self.activation, self.seed,
                          params=self.params.copy() if params is None else params)

    def _inputs(self, alpha, x):
        alpha = np.asarray(alpha, dtype=float)
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[None]
        alpha = np.broadcast_to(alpha, (x.shape[0], alpha.shape[-1]))
        if alpha.shape[1] != self.K + 1 or x.shape[1] != self.d:
            raise ValueError(f"model expects alpha of length {self.K + 1} and x of dim {self.d}, "
                             f"got {alpha.shape[1]} and {x.shape[1]}")
        if not (np.all(np.isfinite(alpha)) and np.all(np.isfinite(x))):
            raise ValueError("non-finite input to field model")
        return np.concatenate([alpha, x], axis=1)

    def __call__(self, alpha, x, chunk=65536):
        single = np.ndim(x) == 1
        inp = self._inputs(alpha, x)
        out = np.concatenate([self.net.forward(inp[s:s + chunk]) for s in range(0, max(len(inp), 1), chunk)]) \
            if len(inp) else np.zeros((0, (self.K + 1) * self.d))
        g = out.reshape(-1, self.K + 1, self.d)
        return g[0] if single else g

    def forward(self, alpha, x):
        """Evaluate and keep the cache needed by :meth:`backward`."""
        out, cache = self.net.forward(self._inputs(alpha, x), keep=True)
        return out.reshape(-1, self.K + 1, self.d), cache

    def backward(self, cache, gbar, need_params=True):
        """Pull back ``gbar`` (n, K+1, d) to parameters and to ``(alpha, x)``."""
        gp, gin = self.net.backward(cache, gbar.reshape(gbar.shape[0], -1), need_params)
        return gp, gin[:, : self.K + 1], gin[:, self.K + 1:]

    def metadata(self):
        return {"K": self.K, "d": self.d, "hidden": list(self.hidden), "activation": self.activation,
                "seed": self.seed}


def eval_fields(model, alpha, x):
    return model(alpha, x)


@dataclass
class TrainConfig:
    batch_size: int = 512
    steps: int = 20000
    lr: float = 1e-3
    lr_decay: float = 0.995
    decay_every: int = 1000
    alpha_mode: str = "full-simplex"
    optimizer: str = "adam"
    seed: int = 0
    ema_decay: float | None = 0.999
    hidden: tuple = (128, 128, 128)
    activation: str = "silu"

    def __post_init__(self):
        if self.batch_size < 1 or self.steps < 0 or self.decay_every < 1:
            raise ValueError("batch size, steps and decay interval must be positive")
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")
        if not 0 < self.lr_decay <= 1:
            raise ValueError("lr_decay must lie in (0, 1]")
        if self.ema_decay is not None and not 0 < self.ema_decay < 1:
            raise ValueError("ema_decay must lie in (0, 1)")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        self.alpha_mode = format_alpha_mode(self.alpha_mode)
        self.hidden = tuple(self.hidden)

    def to_dict(self):
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def _per_sample_loss(g, joint):
    return np.sum(g * g - 2.0 * joint * g, axis=(1, 2))


def loss_batch(model, alpha, joint) -> float:
    """Monte Carlo estimate of the summed quadratic losses.

    ``alpha`` has shape ``(B, K+1)`` and ``joint`` ``(B, K+1, d)``.
    """
    alpha = np.atleast_2d(alpha)
    joint = np.asarray(joint, dtype=float)
    if joint.ndim == 2:
        joint = joint[None]
    if len(joint) == 0:
        raise ValueError("empty batch")
    g = model(alpha, interpolant(alpha, joint))
    return float(np.mean(_per_sample_loss(g, joint)))


def loss_and_grad(model: FieldModel, alpha, joint):
    B = len(joint)
    if B == 0:
        raise ValueError("empty batch")
    g, cache = model.forward(alpha, interpolant(alpha, joint))
    loss = float(np.mean(_per_sample_loss(g, joint)))
    gbar = (2.0 / B) * (g - joint)
    grad, _, _ = model.backward(cache, gbar)
    return loss, grad


def train(coupling, config: TrainConfig, progress=None):
    """Fit a :class:`FieldModel` to ``coupling``.

    Each step draws a fresh batch from the substream ``(seed, step)`` so the
    loss trace depends only on the config. Returns ``(model, trace)`` where the
    model carries the EMA weights when ``config.ema_decay`` is set.
    """
    mode = parse_alpha_mode(config.alpha_mode)
    model = FieldModel(coupling.K, coupling.dim, config.hidden, config.activation, config.seed)
    params = model.params
    # zero-started and bias-corrected at the end, so short runs do not keep the initial weights
    ema = np.zeros_like(params) if config.ema_decay else None
    opt = Adam(params.size, lr=config.lr) if config.optimizer == "adam" else None
    trace = np.empty(config.steps)
    for step in range(config.steps):
        rng = substream(config.seed, step)
        joint = sample_coupling(coupling, config.batch_size, rng)
        alpha = sample_alpha(mode, coupling.K, rng, size=config.batch_size)
        loss, grad = loss_and_grad(model, alpha, joint)
        if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
            raise TrainingDivergedError(step)
        trace[step] = loss
        lr = config.lr * config.lr_decay ** (step // config.decay_every)
        if opt is not None:
            opt.step(params, grad, lr)
        else:
            params -= lr * grad
        if ema is not None:
            ema *= config.ema_decay
            ema += (1.0 - config.ema_decay) * params
        if progress is not None and (step + 1) % progress == 0:
            log.info("step %d loss %.5f", step + 1, np.mean(trace[max(0, step - progress + 1):step + 1]))
    if ema is not None and config.steps:
        params[...] = ema / (1.0 - config.ema_decay**config.steps)
    return model, trace


def score(fields, alpha, x, eps_alpha: float = DEFAULT_EPS_ALPHA):
    """``grad log rho(alpha, x)`` from the base-marginal head: ``-g_0 / alpha_0``."""
    a = np.asarray(alpha, dtype=float)
    a0 = a[..., 0]
    if np.any(a0 < eps_alpha):
        raise ScoreUndefinedError(f"alpha_0 = {np.min(a0):.3g} is below {eps_alpha}")
    g = fields(a, x)
    return -g[..., 0, :] / np.asarray(a0)[..., None]


# -- I/O ----------------------------------------------------------------------


def save_checkpoint(model: FieldModel, path=None, extra=None) -> str:
    """Serialise to the JSON envelope; returns the text and writes it when ``path`` is given."""
    meta = model.metadata()
    if extra:
        meta.update(extra)
    payload = {
        "metadata": meta,
        "layer_shapes": [list(s) for s in model.net.shapes],
        "params": base64.b64encode(model.params.astype("<f8").tobytes()).decode("ascii"),
    }
    text = json.dumps(payload, indent=1, sort_keys=True)
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def load_checkpoint(path_or_text):
    """Return ``(model, metadata)``."""
    text = path_or_text
    if not str(path_or_text).lstrip().startswith("{"):
        with open(path_or_text) as fh:
            text = fh.read()
    payload = json.loads(text)
    meta = payload["metadata"]
    params = np.frombuffer(base64.b64decode(payload["params"]), dtype="<f8").astype(float)
    model = FieldModel(meta["K"], meta["d"], meta["hidden"], meta["activation"], meta["seed"], params=params)
    if [list(s) for s in model.net.shapes] != payload["layer_shapes"]:
        raise ValueError("checkpoint layer shapes do not match metadata")
    return model, meta


def trace_to_csv(trace, fh=None, columns=("step", "loss")) -> str | None:
    buf = fh if fh is not None else io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    rows = np.asarray(trace, dtype=float)
    if rows.ndim == 1:
        rows = rows[:, None]
    for step, vals in enumerate(rows):
        w.writerow([step] + [repr(float(v)) for v in vals])
    return buf.getvalue() if fh is None else None
