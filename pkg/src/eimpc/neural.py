"""ReLU network planner and its Lagrangian-value training loss.

The network maps a state ``x`` to a full primal guess ``z``. For a training
tuple ``(x, z*, nu*, lam*)`` the loss term is the squared difference of the
Lagrangian evaluated at the prediction and at ``z*`` with the dual variables
held fixed. The constraint right-hand sides cancel in that difference, so with
``c = G' mu*`` a term reduces to::

    (z' H z + c' z - k)^2,    k = z*' H z* + c' z*

and only ``c`` and ``k`` need to be stored per sample.
"""

import base64
import json
import logging
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import FormatError, InvalidArgumentError, TrainingDivergenceError

log = logging.getLogger(__name__)

MODEL_FORMAT = "eimpc-mlp"
MODEL_VERSION = 1

# Layer widths per benchmark; input and output sizes are fixed by the problem.
DEFAULT_WIDTHS = {
    1: (2, 32, 32, 30),
    2: (12, 32, 32, 300),
    3: (12, 32, 64, 128, 256, 450),
    4: (36, 128, 128, 256, 256, 512, 512, 2250),
}


@dataclass(frozen=True, eq=False)
class MlpModel:
    """Fully connected network, ReLU after every layer except the last.

    ``weights[l]`` has shape ``(widths[l+1], widths[l])``.
    """

    weights: tuple
    biases: tuple
    seed: int = None

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise InvalidArgumentError("need one bias per weight matrix and at least one layer")
        for l, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.ndim != 2 or b.shape != (W.shape[0],):
                raise InvalidArgumentError(f"layer {l}: bias shape {b.shape} does not match {W.shape}")
            if l and W.shape[1] != self.weights[l - 1].shape[0]:
                raise InvalidArgumentError(f"layer {l}: input width {W.shape[1]} does not match "
                                           f"previous output {self.weights[l - 1].shape[0]}")
            if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
                raise InvalidArgumentError(f"layer {l} has non-finite parameters")

    @property
    def widths(self):
        return (self.weights[0].shape[1],) + tuple(W.shape[0] for W in self.weights)

    @property
    def n_params(self):
        return sum(W.size + b.size for W, b in zip(self.weights, self.biases))

    def params(self):
        return list(self.weights) + list(self.biases)

    def with_params(self, params):
        L = len(self.weights)
        return MlpModel(tuple(params[:L]), tuple(params[L:]), self.seed)


def init_model(widths, rng):
    """Glorot-uniform weights and zero biases.

    Parameters
    ----------
    widths : sequence of int
        ``(n, hidden..., d_p)``.
    rng : numpy.random.Generator or int
    """
    widths = [int(w) for w in widths]
    if len(widths) < 2 or min(widths) < 1:
        raise InvalidArgumentError(f"invalid widths {widths}")
    seed = rng if isinstance(rng, (int, np.integer)) else None
    rng = np.random.default_rng(rng)
    Ws, bs = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        r = np.sqrt(6.0 / (fan_in + fan_out))
        Ws.append(rng.uniform(-r, r, (fan_out, fan_in)))
        bs.append(np.zeros(fan_out))
    return MlpModel(tuple(Ws), tuple(bs), None if seed is None else int(seed))


def forward(model, x):
    """Evaluate the network on one state (1-D) or a batch of states (rows)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.widths[0]:
        raise InvalidArgumentError(f"input width {x.shape[-1]} does not match {model.widths[0]}")
    a = x
    last = len(model.weights) - 1
    for l, (W, b) in enumerate(zip(model.weights, model.biases)):
        a = a @ W.T + b
        if l < last:
            a = np.maximum(a, 0.0)
    return a


def _forward_cache(model, X):
    acts = [X]
    a = X
    last = len(model.weights) - 1
    for l, (W, b) in enumerate(zip(model.weights, model.biases)):
        a = a @ W.T + b
        if l < last:
            a = np.maximum(a, 0.0)
        acts.append(a)
    return acts


# -- loss -----------------------------------------------------------------

@dataclass(frozen=True)
class LossData:
    """Per-sample loss coefficients: inputs ``X``, ``C = mu G``, offsets ``k``."""

    X: np.ndarray
    C: np.ndarray
    k: np.ndarray

    def __len__(self):
        return self.X.shape[0]

    def subset(self, idx):
        return LossData(self.X[idx], self.C[idx], self.k[idx])


def loss_data(qp, X, Z, Nu, Lam):
    """Precompute the reduced loss coefficients for stacked samples."""
    X, Z = np.atleast_2d(X), np.atleast_2d(Z)
    Mu = np.hstack([np.atleast_2d(Nu).reshape(len(X), -1), np.atleast_2d(Lam).reshape(len(X), -1)])
    C = Mu @ qp.G
    k = np.einsum("ij,jk,ik->i", Z, qp.H, Z) + np.einsum("ij,ij->i", C, Z)
    return LossData(np.asarray(X, float), C, k)


def _residuals(qp, Zt, data):
    return np.einsum("ij,jk,ik->i", Zt, qp.H, Zt) + np.einsum("ij,ij->i", data.C, Zt) - data.k


def lagrangian_loss(model, data, qp):
    """Sum over samples of the squared Lagrangian-value discrepancy."""
    r = _residuals(qp, forward(model, data.X), data)
    return float(r @ r)


def loss_gradient(model, data, qp):
    """Loss and its exact gradient, ordered like ``model.params()``.

    The ReLU derivative is taken as 0 at the kink.
    """
    acts = _forward_cache(model, data.X)
    Zt = acts[-1]
    r = _residuals(qp, Zt, data)
    # d loss / d z_i = 2 r_i (2 H z_i + c_i)
    delta = 2.0 * r[:, None] * (2.0 * Zt @ qp.H + data.C)
    L = len(model.weights)
    gW, gb = [None] * L, [None] * L
    for l in range(L - 1, -1, -1):
        gW[l] = delta.T @ acts[l]
        gb[l] = delta.sum(axis=0)
        if l:
            delta = (delta @ model.weights[l]) * (acts[l] > 0.0)
    return float(r @ r), gW + gb


# -- optimizer ------------------------------------------------------------

class Adam:
    """Bias-corrected Adam over a list of arrays."""

    def __init__(self, lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, betas[0], betas[1], eps
        self.t = 0
        self.m = self.v = None

    def step(self, params, grads):
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        out = []
        for i, (p, g) in enumerate(zip(params, grads)):
            self.m[i] = self.b1 * self.m[i] + (1.0 - self.b1) * g
            self.v[i] = self.b2 * self.v[i] + (1.0 - self.b2) * g * g
            out.append(p - self.lr * (self.m[i] / c1) / (np.sqrt(self.v[i] / c2) + self.eps))
        return out


# -- training -------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 128
    epochs: int = 100
    learning_rate: float = 1e-3
    adam_betas: tuple = (0.9, 0.999)
    adam_eps: float = 1e-8
    seed: int = 0
    validation_fraction: float = 0.05

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 1:
            raise InvalidArgumentError("batch_size and epochs must be >= 1")
        if not self.learning_rate > 0:
            raise InvalidArgumentError("learning_rate must be positive")
        if not 0.0 <= self.validation_fraction <= 0.25:
            raise InvalidArgumentError("validation_fraction must lie in [0, 0.25]")


@dataclass
class TrainingLog:
    """Per-epoch mean loss per sample; row 0 is the untrained network."""

    config: dict
    widths: tuple
    epochs: list = field(default_factory=list)
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)

    def to_text(self):
        lines = ["# epoch train_loss val_loss"]
        for e, tr, va in zip(self.epochs, self.train_loss, self.val_loss):
            lines.append(f"{e} {tr!r} {va!r}")
        return "\n".join(lines) + "\n"


def _mean_loss(model, data, qp):
    return lagrangian_loss(model, data, qp) / len(data) if len(data) else float("nan")


def train(data, qp, config=TrainConfig(), widths=None, model=None):
    """Fit a network with mini-batch Adam on the Lagrangian loss.

    Parameters
    ----------
    data : LossData
        Training samples; a trailing fraction of a seeded shuffle is held
        out for validation.
    qp : BatchQp
    config : TrainConfig
    widths : sequence of int, optional
        Architecture for a fresh network (ignored when ``model`` is given).
    model : MlpModel, optional
        Starting point.

    Returns
    -------
    model : MlpModel
    log : TrainingLog

    Raises
    ------
    TrainingDivergenceError
        If the loss becomes non-finite.
    """
    if len(data) == 0:
        raise InvalidArgumentError("empty training set")
    rng = np.random.default_rng(config.seed)
    if model is None:
        if widths is None:
            raise InvalidArgumentError("either widths or model is required")
        model = init_model(widths, rng)
        model = MlpModel(model.weights, model.biases, int(config.seed))
    perm = rng.permutation(len(data))
    n_val = int(np.floor(config.validation_fraction * len(data)))
    if n_val >= len(data):
        n_val = len(data) - 1
    train_set = data.subset(np.sort(perm[:len(data) - n_val]))
    val_set = data.subset(np.sort(perm[len(data) - n_val:]))

    cfg = asdict(config)
    cfg["adam_betas"] = list(config.adam_betas)
    tlog = TrainingLog(cfg, model.widths)
    tlog.epochs.append(0)
    tlog.train_loss.append(_mean_loss(model, train_set, qp))
    tlog.val_loss.append(_mean_loss(model, val_set, qp))

    opt = Adam(config.learning_rate, config.adam_betas, config.adam_eps)
    params = model.params()
    S, B = len(train_set), config.batch_size
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(S)
        for start in range(0, S, B):
            batch = train_set.subset(order[start:start + B])
            loss, grads = loss_gradient(model, batch, qp)
            if not np.isfinite(loss):
                raise TrainingDivergenceError(
                    f"loss became non-finite in epoch {epoch}; lower the learning rate")
            params = opt.step(params, grads)
            model = model.with_params(params)
        tr = _mean_loss(model, train_set, qp)
        va = _mean_loss(model, val_set, qp)
        if not np.isfinite(tr):
            raise TrainingDivergenceError(
                f"loss became non-finite in epoch {epoch}; lower the learning rate")
        tlog.epochs.append(epoch)
        tlog.train_loss.append(tr)
        tlog.val_loss.append(va)
        log.debug("epoch %d train %.6g val %.6g", epoch, tr, va)
    return model, tlog


# -- serialization --------------------------------------------------------

def _encode(a):
    return base64.b64encode(np.ascontiguousarray(a, dtype="<f8").tobytes()).decode("ascii")


def model_to_text(model):
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "widths": list(model.widths),
        "seed": model.seed,
        "layers": [{"W": _encode(W), "b": _encode(b)} for W, b in zip(model.weights, model.biases)],
    }
    return json.dumps(doc, indent=1) + "\n"


def save_model(model, path):
    with open(path, "w", encoding="ascii", newline="\n") as f:
        f.write(model_to_text(model))


def model_from_text(text):
    """Parse a model document; errors carry the byte offset of the problem."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise FormatError(f"malformed model file: {e.msg}", e.pos) from None
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise FormatError("not a model file", 0)
    if doc.get("version") != MODEL_VERSION:
        raise FormatError(f"unsupported model version {doc.get('version')!r}",
                          max(text.find('"version"'), 0))
    widths = doc.get("widths")
    layers = doc.get("layers")
    if (not isinstance(widths, list) or not isinstance(layers, list)
            or len(layers) != len(widths) - 1):
        raise FormatError("widths and layers are inconsistent", max(text.find('"layers"'), 0))
    Ws, bs = [], []
    for l, layer in enumerate(layers):
        shapes = {"W": (widths[l + 1], widths[l]), "b": (widths[l + 1],)}
        arrs = {}
        for key, shape in shapes.items():
            blob = layer.get(key) if isinstance(layer, dict) else None
            offset = max(text.find(blob), 0) if isinstance(blob, str) and blob else 0
            try:
                raw = base64.b64decode(blob, validate=True)
            except (TypeError, ValueError):
                raise FormatError(f"layer {l}: bad base64 in {key!r}", offset) from None
            if len(raw) != 8 * int(np.prod(shape)):
                raise FormatError(f"layer {l}: {key!r} holds {len(raw)} bytes, expected "
                                  f"{8 * int(np.prod(shape))}", offset)
            arrs[key] = np.frombuffer(raw, dtype="<f8").astype(float).reshape(shape)
        Ws.append(arrs["W"])
        bs.append(arrs["b"])
    try:
        return MlpModel(tuple(Ws), tuple(bs), doc.get("seed"))
    except InvalidArgumentError as e:
        raise FormatError(str(e), 0) from None


def load_model(path):
    with open(path, "rb") as f:
        raw = f.read()
    try:
        text = raw.decode("ascii")
    except UnicodeDecodeError as e:
        raise FormatError("model file is not ASCII", e.start) from None
    return model_from_text(text)
