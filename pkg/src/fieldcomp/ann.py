"""Small fully connected regressor for the compensation point.

Two input encodings are supported: ``nine`` (one measured point per beam,
concatenated in beam order) and ``four`` (a single point plus its beam id).
Hidden layers use tanh and the output layer is linear.  The loss is half the
squared error in standardised output units, averaged over the batch.
"""

import itertools
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import (DimensionMismatch, EmptyTrainingSet, EncodingMismatch,
                     IoError, ParseError, ShapeMismatch)
from .geometry import PlanePoint, check_beam
from .pca import one_point_per_beam

ENCODINGS = {"nine": 9, "four": 4}


@dataclass
class MlpNetwork:
    layer_sizes: list
    weights: list  # weights[l] has shape (layer_sizes[l], layer_sizes[l + 1])
    biases: list
    input_mean: np.ndarray
    input_scale: np.ndarray
    output_mean: np.ndarray
    output_scale: np.ndarray
    encoding: str = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        sizes = list(self.layer_sizes)
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(sizes) - 1:
            raise ShapeMismatch("need one weight matrix and bias vector per layer transition")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if np.shape(w) != (sizes[l], sizes[l + 1]) or np.shape(b) != (sizes[l + 1],):
                raise ShapeMismatch(f"layer {l}: weight {np.shape(w)} / bias {np.shape(b)} "
                                    f"inconsistent with layer sizes {sizes}")
        if np.shape(self.input_scale) != (sizes[0],) or np.shape(self.output_scale) != (sizes[-1],):
            raise ShapeMismatch("scaler dimensions do not match layer sizes")
        if np.any(np.asarray(self.input_scale) <= 0) or np.any(np.asarray(self.output_scale) <= 0):
            raise ValueError("scaler scales must be strictly positive")

    @property
    def params(self):
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def with_params(self, params):
        return MlpNetwork(self.layer_sizes, list(params[0::2]), list(params[1::2]),
                          self.input_mean, self.input_scale, self.output_mean,
                          self.output_scale, self.encoding, dict(self.metadata))


def identity_scalers(n_in, n_out):
    return np.zeros(n_in), np.ones(n_in), np.zeros(n_out), np.ones(n_out)


def init_network(layer_sizes, rng, scalers=None, encoding=None):
    """Glorot-uniform weights, zero biases."""
    sizes = [int(s) for s in layer_sizes]
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, (fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    if scalers is None:
        scalers = identity_scalers(sizes[0], sizes[-1])
    return MlpNetwork(sizes, weights, biases, *scalers, encoding=encoding)


def _check_input(net, x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != net.layer_sizes[0]:
        raise DimensionMismatch(f"network expects {net.layer_sizes[0]} inputs, got {x.shape[-1]}")
    return x


def _forward_scaled(net, xs):
    """Activations of every layer for already-scaled inputs."""
    acts = [xs]
    last = len(net.weights) - 1
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = acts[-1] @ w + b
        acts.append(z if l == last else np.tanh(z))
    return acts


def forward(net, x):
    """Prediction in field units for one input vector or a batch of rows."""
    x = _check_input(net, x)
    xs = (x - net.input_mean) / net.input_scale
    ys = _forward_scaled(net, xs)[-1]
    return ys * net.output_scale + net.output_mean


def loss_and_gradients(net, x, target):
    """Mean over the batch of ``0.5 * |y - t|^2`` (standardised outputs) and its
    gradient with respect to ``net.params``."""
    x = np.atleast_2d(_check_input(net, x))
    t = np.atleast_2d(np.asarray(target, dtype=float))
    if t.shape != (len(x), net.layer_sizes[-1]):
        raise DimensionMismatch(f"targets have shape {t.shape}, expected {(len(x), net.layer_sizes[-1])}")
    ts = (t - net.output_mean) / net.output_scale
    acts = _forward_scaled(net, (x - net.input_mean) / net.input_scale)
    n = len(x)
    delta = (acts[-1] - ts) / n
    loss = 0.5 * float(np.sum((acts[-1] - ts) ** 2)) / n
    grads = [None] * (2 * len(net.weights))
    for l in range(len(net.weights) - 1, -1, -1):
        grads[2 * l] = acts[l].T @ delta
        grads[2 * l + 1] = delta.sum(axis=0)
        if l:
            delta = (delta @ net.weights[l].T) * (1.0 - acts[l] ** 2)
    return loss, grads


def backprop(net, x, target):
    """Gradient and loss for a single example: ``(grads, loss)``."""
    loss, grads = loss_and_gradients(net, x, target)
    return grads, loss


@dataclass
class AdamState:
    first_moment: list
    second_moment: list
    step_count: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def zeros_like(cls, params, **hyper):
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], **hyper)


def adam_step(params, grads, state):
    """One bias-corrected Adam update; returns ``(new_params, new_state)``."""
    if len(params) != len(grads) or len(params) != len(state.first_moment):
        raise ShapeMismatch("parameter and gradient lists differ from the optimiser moments")
    t = state.step_count + 1
    b1, b2 = state.beta1, state.beta2
    new_params, ms, vs = [], [], []
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        if np.shape(p) != np.shape(g) or np.shape(p) != np.shape(m):
            raise ShapeMismatch(f"shape mismatch: param {np.shape(p)}, grad {np.shape(g)}")
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        new_params.append(p - state.lr * m_hat / (np.sqrt(v_hat) + state.epsilon))
        ms.append(m)
        vs.append(v)
    return new_params, AdamState(ms, vs, t, state.lr, b1, b2, state.epsilon)


# encodings and training data


def encode_nine(points):
    """Raw 9-vector: the three points concatenated in beam order 1, 2, 3."""
    return np.concatenate([p.point for p in one_point_per_beam(points)])


def encode_four(point):
    """Raw 4-vector: point coordinates followed by the beam id."""
    beam = check_beam(point.beam_id)
    return np.append(np.asarray(point.point, dtype=float), float(beam))


@dataclass
class TrainingSet:
    inputs: np.ndarray
    targets: np.ndarray
    encoding: str

    def __post_init__(self):
        if self.encoding not in ENCODINGS:
            raise EncodingMismatch(f"unknown encoding {self.encoding!r}")
        self.inputs = np.asarray(self.inputs, dtype=float).reshape(
            len(self.inputs), ENCODINGS[self.encoding] if len(self.inputs) == 0 else -1)
        self.targets = np.asarray(self.targets, dtype=float).reshape(
            len(self.targets), 3 if len(self.targets) == 0 else -1)
        if len(self.inputs) and self.inputs.shape[1] != ENCODINGS[self.encoding]:
            raise EncodingMismatch(f"{self.encoding} encoding needs {ENCODINGS[self.encoding]} "
                                   f"inputs, got {self.inputs.shape[1]}")
        if len(self.inputs) != len(self.targets):
            raise DimensionMismatch("inputs and targets differ in length")
        if not np.all(np.isfinite(self.targets)):
            raise ValueError("targets must be finite")

    def __len__(self):
        return len(self.inputs)


def training_set_from_runs(runs, encoding):
    """Labelled examples from historical runs.

    ``nine``: every combination of one point per beam within a run.
    ``four``: every individual point.
    """
    xs, ys = [], []
    for run in runs:
        if run.truth is None:
            raise ValueError(f"run {run.run_id} has no recorded truth")
        if encoding == "nine":
            per_beam = [[p for p in run.points if p.beam_id == b] for b in (1, 2, 3)]
            for combo in itertools.product(*per_beam):
                xs.append(encode_nine(combo))
                ys.append(run.truth)
        elif encoding == "four":
            for p in run.points:
                xs.append(encode_four(p))
                ys.append(run.truth)
        else:
            raise EncodingMismatch(f"unknown encoding {encoding!r}")
    return TrainingSet(np.array(xs).reshape(len(xs), ENCODINGS[encoding]),
                       np.array(ys).reshape(len(ys), 3), encoding)


@dataclass
class Hyperparams:
    hidden: list = field(default_factory=lambda: [16])
    epochs: int = 5000
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    plateau_window: int = 200
    plateau_tol: float = 1e-9

    @classmethod
    def from_dict(cls, data):
        from .errors import ConfigError

        unknown = sorted(set(data) - set(cls.__dataclass_fields__))
        if unknown:
            raise ConfigError(f"unknown ANN hyperparameter(s): {', '.join(unknown)}")
        return cls(**data)

    def to_dict(self):
        return asdict(self)


def _standardiser(a):
    mean = a.mean(axis=0)
    scale = a.std(axis=0)
    scale[scale <= 1e-12 * max(1.0, np.abs(mean).max(initial=0.0))] = 1.0
    return mean, scale


def train(training, hyper=None, seed=0):
    """Full-batch Adam training; deterministic given ``seed``.

    Stops after ``hyper.epochs`` or once the loss improved by less than
    ``plateau_tol`` (relative) over ``plateau_window`` epochs.

    Returns:
        (network, loss_history)
    """
    hyper = hyper or Hyperparams()
    if len(training) == 0:
        raise EmptyTrainingSet("training set is empty")
    sizes = [ENCODINGS[training.encoding], *hyper.hidden, 3]
    rng = np.random.default_rng(seed)
    scalers = (*_standardiser(training.inputs), *_standardiser(training.targets))
    net = init_network(sizes, rng, scalers, training.encoding)
    params = net.params
    state = AdamState.zeros_like(params, lr=hyper.lr, beta1=hyper.beta1,
                                 beta2=hyper.beta2, epsilon=hyper.epsilon)
    history = []
    for epoch in range(hyper.epochs):
        loss, grads = loss_and_gradients(net, training.inputs, training.targets)
        history.append(loss)
        w = hyper.plateau_window
        if epoch >= w and history[-w - 1] > 0:
            if (history[-w - 1] - loss) / history[-w - 1] < hyper.plateau_tol:
                break
        params, state = adam_step(params, grads, state)
        net = net.with_params(params)
    net.metadata = {"seed": seed, "epochs": len(history), "final_loss": history[-1],
                    "n_examples": len(training)}
    return net, np.array(history)


def predict_ann(net, points):
    """Predict from plane points (or an already encoded raw vector).

    A ``four`` network given several points returns one prediction per point,
    shape ``(m, 3)``; no averaging is done.
    """
    n_in = net.layer_sizes[0]
    if isinstance(points, PlanePoint):
        if n_in != 4:
            raise EncodingMismatch(f"a single point cannot feed a {n_in}-input network")
        return forward(net, encode_four(points))
    if len(points) and not isinstance(points[0], PlanePoint):
        x = np.asarray(points, dtype=float)
        if x.shape[-1] != n_in:
            raise EncodingMismatch(f"{x.shape[-1]}-value input for a {n_in}-input network")
        return forward(net, x)
    if n_in == 9:
        return forward(net, encode_nine(points))
    if n_in == 4:
        return forward(net, np.array([encode_four(p) for p in points]))
    raise EncodingMismatch(f"no point encoding for a {n_in}-input network")


# persistence


def network_to_dict(net):
    return {
        "kind": "ann",
        "encoding": net.encoding,
        "layer_sizes": list(map(int, net.layer_sizes)),
        "hidden_activation": "tanh",
        "output_activation": "identity",
        "weights": [np.asarray(w, dtype=float).tolist() for w in net.weights],
        "biases": [np.asarray(b, dtype=float).tolist() for b in net.biases],
        "input_mean": np.asarray(net.input_mean, dtype=float).tolist(),
        "input_scale": np.asarray(net.input_scale, dtype=float).tolist(),
        "output_mean": np.asarray(net.output_mean, dtype=float).tolist(),
        "output_scale": np.asarray(net.output_scale, dtype=float).tolist(),
        "training": net.metadata,
    }


def network_from_dict(d):
    try:
        return MlpNetwork(
            [int(s) for s in d["layer_sizes"]],
            [np.array(w, dtype=float) for w in d["weights"]],
            [np.array(b, dtype=float) for b in d["biases"]],
            *(np.array(d[k], dtype=float) for k in
              ("input_mean", "input_scale", "output_mean", "output_scale")),
            encoding=d.get("encoding"),
            metadata=d.get("training", {}),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed network file: {exc}") from exc


def save_network(net, path):
    try:
        with open(path, "w") as fh:
            json.dump(network_to_dict(net), fh, indent=1)
            fh.write("\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc.strerror or exc}") from exc
