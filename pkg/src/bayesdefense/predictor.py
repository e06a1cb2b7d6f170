"""Per-component compromise classifier and the thresholding step that turns its output into probabilities."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

FORMAT_TAG = "bayesdefense-clf"
FORMAT_VERSION = 1
LAYERS = (20, 30, 10, 2)


class PredictorError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    epochs: int = 60
    batch_size: int = 32
    seed: int = 0
    holdout: float = 0.2


@dataclass
class ClfNetwork:
    """Dense network with rectified hidden layers and a two-way softmax head.

    ``Out[0]`` is read as the probability that the component is compromised.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    config: TrainConfig = field(default_factory=TrainConfig)
    metrics: dict = field(default_factory=dict)

    @classmethod
    def initialise(cls, sizes: Sequence[int] = LAYERS, seed: int = 0, zero: bool = False) -> "ClfNetwork":
        rng = np.random.default_rng(seed)
        ws, bs = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            w = np.zeros((fan_in, fan_out)) if zero else rng.normal(0, np.sqrt(2.0 / fan_in), (fan_in, fan_out))
            ws.append(w)
            bs.append(np.zeros(fan_out))
        return cls(ws, bs, TrainConfig(seed=seed))

    @property
    def sizes(self) -> tuple[int, ...]:
        return (self.weights[0].shape[0],) + tuple(w.shape[1] for w in self.weights)

    def _forward(self, x: np.ndarray):
        acts = [x]
        pre = []
        h = x
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            pre.append(z)
            if k < last:
                h = np.maximum(z, 0.0)
            else:
                z = z - z.max(axis=1, keepdims=True)
                e = np.exp(z)
                h = e / e.sum(axis=1, keepdims=True)
            acts.append(h)
        return pre, acts

    def predict(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.sizes[0]:
            raise PredictorError(f"sensor vector has length {x.shape[1]}, network expects {self.sizes[0]}")
        return self._forward(x)[1][-1]

    def loss_and_grads(self, x: np.ndarray, y: np.ndarray):
        """Mean over the batch of the summed squared error, with exact gradients."""
        pre, acts = self._forward(x)
        out = acts[-1]
        n = x.shape[0]
        diff = out - y
        loss = float((diff ** 2).sum() / n)
        d_out = 2.0 * diff / n
        # softmax Jacobian applied row by row
        delta = out * (d_out - (d_out * out).sum(axis=1, keepdims=True))
        gw = [None] * len(self.weights)
        gb = [None] * len(self.weights)
        for k in reversed(range(len(self.weights))):
            gw[k] = acts[k].T @ delta
            gb[k] = delta.sum(axis=0)
            if k:
                delta = (delta @ self.weights[k].T) * (pre[k - 1] > 0)
        return loss, gw, gb


def forward(net: ClfNetwork, s: Sequence[float]) -> np.ndarray:
    return net.predict(s)[0]


def _targets(labels: np.ndarray) -> np.ndarray:
    # label 1 (attacked) -> [1, 0]; label 0 -> [0, 1]
    return np.stack([labels, 1 - labels], axis=1).astype(float)


def accuracy(net: ClfNetwork, x: np.ndarray, labels: np.ndarray) -> float:
    if len(labels) == 0:
        return float("nan")
    guess = (net.predict(x)[:, 0] > 0.5).astype(int)
    return float((guess == labels).mean())


def train(x, labels, config: TrainConfig = TrainConfig(), sizes: Sequence[int] | None = None) -> ClfNetwork:
    """Seeded mini-batch gradient descent on squared error; a holdout split is scored at the end."""
    x = np.asarray(x, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if len(x) == 0:
        raise PredictorError("empty training set")
    if len(set(labels.tolist())) < 2:
        raise PredictorError("training data must contain both normal and attacked samples")
    rng = np.random.default_rng(config.seed)
    order = rng.permutation(len(x))
    cut = int(round(len(x) * (1 - config.holdout)))
    tr, ho = order[:cut], order[cut:]
    sizes = tuple(sizes) if sizes else (x.shape[1],) + LAYERS[1:]
    net = ClfNetwork.initialise(sizes, seed=config.seed)
    net.config = config
    y = _targets(labels)
    for _ in range(config.epochs):
        perm = rng.permutation(tr)
        for start in range(0, len(perm), config.batch_size):
            idx = perm[start:start + config.batch_size]
            _, gw, gb = net.loss_and_grads(x[idx], y[idx])
            for k in range(len(net.weights)):
                net.weights[k] -= config.learning_rate * gw[k]
                net.biases[k] -= config.learning_rate * gb[k]
    net.metrics = {"train_accuracy": accuracy(net, x[tr], labels[tr]),
                   "holdout_accuracy": accuracy(net, x[ho], labels[ho])}
    return net


# ---------------------------------------------------------- thresholding

@dataclass(frozen=True)
class PredictorOutput:
    p: tuple[float, ...]
    t: tuple[int, ...]
    threshold: float


def threshold_outputs(out0: Sequence[float], threshold: float) -> PredictorOutput:
    """Flag a component when its compromise score exceeds the threshold; otherwise report zero."""
    if not 0.0 <= threshold <= 1.0:
        raise PredictorError(f"threshold {threshold} outside [0, 1]")
    p, t = [], []
    for o in out0:
        if o <= threshold:
            p.append(0.0)
            t.append(0)
        else:
            p.append(float(o))
            t.append(1)
    return PredictorOutput(tuple(p), tuple(t), threshold)


def clf(nets: Mapping[int, ClfNetwork], s: Sequence[float], threshold: float = 0.5,
        components: Sequence[int] | None = None) -> PredictorOutput:
    """Run every component's network on one sensor vector.

    Components without a network (outside the attacker's reach) always read
    as normal.
    """
    components = list(components) if components is not None else sorted(nets)
    scores = [float(forward(nets[c], s)[0]) if c in nets else 0.0 for c in components]
    return threshold_outputs(scores, threshold)


def full_capability_threshold() -> float:
    """Threshold to use when the attacker can reach every component."""
    return 0.0


# ------------------------------------------------------------ synthetic data

@dataclass(frozen=True)
class SensorModel:
    """Noisy sensor process; an attack shifts a few informative channels."""

    dim: int = 20
    informative: tuple[int, ...] = (0, 1)
    shift: float = 1.5
    noise: float = 0.6

    def sample(self, rng: np.random.Generator, attacked: np.ndarray) -> np.ndarray:
        x = rng.normal(0.0, 1.0, (len(attacked), self.dim))
        for k in self.informative:
            x[:, k] = np.where(attacked == 1, self.shift, -self.shift) + rng.normal(0, self.noise, len(attacked))
        return x


def synthetic_dataset(n: int = 1000, seed: int = 0, model: SensorModel = SensorModel()):
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 2, n)
    return model.sample(rng, labels), labels


def synthetic_trace(ticks: int, attack_from: int | None, seed: int = 0, model: SensorModel = SensorModel()):
    """Sensor vectors per tick; from ``attack_from`` on the attack signature is present."""
    rng = np.random.default_rng(seed)
    flags = np.array([1 if attack_from is not None and k >= attack_from else 0 for k in range(ticks)])
    return model.sample(rng, flags), flags


# -------------------------------------------------------------- persistence

def save_network(net: ClfNetwork) -> str:
    lines = [f"{FORMAT_TAG} {FORMAT_VERSION}", "layers " + " ".join(map(str, net.sizes))]
    for w, b in zip(net.weights, net.biases):
        lines.append(f"weights {w.shape[0]} {w.shape[1]}")
        lines.extend(" ".join(repr(float(v)) for v in row) for row in w)
        lines.append(f"bias {b.shape[0]}")
        lines.append(" ".join(repr(float(v)) for v in b))
    return "\n".join(lines) + "\n"


def load_network(text: str) -> ClfNetwork:
    lines = text.splitlines()
    if not lines or lines[0].split()[:1] != [FORMAT_TAG]:
        raise PredictorError("line 1: not a classifier file")
    version = int(lines[0].split()[1])
    if version != FORMAT_VERSION:
        raise PredictorError(f"line 1: unsupported version {version}")
    sizes = [int(v) for v in lines[1].split()[1:]]
    ws, bs = [], []
    k = 2
    try:
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            head = lines[k].split()
            if head != ["weights", str(fan_in), str(fan_out)]:
                raise PredictorError(f"line {k + 1}: expected weights {fan_in} {fan_out}")
            rows = [[float(v) for v in lines[k + 1 + r].split()] for r in range(fan_in)]
            ws.append(np.array(rows))
            k += 1 + fan_in
            if lines[k].split() != ["bias", str(fan_out)]:
                raise PredictorError(f"line {k + 1}: expected bias {fan_out}")
            bs.append(np.array([float(v) for v in lines[k + 1].split()]))
            k += 2
    except (IndexError, ValueError) as exc:
        raise PredictorError(f"line {k + 1}: truncated or malformed classifier file ({exc})") from None
    for w, (fan_in, fan_out) in zip(ws, zip(sizes[:-1], sizes[1:])):
        if w.shape != (fan_in, fan_out):
            raise PredictorError("weight matrix shape does not match the declared layers")
    return ClfNetwork(ws, bs)


def read_dataset_csv(text: str):
    rows = list(csv.reader(io.StringIO(text)))
    if rows and not _is_number(rows[0][0]):
        rows = rows[1:]
    if not rows:
        raise PredictorError("dataset is empty")
    x = np.array([[float(v) for v in r[:-1]] for r in rows])
    y = np.array([int(float(r[-1])) for r in rows])
    return x, y


def write_dataset_csv(x, y) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"s{k}" for k in range(np.shape(x)[1])] + ["label"])
    for row, label in zip(x, y):
        w.writerow([repr(float(v)) for v in row] + [int(label)])
    return buf.getvalue()


def read_trace_csv(text: str) -> np.ndarray:
    rows = list(csv.reader(io.StringIO(text)))
    if rows and not _is_number(rows[0][0]):
        rows = rows[1:]
    return np.array([[float(v) for v in r] for r in rows])


def _is_number(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False
