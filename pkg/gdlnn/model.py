"""The GDL layer, the MLP head and model files.

A graph's representation has one coordinate per mined program: 1.0 when the
graph satisfies it (``sigma``) or the number of satisfying valuations
(``sigma_count``). A plain numpy MLP classifies representations.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .config import DEFAULT_BUDGET, TrainConfig, train_grid
from .errors import DataError, ModelFormatError, ModelVersionError, TrainingError
from .gdl import Program, validate_against_dataset
from .graph import Graph
from .log import kv
from .matcher import count_valuations, satisfies
from .mining import ScoredProgram, format_layer, parse_layer
from .workers import map_ordered

logger = logging.getLogger(__name__)

MODEL_MAGIC = "gdlnn-model"
MODEL_VERSION = "v1"


class ActivationKind(str, Enum):
    SIGMA = "sigma"
    SIGMA_COUNT = "sigma_count"


def embed(
    g: Graph,
    programs: Sequence[Program],
    kind: ActivationKind = ActivationKind.SIGMA,
    budget: int = DEFAULT_BUDGET,
) -> np.ndarray:
    """Representation of ``g`` under ``programs``.

    Raises:
        DimensionMismatchError: a program does not fit ``g``'s feature dimensions
        BudgetExceeded: a coordinate could not be decided within ``budget``
    """
    kind = ActivationKind(kind)
    out = np.zeros(len(programs))
    for i, p in enumerate(programs):
        validate_against_dataset(p, g.d, g.c)
        if kind is ActivationKind.SIGMA:
            out[i] = 1.0 if satisfies(p, g, budget) else 0.0
        else:
            out[i] = float(count_valuations(p, g, budget))
    return out


_EMBEDDER: Optional[Tuple[Tuple[Program, ...], ActivationKind, int]] = None


def _init_embedder(programs: Tuple[Program, ...], kind: ActivationKind, budget: int) -> None:
    global _EMBEDDER
    _EMBEDDER = (programs, kind, budget)


def _embed_one(g: Graph) -> np.ndarray:
    programs, kind, budget = _EMBEDDER
    return embed(g, programs, kind, budget)


def embed_graphs(
    graphs: Sequence[Graph],
    programs: Sequence[Program],
    kind: ActivationKind = ActivationKind.SIGMA,
    budget: int = DEFAULT_BUDGET,
    jobs: int = 1,
) -> np.ndarray:
    """Stack representations into an N x k matrix."""
    global _EMBEDDER
    initargs = (tuple(programs), ActivationKind(kind), budget)
    try:
        rows = map_ordered(_embed_one, graphs, jobs, initializer=_init_embedder, initargs=initargs)
    finally:
        _EMBEDDER = None
    if not rows:
        return np.zeros((0, len(programs)))
    return np.vstack(rows).reshape(len(rows), len(programs))


def _relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def _log_softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


@dataclass
class MLP:
    """Fully connected ReLU network producing class scores.

    ``weights[i]`` has shape (sizes[i], sizes[i+1]); inputs are row vectors.
    """

    weights: List[np.ndarray]
    biases: List[np.ndarray]

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise TrainingError("an MLP needs one bias per weight matrix and at least one layer")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise TrainingError(f"layer {i}: weight {w.shape} and bias {b.shape} do not fit")
            if i and self.weights[i - 1].shape[1] != w.shape[0]:
                raise TrainingError(f"layer {i} expects {w.shape[0]} inputs, previous layer gives {self.weights[i - 1].shape[1]}")

    @classmethod
    def init(cls, sizes: Sequence[int], rng: np.random.Generator) -> "MLP":
        """He-initialised weights, zero biases."""
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            scale = math.sqrt(2.0 / max(1, fan_in))
            weights.append(rng.normal(0.0, scale, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases)

    @property
    def sizes(self) -> List[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def copy(self) -> "MLP":
        return MLP([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def _forward(self, x: np.ndarray, dropout: float = 0.0, rng: Optional[np.random.Generator] = None):
        inputs, pre, masks = [x], [], []
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            if i == last:
                return z, inputs, pre, masks
            h = _relu(z)
            mask = None
            if dropout > 0.0 and rng is not None:
                mask = (rng.random(h.shape) >= dropout) / (1.0 - dropout)
                h = h * mask
            pre.append(z)
            masks.append(mask)
            inputs.append(h)

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Class scores (logits) for a batch of representations."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        logits, _, _, _ = self._forward(x)
        return logits

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        return np.exp(_log_softmax(self.forward(x)))

    def loss(self, x: np.ndarray, y: np.ndarray, weight_decay: float = 0.0) -> float:
        logits = self.forward(x)
        data = -_log_softmax(logits)[np.arange(len(y)), y].mean()
        return float(data + 0.5 * weight_decay * sum(float((w * w).sum()) for w in self.weights))

    def loss_and_grads(
        self,
        x: np.ndarray,
        y: np.ndarray,
        weight_decay: float = 0.0,
        dropout: float = 0.0,
        rng: Optional[np.random.Generator] = None,
    ) -> Tuple[float, List[np.ndarray], List[np.ndarray]]:
        """Mean cross-entropy plus ``0.5 * weight_decay * sum ||W||^2`` and its gradients.

        Args:
            x: Batch of representations, shape (n, sizes[0])
            y: Class indices, shape (n,)
            weight_decay: L2 coefficient on weight matrices (not biases)
            dropout: Drop probability for hidden activations
            rng: Generator drawing dropout masks; no dropout without one

        Returns:
            (loss, weight gradients, bias gradients)
        """
        n = len(y)
        logits, inputs, pre, masks = self._forward(x, dropout, rng)
        log_probs = _log_softmax(logits)
        rows = np.arange(n)
        loss = -log_probs[rows, y].mean()
        loss += 0.5 * weight_decay * sum(float((w * w).sum()) for w in self.weights)

        delta = np.exp(log_probs)
        delta[rows, y] -= 1.0
        delta /= n
        grads_w: List[np.ndarray] = [np.empty(0)] * len(self.weights)
        grads_b: List[np.ndarray] = [np.empty(0)] * len(self.biases)
        for i in range(len(self.weights) - 1, -1, -1):
            grads_w[i] = inputs[i].T @ delta + weight_decay * self.weights[i]
            grads_b[i] = delta.sum(axis=0)
            if i:
                dh = delta @ self.weights[i].T
                if masks[i - 1] is not None:
                    dh = dh * masks[i - 1]
                delta = dh * (pre[i - 1] > 0)
        return float(loss), grads_w, grads_b


def numerical_gradients(
    mlp: MLP, x: np.ndarray, y: np.ndarray, weight_decay: float = 0.0, step: float = 1e-6
) -> Tuple[List[np.ndarray], List[np.ndarray]]:
    """Central finite-difference gradients of :meth:`MLP.loss`."""

    def central(params: List[np.ndarray]) -> List[np.ndarray]:
        out = []
        for param in params:
            grad = np.zeros_like(param)
            for idx in np.ndindex(param.shape):
                saved = param[idx]
                param[idx] = saved + step
                up = mlp.loss(x, y, weight_decay)
                param[idx] = saved - step
                down = mlp.loss(x, y, weight_decay)
                param[idx] = saved
                grad[idx] = (up - down) / (2 * step)
            out.append(grad)
        return out

    return central(mlp.weights), central(mlp.biases)


def _stack(pairs: Sequence[Tuple[np.ndarray, int]], width: Optional[int]) -> Tuple[np.ndarray, List[int]]:
    labels = [int(y) for _, y in pairs]
    if not pairs:
        return np.zeros((0, width or 0)), labels
    rows = [np.asarray(r, dtype=np.float64).ravel() for r, _ in pairs]
    widths = {len(r) for r in rows}
    if len(widths) > 1 or (width is not None and widths != {width}):
        raise TrainingError(f"representations have mixed widths {sorted(widths)}")
    return np.vstack(rows).reshape(len(rows), -1), labels


def _indices(labels: Sequence[int], classes: Sequence[int]) -> np.ndarray:
    position = {c: i for i, c in enumerate(classes)}
    missing = sorted(set(labels) - set(position))
    if missing:
        raise TrainingError(f"labels {missing} are not among the classes {list(classes)}")
    return np.array([position[y] for y in labels], dtype=np.int64)


def _accuracy(mlp: MLP, x: np.ndarray, y: np.ndarray) -> float:
    if len(y) == 0:
        return 0.0
    return float(np.mean(np.argmax(mlp.forward(x), axis=1) == y))


def train_mlp(
    train: Sequence[Tuple[np.ndarray, int]],
    val: Sequence[Tuple[np.ndarray, int]],
    cfg: TrainConfig,
    classes: Optional[Sequence[int]] = None,
    on_epoch: Optional[Callable[[int, float], None]] = None,
) -> MLP:
    """Train the MLP head with momentum SGD and early stopping.

    Output unit i scores ``classes[i]``; classes default to the sorted labels
    of ``train``. The weights of the epoch with the best validation accuracy
    are returned (earliest wins ties). Without validation data the lowest
    training loss decides instead. ``on_epoch(epoch, metric)`` sees the
    selection metric after every epoch.

    Raises:
        TrainingError: empty training set or mixed representation widths
    """
    if not train:
        raise TrainingError("cannot train on an empty training set")
    x, labels = _stack(train, None)
    width = x.shape[1]
    vx, vlabels = _stack(val, width)
    classes = list(classes) if classes is not None else sorted(set(labels))
    y = _indices(labels, classes)
    vy = _indices(vlabels, classes)

    rng = np.random.default_rng(cfg.seed)
    mlp = MLP.init([width] + [cfg.hidden] * cfg.layers + [len(classes)], rng)
    velocity_w = [np.zeros_like(w) for w in mlp.weights]
    velocity_b = [np.zeros_like(b) for b in mlp.biases]
    n = len(y)
    full_batch = n <= cfg.full_batch_limit

    best, best_metric, best_epoch, waited = mlp.copy(), -math.inf, 0, 0
    epoch = 0
    for epoch in range(cfg.epochs):
        order = np.arange(n) if full_batch else rng.permutation(n)
        step = n if full_batch else cfg.batch_size
        for start in range(0, n, step):
            batch = order[start:start + step]
            _, grads_w, grads_b = mlp.loss_and_grads(x[batch], y[batch], cfg.weight_decay, cfg.dropout, rng)
            for params, velocity, grads in ((mlp.weights, velocity_w, grads_w), (mlp.biases, velocity_b, grads_b)):
                for i, grad in enumerate(grads):
                    velocity[i] = cfg.momentum * velocity[i] + grad
                    params[i] -= cfg.lr * velocity[i]

        metric = _accuracy(mlp, vx, vy) if len(vy) else -mlp.loss(x, y, cfg.weight_decay)
        if on_epoch is not None:
            on_epoch(epoch, metric)
        if metric > best_metric:
            best, best_metric, best_epoch, waited = mlp.copy(), metric, epoch, 0
        else:
            waited += 1
            if waited >= cfg.patience:
                break
    logger.debug(kv("train.stopped", epochs=epoch + 1, best_epoch=best_epoch, metric=best_metric,
                    lr=cfg.lr, hidden=cfg.hidden, weight_decay=cfg.weight_decay))
    return best


@dataclass(frozen=True)
class FitResult:
    mlp: MLP
    cfg: TrainConfig
    val_accuracy: float


def fit_model(
    train: Sequence[Tuple[np.ndarray, int]],
    val: Sequence[Tuple[np.ndarray, int]],
    cfg: TrainConfig,
    classes: Optional[Sequence[int]] = None,
    grid: bool = False,
) -> FitResult:
    """Train one MLP per configuration and keep the best on validation.

    Selection uses validation accuracy, or training accuracy when there is
    no validation data; the first configuration wins ties.
    """
    classes = list(classes) if classes is not None else sorted({int(y) for _, y in train})
    configs = train_grid(cfg) if grid else [cfg]
    select_on = val if val else train
    sx, slabels = _stack(select_on, None)
    sy = _indices(slabels, classes)
    best: Optional[FitResult] = None
    for candidate in configs:
        mlp = train_mlp(train, val, candidate, classes)
        acc = _accuracy(mlp, sx, sy)
        logger.info(kv("train.candidate", lr=candidate.lr, hidden=candidate.hidden,
                       weight_decay=candidate.weight_decay, accuracy=acc))
        if best is None or acc > best.val_accuracy:
            best = FitResult(mlp, candidate, acc)
    return best


@dataclass(frozen=True)
class Model:
    """A trained GDLNN: the GDL layer followed by the MLP head."""

    programs: Tuple[ScoredProgram, ...]
    mlp: MLP
    activation: ActivationKind
    classes: Tuple[int, ...]
    epsilon: float = 1.0
    budget: int = DEFAULT_BUDGET
    metadata: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "programs", tuple(self.programs))
        object.__setattr__(self, "classes", tuple(int(c) for c in self.classes))
        object.__setattr__(self, "activation", ActivationKind(self.activation))
        sizes = self.mlp.sizes
        if sizes[0] != len(self.programs):
            raise TrainingError(f"MLP takes {sizes[0]} inputs but the layer has {len(self.programs)} programs")
        if sizes[-1] != len(self.classes):
            raise TrainingError(f"MLP has {sizes[-1]} outputs for {len(self.classes)} classes")

    @property
    def program_list(self) -> List[Program]:
        return [mined.program for mined in self.programs]

    def embed(self, g: Graph) -> np.ndarray:
        return embed(g, self.program_list, self.activation, self.budget)

    def embed_graphs(self, graphs: Sequence[Graph], jobs: int = 1) -> np.ndarray:
        return embed_graphs(graphs, self.program_list, self.activation, self.budget, jobs)


def predict_from_representation(m: Model, rep: np.ndarray) -> Tuple[int, np.ndarray]:
    """Label and class probabilities for one representation; ties go to the lowest class."""
    scores = m.mlp.predict_proba(np.asarray(rep, dtype=np.float64).reshape(1, -1))[0]
    return m.classes[int(np.argmax(scores))], scores


def predict(m: Model, g: Graph) -> Tuple[int, np.ndarray]:
    return predict_from_representation(m, m.embed(g))


def predict_many(m: Model, graphs: Sequence[Graph], jobs: int = 1) -> List[int]:
    reps = m.embed_graphs(graphs, jobs)
    if not len(reps):
        return []
    best = np.argmax(m.mlp.predict_proba(reps), axis=1)
    return [m.classes[int(i)] for i in best]


def accuracy(m: Model, graphs: Sequence[Graph], labels: Optional[Sequence[int]] = None, jobs: int = 1) -> float:
    """Fraction of graphs whose predicted label matches; 0.0 for no graphs."""
    if labels is None:
        labels = [g.label for g in graphs]
    if not graphs:
        return 0.0
    predicted = predict_many(m, graphs, jobs)
    return float(np.mean([p == y for p, y in zip(predicted, labels)]))


# Model files

def _format_row(values: np.ndarray) -> str:
    return " ".join(repr(float(v)) for v in values)


def format_model(m: Model) -> str:
    lines = [
        f"{MODEL_MAGIC} {MODEL_VERSION}",
        f"activation {m.activation.value}",
        "labels " + " ".join(str(c) for c in m.classes),
        f"budget {m.budget}",
    ]
    for key in sorted(m.metadata):
        value = str(m.metadata[key])
        if "\n" in value or " " in key or "=" in key:
            raise DataError(f"metadata entry {key!r} cannot be written on one line")
        lines.append(f"meta {key}={value}")
    lines.append(format_layer(m.programs, m.epsilon).rstrip("\n"))
    lines.append("mlp sizes=" + ",".join(str(s) for s in m.mlp.sizes))
    for i, (w, b) in enumerate(zip(m.mlp.weights, m.mlp.biases)):
        lines.append(f"weight {i} {w.shape[0]}x{w.shape[1]}")
        lines.extend(_format_row(row) for row in w)
        lines.append(f"bias {i} {b.shape[0]}")
        lines.append(_format_row(b))
    lines.append("end")
    return "\n".join(lines) + "\n"


class _Cursor:
    def __init__(self, lines: List[str]):
        self.lines = lines
        self.pos = 0

    def take(self, what: str) -> str:
        if self.pos >= len(self.lines):
            raise ModelFormatError(f"model file truncated: expected {what}")
        line = self.lines[self.pos]
        self.pos += 1
        return line

    def keyword(self, word: str) -> str:
        line = self.take(word)
        head, _, rest = line.partition(" ")
        if head != word:
            raise ModelFormatError(f"line {self.pos}: expected {word!r}, found {line!r}")
        return rest


def _floats(line: str, count: int, where: str) -> np.ndarray:
    try:
        values = np.array([float(v) for v in line.split()], dtype=np.float64)
    except ValueError as e:
        raise ModelFormatError(f"{where}: {e}") from e
    if len(values) != count:
        raise ModelFormatError(f"{where}: expected {count} values, found {len(values)}")
    return values


def parse_model(text: str) -> Model:
    """Parse a model file.

    Raises:
        ModelVersionError: the header names another format version
        ModelFormatError: anything else malformed, including truncation
    """
    cursor = _Cursor(text.splitlines())
    header = cursor.take("header").split()
    if len(header) != 2 or header[0] != MODEL_MAGIC:
        raise ModelFormatError("not a gdlnn model file")
    if header[1] != MODEL_VERSION:
        raise ModelVersionError(f"model format {header[1]} is not supported (expected {MODEL_VERSION})")
    try:
        activation = ActivationKind(cursor.keyword("activation").strip())
        classes = tuple(int(c) for c in cursor.keyword("labels").split())
        budget = int(cursor.keyword("budget"))
    except ValueError as e:
        raise ModelFormatError(f"bad model header: {e}") from e

    metadata: Dict[str, str] = {}
    while cursor.pos < len(cursor.lines) and cursor.lines[cursor.pos].startswith("meta "):
        key, sep, value = cursor.take("meta")[5:].partition("=")
        if not sep:
            raise ModelFormatError(f"line {cursor.pos}: metadata needs key=value")
        metadata[key] = value

    layer_start = cursor.pos
    while cursor.pos < len(cursor.lines) and not cursor.lines[cursor.pos].startswith("mlp "):
        cursor.pos += 1
    programs, epsilon = parse_layer("\n".join(cursor.lines[layer_start:cursor.pos]))

    try:
        sizes = [int(s) for s in cursor.keyword("mlp").removeprefix("sizes=").split(",")]
    except ValueError as e:
        raise ModelFormatError(f"bad mlp sizes: {e}") from e
    weights, biases = [], []
    for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        if cursor.keyword("weight") != f"{i} {fan_in}x{fan_out}":
            raise ModelFormatError(f"line {cursor.pos}: weight block {i} does not match sizes {sizes}")
        rows = [_floats(cursor.take(f"weight {i} row"), fan_out, f"weight {i}") for _ in range(fan_in)]
        weights.append(np.vstack(rows) if rows else np.zeros((0, fan_out)))
        if cursor.keyword("bias") != f"{i} {fan_out}":
            raise ModelFormatError(f"line {cursor.pos}: bias block {i} does not match sizes {sizes}")
        biases.append(_floats(cursor.take(f"bias {i}"), fan_out, f"bias {i}"))
    if cursor.take("end marker").strip() != "end":
        raise ModelFormatError("missing end marker")
    try:
        return Model(tuple(programs), MLP(weights, biases), activation, classes, epsilon, budget, metadata)
    except TrainingError as e:
        raise ModelFormatError(str(e)) from e


def save_model(m: Model, path: str) -> None:
    with open(path, 'w') as f:
        f.write(format_model(m))


def load_model(path: str) -> Model:
    try:
        with open(path, 'r') as f:
            text = f.read()
    except OSError as e:
        raise DataError(f"cannot read model file {path}: {e}") from e
    return parse_model(text)
