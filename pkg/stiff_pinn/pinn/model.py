"""Multilayer perceptron, output transforms and checkpoint files.

The network maps one time feature to the trained species. Under the
``hard-ic`` transform the feature is ``log t`` and predictions are
``y0 + t * NN(log t)``; under ``none`` the feature is ``t / time_scale`` and
the raw output is the prediction.
"""

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np

from ..autodiff.dual import Dual, gelu, gelu_prime
from ..autodiff.tape import Node, Tape
from ..common.errors import ConfigError, DimensionError
from ..common.io_utils import ensure_parent, format_real
from ..common.seeding import INIT, make_rng

TRANSFORMS = ("hard-ic", "none")
ACTIVATIONS = ("gelu",)

Layer = Tuple[np.ndarray, np.ndarray]


def xavier_bound(fan_in: int, fan_out: int) -> float:
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def xavier_init(widths: Sequence[int], rng_seed: int) -> List[Layer]:
    """Uniform(+-sqrt(6/(fan_in+fan_out))) weights, zero biases."""
    rng = make_rng(rng_seed, INIT)
    layers = []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        bound = xavier_bound(fan_in, fan_out)
        layers.append((rng.uniform(-bound, bound, size=(fan_in, fan_out)), np.zeros(fan_out)))
    return layers


@dataclass
class MlpModel:
    """Dense GELU network plus the transform that turns it into predictions.

    ``species`` names the output columns; ``y0`` is their initial state,
    used by the hard-IC transform.
    """

    widths: Tuple[int, ...]
    layers: List[Layer]
    species: Tuple[str, ...] = ()
    y0: np.ndarray = field(default_factory=lambda: np.zeros(0))
    transform: str = "hard-ic"
    activation: str = "gelu"
    seed: int = 0
    time_scale: float = 1.0

    def __post_init__(self):
        self.widths = tuple(int(w) for w in self.widths)
        if len(self.widths) < 3:
            raise ConfigError("An MLP needs an input width, at least one hidden layer and an output width")
        if self.widths[0] != 1 or min(self.widths) < 1:
            raise ConfigError(f"Invalid widths {self.widths}: input width must be 1, all widths >= 1")
        if self.transform not in TRANSFORMS:
            raise ConfigError(f"Unknown transform '{self.transform}'. Valid: {', '.join(TRANSFORMS)}")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"Unknown activation '{self.activation}'. Valid: {', '.join(ACTIVATIONS)}")
        if len(self.layers) != len(self.widths) - 1:
            raise DimensionError(f"{len(self.layers)} layers for widths {self.widths}")
        for (w, b), fan_in, fan_out in zip(self.layers, self.widths[:-1], self.widths[1:]):
            if w.shape != (fan_in, fan_out) or b.shape != (fan_out,):
                raise DimensionError(f"Layer shapes {w.shape}/{b.shape} do not match widths {self.widths}")
        self.species = tuple(self.species)
        if self.species and len(self.species) != self.n_outputs:
            raise DimensionError(f"{len(self.species)} species names for {self.n_outputs} outputs")
        self.y0 = np.asarray(self.y0, dtype=float)
        if self.y0.size == 0:
            self.y0 = np.zeros(self.n_outputs)
        if self.y0.shape != (self.n_outputs,):
            raise DimensionError(f"y0 has {self.y0.size} entries for {self.n_outputs} outputs")

    @classmethod
    def initialize(cls, widths: Sequence[int], rng_seed: int, **kwargs) -> "MlpModel":
        return cls(tuple(widths), xavier_init(widths, rng_seed), seed=rng_seed, **kwargs)

    @property
    def n_outputs(self) -> int:
        return self.widths[-1]

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in self.layers)

    def param_names(self) -> List[str]:
        names = []
        for k in range(len(self.layers)):
            names += [f"W{k}", f"b{k}"]
        return names

    def flatten(self) -> np.ndarray:
        """Layer by layer: weights row-major, then biases."""
        return np.concatenate([part.ravel() for w, b in self.layers for part in (w, b)])

    def with_flat(self, flat: np.ndarray) -> "MlpModel":
        flat = np.asarray(flat, dtype=float)
        if flat.size != self.n_params:
            raise DimensionError(f"Expected {self.n_params} parameters, got {flat.size}")
        layers, offset = [], 0
        for w, b in self.layers:
            new_w = flat[offset:offset + w.size].reshape(w.shape)
            offset += w.size
            new_b = flat[offset:offset + b.size].copy()
            offset += b.size
            layers.append((new_w.copy(), new_b))
        return replace(self, layers=layers)

    def __call__(self, t) -> np.ndarray:
        return predict(self, t)


def _feature(model: MlpModel, t: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Input feature and its derivative with respect to t."""
    if model.transform == "hard-ic":
        if np.any(t <= 0):
            raise ValueError("The log-time input needs t > 0")
        return np.log(t), 1.0 / t
    return t / model.time_scale, np.full_like(t, 1.0 / model.time_scale)


def _network(model: MlpModel, x: np.ndarray, x_dot: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    h, h_dot = x[:, None], x_dot[:, None]
    last = len(model.layers) - 1
    for k, (w, b) in enumerate(model.layers):
        z, z_dot = h @ w + b, h_dot @ w
        if k < last:
            h, h_dot = gelu(z), gelu_prime(z) * z_dot
        else:
            h, h_dot = z, z_dot
    return h, h_dot


def forward(model: MlpModel, t: Union[float, np.ndarray, Dual]):
    """Raw network output at the feature of ``t``; a Dual input carries d/dt."""
    if isinstance(t, Dual):
        times = np.atleast_1d(np.asarray(t.value, dtype=float))
        seed = np.broadcast_to(np.asarray(t.tangent, dtype=float), times.shape)
        x, dx = _feature(model, times)
        out, out_dot = _network(model, x, dx * seed)
        if np.ndim(t.value) == 0:
            return Dual(out[0], out_dot[0])
        return Dual(out, out_dot)
    times = np.atleast_1d(np.asarray(t, dtype=float))
    x, dx = _feature(model, times)
    out, _ = _network(model, x, dx)
    return out[0] if np.ndim(t) == 0 else out


def hard_ic_transform(model: MlpModel, y0: np.ndarray, t: Union[float, np.ndarray, Dual]):
    """``y0 + t * NN(log t)``; exactly ``y0`` at t = 0 without evaluating the network.

    With a Dual ``t`` the tangent is ``NN + dNN/dlog(t)``; it is undefined
    (NaN) at t = 0.
    """
    y0 = np.asarray(y0, dtype=float)
    is_dual = isinstance(t, Dual)
    value = t.value if is_dual else t
    times = np.atleast_1d(np.asarray(value, dtype=float))
    if np.any(times < 0):
        raise ValueError("hard-IC predictions need t >= 0")
    y = np.tile(y0, (times.size, 1))
    y_dot = np.full_like(y, np.nan)
    positive = times > 0
    if np.any(positive):
        tp = times[positive]
        out, out_dot = _network(model, *_feature(replace(model, transform="hard-ic"), tp))
        y[positive] = y0 + tp[:, None] * out
        y_dot[positive] = out + tp[:, None] * out_dot
    if is_dual:
        seed = np.broadcast_to(np.asarray(t.tangent, dtype=float), times.shape)[:, None]
        y_dot = y_dot * seed
        if np.ndim(value) == 0:
            return Dual(y[0], y_dot[0])
        return Dual(y, y_dot)
    return y[0] if np.ndim(value) == 0 else y


def predict(model: MlpModel, t):
    if model.transform == "hard-ic":
        return hard_ic_transform(model, model.y0, t)
    return forward(model, t)


def record_params(tape: Tape, model: MlpModel) -> List[Tuple[Node, Node]]:
    return [
        (tape.param(f"W{k}", w), tape.param(f"b{k}", b)) for k, (w, b) in enumerate(model.layers)
    ]


def record_network(tape: Tape, params: List[Tuple[Node, Node]], x: Node) -> Node:
    h = x
    for k, (w, b) in enumerate(params):
        h = tape.affine(h, w, b)
        if k < len(params) - 1:
            h = tape.gelu(h)
    return h


def record_prediction(
    tape: Tape, model: MlpModel, params: List[Tuple[Node, Node]], t: np.ndarray
) -> Node:
    """Predictions for a batch of ``t`` on the tape, tangent channel = d/dt."""
    t = np.asarray(t, dtype=float).reshape(-1, 1)
    x, dx = _feature(model, t)
    out = record_network(tape, params, tape.constant(x, dx))
    if model.transform == "none":
        return out
    time = tape.constant(t, np.ones_like(t))
    return tape.add(tape.constant(model.y0[None, :]), tape.mul(time, out))


def flat_gradient(model: MlpModel, grads: Dict[str, np.ndarray]) -> np.ndarray:
    return np.concatenate([grads[name].ravel() for name in model.param_names()])


def save_checkpoint(model: MlpModel, file_path: str) -> None:
    """Header ``key=value`` lines, then one parameter per line."""
    ensure_parent(file_path)
    header = [
        "widths=" + ",".join(str(w) for w in model.widths),
        f"activation={model.activation}",
        f"seed={model.seed}",
        f"transform={model.transform}",
        f"time_scale={format_real(model.time_scale)}",
        "species=" + ",".join(model.species),
        "y0=" + ",".join(format_real(v) for v in model.y0),
    ]
    body = [format_real(v) for v in model.flatten()]
    Path(file_path).write_text("\n".join(header + body) + "\n", encoding="utf-8")


def load_checkpoint(file_path: str) -> MlpModel:
    path = Path(file_path)
    if not path.exists():
        raise FileNotFoundError(f"Checkpoint not found: {file_path}")
    header: Dict[str, str] = {}
    values = []
    for number, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        if "=" in line:
            key, _, value = line.partition("=")
            header[key.strip()] = value.strip()
            continue
        try:
            values.append(float(line))
        except ValueError:
            raise ConfigError(f"Malformed checkpoint {file_path}: line {number}") from None
    if "widths" not in header:
        raise ConfigError(f"Malformed checkpoint {file_path}: missing widths= header")
    widths = tuple(int(w) for w in header["widths"].split(","))
    template = MlpModel(
        widths=widths,
        layers=[(np.zeros((a, b)), np.zeros(b)) for a, b in zip(widths[:-1], widths[1:])],
        species=tuple(s for s in header.get("species", "").split(",") if s),
        y0=np.array([float(v) for v in header.get("y0", "").split(",") if v]),
        transform=header.get("transform", "hard-ic"),
        activation=header.get("activation", "gelu"),
        seed=int(header.get("seed", 0)),
        time_scale=float(header.get("time_scale", 1.0)),
    )
    return template.with_flat(np.array(values))
