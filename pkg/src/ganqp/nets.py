"""MLP critics, generators and encoders on top of the autograd engine."""
from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import autograd as ag
from .autograd import Tensor, stop_gradient
from .rng import stream

__all__ = [
    "MlpSpec",
    "SpectralState",
    "MLP",
    "PointGenerator",
    "build_mlp",
    "spectral_normalize",
    "stop_gradient",
    "save_mlp",
    "load_mlp",
    "MAGIC",
]

MAGIC = b"QPDIV1"

_HIDDEN = {"relu": ag.relu, "tanh": ag.tanh}
_OUTPUT = {"identity": None, "tanh": ag.tanh}


@dataclass(frozen=True)
class MlpSpec:
    layer_widths: tuple
    hidden_activation: str = "relu"
    output_activation: str = "identity"
    spectral_norm: bool = False
    init_scale: float = 0.05
    power_iterations: int = 1

    def __post_init__(self):
        widths = tuple(int(w) for w in self.layer_widths)
        object.__setattr__(self, "layer_widths", widths)
        if len(widths) < 2:
            raise ValueError("an MLP needs at least an input and an output width")
        if any(w < 1 for w in widths):
            raise ValueError("layer widths must be positive")
        if self.hidden_activation not in _HIDDEN:
            raise ValueError(f"unknown hidden activation {self.hidden_activation!r}")
        if self.output_activation not in _OUTPUT:
            raise ValueError(f"unknown output activation {self.output_activation!r}")
        if self.init_scale <= 0:
            raise ValueError("init_scale must be positive")
        if self.power_iterations < 1:
            raise ValueError("power_iterations must be >= 1")


@dataclass
class SpectralState:
    """Power-iteration vectors for one weight matrix of shape (fan_in, fan_out).

    ``u`` estimates the left singular vector (length fan_in), ``v`` the right one.
    """
    u: np.ndarray
    v: np.ndarray | None = None
    power_iterations: int = 1

    @classmethod
    def init(cls, shape, rng: np.random.Generator, power_iterations: int = 1) -> "SpectralState":
        u = rng.standard_normal(shape[0])
        return cls(u=u / np.linalg.norm(u), power_iterations=power_iterations)


def _unit(x: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(x)
    if n == 0:
        raise ValueError("power iteration collapsed to the zero vector")
    return x / n


def spectral_normalize(weight, state: SpectralState, update: bool = True):
    """Return ``(weight / sigma_hat, state)`` with ``sigma_hat = u^T W v``.

    ``update`` runs ``state.power_iterations`` rounds first.  Gradients flow
    through ``sigma_hat`` with ``u`` and ``v`` held constant.
    """
    w = ag.as_tensor(weight)
    mat = w.data
    if not np.any(mat):
        raise ValueError("cannot spectrally normalize a zero matrix")
    if update or state.v is None:
        u = state.u
        for _ in range(state.power_iterations if update else 1):
            v = _unit(mat.T @ u)
            u = _unit(mat @ v)
        state.u, state.v = u, v
    sigma = (w * np.outer(state.u, state.v)).sum()
    if sigma.data <= 0:
        raise ValueError("estimated spectral norm is not positive")
    return w / sigma, state


class MLP:
    """Fully connected network mapping (batch, in) -> (batch, out)."""

    def __init__(self, spec: MlpSpec, seed: int = 0, stream_name: str = "init"):
        self.spec = spec
        rng = stream(seed, stream_name)
        self.weights: list[Tensor] = []
        self.biases: list[Tensor] = []
        self.spectral: list[SpectralState] = []
        for fan_in, fan_out in zip(spec.layer_widths[:-1], spec.layer_widths[1:]):
            bound = spec.init_scale / np.sqrt(fan_in)
            self.weights.append(Tensor(rng.uniform(-bound, bound, size=(fan_in, fan_out)), requires_grad=True))
            self.biases.append(Tensor(np.zeros(fan_out), requires_grad=True))
            if spec.spectral_norm:
                self.spectral.append(SpectralState.init((fan_in, fan_out), rng, spec.power_iterations))

    @property
    def parameters(self) -> list[Tensor]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def effective_weights(self, update: bool = False) -> list[Tensor]:
        if not self.spec.spectral_norm:
            return list(self.weights)
        return [spectral_normalize(w, s, update=update)[0] for w, s in zip(self.weights, self.spectral)]

    def power_iterate(self, rounds: int | None = None) -> None:
        """Advance every layer's power iteration (once per critic training step)."""
        for w, s in zip(self.weights, self.spectral):
            for _ in range(rounds or 1):
                spectral_normalize(w.detach(), s, update=True)

    def __call__(self, x) -> Tensor:
        x = ag.as_tensor(x)
        if x.ndim != 2 or x.shape[1] != self.spec.layer_widths[0]:
            raise ag.ShapeError(f"expected input of shape (batch, {self.spec.layer_widths[0]}), got {x.shape}")
        act = _HIDDEN[self.spec.hidden_activation]
        weights = self.effective_weights()
        h = x
        last = len(weights) - 1
        for i, (w, b) in enumerate(zip(weights, self.biases)):
            h = ag.affine(h, w, b)
            if i < last:
                h = act(h)
        out_act = _OUTPUT[self.spec.output_activation]
        return out_act(h) if out_act else h

    def get_flat(self) -> list[np.ndarray]:
        return [p.data.copy() for p in self.parameters]

    def set_flat(self, arrays) -> None:
        for p, a in zip(self.parameters, arrays):
            a = np.asarray(a, dtype=np.float64)
            if a.shape != p.shape:
                raise ag.ShapeError(f"parameter shape {a.shape} != {p.shape}")
            p.data = a.copy()


class PointGenerator:
    """Generator whose output is a single learnable point, ignoring the noise.

    Used for the point-mass experiments where q is a Dirac at the position.
    """

    def __init__(self, position):
        self.position = Tensor(np.atleast_1d(np.asarray(position, dtype=np.float64)).reshape(1, -1),
                               requires_grad=True)

    @property
    def parameters(self) -> list[Tensor]:
        return [self.position]

    def __call__(self, z) -> Tensor:
        z = ag.as_tensor(z)
        ones = np.ones((z.shape[0], 1))
        return ones @ self.position

    def get_flat(self):
        return [self.position.data.copy()]

    def set_flat(self, arrays):
        self.position.data = np.asarray(arrays[0], dtype=np.float64).copy()


def build_mlp(spec: MlpSpec, seed: int = 0, stream_name: str = "init") -> MLP:
    return MLP(spec, seed, stream_name)


def save_mlp(path, model: MLP) -> None:
    """Binary layout: b"QPDIV1", uint32 header length, JSON spec, then each
    layer's weight and bias as little-endian float64, in layer order."""
    header = json.dumps(asdict(model.spec), sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for p in model.parameters:
            fh.write(np.ascontiguousarray(p.data, dtype="<f8").tobytes())


def load_mlp(path) -> MLP:
    raw = Path(path).read_bytes()
    if raw[:len(MAGIC)] != MAGIC:
        raise ValueError(f"{path}: not a model file (bad magic)")
    pos = len(MAGIC)
    (n,) = struct.unpack("<I", raw[pos:pos + 4])
    pos += 4
    fields = json.loads(raw[pos:pos + n].decode("utf-8"))
    pos += n
    spec = MlpSpec(**fields)
    model = MLP(spec)
    for p in model.parameters:
        count = p.size
        chunk = raw[pos:pos + 8 * count]
        if len(chunk) != 8 * count:
            raise ValueError(f"{path}: truncated parameter data")
        p.data = np.frombuffer(chunk, dtype="<f8").reshape(p.shape).astype(np.float64)
        pos += 8 * count
    if pos != len(raw):
        raise ValueError(f"{path}: trailing bytes after parameters")
    return model
