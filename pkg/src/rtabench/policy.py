"""Neural-network-controller inference and observation construction.

The controller is a fully connected MLP with two 256-wide tanh hidden
layers and a 6-wide linear output whose first three entries are the
thrust means and last three the variance parameters of the training
distribution; at run time only the means are used, clamped to the
control box. Two task variants exist: ``no_sensors`` observes the
normalized 6-state, ``all_sensors`` appends the inspected-point count,
sun angle and the unit vector toward the nearest uninspected cluster.

Weight files come in two self-describing encodings with bit-exact round
trips: a binary format (magic ``MLPW``) and a canonical JSON text
format. Training is out of scope; seeded random weights of the exact
architecture are shipped for benchmarking, whose cost is
weight-independent.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass

import numpy as np

from ._backend import get_backend

VARIANT_INPUTS = {"no_sensors": 6, "all_sensors": 11}
HIDDEN_WIDTH = 256
OUTPUT_WIDTH = 6

_MAGIC = b"MLPW"
_BINARY_VERSION = 1
_ACTIVATIONS = ("linear", "tanh")


class WeightsError(ValueError):
    """Raised for malformed, inconsistent or non-finite weight files."""


@dataclass
class Layer:
    """One dense layer: weight (out, in), bias (out,), activation tag."""

    weight: np.ndarray
    bias: np.ndarray
    activation: str

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=float)
        self.bias = np.asarray(self.bias, dtype=float)
        if self.activation not in _ACTIVATIONS:
            raise WeightsError(f"unknown activation: {self.activation!r}")
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise WeightsError("layer weight/bias shapes are inconsistent")


class PolicyNetwork:
    """Immutable MLP: an ordered list of dense layers."""

    def __init__(self, layers, variant=None):
        if not layers:
            raise WeightsError("network needs at least one layer")
        self.layers = list(layers)
        self.variant = variant
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if nxt.weight.shape[1] != prev.weight.shape[0]:
                raise WeightsError(
                    f"dimension mismatch between layers: "
                    f"{prev.weight.shape[0]} -> {nxt.weight.shape[1]}")
        for layer in self.layers:
            if not (np.isfinite(layer.weight).all()
                    and np.isfinite(layer.bias).all()):
                raise WeightsError("non-finite weight or bias entry")
        if variant is not None:
            expected = VARIANT_INPUTS.get(variant)
            if expected is None:
                raise WeightsError(f"unknown variant: {variant!r}")
            if self.input_dim != expected:
                raise WeightsError(
                    f"variant {variant!r} expects {expected} inputs, "
                    f"network has {self.input_dim}")
        self._acts = np.array(
            [_ACTIVATIONS.index(l.activation) for l in self.layers],
            dtype=np.int32)
        self._weights = [np.ascontiguousarray(l.weight) for l in self.layers]
        self._biases = [np.ascontiguousarray(l.bias) for l in self.layers]

    @property
    def input_dim(self) -> int:
        return self.layers[0].weight.shape[1]

    @property
    def output_dim(self) -> int:
        return self.layers[-1].weight.shape[0]


@dataclass
class ActionDistributionParams:
    """Mean thrusts and variance parameters emitted by the controller."""

    mean: np.ndarray
    variance_params: np.ndarray


def evaluate(network: PolicyNetwork, obs, backend=None) -> np.ndarray:
    """Raw forward pass through all layers.

    Defaults to the numpy kernel: BLAS matrix-vector products beat the
    naive compiled loop at these layer widths (see ``rta-bench
    kernels``); pass ``backend`` to override.
    """
    obs = np.asarray(obs, dtype=float)
    if obs.shape != (network.input_dim,):
        raise ValueError(
            f"observation length {obs.shape} does not match network input "
            f"{network.input_dim}")
    kern = get_backend("python" if backend is None else backend)
    return np.asarray(kern.mlp_forward(network._weights, network._biases,
                                       network._acts, obs))


def forward(network: PolicyNetwork, obs, backend=None) -> ActionDistributionParams:
    """Forward pass split into means (first 3) and variance parameters."""
    if network.output_dim != OUTPUT_WIDTH:
        raise ValueError("controller networks must have 6 outputs")
    out = evaluate(network, obs, backend)
    return ActionDistributionParams(mean=out[:3], variance_params=out[3:])


def act(network: PolicyNetwork, obs, u_max: float = 1.0, backend=None) -> np.ndarray:
    """Deployed control: the mean outputs clamped to the control box."""
    return np.clip(forward(network, obs, backend).mean, -u_max, u_max)


def build_observation(state, sun_theta, summary, variant) -> np.ndarray:
    """Normalized observation vector for a task variant.

    Positions are divided by 100, velocities multiplied by 2; the
    all-sensors variant appends [n_points / 100, sun angle, unit vector
    toward the nearest uninspected cluster].
    """
    x = np.asarray(state, dtype=float)
    base = np.concatenate([x[0:3] / 100.0, 2.0 * x[3:6]])
    if variant == "no_sensors":
        return base
    if variant != "all_sensors":
        raise ValueError(f"unknown variant: {variant!r}")
    if summary is None:
        raise ValueError("all_sensors observations need an inspection summary")
    extra = np.empty(5)
    extra[0] = summary.n_points / 100.0
    extra[1] = sun_theta
    extra[2:5] = summary.r_ups
    return np.concatenate([base, extra])


def default_weights_path(variant: str):
    """Path of the packaged seeded weight file for a task variant."""
    from importlib import resources
    return resources.files("rtabench").joinpath(f"data/{variant}.mlpw")


def load_default_network(variant: str) -> PolicyNetwork:
    """Load the packaged weights for ``variant``."""
    from importlib import resources
    with resources.as_file(default_weights_path(variant)) as path:
        return load_network(path)


def random_network(variant: str, seed: int = 0) -> PolicyNetwork:
    """Seeded random network with the benchmark architecture."""
    n_in = VARIANT_INPUTS[variant]
    rng = np.random.default_rng(seed)
    sizes = [n_in, HIDDEN_WIDTH, HIDDEN_WIDTH, OUTPUT_WIDTH]
    acts = ["tanh", "tanh", "linear"]
    layers = []
    for i, activation in enumerate(acts):
        fan_in, fan_out = sizes[i], sizes[i + 1]
        scale = math.sqrt(2.0 / (fan_in + fan_out))
        layers.append(Layer(weight=rng.normal(0.0, scale, (fan_out, fan_in)),
                            bias=np.zeros(fan_out), activation=activation))
    return PolicyNetwork(layers, variant=variant)


def save_network(network: PolicyNetwork, path, fmt: str = "binary") -> None:
    """Write a network in the binary or text encoding."""
    path = str(path)
    if fmt == "binary":
        with open(path, "wb") as fh:
            fh.write(_encode_binary(network))
    elif fmt == "text":
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(_encode_text(network))
    else:
        raise ValueError(f"unknown format: {fmt!r}")


def load_network(path) -> PolicyNetwork:
    """Load a network from either encoding (sniffed by magic bytes)."""
    with open(str(path), "rb") as fh:
        blob = fh.read()
    if blob[:4] == _MAGIC:
        return _decode_binary(blob)
    try:
        doc = json.loads(blob.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise WeightsError(f"unrecognized weights file: {exc}") from exc
    return _decode_text(doc)


def _header(network: PolicyNetwork) -> dict:
    return {
        "variant": network.variant,
        "layers": [{"in": int(l.weight.shape[1]), "out": int(l.weight.shape[0]),
                    "activation": l.activation} for l in network.layers],
    }


def _encode_binary(network: PolicyNetwork) -> bytes:
    header = json.dumps(_header(network), sort_keys=True,
                        separators=(",", ":")).encode("utf-8")
    parts = [_MAGIC, struct.pack("<BI", _BINARY_VERSION, len(header)), header]
    for layer in network.layers:
        parts.append(np.ascontiguousarray(layer.weight, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(layer.bias, dtype="<f8").tobytes())
    return b"".join(parts)


def _decode_binary(blob: bytes) -> PolicyNetwork:
    if len(blob) < 9:
        raise WeightsError("binary weights file is truncated")
    version, header_len = struct.unpack_from("<BI", blob, 4)
    if version != _BINARY_VERSION:
        raise WeightsError(f"unsupported binary weights version {version}")
    try:
        header = json.loads(blob[9:9 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise WeightsError(f"corrupt binary weights header: {exc}") from exc
    offset = 9 + header_len
    layers = []
    for spec in header["layers"]:
        n_out, n_in = int(spec["out"]), int(spec["in"])
        need = 8 * (n_out * n_in + n_out)
        if offset + need > len(blob):
            raise WeightsError("binary weights payload is shorter than the header declares")
        w = np.frombuffer(blob, dtype="<f8", count=n_out * n_in,
                          offset=offset).reshape(n_out, n_in)
        offset += 8 * n_out * n_in
        b = np.frombuffer(blob, dtype="<f8", count=n_out, offset=offset)
        offset += 8 * n_out
        layers.append(Layer(weight=w.copy(), bias=b.copy(),
                            activation=spec["activation"]))
    if offset != len(blob):
        raise WeightsError("binary weights file has trailing bytes")
    return PolicyNetwork(layers, variant=header.get("variant"))


def _encode_text(network: PolicyNetwork) -> str:
    doc = {
        "format": "mlp-weights",
        "version": 1,
        "variant": network.variant,
        "layers": [{
            "activation": l.activation,
            "weight": [[float(v) for v in row] for row in l.weight],
            "bias": [float(v) for v in l.bias],
        } for l in network.layers],
    }
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def _decode_text(doc) -> PolicyNetwork:
    if not isinstance(doc, dict) or doc.get("format") != "mlp-weights":
        raise WeightsError("not an mlp-weights document")
    try:
        layers = [Layer(weight=np.array(spec["weight"], dtype=float),
                        bias=np.array(spec["bias"], dtype=float),
                        activation=spec["activation"])
                  for spec in doc["layers"]]
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, WeightsError):
            raise
        raise WeightsError(f"malformed mlp-weights document: {exc}") from exc
    return PolicyNetwork(layers, variant=doc.get("variant"))
