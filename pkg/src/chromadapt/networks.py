"""Discriminator and generator construction, plus checkpoint serialization.

The discriminator stacks four strided convolution groups (convolution,
instance normalization, leaky ReLU with slope 0.2) and ends in a dense
layer with a sigmoid, mapping an image batch to scores in (0, 1).  The
generator consists of three components of identical structure, one per
color operator: five convolution groups (convolution, instance
normalization, ReLU) followed by a dense layer with a tanh, so each
predicted adjustment parameter lies in (-1, 1).  Each component's final
dense layer starts at zero, which makes a freshly built generator the
identity adaptation.

Instance normalization everywhere keeps per-sample outputs independent of
batch composition.  Checkpoints are a plain-text header followed by named
little-endian arrays; the byte layout is documented in the README.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, asdict, replace
from pathlib import Path

import numpy as np

from . import tensor as T
from .errors import CheckpointError, InvalidSpecError
from .optim import Adam
from .tensor import Tensor

CHECKPOINT_MAGIC = "chromadapt-checkpoint v1"

DISCRIMINATOR_GROUPS = 4
GENERATOR_GROUPS = 5
COMPONENT_ORDER = ("brightness", "saturation", "contrast")


@dataclass(frozen=True)
class NetworkSpec:
    role: str  # "discriminator" or "generator"
    resolution: tuple[int, int] = (64, 64)  # (H, W)
    channels: tuple[int, ...] = ()
    kernel: int = 4
    stride: int = 2
    padding: int = 1
    leaky_slope: float = 0.2
    norm_eps: float = 1e-5
    dtype: str = "float32"

    def __post_init__(self):
        if self.role not in ("discriminator", "generator"):
            raise InvalidSpecError(f"unknown role {self.role!r}")
        want = DISCRIMINATOR_GROUPS if self.role == "discriminator" else GENERATOR_GROUPS
        if len(self.channels) != want:
            raise InvalidSpecError(
                f"{self.role} requires exactly {want} convolution groups, "
                f"got {len(self.channels)}"
            )
        if any(c < 1 for c in self.channels):
            raise InvalidSpecError("channel widths must be positive")
        if self.stride < 1:
            raise InvalidSpecError("stride must be >= 1")
        if self.kernel < 1 or self.padding < 0:
            raise InvalidSpecError("kernel must be >= 1 and padding >= 0")
        if self.norm_eps <= 0.0:
            raise InvalidSpecError("norm_eps must be positive")
        h, w = self.feature_shape()
        if h < 1 or w < 1:
            raise InvalidSpecError(
                f"resolution {self.resolution} collapses below 1x1 after "
                f"{len(self.channels)} strided groups"
            )

    def feature_shape(self) -> tuple[int, int]:
        h, w = self.resolution
        for _ in self.channels:
            h = (h + 2 * self.padding - self.kernel) // self.stride + 1
            w = (w + 2 * self.padding - self.kernel) // self.stride + 1
        return h, w

    def feature_dim(self) -> int:
        h, w = self.feature_shape()
        return self.channels[-1] * h * w

    def np_dtype(self):
        return np.dtype(self.dtype)

    def canonical_json(self) -> str:
        d = asdict(self)
        d["resolution"] = list(self.resolution)
        d["channels"] = list(self.channels)
        return json.dumps(d, sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    @staticmethod
    def from_json(s: str) -> "NetworkSpec":
        d = json.loads(s)
        d["resolution"] = tuple(d["resolution"])
        d["channels"] = tuple(d["channels"])
        return NetworkSpec(**d)


def discriminator_spec(
    resolution=(64, 64), channels=(64, 128, 256, 512), kernel=4, stride=2, padding=1, **kw
) -> NetworkSpec:
    return NetworkSpec(
        role="discriminator", resolution=tuple(resolution), channels=tuple(channels),
        kernel=kernel, stride=stride, padding=padding, **kw,
    )


def generator_spec(
    resolution=(64, 64), channels=(32, 64, 128, 256, 256), kernel=3, stride=2, padding=1, **kw
) -> NetworkSpec:
    return NetworkSpec(
        role="generator", resolution=tuple(resolution), channels=tuple(channels),
        kernel=kernel, stride=stride, padding=padding, **kw,
    )


# ---------------------------------------------------------------------------
# Parameter construction
# ---------------------------------------------------------------------------


def _init_stack(spec: NetworkSpec, rng: np.random.Generator, prefix: str, zero_head: bool) -> dict[str, Tensor]:
    dt = spec.np_dtype()
    params: dict[str, Tensor] = {}
    c_in = 3
    for i, c_out in enumerate(spec.channels):
        fan_in = c_in * spec.kernel * spec.kernel
        params[f"{prefix}conv{i}.w"] = T.he_init(
            (c_out, c_in, spec.kernel, spec.kernel), fan_in, rng, dtype=dt
        )
        params[f"{prefix}conv{i}.b"] = Tensor(np.zeros(c_out, dtype=dt), requires_grad=True)
        params[f"{prefix}norm{i}.g"] = Tensor(np.ones(c_out, dtype=dt), requires_grad=True)
        params[f"{prefix}norm{i}.b"] = Tensor(np.zeros(c_out, dtype=dt), requires_grad=True)
        c_in = c_out
    f = spec.feature_dim()
    if zero_head:
        params[f"{prefix}head.w"] = Tensor(np.zeros((f, 1), dtype=dt), requires_grad=True)
    else:
        params[f"{prefix}head.w"] = T.he_init((f, 1), f, rng, dtype=dt)
    params[f"{prefix}head.b"] = Tensor(np.zeros(1, dtype=dt), requires_grad=True)
    return params


def _stack_forward(spec: NetworkSpec, params: dict[str, Tensor], x: Tensor, prefix: str, activation: str) -> Tensor:
    h = x
    for i in range(len(spec.channels)):
        h = T.conv2d(h, params[f"{prefix}conv{i}.w"], params[f"{prefix}conv{i}.b"],
                     stride=spec.stride, padding=spec.padding)
        h = T.instance_norm(h, params[f"{prefix}norm{i}.g"], params[f"{prefix}norm{i}.b"],
                            eps=spec.norm_eps)
        h = T.leaky_relu(h, spec.leaky_slope) if activation == "leaky_relu" else T.relu(h)
    n = h.shape[0]
    flat = h.reshape(n, spec.feature_dim())
    return T.dense(flat, params[f"{prefix}head.w"], params[f"{prefix}head.b"])


class Discriminator:
    """Image batch (N, 3, H, W) in network domain -> scores (N, 1) in (0, 1)."""

    def __init__(self, spec: NetworkSpec, seed: int = 0, params: dict[str, Tensor] | None = None):
        if spec.role != "discriminator":
            raise InvalidSpecError("Discriminator requires a discriminator spec")
        self.spec = spec
        if params is None:
            rng = np.random.default_rng(seed)
            params = _init_stack(spec, rng, "", zero_head=False)
        self.params = params

    def forward(self, x: Tensor) -> Tensor:
        logits = _stack_forward(self.spec, self.params, x, "", "leaky_relu")
        return T.sigmoid(logits)

    def set_trainable(self, trainable: bool) -> None:
        for p in self.params.values():
            p.requires_grad = trainable

    def weight_bytes(self) -> bytes:
        return b"".join(
            np.ascontiguousarray(self.params[k].data).tobytes() for k in sorted(self.params)
        )


class Generator:
    """Image batch -> per-image (brightness, saturation, contrast) in (-1, 1)^3."""

    def __init__(self, spec: NetworkSpec, seed: int = 0, params: dict[str, Tensor] | None = None):
        if spec.role != "generator":
            raise InvalidSpecError("Generator requires a generator spec")
        self.spec = spec
        if params is None:
            params = {}
            for j, comp in enumerate(COMPONENT_ORDER):
                rng = np.random.default_rng((seed, j))
                params.update(_init_stack(spec, rng, f"{comp}.", zero_head=True))
        self.params = params

    def forward(self, x: Tensor) -> Tensor:
        outs = [
            T.tanh(_stack_forward(self.spec, self.params, x, f"{comp}.", "relu"))
            for comp in COMPONENT_ORDER
        ]
        return T.concat(outs, axis=1)  # (N, 3) columns ordered b, s, c

    def set_trainable(self, trainable: bool) -> None:
        for p in self.params.values():
            p.requires_grad = trainable


def build_network(spec: NetworkSpec, seed: int = 0):
    if spec.role == "discriminator":
        return Discriminator(spec, seed=seed)
    return Generator(spec, seed=seed)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


@dataclass
class Checkpoint:
    spec: NetworkSpec
    arrays: dict[str, np.ndarray]  # parameters plus optional "opt.*" state
    step: int = 0
    rng_state: dict | None = None

    def param_arrays(self) -> dict[str, np.ndarray]:
        return {k: v for k, v in self.arrays.items() if not k.startswith("opt.")}

    def opt_arrays(self) -> dict[str, np.ndarray]:
        return {k: v for k, v in self.arrays.items() if k.startswith("opt.")}

    def build(self):
        dt = self.spec.np_dtype()
        params = {
            k: Tensor(v.astype(dt, copy=True), requires_grad=True)
            for k, v in self.param_arrays().items()
        }
        if self.spec.role == "discriminator":
            return Discriminator(self.spec, params=params)
        return Generator(self.spec, params=params)


def save_checkpoint(
    path,
    spec: NetworkSpec,
    params: dict[str, Tensor],
    step: int = 0,
    optimizer: Adam | None = None,
    rng_state: dict | None = None,
) -> None:
    """Write the documented header + named little-endian arrays layout."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays: dict[str, np.ndarray] = {k: p.data for k, p in params.items()}
    if optimizer is not None:
        arrays.update(optimizer.state_arrays())
    spec_json = spec.canonical_json()
    header = [
        CHECKPOINT_MAGIC,
        f"role {spec.role}",
        f"spec {spec_json}",
        f"spec-digest {spec.digest()}",
        f"step {step}",
        f"rng {json.dumps(rng_state, sort_keys=True) if rng_state is not None else '-'}",
        f"arrays {len(arrays)}",
    ]
    with open(path, "wb") as f:
        f.write(("\n".join(header) + "\n").encode())
        for name in sorted(arrays):
            arr = arrays[name]
            le = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
            raw = np.ascontiguousarray(le).tobytes()
            dtname = arr.dtype.name
            shape = ",".join(str(d) for d in arr.shape) or "scalar"
            f.write(f"array {name} {dtname} {shape} {len(raw)}\n".encode())
            f.write(raw)
            f.write(b"\n")


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    with open(path, "rb") as f:
        magic = f.readline().decode().rstrip("\n")
        if magic != CHECKPOINT_MAGIC:
            raise CheckpointError(
                f"{path}: unsupported checkpoint header {magic!r} (expected {CHECKPOINT_MAGIC!r})"
            )
        fields: dict[str, str] = {}
        for _ in range(6):
            line = f.readline().decode().rstrip("\n")
            key, _, value = line.partition(" ")
            fields[key] = value
        for key in ("role", "spec", "spec-digest", "step", "arrays"):
            if key not in fields:
                raise CheckpointError(f"{path}: missing header field {key!r}")
        spec = NetworkSpec.from_json(fields["spec"])
        if spec.digest() != fields["spec-digest"]:
            raise CheckpointError(f"{path}: spec digest mismatch")
        if spec.role != fields["role"]:
            raise CheckpointError(f"{path}: role field disagrees with spec")
        rng_state = None if fields["rng"] == "-" else json.loads(fields["rng"])
        arrays: dict[str, np.ndarray] = {}
        for _ in range(int(fields["arrays"])):
            head = f.readline().decode().rstrip("\n")
            parts = head.split(" ")
            if len(parts) != 5 or parts[0] != "array":
                raise CheckpointError(f"{path}: malformed array header {head!r}")
            _, name, dtname, shape_s, nbytes_s = parts
            shape = () if shape_s == "scalar" else tuple(int(d) for d in shape_s.split(","))
            raw = f.read(int(nbytes_s))
            if len(raw) != int(nbytes_s):
                raise CheckpointError(f"{path}: truncated array {name!r}")
            if f.read(1) != b"\n":
                raise CheckpointError(f"{path}: missing array terminator for {name!r}")
            arr = np.frombuffer(raw, dtype=np.dtype(dtname).newbyteorder("<")).reshape(shape)
            arrays[name] = arr.astype(np.dtype(dtname), copy=True)
        return Checkpoint(spec=spec, arrays=arrays, step=int(fields["step"]), rng_state=rng_state)
