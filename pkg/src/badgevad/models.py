"""The four network architectures, parameter accounting, batched inference
and the ``.bvm`` model file format.

``.bvm`` layout::

    b"BVMODEL 1\\n"                       magic line with format version
    <header JSON, one line, sorted keys>\\n
    <tensor data>                         little-endian float64, manifest order

The header carries ``spec`` (arch, feature_set, normalized, seed),
``metadata``, ``bn_initialized`` and ``tensors``, a list of
``{"name", "shape"}`` entries.  Trainable tensors come first in layer order,
followed by batch-norm running statistics.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field

import numpy as np

from .features import WINDOW, FeatureSet
from .nnkernel import (LSTM, BatchNorm1D, Conv1DSame, Dense, GlobalAvgPool, MaxPool1D, ReLU,
                       Sequential, ShapeError, Sigmoid, make_rng)

CNN_FILTERS, CNN_KERNEL, CNN_BLOCKS = 254, 3, 4
FRONT_FILTERS, FRONT_KERNEL = 64, 4
LSTM_UNITS = 100

BVM_MAGIC = b"BVMODEL"
BVM_VERSION = 1


class Arch(enum.Enum):
    """Architectures, in the order used for report rows and tie-breaking."""

    CNN = "CNN"
    CNN_LSTM = "CNN_LSTM"
    CNN_LSTM2 = "CNN_LSTM2"
    LSTM2 = "LSTM2"

    @classmethod
    def parse(cls, text: str) -> Arch:
        key = text.strip().upper().replace("+", "_").replace("-", "_")
        aliases = {"CNN": cls.CNN, "LSTM2": cls.LSTM2, "LSTM_LSTM": cls.LSTM2,
                   "CNN_LSTM": cls.CNN_LSTM, "CNN_LSTM2": cls.CNN_LSTM2,
                   "CNN_LSTM_LSTM": cls.CNN_LSTM2}
        if key not in aliases:
            raise ValueError(f"unknown architecture {text!r}; valid: {[a.value for a in cls]}")
        return aliases[key]


@dataclass(frozen=True)
class ArchSpec:
    arch: Arch
    feature_set: FeatureSet
    normalized: bool = False
    seed: int = 0

    @property
    def input_shape(self) -> tuple[int, int]:
        return (WINDOW, self.feature_set.n_features)

    def to_json(self) -> dict:
        return {"arch": self.arch.value, "feature_set": self.feature_set.value,
                "normalized": self.normalized, "seed": self.seed}

    @classmethod
    def from_json(cls, d: dict) -> ArchSpec:
        return cls(Arch(d["arch"]), FeatureSet(d["feature_set"]), bool(d["normalized"]),
                   int(d["seed"]))


@dataclass
class TrainedModel:
    spec: ArchSpec
    network: Sequential
    metadata: dict = field(default_factory=dict)

    @property
    def params(self):
        return self.network.params

    def state_tensors(self) -> list[tuple[str, np.ndarray]]:
        """(name, array) for every serialized tensor, in manifest order."""
        out = [(p.name, p.value) for p in self.params]
        for layer in self.network.layers:
            if isinstance(layer, BatchNorm1D):
                prefix = layer.gamma.name.rsplit(".", 1)[0]
                out += [(f"{prefix}.{k}", v) for k, v in layer.state().items()]
        return out

    def batchnorms(self) -> list[BatchNorm1D]:
        return [l for l in self.network.layers if isinstance(l, BatchNorm1D)]


def build_model(spec: ArchSpec) -> TrainedModel:
    """Fresh, untrained network for ``spec``; weights depend only on spec.seed."""
    rng = make_rng(spec.seed)
    F = spec.feature_set.n_features
    layers = []
    if spec.arch is Arch.CNN:
        cin = F
        for k in range(1, CNN_BLOCKS + 1):
            layers += [Conv1DSame(f"conv{k}", cin, CNN_FILTERS, CNN_KERNEL, rng),
                       BatchNorm1D(f"bn{k}", CNN_FILTERS), ReLU()]
            cin = CNN_FILTERS
        layers += [GlobalAvgPool(), Dense("dense", CNN_FILTERS, 1, rng)]
    elif spec.arch is Arch.LSTM2:
        layers += [LSTM("lstm1", F, LSTM_UNITS, True, rng),
                   LSTM("lstm2", LSTM_UNITS, LSTM_UNITS, False, rng),
                   Dense("dense", LSTM_UNITS, 1, rng)]
    else:
        layers += [Conv1DSame("conv1", F, FRONT_FILTERS, FRONT_KERNEL, rng), ReLU(), MaxPool1D(2)]
        if spec.arch is Arch.CNN_LSTM:
            layers += [LSTM("lstm1", FRONT_FILTERS, LSTM_UNITS, False, rng)]
        else:
            layers += [LSTM("lstm1", FRONT_FILTERS, LSTM_UNITS, True, rng),
                       LSTM("lstm2", LSTM_UNITS, LSTM_UNITS, False, rng)]
        layers += [Dense("dense", LSTM_UNITS, 1, rng)]
    layers.append(Sigmoid())
    return TrainedModel(spec, Sequential(layers))


def parameter_count(model: TrainedModel) -> int:
    return sum(p.value.size for p in model.params)


def analytic_parameter_count(arch: Arch, n_features: int) -> int:
    """Trainable parameter count from layer formulas."""
    F, H = n_features, LSTM_UNITS

    def conv(k, cin, cout):
        return k * cin * cout + cout

    def lstm(cin):
        return 4 * (H * (cin + H) + H)

    if arch is Arch.CNN:
        return (conv(CNN_KERNEL, F, CNN_FILTERS)
                + (CNN_BLOCKS - 1) * conv(CNN_KERNEL, CNN_FILTERS, CNN_FILTERS)
                + CNN_BLOCKS * 2 * CNN_FILTERS + CNN_FILTERS + 1)
    if arch is Arch.LSTM2:
        return lstm(F) + lstm(H) + H + 1
    front = conv(FRONT_KERNEL, F, FRONT_FILTERS) + lstm(FRONT_FILTERS) + H + 1
    return front if arch is Arch.CNN_LSTM else front + lstm(H)


def forward(model: TrainedModel, batch: np.ndarray, exact: bool = True,
            chunk: int = 2048) -> np.ndarray:
    """Speech probabilities for a ``(N, 60, F)`` batch of windows.

    With ``exact`` (default) a window's probability is independent of the rest
    of the batch; ``exact=False`` uses the faster training-mode products.
    """
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 3 or batch.shape[1:] != model.spec.input_shape:
        raise ShapeError(f"expected (N, {WINDOW}, {model.spec.feature_set.n_features}) windows, "
                         f"got {batch.shape}")
    if len(batch) == 0:
        return np.empty(0)
    out = []
    for s in range(0, len(batch), chunk):
        xb = batch[s:s + chunk]
        if exact:
            y = model.network.forward(xb, train=False)
        else:
            y = _forward_fast(model.network, xb)
        out.append(y[:, 0])
    return np.concatenate(out)


def _forward_fast(net: Sequential, x: np.ndarray) -> np.ndarray:
    # training-mode products but inference batch-norm; caches are discarded
    for layer in net.layers:
        if isinstance(layer, BatchNorm1D):
            x = layer.forward(x, train=False)
        else:
            x = layer.forward(x, train=True)
    return x


# --- serialization -----------------------------------------------------------

class ModelFormatError(ValueError):
    pass


def save(model: TrainedModel) -> bytes:
    tensors = model.state_tensors()
    header = {
        "spec": model.spec.to_json(),
        "metadata": model.metadata,
        "bn_initialized": [bn.initialized for bn in model.batchnorms()],
        "tensors": [{"name": n, "shape": list(v.shape)} for n, v in tensors],
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [BVM_MAGIC + b" " + str(BVM_VERSION).encode() + b"\n", head, b"\n"]
    parts += [np.ascontiguousarray(v, dtype="<f8").tobytes() for _, v in tensors]
    return b"".join(parts)


def load(payload: bytes) -> TrainedModel:
    nl = payload.find(b"\n")
    if nl < 0 or payload[:nl] != BVM_MAGIC + b" " + str(BVM_VERSION).encode():
        raise ModelFormatError("version/magic mismatch")
    nl2 = payload.find(b"\n", nl + 1)
    if nl2 < 0:
        raise ModelFormatError("truncated payload")
    try:
        header = json.loads(payload[nl + 1:nl2])
        spec = ArchSpec.from_json(header["spec"])
        manifest = [(t["name"], tuple(t["shape"])) for t in header["tensors"]]
    except (ValueError, KeyError, TypeError) as exc:
        raise ModelFormatError(f"bad header: {exc}") from None

    model = build_model(spec)
    expected = [(n, v.shape) for n, v in model.state_tensors()]
    if manifest != expected:
        raise ModelFormatError(
            f"parameter-count mismatch: file has {sum(int(np.prod(s)) for _, s in manifest)} "
            f"values in {len(manifest)} tensors, {spec.arch.value} needs "
            f"{sum(int(np.prod(s)) for _, s in expected)} in {len(expected)}")
    data = payload[nl2 + 1:]
    need = 8 * sum(int(np.prod(s)) for _, s in manifest)
    if len(data) < need:
        raise ModelFormatError("truncated payload")
    if len(data) > need:
        raise ModelFormatError("trailing bytes after payload")

    off = 0
    targets = {p.name: p.value for p in model.params}
    bns = {bn.gamma.name.rsplit(".", 1)[0]: bn for bn in model.batchnorms()}
    for name, shape in manifest:
        n = int(np.prod(shape))
        arr = np.frombuffer(data, "<f8", n, off).reshape(shape).astype(np.float64)
        off += 8 * n
        if name in targets:
            targets[name][...] = arr
        else:
            prefix, key = name.rsplit(".", 1)
            setattr(bns[prefix], key, arr)
    for bn, flag in zip(model.batchnorms(), header.get("bn_initialized", [])):
        bn.initialized = bool(flag)
    model.metadata = header.get("metadata", {})
    return model


def save_file(model: TrainedModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(save(model))


def load_file(path) -> TrainedModel:
    with open(path, "rb") as fh:
        return load(fh.read())
