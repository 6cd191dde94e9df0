import hashlib
import json

import numpy as np
import pytest

from badgevad.features import FeatureSet
from badgevad.models import (Arch, ArchSpec, ModelFormatError, analytic_parameter_count,
                             build_model, forward, load, load_file, parameter_count, save,
                             save_file)
from badgevad.nnkernel import ShapeError

# sha256 of save(build_model(ArchSpec(arch, SET_B, False, seed=42)))
GOLDEN = {
    Arch.CNN: "6f6bc48442748a1983a456080306ba2b14e726c86c77548f20f27b7da325981a",
    Arch.CNN_LSTM: "c65d9713eb24ade383212e51bc9688cde8f480e9437a85c6a55e9af5cc533cff",
    Arch.CNN_LSTM2: "f1a159655e196d92ec37de5d1241436da2583a9d02f7eb2d37bdb07f901efbeb",
    Arch.LSTM2: "97a9346335f01e0c337561ae53dddc06b30386c0a685f34fa9d4e8f5b81d2209",
}


def model(arch=Arch.CNN_LSTM, fs=FeatureSet.SET_B, norm=False, seed=1):
    return build_model(ArchSpec(arch, fs, norm, seed))


def batch(n=5, F=3, seed=0):
    return np.random.default_rng(seed).standard_normal((n, 60, F))


def warm_up(m, F=3):
    # give batch-norm layers running statistics
    m.network.forward(batch(8, F, 99), train=True)
    return m


def test_first_layer_counts():
    cnn = model(Arch.CNN)
    conv = cnn.network.layers[0]
    assert sum(p.value.size for p in conv.params) == 3 * 3 * 254 + 254 == 2540
    lstm = model(Arch.LSTM2).network.layers[0]
    assert sum(p.value.size for p in lstm.params) == 4 * (100 * (3 + 100) + 100) == 41600


@pytest.mark.parametrize("arch", list(Arch))
@pytest.mark.parametrize("F", [1, 3, 4])
def test_parameter_counts_match_formula(arch, F):
    fs = {1: FeatureSet.ONE_CHANNEL, 3: FeatureSet.SET_B, 4: FeatureSet.SET_A}[F]
    assert parameter_count(model(arch, fs)) == analytic_parameter_count(arch, F)


def test_same_seed_same_init():
    a, b = model(seed=3), model(seed=3)
    for p, q in zip(a.params, b.params):
        np.testing.assert_array_equal(p.value, q.value)
    c = model(seed=4)
    assert any(not np.array_equal(p.value, q.value) for p, q in zip(a.params, c.params))


@pytest.mark.parametrize("arch", list(Arch))
def test_golden_serialization(arch):
    blob = save(model(arch, seed=42))
    assert hashlib.sha256(blob).hexdigest() == GOLDEN[arch]


@pytest.mark.parametrize("arch", list(Arch))
def test_forward_properties(arch):
    m = warm_up(model(arch))
    x = batch(4)
    p = forward(m, x)
    assert p.shape == (4,) and np.all((p > 0) & (p < 1))
    assert forward(m, np.empty((0, 60, 3))).shape == (0,)
    dup = forward(m, np.concatenate([x, x]))
    np.testing.assert_array_equal(dup[:4], dup[4:])
    # a window's probability does not depend on its batch neighbours
    np.testing.assert_array_equal(forward(m, x[1:2]), p[1:2])


def test_forward_shape_errors():
    with pytest.raises(ShapeError):
        forward(model(), np.zeros((2, 50, 3)))
    with pytest.raises(ShapeError):
        forward(model(), np.zeros((2, 60, 4)))


def test_infer_before_training_with_batchnorm_fails():
    with pytest.raises(RuntimeError):
        forward(model(Arch.CNN), batch(2))


@pytest.mark.parametrize("arch", list(Arch))
def test_save_load_round_trip(arch, tmp_path):
    m = warm_up(model(arch, FeatureSet.SET_A, True), F=4)
    m.metadata["note"] = "x"
    back = load(save(m))
    x = batch(3, 4)
    np.testing.assert_array_equal(forward(back, x), forward(m, x))
    assert back.spec == m.spec and back.metadata == {"note": "x"}
    for (n1, v1), (n2, v2) in zip(m.state_tensors(), back.state_tensors()):
        assert n1 == n2
        np.testing.assert_array_equal(v1, v2)
    save_file(m, tmp_path / "m.bvm")
    assert save(load_file(tmp_path / "m.bvm")) == save(m)


def test_format_errors():
    blob = save(warm_up(model()))
    with pytest.raises(ModelFormatError, match="truncated payload"):
        load(blob[:-8])
    with pytest.raises(ModelFormatError, match="trailing bytes"):
        load(blob + b"\0")
    with pytest.raises(ModelFormatError, match="version/magic mismatch"):
        load(b"BVMODEL 2" + blob[9:])
    with pytest.raises(ModelFormatError, match="version/magic mismatch"):
        load(b"garbage")


def test_arch_swapped_header_is_detected():
    blob = save(model(Arch.LSTM2))
    first = blob.index(b"\n")
    second = blob.index(b"\n", first + 1)
    header = json.loads(blob[first + 1:second])
    header["spec"]["arch"] = "CNN"
    forged = (blob[:first + 1] + json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
              + blob[second:])
    with pytest.raises(ModelFormatError, match="parameter-count mismatch"):
        load(forged)


def test_arch_parse():
    assert Arch.parse("cnn_lstm2") is Arch.CNN_LSTM2
    with pytest.raises(ValueError, match="valid"):
        Arch.parse("GRU")
