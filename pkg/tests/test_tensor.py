import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tailforge.errors import DegenerateInput, InvalidArgument, ShapeMismatch
from tailforge.tensor import (
    class_mean,
    cosine_similarity,
    decode_ltt1,
    encode_ltt1,
    read_ltt1,
    tempered_softmax,
    write_ltt1,
)

finite = st.floats(-50, 50, allow_nan=False)
logit_vectors = arrays(np.float64, st.integers(1, 12), elements=finite)


def test_softmax_symmetric_inputs():
    np.testing.assert_allclose(tempered_softmax([0.0, 0.0], 0.7), [0.5, 0.5])
    np.testing.assert_allclose(tempered_softmax([4.2, 4.2, 4.2], 3.0), [1 / 3] * 3)


def test_softmax_reference_value():
    # mpmath, 30 digits: exp(2) / (exp(2) + 1)
    np.testing.assert_allclose(
        tempered_softmax([1.0, 0.0], 0.5), [0.880797077977882, 0.119202922022118], atol=1e-12
    )


@pytest.mark.parametrize("T", [0.0, -1.0])
def test_softmax_rejects_bad_temperature(T):
    with pytest.raises(InvalidArgument):
        tempered_softmax([1.0, 2.0], T)


def test_softmax_rejects_empty():
    with pytest.raises(InvalidArgument):
        tempered_softmax([], 1.0)


def test_softmax_no_overflow():
    p = tempered_softmax([1000.0, 0.0, -1000.0], 0.01)
    assert np.all(np.isfinite(p))
    assert p[0] == 1.0


@settings(max_examples=200)
@given(logit_vectors, st.floats(1e-3, 1e3))
def test_softmax_sums_to_one(z, T):
    assert abs(tempered_softmax(z, T).sum() - 1.0) < 1e-9


@settings(max_examples=200)
@given(logit_vectors, st.floats(1e-1, 1e3), st.floats(-100, 100))
def test_softmax_shift_invariance(z, T, c):
    np.testing.assert_allclose(tempered_softmax(z + c, T), tempered_softmax(z, T), atol=1e-12)


def test_sharpening_is_monotone(rng):
    for _ in range(50):
        z = rng.normal(size=6) * 3
        top = int(np.argmax(z))
        probs = [tempered_softmax(z, T)[top] for T in np.geomspace(100, 0.01, 40)]
        assert all(b >= a - 1e-15 for a, b in zip(probs, probs[1:]))


def test_cosine_examples():
    assert cosine_similarity([3.0, 4.0], [3.0, 4.0]) == pytest.approx(1.0, abs=1e-15)
    assert cosine_similarity([1.0, 0.0], [0.0, 1.0]) == 0.0
    assert cosine_similarity([1.0, 1.0], [1.0, 0.0]) == pytest.approx(0.7071067811865476, abs=1e-12)


def test_cosine_zero_norm_raises():
    with pytest.raises(DegenerateInput):
        cosine_similarity([0.0, 0.0], [1.0, 2.0])


def test_cosine_dim_mismatch():
    with pytest.raises(ShapeMismatch):
        cosine_similarity([1.0, 2.0], [1.0, 2.0, 3.0])


def test_cosine_scale_invariance(rng):
    for _ in range(200):
        a, b = rng.normal(size=(2, 7))
        lam, mu = rng.uniform(0.01, 100, size=2)
        assert abs(cosine_similarity(lam * a, mu * b) - cosine_similarity(a, b)) < 1e-12


def test_class_mean():
    np.testing.assert_array_equal(class_mean([[1, 0]]), [1, 0])
    np.testing.assert_array_equal(class_mean([[1, 0], [0, 1]]), [0.5, 0.5])
    np.testing.assert_array_equal(class_mean([[2, 4], [4, 8], [0, 0]]), [2, 4])
    with pytest.raises(InvalidArgument):
        class_mean([])


@pytest.mark.parametrize("shape", [(5,), (3, 4), (2, 3, 4), (1,)])
def test_ltt1_roundtrip_bit_exact(tmp_path, rng, shape):
    arr = rng.normal(size=shape).astype(np.float32)
    path = tmp_path / "t.ltt1"
    write_ltt1(path, arr)
    back = read_ltt1(path)
    assert back.shape == shape
    assert back.tobytes() == arr.tobytes()


def test_ltt1_layout():
    buf = encode_ltt1(np.array([[1.0, 2.0, 3.0]], dtype=np.float32))
    assert buf[:4] == b"LTT1"
    assert buf[4] == 2
    assert buf[5:13] == (1).to_bytes(4, "little") + (3).to_bytes(4, "little")
    assert np.frombuffer(buf[13:], "<f4").tolist() == [1.0, 2.0, 3.0]


def test_ltt1_errors():
    with pytest.raises(InvalidArgument):
        decode_ltt1(b"XXXX\x01\x00\x00\x00\x00")
    good = encode_ltt1(np.zeros((2, 2), np.float32))
    with pytest.raises(ShapeMismatch):
        decode_ltt1(good, expected_rank=3)
    with pytest.raises(ShapeMismatch):
        decode_ltt1(good[:-4])
