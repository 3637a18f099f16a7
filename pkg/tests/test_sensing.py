import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from cs_mbdct import sensing
from cs_mbdct.errors import FormatError, TruncatedFileError
from cs_mbdct.sensing import MeasurementMatrix


def test_generate_statistics():
    psi = sensing.generate_matrix(196, 784, seed=1)
    assert psi.entries.shape == (196, 784)
    assert abs(psi.entries.var() - 1 / 196) < 0.1 / 196
    sigma = np.sqrt(1 / 196)
    assert abs(psi.entries.mean()) < 5 * sigma / np.sqrt(psi.entries.size)
    assert psi.provenance == {"kind": "random", "seed": 1, "variance": 1 / 196}


def test_generate_small_and_deterministic():
    one = sensing.generate_matrix(1, 1, seed=0)
    assert one.entries.shape == (1, 1)
    assert one.entries[0, 0] == np.random.default_rng(0).standard_normal()
    np.testing.assert_array_equal(
        sensing.generate_matrix(8, 16, 5).entries, sensing.generate_matrix(8, 16, 5).entries
    )
    with pytest.raises(ValueError):
        sensing.generate_matrix(17, 16, 0)
    with pytest.raises(ValueError):
        sensing.generate_matrix(0, 16, 0)


@pytest.mark.parametrize("rate,m", [(0.25, 196), (0.10, 78), (0.05, 39), (0.01, 8), (1.0, 784)])
def test_measurement_count(rate, m):
    assert sensing.measurement_count(rate, 784) == m


@pytest.mark.parametrize("rate", [0.0, -0.1, 1.01])
def test_measurement_count_rejects(rate):
    with pytest.raises(ValueError):
        sensing.measurement_count(rate, 784)


def test_sense_and_back_project_hand_example():
    psi = MeasurementMatrix(np.array([[1.0, 1, 1, 1], [1, -1, 1, -1]]))
    y = sensing.sense(np.array([[1.0, 0], [0, 1]]), psi)
    # vec(S) = [1, 0, 0, 1]: row 2 gives 1 - 0 + 0 - 1 = 0
    np.testing.assert_array_equal(y.values, [2, 0])
    np.testing.assert_array_equal(sensing.back_project(y, psi), [[2, 2], [2, 2]])
    y22 = sensing.Measurement(np.array([2.0, 2.0]), 0.5, (2, 2))
    np.testing.assert_array_equal(sensing.back_project(y22, psi), [[4, 0], [4, 0]])


def test_identity_and_zero(rng):
    img = rng.random((4, 4))
    psi = sensing.identity_matrix(16)
    y = sensing.sense(img, psi)
    np.testing.assert_array_equal(y.values, img.ravel())
    np.testing.assert_array_equal(sensing.back_project(y, psi), img)
    g = sensing.generate_matrix(8, 16, 0)
    assert not sensing.sense(np.zeros((4, 4)), g).values.any()
    zero = sensing.Measurement(np.zeros(8), 0.5, (4, 4))
    assert not sensing.back_project(zero, g).any()


def test_dimension_errors():
    psi = sensing.generate_matrix(4, 16, 0)
    with pytest.raises(ValueError):
        sensing.sense(np.zeros((3, 3)), psi)
    with pytest.raises(ValueError):
        sensing.back_project(sensing.Measurement(np.zeros(5), 0.3, (4, 4)), psi)


def test_batch_matches_single(rng):
    psi = sensing.generate_matrix(10, 25, 2)
    imgs = rng.random((3, 5, 5))
    prox = sensing.proxies(imgs, psi)
    for img, p in zip(imgs, prox):
        np.testing.assert_allclose(p, sensing.back_project(sensing.sense(img, psi), psi), rtol=1e-12)


@settings(max_examples=50, deadline=None)
@given(
    arrays(np.float64, (4, 4), elements=st.floats(-1, 1)),
    arrays(np.float64, (4, 4), elements=st.floats(-1, 1)),
    st.floats(-3, 3),
    st.floats(-3, 3),
)
def test_linearity(s1, s2, a, b):
    psi = sensing.generate_matrix(6, 16, 11)
    lhs = sensing.sense(a * s1 + b * s2, psi).values
    rhs = a * sensing.sense(s1, psi).values + b * sensing.sense(s2, psi).values
    np.testing.assert_allclose(lhs, rhs, rtol=1e-9, atol=1e-9 * (1 + np.abs(rhs).max()))


def test_expected_degradation_is_identity():
    acc = np.zeros((16, 16))
    for seed in range(200):
        e = sensing.generate_matrix(8, 16, seed).entries
        acc += e.T @ e
    assert np.abs(acc / 200 - np.eye(16)).max() < 0.1


@pytest.mark.parametrize("binary", [True, False])
def test_matrix_roundtrip(tmp_path, binary):
    psi = sensing.generate_matrix(7, 12, 3)
    path = tmp_path / "psi.mat"
    sensing.save_matrix(psi, path, binary=binary)
    back = sensing.load_matrix(path)
    assert back.entries.tobytes() == psi.entries.tobytes()
    assert back.provenance["kind"] == "loaded"


def test_text_and_binary_agree(tmp_path):
    psi = sensing.generate_matrix(5, 9, 4)
    sensing.save_matrix(psi, tmp_path / "a", binary=True)
    sensing.save_matrix(psi, tmp_path / "b", binary=False)
    a, b = sensing.load_matrix(tmp_path / "a"), sensing.load_matrix(tmp_path / "b")
    assert a.entries.tobytes() == b.entries.tobytes()


@pytest.mark.parametrize("binary", [True, False])
def test_matrix_truncated(tmp_path, binary):
    path = tmp_path / "psi"
    sensing.save_matrix(sensing.generate_matrix(4, 8, 0), path, binary=binary)
    path.write_bytes(path.read_bytes()[:-7])
    with pytest.raises(TruncatedFileError):
        sensing.load_matrix(path)


def test_matrix_format_errors(tmp_path):
    p = tmp_path / "bad"
    p.write_bytes(b"NOTPSI v1 2 4\n" + bytes(64))
    with pytest.raises(FormatError):
        sensing.load_matrix(p)
    p.write_bytes(b"PSIMAT v1 3 2\n1 2\n3 4\n5 6\n")
    with pytest.raises(ValueError):  # m > n
        sensing.load_matrix(p)


def test_learned_matrix_fixture(tmp_path, rng):
    # stands in for a matrix exported from a trained sensing layer
    learned = MeasurementMatrix(rng.standard_normal((196, 784)) * 0.03)
    sensing.save_matrix(learned, tmp_path / "learned.psi")
    back = sensing.load_matrix(tmp_path / "learned.psi")
    assert (back.m, back.n) == (196, 784)
    assert back.provenance == {"kind": "loaded", "path": str(tmp_path / "learned.psi")}
