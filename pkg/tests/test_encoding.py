"""Feature encodings: angle, dense-angle, amplitude, and rescaling."""

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qmlrob.encoding import (
    EncodingSpec,
    amplitude_encode,
    angle_encode,
    dense_angle_encode,
    encode_state,
    feature_bounds,
    rescale,
)
from qmlrob.sim import CircuitSpec, GateOp, expect_z, run_circuit

ANGLE_SPEC = EncodingSpec("angle", 4, (0.0, math.pi))


def state_of(ops, n):
    return run_circuit(CircuitSpec(n, tuple(ops)), "pure")


class TestAngleEncoding:
    def test_zero_feature_keeps_ground_state(self):
        ops = angle_encode(np.array([0.0]), EncodingSpec("angle", 1, (0, math.pi)))
        assert ops == [GateOp("RY", (0,), 0.0)]
        assert np.allclose(state_of(ops, 1).amplitudes, [1, 0])

    def test_half_pi_feature_balances_z(self):
        ops = angle_encode(np.array([math.pi / 2]), EncodingSpec("angle", 1, (0, math.pi)))
        assert abs(expect_z(state_of(ops, 1), 0)) < 1e-12

    def test_too_many_features(self):
        spec = EncodingSpec("angle", 9, (0, math.pi))
        with pytest.raises(ValueError):
            angle_encode(np.zeros(10), spec)

    def test_extra_qubits_untouched(self):
        ops = angle_encode(np.array([1.0, 2.0]), ANGLE_SPEC)
        assert {op.targets[0] for op in ops} == {0, 1}

    def test_cosine_identity_on_grid(self):
        spec = EncodingSpec("angle", 1, (0, math.pi))
        for theta in np.linspace(0, math.pi, 100):
            ops = angle_encode(np.array([theta]), spec)
            assert expect_z(state_of(ops, 1), 0) == pytest.approx(
                math.cos(theta), abs=1e-12
            )


class TestDenseAngleEncoding:
    def test_zero_features_identity_up_to_phase(self):
        ops = dense_angle_encode(np.zeros(2), 1)
        assert [op.kind for op in ops] == ["RZ", "RX", "RZ", "RX"]
        assert expect_z(state_of(ops, 1), 0) == pytest.approx(1.0)

    def test_matches_matrix_product_oracle(self):
        # (a=0, b=pi): state = RX(pi/2) RZ(0) RX(pi) RZ(0) |0>
        a, b = 0.0, math.pi
        ops = dense_angle_encode(np.array([a, b]), 1)
        got = state_of(ops, 1).amplitudes
        vec = np.array([1.0, 0.0], dtype=complex)
        for op in (
            GateOp("RZ", (0,), a),
            GateOp("RX", (0,), b),
            GateOp("RZ", (0,), a / 2),
            GateOp("RX", (0,), b / 2),
        ):
            vec = op.base_matrix() @ vec
        assert np.allclose(got, vec, atol=1e-12)
        assert expect_z(state_of(ops, 1), 0) == pytest.approx(
            math.cos(3 * math.pi / 2), abs=1e-12
        )

    def test_oracle_on_random_pairs(self):
        rng = np.random.default_rng(5)
        for _ in range(25):
            a, b = rng.uniform(-math.pi, math.pi, size=2)
            got = state_of(dense_angle_encode(np.array([a, b]), 1), 1).amplitudes
            vec = np.array([1.0, 0.0], dtype=complex)
            for kind, ang in (("RZ", a), ("RX", b), ("RZ", a / 2), ("RX", b / 2)):
                vec = GateOp(kind, (0,), ang).base_matrix() @ vec
            assert np.allclose(got, vec, atol=1e-12)

    def test_wrong_length_rejected(self):
        with pytest.raises(ValueError):
            dense_angle_encode(np.zeros(5), 4)
        with pytest.raises(ValueError):
            dense_angle_encode(np.zeros(6), 4)

    def test_pair_layout_is_interleaved(self):
        x = np.array([0.1, 0.2, 0.3, 0.4])
        ops = dense_angle_encode(x, 2)
        assert ops[0] == GateOp("RZ", (0,), 0.1)
        assert ops[1] == GateOp("RX", (0,), 0.2)
        assert ops[4] == GateOp("RZ", (1,), 0.3)


class TestAmplitudeEncoding:
    def test_normalizes(self):
        out = amplitude_encode(np.array([3.0, 4.0]), 1)
        assert np.allclose(out.amplitudes, [0.6, 0.8])

    def test_zero_pads(self):
        out = amplitude_encode(np.array([1.0, 0.0, 0.0]), 2)
        assert np.allclose(out.amplitudes, [1, 0, 0, 0])

    def test_rejects_zero_vector(self):
        with pytest.raises(ValueError):
            amplitude_encode(np.zeros(2), 1)

    def test_rejects_oversized_input(self):
        with pytest.raises(ValueError):
            amplitude_encode(np.ones(5), 2)

    def test_signed_amplitudes_preserved(self):
        out = amplitude_encode(np.array([1.0, -1.0]), 1)
        assert np.allclose(out.amplitudes, [1 / math.sqrt(2), -1 / math.sqrt(2)])

    @given(st.integers(0, 10_000))
    def test_always_normalized(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 4))
        size = int(rng.integers(1, 2**n + 1))
        x = rng.normal(size=size)
        if np.linalg.norm(x) == 0:
            return
        out = amplitude_encode(x, n)
        assert abs(np.linalg.norm(out.amplitudes) - 1.0) < 1e-12

    def test_thousand_random_vectors_normalized(self):
        rng = np.random.default_rng(99)
        for _ in range(1000):
            x = rng.normal(size=int(rng.integers(1, 9)))
            if np.linalg.norm(x) == 0:
                continue
            out = amplitude_encode(x, 3)
            assert abs(np.linalg.norm(out.amplitudes) - 1.0) < 1e-12


class TestRescale:
    def test_midpoint_example(self):
        out = rescale(np.array([5.0]), np.array([[0.0, 10.0]]), (0.0, math.pi))
        assert out[0] == pytest.approx(math.pi / 2)

    def test_endpoints_map_to_range(self):
        bounds = np.array([[-2.0, 6.0]])
        assert rescale(np.array([-2.0]), bounds, (0, 1))[0] == pytest.approx(0.0)
        assert rescale(np.array([6.0]), bounds, (0, 1))[0] == pytest.approx(1.0)

    def test_constant_dimension_maps_to_midpoint(self):
        bounds = np.array([[3.0, 3.0]])
        assert rescale(np.array([7.0]), bounds, (0, 2))[0] == pytest.approx(1.0)

    def test_batched_input(self):
        bounds = np.array([[0, 1], [0, 2]], dtype=float)
        out = rescale(np.array([[0.5, 1.0], [1.0, 2.0]]), bounds, (0, 1))
        assert np.allclose(out, [[0.5, 0.5], [1.0, 1.0]])

    @given(st.floats(-5, 5), st.floats(-5, 5))
    def test_monotone(self, x1, x2):
        bounds = np.array([[-5.0, 5.0]])
        y1 = rescale(np.array([x1]), bounds, (0, 1))[0]
        y2 = rescale(np.array([x2]), bounds, (0, 1))[0]
        if x1 <= x2:
            assert y1 <= y2 + 1e-12

    def test_idempotent_when_bounds_equal_range(self):
        bounds = np.array([[0.0, 1.0]])
        x = np.array([0.37])
        once = rescale(x, bounds, (0, 1))
        twice = rescale(once, bounds, (0, 1))
        assert np.allclose(once, twice)
        assert np.allclose(once, x)

    def test_feature_bounds_shape(self):
        f = np.array([[0.0, 5.0], [1.0, 3.0]])
        assert np.allclose(feature_bounds(f), [[0, 1], [3, 5]])


class TestEncodeState:
    def test_angle_matches_circuit(self):
        spec = EncodingSpec("angle", 2, (0, math.pi))
        x = np.array([0.3, 1.1])
        direct = state_of(angle_encode(x, spec), 2)
        assert np.allclose(encode_state(x, spec).amplitudes, direct.amplitudes)

    def test_amplitude_shortcut(self):
        spec = EncodingSpec("amplitude", 2, (0, 1))
        out = encode_state(np.array([3.0, 4.0]), spec)
        assert np.allclose(out.amplitudes, [0.6, 0.8, 0, 0])
