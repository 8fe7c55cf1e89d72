"""Classical-to-quantum feature encodings.

Three schemes are supported: one RY rotation per qubit (angle), a normalized
amplitude write (amplitude), and the four-rotation-per-qubit dense angle
sequence used by the 4-qubit QNN.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sim import GateOp, StateVector

ENCODING_KINDS = frozenset({"angle", "amplitude", "dense_angle"})


@dataclass(frozen=True)
class EncodingSpec:
    kind: str
    n_qubits: int
    input_range: tuple[float, float]

    def __post_init__(self):
        if self.kind not in ENCODING_KINDS:
            raise ValueError(f"unknown encoding kind {self.kind!r}")
        if self.input_range[0] >= self.input_range[1]:
            raise ValueError("input_range must be ascending")

    def max_features(self) -> int:
        if self.kind == "angle":
            return self.n_qubits
        if self.kind == "amplitude":
            return 2**self.n_qubits
        return 2 * self.n_qubits


def angle_encode(x: np.ndarray, spec: EncodingSpec) -> list[GateOp]:
    """One RY(x_i) on qubit i; qubits past the feature count stay untouched."""
    if len(x) > spec.n_qubits:
        raise ValueError(f"{len(x)} features exceed {spec.n_qubits} qubits")
    return [GateOp("RY", (q,), float(x[q])) for q in range(len(x))]


def dense_angle_encode(x: np.ndarray, n_qubits: int) -> list[GateOp]:
    """Per qubit i with (a, b) = (x[2i], x[2i+1]): RZ(a), RX(b), RZ(a/2),
    RX(b/2), in that order."""
    if len(x) != 2 * n_qubits:
        raise ValueError(f"dense angle encoding needs {2 * n_qubits} features, got {len(x)}")
    ops = []
    for q in range(n_qubits):
        a, b = float(x[2 * q]), float(x[2 * q + 1])
        ops.append(GateOp("RZ", (q,), a))
        ops.append(GateOp("RX", (q,), b))
        ops.append(GateOp("RZ", (q,), a / 2))
        ops.append(GateOp("RX", (q,), b / 2))
    return ops


def amplitude_encode(x: np.ndarray, n_qubits: int) -> StateVector:
    """Zero-pad to 2**n_qubits and L2-normalize into state amplitudes."""
    dim = 2**n_qubits
    if len(x) > dim:
        raise ValueError(f"{len(x)} features exceed 2**{n_qubits} amplitudes")
    norm = float(np.linalg.norm(x))
    if norm == 0.0:
        raise ValueError("amplitude encoding of an all-zero vector is undefined")
    amps = np.zeros(dim, dtype=complex)
    amps[: len(x)] = np.asarray(x, dtype=float) / norm
    return StateVector(n_qubits, amps)


def rescale(
    x: np.ndarray, from_bounds: np.ndarray, to_range: tuple[float, float]
) -> np.ndarray:
    """Affine per-dimension map from [min, max] bounds onto ``to_range``.

    ``from_bounds`` has shape [D, 2]; constant dimensions map to the midpoint.
    Total function: values outside the bounds extrapolate linearly.
    """
    x = np.asarray(x, dtype=float)
    from_bounds = np.asarray(from_bounds, dtype=float)
    lo, hi = to_range
    mn, mx = from_bounds[..., 0], from_bounds[..., 1]
    span = mx - mn
    out = np.full_like(x, (lo + hi) / 2.0)
    nz = span != 0
    scaled = (x[..., nz] - mn[nz]) / span[nz]
    out[..., nz] = lo + scaled * (hi - lo)
    return out


def feature_bounds(features: np.ndarray) -> np.ndarray:
    """Per-dimension [min, max] of a feature matrix, shape [D, 2]."""
    return np.stack([features.min(axis=0), features.max(axis=0)], axis=1)


def encode_state(x: np.ndarray, spec: EncodingSpec) -> StateVector:
    """Output of the encoder-only circuit on |0...0> (ESS substrate)."""
    from .sim import run_circuit_amps, CircuitSpec

    if spec.kind == "amplitude":
        return amplitude_encode(x, spec.n_qubits)
    if spec.kind == "angle":
        ops = angle_encode(x, spec)
    else:
        ops = dense_angle_encode(x, spec.n_qubits)
    circ = CircuitSpec(spec.n_qubits, tuple(ops))
    return StateVector(spec.n_qubits, run_circuit_amps(circ))
