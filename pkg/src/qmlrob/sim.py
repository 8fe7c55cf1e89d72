"""Exact statevector and density-matrix simulation for small qubit registers.

Basis convention: computational basis index ``i`` encodes qubit ``q`` in bit
``q`` of ``i`` (qubit 0 is the least significant bit). All kernels operate on
the trailing axis (statevectors) or trailing two axes (density matrices), so
arbitrary leading batch dimensions are supported.

Measurement is an exact expectation value; there is no shot sampling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
import numpy as np

ATOL = 1e-9

ROTATION_GATES = frozenset({"RX", "RY", "RZ", "CRX"})
SINGLE_QUBIT_GATES = frozenset({"X", "Y", "Z", "H", "RX", "RY", "RZ"})
TWO_QUBIT_GATES = frozenset({"CX", "CRX"})
GATE_KINDS = SINGLE_QUBIT_GATES | TWO_QUBIT_GATES

_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
_Z = np.array([[1, 0], [0, -1]], dtype=complex)
_H = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
_I = np.eye(2, dtype=complex)


def _rx(theta: float) -> np.ndarray:
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)


def _ry(theta: float) -> np.ndarray:
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def _rz(theta: float) -> np.ndarray:
    return np.array(
        [[np.exp(-0.5j * theta), 0], [0, np.exp(0.5j * theta)]], dtype=complex
    )


@dataclass(frozen=True)
class GateOp:
    """One gate application: kind, optional rotation angle, target qubits.

    ``targets`` holds one index for single-qubit gates and (control, target)
    for CX/CRX.
    """

    kind: str
    targets: tuple[int, ...]
    angle: float | None = None

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        want = 1 if self.kind in SINGLE_QUBIT_GATES else 2
        if len(self.targets) != want:
            raise ValueError(f"{self.kind} takes {want} target(s), got {self.targets}")
        if self.kind in TWO_QUBIT_GATES and self.targets[0] == self.targets[1]:
            raise ValueError(f"{self.kind} control and target must differ")
        if self.kind in ROTATION_GATES and self.angle is None:
            raise ValueError(f"{self.kind} requires an angle")

    def base_matrix(self) -> np.ndarray:
        """The 2x2 matrix acting on the target qubit (conditioned on control
        for CX/CRX)."""
        if self.kind == "X" or self.kind == "CX":
            return _X
        if self.kind == "Y":
            return _Y
        if self.kind == "Z":
            return _Z
        if self.kind == "H":
            return _H
        if self.kind == "RX":
            return _rx(self.angle)
        if self.kind == "RY":
            return _ry(self.angle)
        if self.kind == "RZ":
            return _rz(self.angle)
        if self.kind == "CRX":
            return _rx(self.angle)
        raise AssertionError(self.kind)


def gate_unitary(op: GateOp) -> np.ndarray:
    """Full unitary realized by ``op``: 2x2, or 4x4 on (control, target) with
    the control in bit 1 and the target in bit 0 of the local index."""
    m = op.base_matrix()
    if op.kind in SINGLE_QUBIT_GATES:
        return m
    u = np.eye(4, dtype=complex)
    u[2:, 2:] = m
    return u


@dataclass(frozen=True)
class StateVector:
    """Pure n-qubit state as a complex amplitude array of length 2**n."""

    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        if self.n_qubits < 1:
            raise ValueError("n_qubits must be >= 1")
        if self.amplitudes.shape != (2**self.n_qubits,):
            raise ValueError("amplitude length must be 2**n_qubits")

    def validate(self, atol: float = ATOL) -> None:
        norm = np.sum(np.abs(self.amplitudes) ** 2)
        if abs(norm - 1.0) > atol:
            raise ValueError(f"state norm {norm} deviates from 1 beyond {atol}")


@dataclass(frozen=True)
class DensityMatrix:
    """Mixed n-qubit state as a 2**n x 2**n complex matrix."""

    n_qubits: int
    entries: np.ndarray

    def __post_init__(self):
        dim = 2**self.n_qubits
        if self.entries.shape != (dim, dim):
            raise ValueError("density matrix must be 2**n x 2**n")

    def validate(self, atol: float = ATOL) -> None:
        rho = self.entries
        if np.max(np.abs(rho - rho.conj().T)) > atol:
            raise ValueError("density matrix is not Hermitian")
        if abs(np.trace(rho).real - 1.0) > atol:
            raise ValueError("density matrix trace deviates from 1")
        if np.linalg.eigvalsh(rho).min() < -atol:
            raise ValueError("density matrix has a negative eigenvalue")


def zero_state(n_qubits: int) -> StateVector:
    amps = np.zeros(2**n_qubits, dtype=complex)
    amps[0] = 1.0
    return StateVector(n_qubits, amps)


def pure_to_dm(state: StateVector) -> DensityMatrix:
    a = state.amplitudes
    return DensityMatrix(state.n_qubits, np.outer(a, a.conj()))


@dataclass(frozen=True)
class KrausChannel:
    """Single-qubit CPTP map given by 2x2 Kraus operators."""

    operators: tuple[np.ndarray, ...]
    kind: str
    param: float

    def completeness_defect(self) -> float:
        acc = sum(e.conj().T @ e for e in self.operators)
        return float(np.max(np.abs(acc - _I)))

    def validate(self, atol: float = 1e-12) -> None:
        if self.completeness_defect() > atol:
            raise ValueError(f"Kraus operators of {self.kind} are not complete")


def make_depolarizing(p: float) -> KrausChannel:
    """Depolarizing channel: leaves the state with probability 1-p and applies
    each Pauli with probability p/3."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"depolarizing probability must be in [0, 1], got {p}")
    ops = (
        math.sqrt(1 - p) * _I,
        math.sqrt(p / 3) * _X,
        math.sqrt(p / 3) * _Y,
        math.sqrt(p / 3) * _Z,
    )
    return KrausChannel(ops, "depolarizing", p)


def make_amplitude_damping(gamma: float) -> KrausChannel:
    """Amplitude damping (energy relaxation toward |0>) with rate gamma."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"damping rate must be in [0, 1], got {gamma}")
    e0 = np.array([[1, 0], [0, math.sqrt(1 - gamma)]], dtype=complex)
    e1 = np.array([[0, math.sqrt(gamma)], [0, 0]], dtype=complex)
    return KrausChannel((e0, e1), "amplitude_damping", gamma)


@dataclass(frozen=True)
class CircuitSpec:
    """Ordered gate list with an optional per-gate noise policy.

    ``noise`` lists channels applied after every gate to each of that gate's
    target qubits (both qubits of CX/CRX), in the given order. ``initial_state``
    overrides the default |0...0> start (used for amplitude-encoded inputs).
    """

    n_qubits: int
    ops: tuple[GateOp, ...]
    noise: tuple[KrausChannel, ...] = ()
    initial_state: StateVector | None = None

    def __post_init__(self):
        for op in self.ops:
            for t in op.targets:
                if not 0 <= t < self.n_qubits:
                    raise ValueError(
                        f"target {t} out of range for {self.n_qubits} qubits"
                    )
        if self.initial_state is not None and self.initial_state.n_qubits != self.n_qubits:
            raise ValueError("initial state qubit count mismatch")


# ---------------------------------------------------------------------------
# Statevector kernels. ``amps`` may carry leading batch axes; the basis index
# lives on the trailing axis. The single-qubit kernel updates amplitude pairs
# at stride 2**target.
# ---------------------------------------------------------------------------


def _mat_elems(mat: np.ndarray, like: np.ndarray):
    """2x2 matrix entries, shaped to broadcast against ``like``. ``mat`` is a
    plain 2x2 array or a stack of them with leading axes matching the amps'
    batch axes."""
    if mat.ndim == 2:
        return mat[0, 0], mat[0, 1], mat[1, 0], mat[1, 1]
    ext = mat.shape[:-2] + (1,) * (like.ndim - (mat.ndim - 2))
    return tuple(mat[..., i, j].reshape(ext) for i in (0, 1) for j in (0, 1))


def apply_1q(amps: np.ndarray, mat: np.ndarray, target: int) -> np.ndarray:
    shape = amps.shape
    dim = shape[-1]
    low = 1 << target
    a = amps.reshape(shape[:-1] + (dim // (2 * low), 2, low))
    a0 = a[..., 0, :]
    a1 = a[..., 1, :]
    m00, m01, m10, m11 = _mat_elems(np.asarray(mat), a0)
    out = np.empty_like(a)
    out[..., 0, :] = m00 * a0 + m01 * a1
    out[..., 1, :] = m10 * a0 + m11 * a1
    return out.reshape(shape)


def apply_controlled_1q(
    amps: np.ndarray, mat: np.ndarray, control: int, target: int
) -> np.ndarray:
    """Apply ``mat`` on ``target`` restricted to the control-bit-1 subspace."""
    shape = amps.shape
    dim = shape[-1]
    hi, lo = (control, target) if control > target else (target, control)
    a = amps.reshape(
        shape[:-1] + (dim >> (hi + 1), 2, (1 << hi) >> (lo + 1), 2, 1 << lo)
    ).copy()
    if control > target:
        x0 = a[..., 1, :, 0, :]
        x1 = a[..., 1, :, 1, :]
    else:
        x0 = a[..., 0, :, 1, :]
        x1 = a[..., 1, :, 1, :]
    m00, m01, m10, m11 = _mat_elems(np.asarray(mat), x0)
    new0 = m00 * x0 + m01 * x1
    new1 = m10 * x0 + m11 * x1
    if control > target:
        a[..., 1, :, 0, :] = new0
        a[..., 1, :, 1, :] = new1
    else:
        a[..., 0, :, 1, :] = new0
        a[..., 1, :, 1, :] = new1
    return a.reshape(shape)


def apply_gate_amps(amps: np.ndarray, op: GateOp) -> np.ndarray:
    if op.kind in SINGLE_QUBIT_GATES:
        return apply_1q(amps, op.base_matrix(), op.targets[0])
    return apply_controlled_1q(amps, op.base_matrix(), op.targets[0], op.targets[1])


def apply_gate(state: StateVector, gate: GateOp) -> StateVector:
    """Apply one gate to a pure state; returns a new state."""
    for t in gate.targets:
        if not 0 <= t < state.n_qubits:
            raise ValueError(f"target {t} out of range for {state.n_qubits} qubits")
    return StateVector(state.n_qubits, apply_gate_amps(state.amplitudes, gate))


# ---------------------------------------------------------------------------
# Density-matrix kernels: rho -> U rho U(dagger) as two strided passes, one
# over the row index with U and one over the column index with conj(U).
# ---------------------------------------------------------------------------


def _apply_rows(dm: np.ndarray, mat: np.ndarray, target: int) -> np.ndarray:
    return np.swapaxes(apply_1q(np.swapaxes(dm, -1, -2), mat, target), -1, -2)


def _apply_cols_conj(dm: np.ndarray, mat: np.ndarray, target: int) -> np.ndarray:
    return apply_1q(dm, mat.conj(), target)


def apply_gate_dm_entries(dm: np.ndarray, op: GateOp) -> np.ndarray:
    mat = op.base_matrix()
    if op.kind in SINGLE_QUBIT_GATES:
        t = op.targets[0]
        return _apply_cols_conj(_apply_rows(dm, mat, t), mat, t)
    c, t = op.targets
    out = np.swapaxes(
        apply_controlled_1q(np.swapaxes(dm, -1, -2), mat, c, t), -1, -2
    )
    return apply_controlled_1q(out, mat.conj(), c, t)


def apply_gate_dm(dm: DensityMatrix, gate: GateOp) -> DensityMatrix:
    """Conjugate a density matrix by one gate; returns a new matrix."""
    for t in gate.targets:
        if not 0 <= t < dm.n_qubits:
            raise ValueError(f"target {t} out of range for {dm.n_qubits} qubits")
    return DensityMatrix(dm.n_qubits, apply_gate_dm_entries(dm.entries, gate))


_SUPEROP_CACHE: dict[tuple[str, float], np.ndarray] = {}


def _channel_superop(channel: KrausChannel) -> np.ndarray:
    """S[i, k, j, l] = sum_m E_m[i, k] conj(E_m[j, l]), so that
    rho'[i, j] = sum_{k, l} S[i, k, j, l] rho[k, l] on the target qubit."""
    key = (channel.kind, channel.param)
    s = _SUPEROP_CACHE.get(key)
    if s is None:
        s = sum(np.einsum("ik,jl->ikjl", e, e.conj()) for e in channel.operators)
        _SUPEROP_CACHE[key] = s
    return s


def apply_channel_entries(dm: np.ndarray, channel: KrausChannel, qubit: int) -> np.ndarray:
    dim = dm.shape[-1]
    low = 1 << qubit
    blocks = (dim // (2 * low), 2, low)
    dmr = dm.reshape(dm.shape[:-2] + blocks + blocks)
    out = np.einsum(
        "ikjl,...akbcld->...aibcjd", _channel_superop(channel), dmr, optimize=True
    )
    return out.reshape(dm.shape)


def apply_channel(dm: DensityMatrix, channel: KrausChannel, qubit: int) -> DensityMatrix:
    """Apply a single-qubit Kraus channel to ``qubit``."""
    if not 0 <= qubit < dm.n_qubits:
        raise ValueError(f"qubit {qubit} out of range for {dm.n_qubits} qubits")
    return DensityMatrix(dm.n_qubits, apply_channel_entries(dm.entries, channel, qubit))


# ---------------------------------------------------------------------------
# Observables
# ---------------------------------------------------------------------------


def z_diagonal(n_qubits: int, qubit: int) -> np.ndarray:
    """Diagonal of the Pauli-Z operator on ``qubit``: +1 where the qubit bit
    is 0, -1 where it is 1."""
    idx = np.arange(2**n_qubits)
    return 1.0 - 2.0 * ((idx >> qubit) & 1)


def expect_z_amps(amps: np.ndarray, qubit: int) -> np.ndarray:
    d = z_diagonal(int(math.log2(amps.shape[-1])), qubit)
    return np.sum((np.abs(amps) ** 2) * d, axis=-1)


def expect_z_dm(dm: np.ndarray, qubit: int) -> np.ndarray:
    d = z_diagonal(int(math.log2(dm.shape[-1])), qubit)
    diag = np.einsum("...ii->...i", dm).real
    return np.sum(diag * d, axis=-1)


def expect_z(state: StateVector | DensityMatrix, qubit: int) -> float:
    """Expectation value of Pauli-Z on one qubit, in [-1, 1]."""
    if not 0 <= qubit < state.n_qubits:
        raise ValueError(f"qubit {qubit} out of range for {state.n_qubits} qubits")
    if isinstance(state, StateVector):
        return float(expect_z_amps(state.amplitudes, qubit))
    return float(expect_z_dm(state.entries, qubit))


def state_fidelity(a: StateVector, b: StateVector) -> float:
    """|<a|b>|^2; 1 iff the states agree up to global phase."""
    if a.n_qubits != b.n_qubits:
        raise ValueError("states must have the same qubit count")
    return float(np.abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2)


# ---------------------------------------------------------------------------
# Circuit execution
# ---------------------------------------------------------------------------


def run_circuit_amps(circuit: CircuitSpec, amps: np.ndarray | None = None) -> np.ndarray:
    """Noiseless statevector pass; ``amps`` may be batched."""
    if amps is None:
        if circuit.initial_state is not None:
            amps = circuit.initial_state.amplitudes.copy()
        else:
            amps = zero_state(circuit.n_qubits).amplitudes
    for op in circuit.ops:
        amps = apply_gate_amps(amps, op)
    return amps


def run_circuit_dm(circuit: CircuitSpec, dm: np.ndarray | None = None) -> np.ndarray:
    """Density-matrix pass with the per-gate noise policy; ``dm`` may be
    batched."""
    if dm is None:
        if circuit.initial_state is not None:
            dm = pure_to_dm(circuit.initial_state).entries.copy()
        else:
            dm = pure_to_dm(zero_state(circuit.n_qubits)).entries.copy()
    for op in circuit.ops:
        dm = apply_gate_dm_entries(dm, op)
        for q in op.targets:
            for ch in circuit.noise:
                dm = apply_channel_entries(dm, ch, q)
    return dm


def run_circuit(circuit: CircuitSpec, mode: str) -> StateVector | DensityMatrix:
    """Execute a circuit. ``mode`` is "pure" (statevector, requires an empty
    noise policy) or "mixed" (density matrix, applies the noise policy)."""
    if mode == "pure":
        if circuit.noise:
            raise ValueError("pure mode requires an empty noise policy")
        return StateVector(circuit.n_qubits, run_circuit_amps(circuit))
    if mode == "mixed":
        return DensityMatrix(circuit.n_qubits, run_circuit_dm(circuit))
    raise ValueError(f"unknown mode {mode!r}")
