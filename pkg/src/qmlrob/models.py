"""Hybrid quantum-classical classifiers and their gradients.

Three model families: the re-uploading QMLP (angle or amplitude encoding,
ring CRX entanglers), the 4-qubit dense-angle QNN with all-to-all CRX
entanglers, and a one-hidden-layer classical MLP baseline.

Quantum gradients come from an adjoint backward sweep (exact for expectation
readouts); a parameter-shift path with the four-term rule for controlled
rotations is kept alongside as an independent cross-check.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass

import numpy as np

from . import sim
from .encoding import EncodingSpec, amplitude_encode
from .sim import CircuitSpec, GateOp, KrausChannel

CHECKPOINT_VERSION = 1


# ---------------------------------------------------------------------------
# Configs and parameter containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QmlpConfig:
    layers: int
    encoding: EncodingSpec
    n_classes: int
    n_qubits: int = 9
    reupload: bool = True

    def __post_init__(self):
        if self.layers < 1:
            raise ValueError("layers must be >= 1")
        if self.n_classes < 2:
            raise ValueError("n_classes must be >= 2")
        if self.encoding.n_qubits != self.n_qubits:
            raise ValueError("encoding qubit count must match the circuit")


@dataclass
class QmlpParams:
    theta: np.ndarray  # [layers, n_qubits, 3]: RY, RZ, ring-CRX angles
    head_w: np.ndarray  # [n_classes, n_qubits]
    head_b: np.ndarray  # [n_classes]


@dataclass
class QmlpModel:
    config: QmlpConfig
    params: QmlpParams


@dataclass(frozen=True)
class Pqc6Config:
    n_qubits: int = 4
    layers: int = 6
    n_classes: int = 4

    @property
    def n_features(self) -> int:
        return 2 * self.n_qubits


@dataclass
class Pqc6Params:
    rot: np.ndarray  # [layers, n_qubits, 3]: RY, RZ, RX angles
    ent: np.ndarray  # [layers, n_qubits*(n_qubits-1)]: CRX angles, ordered pairs
    head_w: np.ndarray
    head_b: np.ndarray


@dataclass
class Pqc6Model:
    config: Pqc6Config
    params: Pqc6Params


@dataclass(frozen=True)
class CmlpConfig:
    input_dim: int
    hidden_dim: int
    n_classes: int

    def __post_init__(self):
        if self.hidden_dim < 1:
            raise ValueError("hidden_dim must be >= 1")


@dataclass
class CmlpParams:
    w1: np.ndarray  # [hidden, input]
    b1: np.ndarray
    w2: np.ndarray  # [n_classes, hidden]
    b2: np.ndarray


@dataclass
class CmlpModel:
    config: CmlpConfig
    params: CmlpParams


QuantumModel = QmlpModel | Pqc6Model
Model = QmlpModel | Pqc6Model | CmlpModel


def init_qmlp(config: QmlpConfig, rng: np.random.Generator) -> QmlpModel:
    """Quantum angles uniform in [-pi, pi]; head uniform in +-1/sqrt(n)."""
    theta = rng.uniform(-np.pi, np.pi, size=(config.layers, config.n_qubits, 3))
    bound = 1.0 / np.sqrt(config.n_qubits)
    head_w = rng.uniform(-bound, bound, size=(config.n_classes, config.n_qubits))
    head_b = rng.uniform(-bound, bound, size=config.n_classes)
    return QmlpModel(config, QmlpParams(theta, head_w, head_b))


def init_pqc6(config: Pqc6Config, rng: np.random.Generator) -> Pqc6Model:
    n = config.n_qubits
    rot = rng.uniform(-np.pi, np.pi, size=(config.layers, n, 3))
    ent = rng.uniform(-np.pi, np.pi, size=(config.layers, n * (n - 1)))
    bound = 1.0 / np.sqrt(n)
    head_w = rng.uniform(-bound, bound, size=(config.n_classes, n))
    head_b = rng.uniform(-bound, bound, size=config.n_classes)
    return Pqc6Model(config, Pqc6Params(rot, ent, head_w, head_b))


def init_cmlp(config: CmlpConfig, rng: np.random.Generator) -> CmlpModel:
    b1 = 1.0 / np.sqrt(config.input_dim)
    b2 = 1.0 / np.sqrt(config.hidden_dim)
    return CmlpModel(
        config,
        CmlpParams(
            rng.uniform(-b1, b1, size=(config.hidden_dim, config.input_dim)),
            rng.uniform(-b1, b1, size=config.hidden_dim),
            rng.uniform(-b2, b2, size=(config.n_classes, config.hidden_dim)),
            rng.uniform(-b2, b2, size=config.n_classes),
        ),
    )


# ---------------------------------------------------------------------------
# Parameter trees (shared by the optimizers and SPSA)
# ---------------------------------------------------------------------------


def tree_map(fn, *trees):
    """Apply ``fn`` across matching array fields of parameter dataclasses."""
    cls = type(trees[0])
    return cls(
        **{
            f.name: fn(*(getattr(t, f.name) for t in trees))
            for f in dataclasses.fields(cls)
        }
    )


def tree_arrays(tree) -> dict[str, np.ndarray]:
    return {f.name: getattr(tree, f.name) for f in dataclasses.fields(tree)}


def flatten_params(tree) -> np.ndarray:
    return np.concatenate([np.ravel(a) for a in tree_arrays(tree).values()])


def unflatten_params(template, vec: np.ndarray):
    out, i = {}, 0
    for name, a in tree_arrays(template).items():
        out[name] = vec[i : i + a.size].reshape(a.shape)
        i += a.size
    return type(template)(**out)


# ---------------------------------------------------------------------------
# Circuit programs. A program is the gate list of a model evaluated over a
# whole batch: variational angles are scalars shared across the batch,
# encoding angles are per-sample vectors. Tags record which parameter (or
# input feature, with its chain-rule scale) each gate's angle came from.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Instr:
    kind: str
    targets: tuple[int, ...]
    angles: np.ndarray | float | None
    tag: tuple[str, int, float] | None  # ("theta"|"x", flat index, scale)


def _rot_mats(kind: str, angles) -> np.ndarray:
    th = np.asarray(angles, dtype=float)
    c, s = np.cos(th / 2), np.sin(th / 2)
    m = np.zeros(th.shape + (2, 2), dtype=complex)
    if kind in ("RX", "CRX"):
        m[..., 0, 0] = c
        m[..., 0, 1] = -1j * s
        m[..., 1, 0] = -1j * s
        m[..., 1, 1] = c
    elif kind == "RY":
        m[..., 0, 0] = c
        m[..., 0, 1] = -s
        m[..., 1, 0] = s
        m[..., 1, 1] = c
    elif kind == "RZ":
        m[..., 0, 0] = np.exp(-0.5j * th)
        m[..., 1, 1] = np.exp(0.5j * th)
    else:
        raise AssertionError(kind)
    return m


def _instr_matrix(ins: _Instr) -> np.ndarray:
    if ins.kind in sim.ROTATION_GATES:
        return _rot_mats(ins.kind, ins.angles)
    return GateOp(ins.kind, ins.targets).base_matrix()


def _apply_instr(amps: np.ndarray, ins: _Instr, dagger: bool = False) -> np.ndarray:
    mat = _instr_matrix(ins)
    if dagger:
        mat = np.conj(np.swapaxes(mat, -1, -2))
    if len(ins.targets) == 1:
        return sim.apply_1q(amps, mat, ins.targets[0])
    return sim.apply_controlled_1q(amps, mat, ins.targets[0], ins.targets[1])


def _apply_instr_dm(dm: np.ndarray, ins: _Instr) -> np.ndarray:
    mat = _instr_matrix(ins)
    conj = np.conj(mat)
    if len(ins.targets) == 1:
        t = ins.targets[0]
        dm = np.swapaxes(sim.apply_1q(np.swapaxes(dm, -1, -2), mat, t), -1, -2)
        return sim.apply_1q(dm, conj, t)
    c, t = ins.targets
    dm = np.swapaxes(
        sim.apply_controlled_1q(np.swapaxes(dm, -1, -2), mat, c, t), -1, -2
    )
    return sim.apply_controlled_1q(dm, conj, c, t)


def _qmlp_program(
    config: QmlpConfig, params: QmlpParams, X: np.ndarray
) -> tuple[list[_Instr], np.ndarray]:
    """Instruction list plus initial amplitudes [B, 2**n] for a batch X."""
    n = config.n_qubits
    dim = 2**n
    theta = params.theta
    instrs: list[_Instr] = []
    kind = config.encoding.kind

    if kind == "amplitude":
        norms = np.linalg.norm(X, axis=1)
        if np.any(norms == 0):
            raise ValueError("amplitude encoding of an all-zero vector is undefined")
        init = np.zeros((X.shape[0], dim), dtype=complex)
        init[:, : X.shape[1]] = X / norms[:, None]
    elif kind == "angle":
        init = np.zeros((X.shape[0], dim), dtype=complex)
        init[:, 0] = 1.0
    else:
        raise ValueError(f"QMLP does not support {kind!r} encoding")

    def encode_block():
        for q in range(X.shape[1]):
            instrs.append(_Instr("RY", (q,), X[:, q], ("x", q, 1.0)))

    for layer in range(config.layers):
        if kind == "angle" and (config.reupload or layer == 0):
            encode_block()
        base = (layer * n) * 3
        for q in range(n):
            instrs.append(
                _Instr("RY", (q,), float(theta[layer, q, 0]), ("theta", base + 3 * q, 1.0))
            )
            instrs.append(
                _Instr("RZ", (q,), float(theta[layer, q, 1]), ("theta", base + 3 * q + 1, 1.0))
            )
        if n > 1:
            for q in range(n):
                instrs.append(
                    _Instr(
                        "CRX",
                        (q, (q + 1) % n),
                        float(theta[layer, q, 2]),
                        ("theta", base + 3 * q + 2, 1.0),
                    )
                )
    return instrs, init


def _pqc6_program(
    config: Pqc6Config, params: Pqc6Params, X: np.ndarray
) -> tuple[list[_Instr], np.ndarray]:
    n = config.n_qubits
    if X.shape[1] != 2 * n:
        raise ValueError(f"QNN expects {2 * n} features, got {X.shape[1]}")
    init = np.zeros((X.shape[0], 2**n), dtype=complex)
    init[:, 0] = 1.0
    instrs: list[_Instr] = []
    for q in range(n):
        a, b = X[:, 2 * q], X[:, 2 * q + 1]
        instrs.append(_Instr("RZ", (q,), a, ("x", 2 * q, 1.0)))
        instrs.append(_Instr("RX", (q,), b, ("x", 2 * q + 1, 1.0)))
        instrs.append(_Instr("RZ", (q,), a / 2, ("x", 2 * q, 0.5)))
        instrs.append(_Instr("RX", (q,), b / 2, ("x", 2 * q + 1, 0.5)))
    rot_size = config.layers * n * 3
    for layer in range(config.layers):
        for q in range(n):
            for k, g in enumerate(("RY", "RZ", "RX")):
                instrs.append(
                    _Instr(
                        g,
                        (q,),
                        float(params.rot[layer, q, k]),
                        ("theta", (layer * n + q) * 3 + k, 1.0),
                    )
                )
        j = 0
        for c in range(n):
            for t in range(n):
                if c == t:
                    continue
                flat = rot_size + layer * n * (n - 1) + j
                instrs.append(
                    _Instr("CRX", (c, t), float(params.ent[layer, j]), ("theta", flat, 1.0))
                )
                j += 1
    return instrs, init


def _program(model: QuantumModel, X: np.ndarray):
    if isinstance(model, QmlpModel):
        return _qmlp_program(model.config, model.params, X)
    return _pqc6_program(model.config, model.params, X)


def _theta_grad_to_params(model: QuantumModel, flat: np.ndarray):
    if isinstance(model, QmlpModel):
        return flat.reshape(model.params.theta.shape)
    rot_size = model.params.rot.size
    return flat[:rot_size].reshape(model.params.rot.shape), flat[rot_size:].reshape(
        model.params.ent.shape
    )


def _instrs_to_ops(instrs: list[_Instr], b: int) -> tuple[GateOp, ...]:
    ops = []
    for ins in instrs:
        ang = ins.angles
        if isinstance(ang, np.ndarray):
            ang = float(ang[b])
        ops.append(GateOp(ins.kind, ins.targets, ang))
    return tuple(ops)


def build_qmlp_circuit(
    config: QmlpConfig, params: QmlpParams, x: np.ndarray
) -> CircuitSpec:
    """Single-sample circuit: per-layer re-uploaded angle encoding (or a
    one-shot amplitude preparation) followed by RY/RZ rotations and a ring of
    CRX entanglers."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    instrs, _ = _qmlp_program(config, params, x)
    initial = None
    if config.encoding.kind == "amplitude":
        initial = amplitude_encode(x[0], config.n_qubits)
    return CircuitSpec(config.n_qubits, _instrs_to_ops(instrs, 0), initial_state=initial)


def build_pqc6_circuit(
    config: Pqc6Config, params: Pqc6Params, x: np.ndarray
) -> CircuitSpec:
    """Single-sample QNN circuit: dense-angle encoding once, then per layer
    RY/RZ/RX on every qubit and a CRX for every ordered qubit pair."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    instrs, _ = _pqc6_program(config, params, x)
    return CircuitSpec(config.n_qubits, _instrs_to_ops(instrs, 0))


# ---------------------------------------------------------------------------
# Forward evaluation
# ---------------------------------------------------------------------------


def _z_diags(n_qubits: int) -> np.ndarray:
    return np.stack([sim.z_diagonal(n_qubits, q) for q in range(n_qubits)])


def _forward_amps(instrs: list[_Instr], amps: np.ndarray) -> np.ndarray:
    for ins in instrs:
        amps = _apply_instr(amps, ins)
    return amps


def quantum_features(
    model: QuantumModel,
    X: np.ndarray,
    mode: str = "pure",
    noise: tuple[KrausChannel, ...] = (),
) -> np.ndarray:
    """Per-qubit Pauli-Z expectations [B, n_qubits] for a batch."""
    X = np.asarray(X, dtype=float)
    n = model.config.n_qubits
    instrs, init = _program(model, X)
    zd = _z_diags(n)
    if mode == "pure":
        if noise:
            raise ValueError("pure mode requires an empty noise policy")
        amps = _forward_amps(instrs, init)
        return (np.abs(amps) ** 2) @ zd.T
    if mode != "mixed":
        raise ValueError(f"unknown mode {mode!r}")
    dm = np.einsum("bi,bj->bij", init, init.conj())
    for ins in instrs:
        dm = _apply_instr_dm(dm, ins)
        for q in ins.targets:
            for ch in noise:
                dm = sim.apply_channel_entries(dm, ch, q)
    diag = np.einsum("bii->bi", dm).real
    return diag @ zd.T


def forward_batch(
    model: Model,
    X: np.ndarray,
    mode: str = "pure",
    noise: tuple[KrausChannel, ...] = (),
) -> np.ndarray:
    """Logits [B, n_classes]."""
    if isinstance(model, CmlpModel):
        return cmlp_forward_batch(model.config, model.params, np.asarray(X, dtype=float))
    z = quantum_features(model, X, mode, noise)
    return z @ model.params.head_w.T + model.params.head_b


def forward(
    model: Model,
    x: np.ndarray,
    mode: str = "pure",
    noise: tuple[KrausChannel, ...] = (),
) -> np.ndarray:
    """Logits for a single input."""
    return forward_batch(model, np.atleast_2d(np.asarray(x, dtype=float)), mode, noise)[0]


def predict_batch(
    model: Model,
    X: np.ndarray,
    mode: str = "pure",
    noise: tuple[KrausChannel, ...] = (),
) -> np.ndarray:
    return np.argmax(forward_batch(model, X, mode, noise), axis=1)


# ---------------------------------------------------------------------------
# Adjoint gradients. For the loss L(logits(z)) with z_q = <Z_q>, the backward
# sweep differentiates <psi| O |psi> for O = sum_q w_q Z_q with w = dL/dz,
# visiting each gate once: grad through exp(-i theta G / 2) is
# Im(<lambda| G |psi_k>) with lambda = (prefix unitary)^dagger O |psi_final>.
# ---------------------------------------------------------------------------


def _apply_generator(amps: np.ndarray, ins: _Instr) -> np.ndarray:
    if ins.kind == "RX":
        return sim.apply_1q(amps, sim._X, ins.targets[0])
    if ins.kind == "RY":
        return sim.apply_1q(amps, sim._Y, ins.targets[0])
    if ins.kind == "RZ":
        return sim.apply_1q(amps, sim._Z, ins.targets[0])
    if ins.kind == "CRX":
        c, t = ins.targets
        out = sim.apply_controlled_1q(amps, sim._X, c, t)
        dim = amps.shape[-1]
        mask = ((np.arange(dim) >> c) & 1).astype(float)
        return out * mask
    raise AssertionError(f"gate {ins.kind} carries no parameter")


def _adjoint_backward(
    instrs: list[_Instr],
    psi_final: np.ndarray,
    lam: np.ndarray,
    n_theta: int,
    n_features: int,
    sample_scale: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns (dtheta [n_theta], dX [B, n_features], final bra); per-sample
    gate grads are reduced into dtheta with ``sample_scale`` weights."""
    ket = psi_final
    dtheta = np.zeros(n_theta)
    dX = np.zeros((psi_final.shape[0], n_features))
    for ins in reversed(instrs):
        if ins.tag is not None:
            gen = _apply_generator(ket, ins)
            g = np.sum(lam.conj() * gen, axis=-1).imag
            what, idx, scale = ins.tag
            if what == "theta":
                dtheta[idx] += scale * float(np.dot(sample_scale, g))
            else:
                dX[:, idx] += scale * sample_scale * g
        ket = _apply_instr(ket, ins, dagger=True)
        lam = _apply_instr(lam, ins, dagger=True)
    return dtheta, dX, lam


def _quantum_backward(
    model: QuantumModel,
    X: np.ndarray,
    dlogits: np.ndarray,
    sample_weights: np.ndarray | None = None,
):
    """Weighted-sum gradients of a loss with per-sample logit gradients
    ``dlogits`` [B, C]. Returns (param grads, dX [B, F] per-sample)."""
    X = np.asarray(X, dtype=float)
    B = X.shape[0]
    w = np.ones(B) if sample_weights is None else np.asarray(sample_weights, dtype=float)
    n = model.config.n_qubits
    head_w = model.params.head_w

    instrs, init = _program(model, X)
    psi = _forward_amps(instrs, init)
    zd = _z_diags(n)
    z = (np.abs(psi) ** 2) @ zd.T

    obs_w = dlogits @ head_w  # [B, n] = dL/dz
    diag = obs_w @ zd  # [B, dim]
    lam = diag * psi

    n_theta = (
        model.params.theta.size
        if isinstance(model, QmlpModel)
        else model.params.rot.size + model.params.ent.size
    )
    dtheta, dX, lam0 = _adjoint_backward(instrs, psi, lam, n_theta, X.shape[1], w)

    if isinstance(model, QmlpModel) and model.config.encoding.kind == "amplitude":
        # d<O>/dv through v/||v||, v = zero-padded x (grads are real-valued).
        norms = np.linalg.norm(X, axis=1)
        gr = 2.0 * lam0.real[:, : X.shape[1]]
        inner = np.sum(gr * X, axis=1) / norms
        dX = dX + w[:, None] * (gr / norms[:, None] - X * (inner / norms**2)[:, None])

    dhw = (dlogits * w[:, None]).T @ z
    dhb = (dlogits * w[:, None]).sum(axis=0)
    if isinstance(model, QmlpModel):
        grads = QmlpParams(dtheta.reshape(model.params.theta.shape), dhw, dhb)
    else:
        drot, dent = _theta_grad_to_params(model, dtheta)
        grads = Pqc6Params(drot, dent, dhw, dhb)
    return grads, dX


def grad_params(model: Model, x: np.ndarray, y, loss_fn):
    """Gradient of ``loss_fn(logits, y)`` w.r.t. all model parameters.

    ``loss_fn`` returns (loss, dloss/dlogits). Pure (noiseless) mode only;
    use spsa_grad under noise.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    logits = forward_batch(model, x)
    _, dlogits = loss_fn(logits[0], y)
    if isinstance(model, CmlpModel):
        grads, _ = cmlp_backward(model.config, model.params, x, dlogits[None, :])
        return grads
    grads, _ = _quantum_backward(model, x, dlogits[None, :])
    return grads


def grad_input(model: Model, x: np.ndarray, y, loss_fn) -> np.ndarray:
    """Gradient of the loss w.r.t. the input features (pure mode only)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    logits = forward_batch(model, x)
    _, dlogits = loss_fn(logits[0], y)
    if isinstance(model, CmlpModel):
        _, dX = cmlp_backward(model.config, model.params, x, dlogits[None, :])
        return dX[0]
    _, dX = _quantum_backward(model, x, dlogits[None, :])
    return dX[0]


def grad_input_batch(model: Model, X: np.ndarray, dlogits: np.ndarray) -> np.ndarray:
    """Per-sample input gradients for a batch, given dL/dlogits rows."""
    X = np.asarray(X, dtype=float)
    if isinstance(model, CmlpModel):
        _, dX = cmlp_backward(model.config, model.params, X, dlogits)
        return dX
    _, dX = _quantum_backward(model, X, dlogits)
    return dX


# ---------------------------------------------------------------------------
# Parameter-shift cross-check. Two-term rule for single-qubit rotations; the
# CRX generator has eigenvalues {-1, 0, +1}, which needs the four-term rule.
# ---------------------------------------------------------------------------

_SHIFT_C1 = (np.sqrt(2) + 1) / (4 * np.sqrt(2))
_SHIFT_C2 = (np.sqrt(2) - 1) / (4 * np.sqrt(2))


def _z_of_instrs(model, instrs, init) -> np.ndarray:
    psi = _forward_amps(instrs, init)
    return ((np.abs(psi) ** 2) @ _z_diags(model.config.n_qubits).T)[0]


def _shifted(instrs, i, delta):
    ins = instrs[i]
    out = list(instrs)
    out[i] = _Instr(ins.kind, ins.targets, ins.angles + delta, ins.tag)
    return out


def grad_params_shift(model: QuantumModel, x, y, loss_fn):
    """Parameter-shift gradients (quantum angles; analytic head)."""
    return _shift_grads(model, x, y, loss_fn)[0]


def grad_input_shift(model: QuantumModel, x, y, loss_fn) -> np.ndarray:
    """Parameter-shift input gradients summed over encoding occurrences
    (angle encodings only)."""
    return _shift_grads(model, x, y, loss_fn)[1]


def _shift_grads(model: QuantumModel, x, y, loss_fn):
    """Shift rule applied to each <Z_q>, then chained through the head and
    loss at the unshifted point."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    instrs, init = _program(model, x)
    logits = forward_batch(model, x)[0]
    _, dlogits = loss_fn(logits, y)
    obs_w = dlogits @ model.params.head_w  # dL/dz

    n_theta = (
        model.params.theta.size
        if isinstance(model, QmlpModel)
        else model.params.rot.size + model.params.ent.size
    )
    dtheta = np.zeros(n_theta)
    dx = np.zeros(x.shape[1])

    def dz(i, shift):
        return _z_of_instrs(model, _shifted(instrs, i, shift), init) - _z_of_instrs(
            model, _shifted(instrs, i, -shift), init
        )

    for i, ins in enumerate(instrs):
        if ins.tag is None:
            continue
        if ins.kind == "CRX":
            dz_dang = _SHIFT_C1 * dz(i, np.pi / 2) - _SHIFT_C2 * dz(i, 3 * np.pi / 2)
        else:
            dz_dang = 0.5 * dz(i, np.pi / 2)
        g = float(obs_w @ dz_dang)
        what, idx, scale = ins.tag
        if what == "theta":
            dtheta[idx] += scale * g
        else:
            dx[idx] += scale * g

    z = quantum_features(model, x)
    dhw = np.outer(dlogits, z[0])
    dhb = dlogits.copy()
    if isinstance(model, QmlpModel):
        grads = QmlpParams(dtheta.reshape(model.params.theta.shape), dhw, dhb)
    else:
        drot, dent = _theta_grad_to_params(model, dtheta)
        grads = Pqc6Params(drot, dent, dhw, dhb)
    return grads, dx


# ---------------------------------------------------------------------------
# SPSA
# ---------------------------------------------------------------------------


def spsa_estimate(loss, theta: np.ndarray, c: float, rng: np.random.Generator) -> np.ndarray:
    """Two-evaluation SPSA gradient estimate of ``loss`` at ``theta``."""
    if c <= 0:
        raise ValueError("SPSA perturbation must be positive")
    delta = rng.integers(0, 2, size=theta.shape) * 2.0 - 1.0
    return (loss(theta + c * delta) - loss(theta - c * delta)) / (2 * c) * delta


def spsa_grad(
    model: Model,
    X: np.ndarray,
    targets: np.ndarray,
    c: float,
    rng: np.random.Generator,
    loss_fn,
    mode: str = "pure",
    noise: tuple[KrausChannel, ...] = (),
    sample_weights: np.ndarray | None = None,
):
    """SPSA estimate of the batch-loss gradient; works in any mode.

    ``loss_fn`` maps (logits [B, C], targets) to per-sample losses [B].
    """
    X = np.asarray(X, dtype=float)
    w = np.ones(X.shape[0]) if sample_weights is None else np.asarray(sample_weights)

    def batch_loss(vec):
        m = replace_params(model, unflatten_params(model.params, vec))
        losses = loss_fn(forward_batch(m, X, mode, noise), targets)
        return float(np.dot(w, losses) / np.sum(w))

    est = spsa_estimate(batch_loss, flatten_params(model.params), c, rng)
    return unflatten_params(model.params, est)


def replace_params(model: Model, params) -> Model:
    return type(model)(model.config, params)


# ---------------------------------------------------------------------------
# Classical MLP baseline: one hidden layer, ReLU, linear output.
# ---------------------------------------------------------------------------


def cmlp_forward_batch(config: CmlpConfig, params: CmlpParams, X: np.ndarray) -> np.ndarray:
    if X.shape[1] != config.input_dim:
        raise ValueError(f"expected {config.input_dim} features, got {X.shape[1]}")
    h = np.maximum(X @ params.w1.T + params.b1, 0.0)
    return h @ params.w2.T + params.b2


def cmlp_forward(config: CmlpConfig, params: CmlpParams, x: np.ndarray) -> np.ndarray:
    return cmlp_forward_batch(config, params, np.atleast_2d(np.asarray(x, dtype=float)))[0]


def cmlp_backward(
    config: CmlpConfig,
    params: CmlpParams,
    X: np.ndarray,
    dlogits: np.ndarray,
    sample_weights: np.ndarray | None = None,
):
    """Analytic backprop. Returns (CmlpParams grads, per-sample dX)."""
    w = (
        np.ones(X.shape[0])
        if sample_weights is None
        else np.asarray(sample_weights, dtype=float)
    )
    pre = X @ params.w1.T + params.b1
    h = np.maximum(pre, 0.0)
    dl = dlogits * w[:, None]
    dw2 = dl.T @ h
    db2 = dl.sum(axis=0)
    dh = (dlogits @ params.w2) * (pre > 0)
    dw1 = (dh * w[:, None]).T @ X
    db1 = (dh * w[:, None]).sum(axis=0)
    dX = dh @ params.w1
    return CmlpParams(dw1, db1, dw2, db2), dX


def cmlp_grad(config: CmlpConfig, params: CmlpParams, x: np.ndarray, y, loss_fn):
    """Single-sample parameter gradients for the classical baseline."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    logits = cmlp_forward_batch(config, params, x)[0]
    _, dlogits = loss_fn(logits, y)
    grads, _ = cmlp_backward(config, params, x, dlogits[None, :])
    return grads


# ---------------------------------------------------------------------------
# Checkpoints: lossless round trip of config + parameters + seed.
# ---------------------------------------------------------------------------


def _config_payload(model: Model) -> dict:
    cfg = model.config
    if isinstance(model, QmlpModel):
        enc = cfg.encoding
        return {
            "kind": "qmlp",
            "layers": cfg.layers,
            "n_classes": cfg.n_classes,
            "n_qubits": cfg.n_qubits,
            "reupload": cfg.reupload,
            "encoding": {
                "kind": enc.kind,
                "n_qubits": enc.n_qubits,
                "input_range": list(enc.input_range),
            },
        }
    if isinstance(model, Pqc6Model):
        return {
            "kind": "qnn",
            "n_qubits": cfg.n_qubits,
            "layers": cfg.layers,
            "n_classes": cfg.n_classes,
        }
    return {
        "kind": "cmlp",
        "input_dim": cfg.input_dim,
        "hidden_dim": cfg.hidden_dim,
        "n_classes": cfg.n_classes,
    }


def save_model(path, model: Model, seed: int) -> None:
    arrays = {f"param_{k}": v for k, v in tree_arrays(model.params).items()}
    np.savez(
        path,
        version=CHECKPOINT_VERSION,
        config=json.dumps(_config_payload(model), sort_keys=True),
        seed=seed,
        **arrays,
    )


def load_model(path) -> tuple[Model, int]:
    with np.load(path, allow_pickle=False) as data:
        version = int(data["version"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        cfg = json.loads(str(data["config"]))
        params = {
            k[len("param_") :]: data[k] for k in data.files if k.startswith("param_")
        }
        seed = int(data["seed"])
    kind = cfg.pop("kind")
    if kind == "qmlp":
        enc = cfg.pop("encoding")
        config = QmlpConfig(
            encoding=EncodingSpec(
                enc["kind"], enc["n_qubits"], tuple(enc["input_range"])
            ),
            **cfg,
        )
        return QmlpModel(config, QmlpParams(**params)), seed
    if kind == "qnn":
        return Pqc6Model(Pqc6Config(**cfg), Pqc6Params(**params)), seed
    if kind == "cmlp":
        return CmlpModel(CmlpConfig(**cfg), CmlpParams(**params)), seed
    raise ValueError(f"unknown model kind {kind!r}")
