"""Dense statevector simulation for small rotation/CZ circuits.

Indexing convention: amplitude ``i`` belongs to basis state ``|i>`` with
qubit 0 as the least significant bit, so qubit ``q`` is bit ``(i >> q) & 1``.

Rotations follow ``R_P(phi) = exp(-i phi P / 2)`` for ``P`` in {X, Y, Z}.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from qnav import _kernels

MAX_QUBITS = 20


class GateKind(enum.IntEnum):
    RX = 0
    RY = 1
    RZ = 2
    CZ = 3

    @property
    def is_rotation(self) -> bool:
        return self is not GateKind.CZ


@dataclass(frozen=True)
class Gate:
    kind: GateKind
    target: int
    control: int | None = None
    angle_slot: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", GateKind(self.kind))
        if self.kind is GateKind.CZ:
            if self.control is None or self.control == self.target:
                raise ValueError("CZ needs a control distinct from its target")
            if self.angle_slot is not None:
                raise ValueError("CZ takes no angle slot")
        else:
            if self.control is not None:
                raise ValueError(f"{self.kind.name} takes no control qubit")
            if self.angle_slot is None:
                raise ValueError(f"{self.kind.name} needs an angle slot")

    def qubits(self) -> tuple[int, ...]:
        if self.control is None:
            return (self.target,)
        return (self.control, self.target)


@dataclass(frozen=True)
class ObservableSpec:
    """Pauli-Z on a single qubit."""

    qubit: int


@dataclass
class StateVector:
    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=np.complex128)
        if self.amplitudes.shape != (1 << self.n_qubits,):
            raise ValueError(
                f"expected {1 << self.n_qubits} amplitudes, got {self.amplitudes.shape}"
            )

    @classmethod
    def zero(cls, n_qubits: int) -> "StateVector":
        if not 1 <= n_qubits <= MAX_QUBITS:
            raise ValueError(f"n_qubits must be in [1, {MAX_QUBITS}], got {n_qubits}")
        amps = np.zeros(1 << n_qubits, dtype=np.complex128)
        amps[0] = 1.0
        return cls(n_qubits, amps)

    def norm_squared(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


def rotation_matrix(kind: GateKind, angle: float) -> np.ndarray:
    c = np.cos(angle / 2.0)
    s = np.sin(angle / 2.0)
    if kind is GateKind.RX:
        return np.array([[c, -1j * s], [-1j * s, c]], dtype=np.complex128)
    if kind is GateKind.RY:
        return np.array([[c, -s], [s, c]], dtype=np.complex128)
    if kind is GateKind.RZ:
        return np.array([[c - 1j * s, 0.0], [0.0, c + 1j * s]], dtype=np.complex128)
    raise ValueError(f"{kind!r} is not a rotation")


def _check_qubit(q: int, n_qubits: int) -> None:
    if not 0 <= q < n_qubits:
        raise IndexError(f"qubit {q} out of range for {n_qubits} qubits")


def apply_gate(state: StateVector, gate: Gate, angle: float | None = None) -> StateVector:
    """Return ``gate`` applied to ``state``; the input is left untouched."""
    n = state.n_qubits
    for q in gate.qubits():
        _check_qubit(q, n)
    if gate.kind.is_rotation:
        if angle is None:
            raise ValueError(f"{gate.kind.name} requires an angle")
    elif angle is not None:
        raise ValueError("CZ does not take an angle")

    # axis k of the reshaped tensor is qubit n-1-k (C order, qubit 0 fastest)
    psi = state.amplitudes.reshape((2,) * n)
    if gate.kind is GateKind.CZ:
        out = psi.copy()
        idx: list = [slice(None)] * n
        idx[n - 1 - gate.control] = 1
        idx[n - 1 - gate.target] = 1
        out[tuple(idx)] *= -1.0
    else:
        axis = n - 1 - gate.target
        m = rotation_matrix(gate.kind, float(angle))
        out = np.moveaxis(np.tensordot(m, psi, axes=([1], [axis])), 0, axis)
    return StateVector(n, np.ascontiguousarray(out).reshape(-1))


def _resolve_angle(gate: Gate, angles: np.ndarray) -> float | None:
    if gate.angle_slot is None:
        return None
    if not 0 <= gate.angle_slot < len(angles):
        raise IndexError(
            f"gate {gate} references slot {gate.angle_slot}, only {len(angles)} angles given"
        )
    return float(angles[gate.angle_slot])


def run_circuit(gates: Sequence[Gate], angles, n_qubits: int) -> StateVector:
    angles = np.asarray(angles, dtype=np.float64).reshape(-1)
    state = StateVector.zero(n_qubits)
    for gate in gates:
        state = apply_gate(state, gate, _resolve_angle(gate, angles))
    return state


def expectation_z(state: StateVector, obs: ObservableSpec) -> float:
    _check_qubit(obs.qubit, state.n_qubits)
    idx = np.arange(1 << state.n_qubits)
    signs = 1.0 - 2.0 * ((idx >> obs.qubit) & 1)
    value = float(np.dot(state.probabilities(), signs))
    return min(1.0, max(-1.0, value))


def _expectations(gates, angles, n_qubits, observables) -> np.ndarray:
    state = run_circuit(gates, angles, n_qubits)
    return np.array([expectation_z(state, o) for o in observables])


def parameter_shift_gradient(gates, angles, n_qubits: int, observables) -> np.ndarray:
    """Jacobian of the Z expectations via the two-term shift rule.

    Every slot is shifted as a whole, so slots shared by several gates are
    handled by summing the per-gate contributions.
    """
    angles = np.asarray(angles, dtype=np.float64).reshape(-1)
    _validate_differentiable(gates)
    for g in gates:
        _resolve_angle(g, angles)
    jac = np.zeros((len(observables), len(angles)))
    for i, gate in enumerate(gates):
        if gate.angle_slot is None:
            continue
        k = gate.angle_slot
        # shift only this gate's occurrence of the slot
        shifted = list(gates)
        extra = len(angles)
        shifted[i] = Gate(gate.kind, gate.target, angle_slot=extra)
        base = np.append(angles, angles[k])
        plus = base.copy()
        plus[extra] += np.pi / 2
        minus = base.copy()
        minus[extra] -= np.pi / 2
        jac[:, k] += 0.5 * (
            _expectations(shifted, plus, n_qubits, observables)
            - _expectations(shifted, minus, n_qubits, observables)
        )
    return jac


def _validate_differentiable(gates) -> None:
    for g in gates:
        if not isinstance(g.kind, GateKind):
            raise TypeError(f"unsupported gate kind {g.kind!r}")


class CompiledCircuit(NamedTuple):
    """Gate sequence packed into flat arrays for the compiled kernels."""

    n_qubits: int
    kinds: np.ndarray
    targets: np.ndarray
    controls: np.ndarray
    slots: np.ndarray
    n_slots: int


def compile_gates(gates: Sequence[Gate], n_qubits: int, n_slots: int | None = None) -> CompiledCircuit:
    for g in gates:
        for q in g.qubits():
            _check_qubit(q, n_qubits)
    kinds = np.array([int(g.kind) for g in gates], dtype=np.int64)
    targets = np.array([g.target for g in gates], dtype=np.int64)
    controls = np.array([-1 if g.control is None else g.control for g in gates], dtype=np.int64)
    slots = np.array([-1 if g.angle_slot is None else g.angle_slot for g in gates], dtype=np.int64)
    needed = int(slots.max()) + 1 if len(slots) and slots.max() >= 0 else 0
    if n_slots is None:
        n_slots = needed
    elif needed > n_slots:
        raise IndexError(f"gate references slot {needed - 1}, only {n_slots} slots declared")
    return CompiledCircuit(n_qubits, kinds, targets, controls, slots, n_slots)


def batch_expectations(circuit: CompiledCircuit, angles: np.ndarray, obs_qubits) -> np.ndarray:
    """Z expectations for a batch of angle vectors, shape ``(batch, n_obs)``."""
    angles = np.ascontiguousarray(np.atleast_2d(angles), dtype=np.float64)
    obs = np.asarray(obs_qubits, dtype=np.int64)
    return _kernels.forward_z(
        circuit.kinds, circuit.targets, circuit.controls, circuit.slots,
        angles, circuit.n_qubits, obs,
    )


def batch_vjp(circuit: CompiledCircuit, angles: np.ndarray, obs_qubits, upstream: np.ndarray):
    """Adjoint sweep: expectations and ``d(sum_j u_j <Z_j>)/d angles`` per sample."""
    angles = np.ascontiguousarray(np.atleast_2d(angles), dtype=np.float64)
    upstream = np.ascontiguousarray(np.atleast_2d(upstream), dtype=np.float64)
    obs = np.asarray(obs_qubits, dtype=np.int64)
    if upstream.shape != (angles.shape[0], len(obs)):
        raise ValueError(f"upstream shape {upstream.shape} does not match batch/observables")
    return _kernels.adjoint_vjp(
        circuit.kinds, circuit.targets, circuit.controls, circuit.slots,
        angles, circuit.n_qubits, obs, upstream,
    )


def adjoint_gradient(gates, angles, n_qubits: int, observables) -> np.ndarray:
    angles = np.asarray(angles, dtype=np.float64).reshape(-1)
    _validate_differentiable(gates)
    circuit = compile_gates(gates, n_qubits, len(angles))
    obs = [o.qubit for o in observables]
    for q in obs:
        _check_qubit(q, n_qubits)
    jac = np.empty((len(obs), len(angles)))
    for j in range(len(obs)):
        upstream = np.zeros((1, len(obs)))
        upstream[0, j] = 1.0
        _, g = batch_vjp(circuit, angles[None, :], obs, upstream)
        jac[j] = g[0]
    return jac


def gradient(gates, angles, n_qubits: int, observables, method: str = "adjoint") -> np.ndarray:
    """Jacobian ``d<Z_j>/d angle_k``: one row per observable, one column per slot.

    ``method="parameter-shift"`` evaluates the shift rule on the reference
    simulator; ``"adjoint"`` uses the compiled backward sweep. Both agree to
    rounding error.
    """
    if method == "adjoint":
        return adjoint_gradient(gates, angles, n_qubits, observables)
    if method == "parameter-shift":
        return parameter_shift_gradient(gates, angles, n_qubits, observables)
    raise ValueError(f"unknown gradient method {method!r}")


def sample_shots(state: StateVector, obs: ObservableSpec, shots: int, rng: np.random.Generator) -> float:
    """Finite-shot estimate of ``<Z_q>`` from ``shots`` projective measurements."""
    if shots < 1:
        raise ValueError("shots must be a positive integer")
    p_plus = (1.0 + expectation_z(state, obs)) / 2.0
    n_plus = rng.binomial(shots, min(1.0, max(0.0, p_plus)))
    return (2.0 * n_plus - shots) / shots
