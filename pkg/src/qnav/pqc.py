"""Data re-uploading circuit used as a Q-function.

Circuit order, per layer ``l = 1..L``, after an initial variational block::

    U_par(theta_0) U_ent  [U_in(x_l) U_par(theta_l) U_ent] * L

``U_par`` is RX, RY, RZ on every qubit; ``U_ent`` is a ring of CZ gates.
``U_in`` is one RX per qubit (SINGLE) or RX, RY, RX per qubit carrying
three features (TRIPLE). Encoded angles are ``arctan(xi * s)``.

Slot layout inside a flat angle vector: all ``theta`` values first in
C order of shape ``(L+1, n, 3)``, then one slot per entry of ``xi`` in C
order. The feature fed to ``xi.flat[k]`` is always ``k % n_features``.
"""

from __future__ import annotations

import enum
import functools
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from qnav import qsim
from qnav.qsim import Gate, GateKind


class Encoding(str, enum.Enum):
    SINGLE = "single"
    TRIPLE = "triple"


@dataclass(frozen=True)
class CircuitSpec:
    n_qubits: int = 3
    n_features: int = 3
    n_actions: int = 3
    layers: int = 1
    encoding: Encoding = Encoding.SINGLE

    def __post_init__(self):
        object.__setattr__(self, "encoding", Encoding(self.encoding))
        problems = []
        if not 1 <= self.n_qubits <= qsim.MAX_QUBITS:
            problems.append(f"n_qubits must be in [1, {qsim.MAX_QUBITS}]")
        if self.n_features < 1:
            problems.append("n_features must be >= 1")
        if self.layers < 0:
            problems.append("layers must be >= 0")
        if not 1 <= self.n_actions <= self.n_qubits:
            problems.append("n_actions must be between 1 and n_qubits (one observable per action)")
        if self.encoding is Encoding.SINGLE and self.n_qubits != self.n_features:
            problems.append("SINGLE encoding needs n_qubits == n_features")
        if problems:
            raise ValueError("invalid CircuitSpec: " + "; ".join(problems))

    @property
    def theta_shape(self) -> tuple[int, int, int]:
        return (self.layers + 1, self.n_qubits, 3)

    @property
    def xi_shape(self) -> tuple[int, ...]:
        if self.encoding is Encoding.SINGLE:
            return (self.layers, self.n_features)
        return (self.n_qubits, self.layers, self.n_features)

    @property
    def n_theta(self) -> int:
        return int(np.prod(self.theta_shape))

    @property
    def n_xi(self) -> int:
        return int(np.prod(self.xi_shape))


@dataclass
class ParameterSet:
    theta: np.ndarray
    xi: np.ndarray
    w: np.ndarray

    def arrays(self) -> dict[str, np.ndarray]:
        """Live views keyed by group name; in-place updates reach this object."""
        return {"theta": self.theta, "xi": self.xi, "w": self.w}

    def copy(self) -> "ParameterSet":
        return ParameterSet(self.theta.copy(), self.xi.copy(), self.w.copy())

    def check(self, spec: CircuitSpec) -> None:
        for name, arr, shape in (
            ("theta", self.theta, spec.theta_shape),
            ("xi", self.xi, spec.xi_shape),
            ("w", self.w, (spec.n_actions,)),
        ):
            if arr.shape != shape:
                raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")

    @property
    def size(self) -> int:
        return self.theta.size + self.xi.size + self.w.size


def init_params(spec: CircuitSpec, rng: np.random.Generator) -> ParameterSet:
    return ParameterSet(
        theta=rng.uniform(0.0, 2.0 * np.pi, size=spec.theta_shape),
        xi=np.ones(spec.xi_shape),
        w=np.ones(spec.n_actions),
    )


def param_count(spec: CircuitSpec) -> int:
    n, L = spec.n_qubits, spec.layers
    if spec.encoding is Encoding.SINGLE:
        return 3 * n * (L + 1) + L * spec.n_features + spec.n_actions
    return 3 * n * (L + 1) + n * L * spec.n_features + spec.n_actions


class SlotLabel(NamedTuple):
    role: str  # "theta" or "input"
    layer: int
    qubit: int
    index: int  # rotation index within U_par, or the encoded feature


class BuiltCircuit(NamedTuple):
    spec: CircuitSpec
    gates: tuple[Gate, ...]
    labels: tuple[SlotLabel, ...]


def _ring(n: int) -> list[tuple[int, int]]:
    if n == 1:
        return []
    if n == 2:
        # (0,1) and (1,0) would cancel
        return [(0, 1)]
    return [(q, (q + 1) % n) for q in range(n)]


@functools.lru_cache(maxsize=64)
def build_circuit(spec: CircuitSpec) -> BuiltCircuit:
    n, L = spec.n_qubits, spec.layers
    gates: list[Gate] = []
    labels: list[SlotLabel] = [SlotLabel("theta", 0, 0, 0)] * spec.n_theta
    rot = (GateKind.RX, GateKind.RY, GateKind.RZ)

    def theta_slot(layer, q, r):
        return (layer * n + q) * 3 + r

    def variational(layer):
        for q in range(n):
            for r, kind in enumerate(rot):
                k = theta_slot(layer, q, r)
                labels[k] = SlotLabel("theta", layer, q, r)
                gates.append(Gate(kind, q, angle_slot=k))
        for a, b in _ring(n):
            gates.append(Gate(GateKind.CZ, b, control=a))

    input_labels: list[SlotLabel] = [SlotLabel("input", 0, 0, 0)] * spec.n_xi
    variational(0)
    for layer in range(1, L + 1):
        for q in range(n):
            if spec.encoding is Encoding.SINGLE:
                k = (layer - 1) * spec.n_features + q
                input_labels[k] = SlotLabel("input", layer, q, q)
                gates.append(Gate(GateKind.RX, q, angle_slot=spec.n_theta + k))
            else:
                # blocks of RX RY RX; zero-padded features are identity gates and omitted
                pattern = (GateKind.RX, GateKind.RY, GateKind.RX)
                for i in range(spec.n_features):
                    k = (q * L + (layer - 1)) * spec.n_features + i
                    input_labels[k] = SlotLabel("input", layer, q, i)
                    gates.append(Gate(pattern[i % 3], q, angle_slot=spec.n_theta + k))
        variational(layer)
    return BuiltCircuit(spec, tuple(gates), tuple(labels + input_labels))


@functools.lru_cache(maxsize=64)
def _compiled(spec: CircuitSpec) -> qsim.CompiledCircuit:
    built = build_circuit(spec)
    return qsim.compile_gates(built.gates, spec.n_qubits, spec.n_theta + spec.n_xi)


@functools.lru_cache(maxsize=64)
def _feature_index(spec: CircuitSpec) -> np.ndarray:
    return np.arange(spec.n_xi) % spec.n_features


def encode_state(s, xi: np.ndarray, spec: CircuitSpec) -> np.ndarray:
    """Encoded angles ``arctan(xi * s)`` with the same layout as ``xi``."""
    s = np.asarray(s, dtype=np.float64)
    if s.shape != (spec.n_features,):
        raise ValueError(f"state has shape {s.shape}, expected ({spec.n_features},)")
    if xi.shape != spec.xi_shape:
        raise ValueError(f"xi has shape {xi.shape}, expected {spec.xi_shape}")
    return np.arctan(xi * s.reshape((1,) * (xi.ndim - 1) + (-1,)))


def _angle_matrix(states: np.ndarray, params: ParameterSet, spec: CircuitSpec):
    feats = _feature_index(spec)
    s_feat = states[:, feats]
    angles = np.empty((states.shape[0], spec.n_theta + spec.n_xi))
    angles[:, : spec.n_theta] = params.theta.reshape(-1)
    angles[:, spec.n_theta :] = np.arctan(params.xi.reshape(-1) * s_feat)
    return angles, s_feat


def _as_batch(states, spec: CircuitSpec) -> np.ndarray:
    states = np.asarray(states, dtype=np.float64)
    if states.ndim == 1:
        states = states[None, :]
    if states.ndim != 2 or states.shape[1] != spec.n_features:
        raise ValueError(f"states must have {spec.n_features} features, got shape {states.shape}")
    return states


def expectations_batch(states, params: ParameterSet, spec: CircuitSpec) -> np.ndarray:
    states = _as_batch(states, spec)
    angles, _ = _angle_matrix(states, params, spec)
    return qsim.batch_expectations(_compiled(spec), angles, np.arange(spec.n_actions))


def q_values_batch(states, params: ParameterSet, spec: CircuitSpec) -> np.ndarray:
    return expectations_batch(states, params, spec) * params.w


def q_values(s, params: ParameterSet, spec: CircuitSpec) -> np.ndarray:
    """``Q(s, a_j) = <Z_j> * w_j`` for ``j < n_actions``."""
    params.check(spec)
    return q_values_batch(s, params, spec)[0]


def q_vjp_batch(states, params: ParameterSet, spec: CircuitSpec, upstream: np.ndarray):
    """Q-values and ``d(sum_b sum_j upstream[b, j] Q[b, j])`` for each parameter group."""
    states = _as_batch(states, spec)
    upstream = np.asarray(upstream, dtype=np.float64).reshape(states.shape[0], spec.n_actions)
    angles, s_feat = _angle_matrix(states, params, spec)
    z, g = qsim.batch_vjp(_compiled(spec), angles, np.arange(spec.n_actions), upstream * params.w)
    d_theta = g[:, : spec.n_theta].sum(axis=0).reshape(spec.theta_shape)
    xs = params.xi.reshape(-1) * s_feat
    d_xi = (g[:, spec.n_theta :] * s_feat / (1.0 + xs * xs)).sum(axis=0).reshape(spec.xi_shape)
    d_w = (upstream * z).sum(axis=0)
    return z * params.w, ParameterSet(d_theta, d_xi, d_w)


def q_gradient(s, params: ParameterSet, spec: CircuitSpec, upstream) -> ParameterSet:
    params.check(spec)
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != (spec.n_actions,):
        raise ValueError(f"upstream has shape {upstream.shape}, expected ({spec.n_actions},)")
    _, grads = q_vjp_batch(s, params, spec, upstream[None, :])
    return grads


@dataclass
class FourierSpectrum:
    frequencies: np.ndarray
    coefficients: np.ndarray
    residual: float


def analyze_spectrum(spec: CircuitSpec, params: ParameterSet, samples: int | None = None) -> FourierSpectrum:
    """Fourier coefficients of ``<Z>`` as a function of the raw encoded angle.

    The same angle is fed to every encoding gate (no arctan), sampled at
    equispaced points over ``[0, 2 pi)``. ``residual`` is the power carried by
    frequencies above ``L`` in magnitude.
    """
    if spec.n_qubits != 1 or spec.n_features != 1 or spec.encoding is not Encoding.SINGLE:
        raise ValueError("spectrum analysis needs a one-qubit, one-feature SINGLE circuit")
    L = spec.layers
    if samples is None:
        samples = 4 * L + 4
    if samples < 2 * L + 2:
        raise ValueError(f"need at least {2 * L + 2} samples to resolve frequencies up to {L}")
    xs = 2.0 * np.pi * np.arange(samples) / samples
    angles = np.empty((samples, spec.n_theta + spec.n_xi))
    angles[:, : spec.n_theta] = params.theta.reshape(-1)
    angles[:, spec.n_theta :] = xs[:, None]
    f = qsim.batch_expectations(_compiled(spec), angles, [0])[:, 0]
    coeffs = np.fft.fft(f) / samples
    freqs = np.rint(np.fft.fftfreq(samples, d=1.0 / samples)).astype(int)
    order = np.argsort(freqs, kind="stable")
    freqs, coeffs = freqs[order], coeffs[order]
    residual = float(np.sum(np.abs(coeffs[np.abs(freqs) > L]) ** 2))
    return FourierSpectrum(freqs, coeffs, residual)
