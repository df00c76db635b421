"""Compiled batched statevector kernels.

Gate encoding matches ``qsim.GateKind``: 0=RX, 1=RY, 2=RZ, 3=CZ. A slot of
-1 marks a parameter-free gate. Each sample in a batch carries its own
angle vector, so encoded inputs and shared variational angles are treated
alike.
"""

import numpy as np
from numba import njit

RX, RY, RZ, CZ = 0, 1, 2, 3


@njit(cache=True)
def _rotate(psi, kind, target, angle):
    c = np.cos(0.5 * angle)
    s = np.sin(0.5 * angle)
    stride = 1 << target
    dim = psi.shape[0]
    for i in range(dim):
        if i & stride:
            continue
        j = i | stride
        a = psi[i]
        b = psi[j]
        if kind == RX:
            psi[i] = c * a - 1j * s * b
            psi[j] = -1j * s * a + c * b
        elif kind == RY:
            psi[i] = c * a - s * b
            psi[j] = s * a + c * b
        else:
            psi[i] = complex(c, -s) * a
            psi[j] = complex(c, s) * b


@njit(cache=True)
def _cz(psi, control, target):
    mask = (1 << control) | (1 << target)
    for i in range(psi.shape[0]):
        if i & mask == mask:
            psi[i] = -psi[i]


@njit(cache=True)
def _apply(psi, kind, target, control, angle):
    if kind == CZ:
        _cz(psi, control, target)
    else:
        _rotate(psi, kind, target, angle)


@njit(cache=True)
def _pauli_overlap(lam, psi, kind, target):
    """<lam| P |psi> for the generator P of a rotation of the given kind."""
    stride = 1 << target
    acc = 0j
    for i in range(psi.shape[0]):
        if i & stride:
            continue
        j = i | stride
        a = psi[i]
        b = psi[j]
        if kind == RX:
            acc += np.conj(lam[i]) * b + np.conj(lam[j]) * a
        elif kind == RY:
            acc += np.conj(lam[i]) * (-1j * b) + np.conj(lam[j]) * (1j * a)
        else:
            acc += np.conj(lam[i]) * a - np.conj(lam[j]) * b
    return acc


@njit(cache=True)
def _run(psi, kinds, targets, controls, slots, angles_row):
    for g in range(kinds.shape[0]):
        k = slots[g]
        angle = angles_row[k] if k >= 0 else 0.0
        _apply(psi, kinds[g], targets[g], controls[g], angle)


@njit(cache=True)
def _z_signs(dim, obs):
    signs = np.empty((obs.shape[0], dim))
    for j in range(obs.shape[0]):
        for i in range(dim):
            signs[j, i] = 1.0 - 2.0 * ((i >> obs[j]) & 1)
    return signs


@njit(cache=True)
def forward_z(kinds, targets, controls, slots, angles, n_qubits, obs):
    batch = angles.shape[0]
    dim = 1 << n_qubits
    signs = _z_signs(dim, obs)
    out = np.empty((batch, obs.shape[0]))
    psi = np.empty(dim, dtype=np.complex128)
    for b in range(batch):
        psi[:] = 0.0
        psi[0] = 1.0
        _run(psi, kinds, targets, controls, slots, angles[b])
        for j in range(obs.shape[0]):
            acc = 0.0
            for i in range(dim):
                acc += signs[j, i] * (psi[i].real ** 2 + psi[i].imag ** 2)
            out[b, j] = acc
    return out


@njit(cache=True)
def adjoint_vjp(kinds, targets, controls, slots, angles, n_qubits, obs, upstream):
    """Expectations and the upstream-weighted gradient w.r.t. every slot.

    For a rotation exp(-i phi P/2) the derivative of <psi|O|psi> is
    Im(<lam|P|psi>) with psi the state right after the gate and lam the
    back-propagated O|psi_final>.
    """
    batch = angles.shape[0]
    n_slots = angles.shape[1]
    n_gates = kinds.shape[0]
    dim = 1 << n_qubits
    signs = _z_signs(dim, obs)
    values = np.empty((batch, obs.shape[0]))
    grads = np.zeros((batch, n_slots))
    psi = np.empty(dim, dtype=np.complex128)
    lam = np.empty(dim, dtype=np.complex128)
    for b in range(batch):
        psi[:] = 0.0
        psi[0] = 1.0
        _run(psi, kinds, targets, controls, slots, angles[b])
        for j in range(obs.shape[0]):
            acc = 0.0
            for i in range(dim):
                acc += signs[j, i] * (psi[i].real ** 2 + psi[i].imag ** 2)
            values[b, j] = acc
        for i in range(dim):
            w = 0.0
            for j in range(obs.shape[0]):
                w += upstream[b, j] * signs[j, i]
            lam[i] = w * psi[i]
        for g in range(n_gates - 1, -1, -1):
            kind = kinds[g]
            k = slots[g]
            angle = angles[b, k] if k >= 0 else 0.0
            if kind != CZ:
                grads[b, k] += _pauli_overlap(lam, psi, kind, targets[g]).imag
            # undo the gate on both sweeps; CZ is self-inverse
            _apply(psi, kind, targets[g], controls[g], -angle)
            _apply(lam, kind, targets[g], controls[g], -angle)
    return values, grads
