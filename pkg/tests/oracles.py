"""Brute-force references that share no code with the package's simulation path."""

from functools import reduce

import numpy as np
from scipy.linalg import expm

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}
KIND_AXIS = {0: "X", 1: "Y", 2: "Z"}


def embed(single: np.ndarray, qubit: int, n: int) -> np.ndarray:
    # qubit 0 is the least significant bit -> rightmost Kronecker factor
    factors = [single if q == qubit else PAULI["I"] for q in reversed(range(n))]
    return reduce(np.kron, factors)


def dense_unitary(gate, angle, n: int) -> np.ndarray:
    kind = int(gate.kind)
    if kind == 3:
        d = np.ones(2**n, dtype=complex)
        for i in range(2**n):
            if (i >> gate.control) & 1 and (i >> gate.target) & 1:
                d[i] = -1
        return np.diag(d)
    gen = PAULI[KIND_AXIS[kind]]
    return embed(expm(-0.5j * angle * gen), gate.target, n)


def dense_state(gates, angles, n: int) -> np.ndarray:
    u = np.eye(2**n, dtype=complex)
    for g in gates:
        a = angles[g.angle_slot] if g.angle_slot is not None else None
        u = dense_unitary(g, a, n) @ u
    psi0 = np.zeros(2**n, dtype=complex)
    psi0[0] = 1
    return u @ psi0


def dense_z(psi: np.ndarray, qubit: int, n: int) -> float:
    return float(np.real(np.conj(psi) @ embed(PAULI["Z"], qubit, n) @ psi))


def central_difference(f, x: np.ndarray, h: float = 1e-4) -> np.ndarray:
    """Jacobian of vector-valued ``f`` at ``x``; shape ``f(x).shape + x.shape``."""
    x = np.asarray(x, dtype=float)
    f0 = np.asarray(f(x))
    jac = np.zeros(f0.shape + x.shape)
    for idx in np.ndindex(x.shape):
        xp = x.copy()
        xm = x.copy()
        xp[idx] += h
        xm[idx] -= h
        jac[(...,) + idx] = (np.asarray(f(xp)) - np.asarray(f(xm))) / (2 * h)
    return jac


def random_circuit(rng, n: int, n_gates: int, p_cz: float = 0.25):
    from qnav.qsim import Gate, GateKind

    gates = []
    slot = 0
    for _ in range(n_gates):
        if n > 1 and rng.random() < p_cz:
            c, t = rng.choice(n, 2, replace=False)
            gates.append(Gate(GateKind.CZ, int(t), control=int(c)))
        else:
            gates.append(Gate(GateKind(int(rng.integers(3))), int(rng.integers(n)), angle_slot=slot))
            slot += 1
    return gates, rng.uniform(-np.pi, np.pi, slot)


# --- layered re-upload circuit, assembled from its description ------------

def rot(axis, a):
    return expm(-0.5j * a * PAULI[axis])


def layer_product(mats):
    # mats[q] acts on qubit q; qubit 0 is the rightmost factor
    return reduce(np.kron, list(reversed(mats)))


def ring_cz(n):
    d = np.ones(2**n)
    pairs = [(q, (q + 1) % n) for q in range(n)] if n > 2 else ([(0, 1)] if n == 2 else [])
    for a, b in pairs:
        for i in range(2**n):
            if (i >> a) & 1 and (i >> b) & 1:
                d[i] *= -1
    return np.diag(d)


def oracle_q(s, params, spec):
    """Dense re-implementation of the layered circuit, built from its description."""
    n, L = spec.n_qubits, spec.layers

    def u_par(layer):
        t = params.theta[layer]
        return layer_product([rot("Z", t[q, 2]) @ rot("Y", t[q, 1]) @ rot("X", t[q, 0]) for q in range(n)])

    def u_in(layer):
        if spec.encoding.value == "single":
            return layer_product([rot("X", np.arctan(params.xi[layer - 1, q] * s[q])) for q in range(n)])
        mats = []
        for q in range(n):
            x = np.arctan(params.xi[q, layer - 1] * s)
            mats.append(rot("X", x[2]) @ rot("Y", x[1]) @ rot("X", x[0]))
        return layer_product(mats)

    ent = ring_cz(n)
    u = ent @ u_par(0)
    for layer in range(1, L + 1):
        u = ent @ u_par(layer) @ u_in(layer) @ u
    psi = u[:, 0]
    z = np.array([np.real(np.conj(psi) @ embed(PAULI["Z"], j, n) @ psi) for j in range(spec.n_actions)])
    return z * params.w


# near-optimal action scripts per bundled world, one letter per action
SCRIPTED_PATHS = {
    "env3x3": "FFFFFFFRFRFFFFFRFFFF",
    "env4x4": "FFFFFFFFFFFFRFRFFFFFRFFFFFFFFF",
    "env5x5": "RFRFRFFFFFFFFFFFFFFFFFLLFFFFLFFFFFFFFFFFFFF",
}
