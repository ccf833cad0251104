"""NV-node gate set on the fixed register [electron, carbon1, carbon2, carbon3, photon].

Every gate is an ideal unitary followed by its noise channel from the
:class:`~nvqnode.noise.NoiseModel`. With all probabilities at zero the gates
reduce exactly to the ideal unitaries (zero-probability channels are skipped).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from .core import (
    Backend, I2, KrausChannel, PauliString, QuantumError, QuantumState, Register, Role,
    X, Y, Z, apply_channel, apply_unitary, bit_flip, depolarizing, measure_projective,
    phase_flip,
)
from .noise import NoiseModel

ELECTRON, C1, C2, C3, PHOTON = 0, 1, 2, 3, 4
CARBONS = (C1, C2, C3)
N_QUBITS = 5
NODE_REGISTER = Register([Role.INTERFACE, Role.MEMORY, Role.MEMORY, Role.MEMORY, Role.FLYING])

P0 = np.diag([1.0, 0.0]).astype(complex)
P1 = np.diag([0.0, 1.0]).astype(complex)
_PAULI_1Q = {"X": X, "Y": Y, "Z": Z}

# cached noise channels keyed by probability
_CHANNEL_CACHE: dict = {}


@lru_cache(maxsize=256)
def rotation(axis: str, angle: float) -> np.ndarray:
    """exp(-i angle/2 sigma_axis). Cached; treat the result as read-only."""
    s = _PAULI_1Q[axis.upper()]
    return np.cos(angle / 2) * I2 - 1j * np.sin(angle / 2) * s


def controlled(u: np.ndarray) -> np.ndarray:
    """Two-qubit controlled-u; control is target[0] (LSB), u acts on target[1]."""
    return np.kron(I2, P0) + np.kron(u, P1)


def _channel(kind: str, p: float) -> KrausChannel:
    key = (kind, p)
    ch = _CHANNEL_CACHE.get(key)
    if ch is None:
        if kind == "dep1":
            ch = depolarizing(p, 1)
        elif kind == "dep2":
            ch = depolarizing(p, 2)
        elif kind == "flip":
            ch = bit_flip(p)
        else:
            ch = phase_flip(p)
        _CHANNEL_CACHE[key] = ch
    return ch


def entangling_channel(p: float, nuclear_share: float = 1.0) -> KrausChannel:
    """Error after an electron-carbon step; targets are (electron, carbon).

    A fraction ``nuclear_share`` of the error is two-qubit depolarizing; the
    rest depolarizes the electron alone.
    """
    key = ("ec", p, nuclear_share)
    ch = _CHANNEL_CACHE.get(key)
    if ch is None:
        ops = []
        for pc in (I2, X, Y, Z):
            for pe in (I2, X, Y, Z):
                w = p * nuclear_share / 16
                if pc is I2:
                    w += p * (1 - nuclear_share) / 4
                    if pe is I2:
                        w += 1 - p
                ops.append(np.sqrt(w) * np.kron(pc, pe))
        ch = KrausChannel(ops)
        _CHANNEL_CACHE[key] = ch
    return ch


def _ec_noise(state, a: int, b: int, noise: NoiseModel, rng):
    if noise.p_gate_ec <= 0.0:
        return state
    if b == ELECTRON:
        a, b = b, a
    if a != ELECTRON:
        return _noise(state, "dep2", noise.p_gate_ec, [a, b], rng)
    return apply_channel(state, entangling_channel(noise.p_gate_ec, noise.ec_nuclear_share), [a, b], rng)


def _noise(state, kind, p, targets, rng):
    if p <= 0.0:
        return state
    return apply_channel(state, _channel(kind, p), targets, rng)


def new_register(backend: Backend = Backend.PURE) -> QuantumState:
    """Fiducial all-zero register: |0>_e |000>_c |e>_p."""
    return QuantumState.zeros(N_QUBITS, backend)


def _require_role(q: int, role: Role) -> None:
    if not 0 <= q < len(NODE_REGISTER) or NODE_REGISTER[q].role is not role:
        raise QuantumError(f"qubit {q} is not a {role.value} qubit")


# -- gates ------------------------------------------------------------------

def mw_rotation(state, axis: str, angle: float, noise: NoiseModel, rng=None, noisy: bool = True):
    """Microwave rotation of the electron; axis Z is a frame (phase) rotation."""
    return mw_pulse(state, rotation(axis, angle), noise, rng, noisy, check=False)


def mw_pulse(state, u, noise: NoiseModel, rng=None, noisy: bool = True, check: bool = True):
    """Arbitrary single-qubit electron unitary followed by depolarizing p_gate_e."""
    state = apply_unitary(state, u, [ELECTRON], check=check)
    if noisy:
        state = _noise(state, "dep1", noise.p_gate_e, [ELECTRON], rng)
    return state


def frame_rotation(state, qubit: int, angle: float):
    """Noiseless software Z rotation (reference-frame update)."""
    return apply_unitary(state, rotation("Z", angle), [qubit], check=False)


def conditional_nuclear_rotation(state, target: int, noise: NoiseModel, rng=None,
                                 inverse: bool = False, noisy: bool = True):
    """Rotate a carbon by +pi/2 about X if the electron is |0>, by -pi/2 if |1>."""
    _require_role(target, Role.MEMORY)
    s = -1.0 if inverse else 1.0
    u = np.kron(rotation("X", s * np.pi / 2), P0) + np.kron(rotation("X", -s * np.pi / 2), P1)
    state = apply_unitary(state, u, [ELECTRON, target], check=False)
    if noisy:
        state = _ec_noise(state, ELECTRON, target, noise, rng)
    return state


@lru_cache(maxsize=4)
def _cond_phase_matrix(sign: int) -> np.ndarray:
    zz = np.array([1, -1, -1, 1], dtype=float)
    return np.diag(np.exp(-1j * sign * np.pi / 4 * zz))


def conditional_phase(state, target: int, noise: NoiseModel, rng=None, sign: int = 1,
                      noisy: bool = True):
    """exp(-i sign pi/4 Z_e Z_c).

    This is the conditional rotation with the carbon conjugated into its Z
    basis by ideal nuclear basis rotations, so it carries one entangling error.
    """
    _require_role(target, Role.MEMORY)
    u = _cond_phase_matrix(sign)
    state = apply_unitary(state, u, [ELECTRON, target], check=False)
    if noisy:
        state = _ec_noise(state, ELECTRON, target, noise, rng)
    return state


def nuclear_rotation(state, target: int, axis: str, angle: float, noise: NoiseModel, rng=None,
                     noisy: bool = True):
    _require_role(target, Role.MEMORY)
    state = apply_unitary(state, rotation(axis, angle), [target], check=False)
    if noisy:
        state = _noise(state, "dep1", noise.p_gate_c, [target], rng)
    return state


def flip(state, target: int, noise: NoiseModel, rng=None, noisy: bool = True):
    """Ideal X on one qubit plus single-qubit depolarizing (nuclear or electron rate)."""
    state = apply_unitary(state, X, [target], check=False)
    if noisy:
        p = noise.p_gate_e if target == ELECTRON else noise.p_gate_c
        state = _noise(state, "dep1", p, [target], rng)
    return state


_SQRT_X = np.array([[1 + 1j, 1 - 1j], [1 - 1j, 1 + 1j]]) / 2
_CSQRTX = controlled(_SQRT_X)
_CNOT = controlled(X)


def cnot_gate(state, control: int, target: int, noise: NoiseModel, rng=None, noisy: bool = True):
    """CNOT built from two controlled-sqrt(X) steps, each with one entangling error."""
    if control == target:
        raise QuantumError("control and target must differ")
    for _ in range(2):
        state = apply_unitary(state, _CSQRTX, [control, target], check=False)
        if noisy:
            state = _ec_noise(state, control, target, noise, rng)
    return state


def swap_gate(state, a: int, b: int, noise: NoiseModel, rng=None, noisy: bool = True):
    """SWAP as three alternating CNOTs, each step with one entangling error."""
    if a == b:
        raise QuantumError("swap needs two distinct qubits")
    for c, t in ((a, b), (b, a), (a, b)):
        state = apply_unitary(state, _CNOT, [c, t], check=False)
        if noisy:
            state = _ec_noise(state, a, b, noise, rng)
    return state


def emit_time_bin(state, noise: NoiseModel, rng=None) -> tuple[QuantumState, bool]:
    """Entangle the electron with a time-bin photon: a|0>_e + b|1>_e -> a|0>|e> + b|1>|l>.

    The two optical pi pulses with a microwave pi pulse between them, followed
    by a restoring pi pulse, act as a CNOT from electron to photon. Returns the
    state and the herald flag (photon detected), drawn independently of the
    state; without an rng the shot counts as heralded.
    """
    if state.probabilities().reshape(2, -1)[1].sum() > 1e-12:
        raise QuantumError("photon qubit already used in this shot")
    state = apply_unitary(state, _CNOT, [ELECTRON, PHOTON], check=False)
    heralded = True if rng is None else bool(rng.random() < noise.herald_prob)
    return state, heralded


_Z_E = PauliString.on(N_QUBITS, q0="Z")


def fluorescence_readout(state, noise: NoiseModel, rng) -> tuple[int, QuantumState]:
    """Projective Z readout of the electron with asymmetric reporting error.

    Reported bit 0 means bright. The returned state keeps the true projection.
    """
    outcome, post = measure_projective(state, _Z_E, rng)
    true_bit = 0 if outcome == 1 else 1
    p_correct = noise.readout_bright_fid if true_bit == 0 else noise.readout_dark_fid
    bit = true_bit if rng.random() < p_correct else 1 - true_bit
    return bit, post


def reset_channel(reset_error: float) -> KrausChannel:
    a, b = np.sqrt(1 - reset_error), np.sqrt(reset_error)
    k00 = np.array([[1, 0], [0, 0]], dtype=complex)
    k01 = np.array([[0, 1], [0, 0]], dtype=complex)
    k10 = np.array([[0, 0], [1, 0]], dtype=complex)
    k11 = np.array([[0, 0], [0, 1]], dtype=complex)
    return KrausChannel([a * k00, a * k01, b * k10, b * k11])


def reset_electron(state, noise: NoiseModel, rng=None):
    """Optical pumping to |0>_e; leaves |1>_e with probability reset_error."""
    key = ("reset", noise.reset_error)
    ch = _CHANNEL_CACHE.get(key)
    if ch is None:
        ch = _CHANNEL_CACHE[key] = reset_channel(noise.reset_error)
    return apply_channel(state, ch, [ELECTRON], rng)


def apply_idle_round_noise(state, noise: NoiseModel, rng=None):
    """Decoherence accumulated over one round interval."""
    for c in CARBONS:
        state = _noise(state, "flip", noise.p_flip_round, [c], rng)
        state = _noise(state, "phase", noise.p_phase_round, [c], rng)
    # the electron is measured and reset every round; its coherence is lost
    return _noise(state, "phase", 0.5, [ELECTRON], rng)


# -- parity mapping sequences -------------------------------------------------

def map_carbon_parity(state, carbons: Sequence[int], noise: NoiseModel, rng=None,
                      noisy: bool = True):
    """Write the Z-parity of ``carbons`` onto the electron: +1 -> |1>_e, -1 -> |0>_e.

    Electron pi/2, one conditional phase per carbon with alternating sign, and
    a closing pi/2. Codewords pick up no phase, so a logical superposition is
    left intact.
    """
    state = mw_rotation(state, "Y", np.pi / 2, noise, rng, noisy)
    for j, c in enumerate(carbons):
        state = conditional_phase(state, c, noise, rng, sign=1 if j % 2 == 0 else -1, noisy=noisy)
    if len(carbons) % 2 == 1:
        state = frame_rotation(state, ELECTRON, -np.pi / 2)
    return mw_rotation(state, "Y", np.pi / 2, noise, rng, noisy)


def _hadamard_electron(state, noise, rng, noisy):
    # H = Ry(pi/2) Z with the Z as a frame update
    state = frame_rotation(state, ELECTRON, np.pi)
    return mw_rotation(state, "Y", np.pi / 2, noise, rng, noisy)


def _cz_electron(state, target, noise, rng, noisy):
    state = conditional_phase(state, target, noise, rng, sign=-1, noisy=noisy)
    state = frame_rotation(state, ELECTRON, np.pi / 2)
    return frame_rotation(state, target, np.pi / 2)


def map_electron_carbon_zz(state, target: int, noise: NoiseModel, rng=None, noisy: bool = True):
    """Z_e Z_c parity onto the electron, even -> |0>_e (bright). Ideal action: CNOT(c -> e)."""
    state = _hadamard_electron(state, noise, rng, noisy)
    state = _cz_electron(state, target, noise, rng, noisy)
    return _hadamard_electron(state, noise, rng, noisy)


def map_electron_carbon_xx(state, target: int, noise: NoiseModel, rng=None, noisy: bool = True):
    """X_e X_c parity onto the electron, even -> |0>_e (bright)."""
    state = frame_rotation(state, target, np.pi)
    state = nuclear_rotation(state, target, "Y", np.pi / 2, noise, rng, noisy)
    state = _cz_electron(state, target, noise, rng, noisy)
    return _hadamard_electron(state, noise, rng, noisy)


# -- declarative gate lists ---------------------------------------------------

@dataclass(frozen=True)
class GateSpec:
    """One step of a pulse sequence.

    kind is one of MwRot, CondNucRot, CondPhase, NucRot, Frame, CNOT, SWAP,
    OpticalPiEmit, Flip.
    """

    kind: str
    qubits: tuple = ()
    axis: str = ""
    angle: float = 0.0
    inverse: bool = False
    noisy: bool = True
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.kind not in _KIND_QUBITS:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        if len(self.qubits) != _KIND_QUBITS[self.kind]:
            raise ValueError(f"{self.kind} takes {_KIND_QUBITS[self.kind]} qubit(s)")
        if self.kind in ("CondNucRot", "CondPhase", "NucRot"):
            _require_role(self.qubits[0], Role.MEMORY)
        if self.kind in ("CNOT", "SWAP") and self.qubits[0] == self.qubits[1]:
            raise ValueError(f"{self.kind} needs distinct qubits")


_KIND_QUBITS = {"MwRot": 0, "CondNucRot": 1, "CondPhase": 1, "NucRot": 1, "Frame": 1,
                "CNOT": 2, "SWAP": 2, "OpticalPiEmit": 0, "Flip": 1}


def run_gates(state, gates: Sequence[GateSpec], noise: NoiseModel, rng=None):
    """Execute a gate list; returns (state, heralded) where heralded is the AND of emissions."""
    heralded = True
    for g in gates:
        if g.kind == "MwRot":
            state = mw_rotation(state, g.axis, g.angle, noise, rng, g.noisy)
        elif g.kind == "CondNucRot":
            state = conditional_nuclear_rotation(state, g.qubits[0], noise, rng, g.inverse, g.noisy)
        elif g.kind == "CondPhase":
            state = conditional_phase(state, g.qubits[0], noise, rng,
                                      -1 if g.inverse else 1, g.noisy)
        elif g.kind == "NucRot":
            state = nuclear_rotation(state, g.qubits[0], g.axis, g.angle, noise, rng, g.noisy)
        elif g.kind == "Frame":
            state = frame_rotation(state, g.qubits[0], g.angle)
        elif g.kind == "CNOT":
            state = cnot_gate(state, *g.qubits, noise, rng, g.noisy)
        elif g.kind == "SWAP":
            state = swap_gate(state, *g.qubits, noise, rng, g.noisy)
        elif g.kind == "OpticalPiEmit":
            state, h = emit_time_bin(state, noise, rng)
            heralded = heralded and h
        elif g.kind == "Flip":
            state = flip(state, g.qubits[0], noise, rng, g.noisy)
    return state, heralded
