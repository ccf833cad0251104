"""Dense small-register state engine.

Two interchangeable backends share one API:

* ``PureVector``: a normalized amplitude vector. Noise channels are unraveled
  into quantum trajectories (one Kraus branch sampled per application).
* ``DensityMatrix``: the full 2^N x 2^N operator, channels applied as Kraus sums.

Basis indexing is little-endian: qubit ``q`` contributes ``2**q`` to the basis
index. A k-qubit operator acting on ``targets`` uses the same convention over
its own index, so ``targets[0]`` is the least significant bit of ``u``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

MAX_QUBITS = 8
PROB_FLOOR = 1e-30

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
PAULI = {"I": I2, "X": X, "Y": Y, "Z": Z}


class Backend(enum.Enum):
    PURE = "PureVector"
    DENSITY = "DensityMatrix"


class Role(enum.Enum):
    INTERFACE = "Interface"
    MEMORY = "Memory"
    FLYING = "Flying"


@dataclass(frozen=True)
class QubitId:
    index: int
    role: Role


class Register:
    """Ordered qubit roles; validates the one-interface/one-flying rule."""

    def __init__(self, roles: Sequence[Role]):
        roles = tuple(roles)
        if not 1 <= len(roles) <= MAX_QUBITS:
            raise ValueError(f"register size must be in [1, {MAX_QUBITS}]")
        if roles.count(Role.INTERFACE) != 1:
            raise ValueError("register needs exactly one Interface qubit")
        if roles.count(Role.FLYING) != 1:
            raise ValueError("register needs exactly one Flying qubit")
        self.qubits = tuple(QubitId(i, r) for i, r in enumerate(roles))

    def __len__(self) -> int:
        return len(self.qubits)

    def __getitem__(self, i: int) -> QubitId:
        return self.qubits[i]

    def of_role(self, role: Role) -> list[QubitId]:
        return [q for q in self.qubits if q.role is role]


class QuantumError(ValueError):
    """Invalid operation on a quantum state (bad operator, target or shape)."""


@dataclass
class QuantumState:
    backend: Backend
    n: int
    data: np.ndarray

    @property
    def dim(self) -> int:
        return 2 ** self.n

    @classmethod
    def zeros(cls, n: int, backend: Backend = Backend.PURE) -> "QuantumState":
        return cls.basis(0, n, backend)

    @classmethod
    def basis(cls, index: int, n: int, backend: Backend = Backend.PURE) -> "QuantumState":
        _check_n(n)
        psi = np.zeros(2 ** n, dtype=complex)
        psi[index] = 1.0
        return cls.from_vector(psi, backend)

    @classmethod
    def from_vector(cls, psi, backend: Backend = Backend.PURE) -> "QuantumState":
        psi = np.asarray(psi, dtype=complex).reshape(-1)
        n = _log2_dim(psi.shape[0])
        norm = np.linalg.norm(psi)
        if abs(norm - 1.0) > 1e-12:
            raise QuantumError(f"state vector norm {norm} != 1")
        if backend is Backend.PURE:
            return cls(backend, n, psi.copy())
        return cls(backend, n, np.outer(psi, psi.conj()))

    @classmethod
    def from_density(cls, rho) -> "QuantumState":
        rho = np.asarray(rho, dtype=complex)
        n = _log2_dim(rho.shape[0])
        if rho.shape != (2 ** n, 2 ** n):
            raise QuantumError("density matrix must be square")
        state = cls(Backend.DENSITY, n, rho.copy())
        state.validate()
        return state

    def copy(self) -> "QuantumState":
        return QuantumState(self.backend, self.n, self.data.copy())

    def to_density(self) -> "QuantumState":
        if self.backend is Backend.DENSITY:
            return self.copy()
        return QuantumState(Backend.DENSITY, self.n, np.outer(self.data, self.data.conj()))

    def density(self) -> np.ndarray:
        return self.to_density().data

    def probabilities(self) -> np.ndarray:
        """Computational-basis populations."""
        if self.backend is Backend.PURE:
            return np.abs(self.data) ** 2
        return np.real(np.diag(self.data)).copy()

    def validate(self, atol: float = 1e-12, eig_floor: float = -1e-10) -> None:
        if self.backend is Backend.PURE:
            norm = np.linalg.norm(self.data)
            if abs(norm - 1) > atol:
                raise QuantumError(f"norm {norm} deviates from 1")
            return
        rho = self.data
        if np.max(np.abs(rho - rho.conj().T)) > atol:
            raise QuantumError("density matrix is not Hermitian")
        tr = np.trace(rho).real
        if abs(tr - 1) > atol:
            raise QuantumError(f"trace {tr} deviates from 1")
        if np.linalg.eigvalsh(rho).min() < eig_floor:
            raise QuantumError("density matrix is not positive semidefinite")


def _check_n(n: int) -> None:
    if not 1 <= n <= MAX_QUBITS:
        raise QuantumError(f"register size {n} outside [1, {MAX_QUBITS}]")


def _log2_dim(d: int) -> int:
    n = int(d).bit_length() - 1
    if d < 2 or 2 ** n != d:
        raise QuantumError(f"dimension {d} is not a power of two")
    _check_n(n)
    return n


def _check_targets(targets: Sequence[int], n: int, k: int) -> tuple[int, ...]:
    targets = tuple(int(t) for t in targets)
    if len(targets) != k:
        raise QuantumError(f"operator acts on {k} qubits, got {len(targets)} targets")
    if len(set(targets)) != k:
        raise QuantumError("targets must be distinct")
    for t in targets:
        if not 0 <= t < n:
            raise QuantumError(f"target {t} out of range for {n} qubits")
    return targets


def _apply_to_axes(tensor: np.ndarray, u: np.ndarray, axes: Sequence[int]) -> np.ndarray:
    """Contract a k-qubit operator into the given tensor axes.

    ``axes[j]`` is the tensor axis holding target ``j`` (little-endian in u).
    """
    k = len(axes)
    ut = u.reshape((2,) * (2 * k))
    # u's C-order axis i corresponds to target k-1-i
    in_axes = [axes[k - 1 - i] for i in range(k)]
    out = np.tensordot(ut, tensor, axes=(list(range(k, 2 * k)), in_axes))
    return np.moveaxis(out, list(range(k)), in_axes)


_EMBED_MAX_QUBITS = 6
_EMBED_CACHE: dict = {}


def _embedded(u: np.ndarray, targets: tuple[int, ...], n: int) -> np.ndarray:
    """Full-register matrix of a k-qubit operator (cached; small registers only)."""
    key = (u.tobytes(), u.shape[0], targets, n)
    m = _EMBED_CACHE.get(key)
    if m is None:
        if len(_EMBED_CACHE) > 4096:
            _EMBED_CACHE.clear()
        eye = np.eye(2 ** n, dtype=complex).reshape((2,) * n + (2 ** n,))
        m = _apply_to_axes(eye, u, [n - 1 - q for q in targets]).reshape(2 ** n, 2 ** n)
        _EMBED_CACHE[key] = m
    return m


def _op_dense(state: QuantumState, u: np.ndarray, targets: tuple[int, ...],
              side: str = "both") -> np.ndarray:
    n = state.n
    if n <= _EMBED_MAX_QUBITS:
        m = _embedded(u, targets, n)
        if state.backend is Backend.PURE:
            return m @ state.data
        rho = state.data
        if side in ("both", "left"):
            rho = m @ rho
        if side in ("both", "right"):
            rho = rho @ m.conj().T
        return rho
    if state.backend is Backend.PURE:
        t = state.data.reshape((2,) * n)
        return _apply_to_axes(t, u, [n - 1 - q for q in targets]).reshape(-1)
    t = state.data.reshape((2,) * (2 * n))
    if side in ("both", "left"):
        t = _apply_to_axes(t, u, [n - 1 - q for q in targets])
    if side in ("both", "right"):
        t = _apply_to_axes(t, u.conj(), [2 * n - 1 - q for q in targets])
    return t.reshape(2 ** n, 2 ** n)


def is_unitary(u: np.ndarray, atol: float = 1e-10) -> bool:
    u = np.asarray(u)
    return u.ndim == 2 and u.shape[0] == u.shape[1] and np.allclose(
        u.conj().T @ u, np.eye(u.shape[0]), atol=atol)


def apply_unitary(state: QuantumState, u, targets: Sequence[int], check: bool = True) -> QuantumState:
    u = np.asarray(u, dtype=complex)
    k = _log2_dim(u.shape[0]) if u.ndim == 2 and u.shape[0] == u.shape[1] else None
    if k is None:
        raise QuantumError("operator must be a square 2^k matrix")
    targets = _check_targets(targets, state.n, k)
    if check and not is_unitary(u):
        raise QuantumError("matrix is not unitary")
    return QuantumState(state.backend, state.n, _op_dense(state, u, targets))


@dataclass
class KrausChannel:
    """Completely positive trace-preserving map on ``k`` qubits.

    When every Kraus operator is proportional to a unitary the branch
    probabilities are state independent; they are cached in ``mix_probs`` so
    trajectory sampling can skip computing branch norms.
    """

    operators: list
    mix_probs: np.ndarray | None = field(default=None, init=False, repr=False)
    mix_cdf: np.ndarray | None = field(default=None, init=False, repr=False)
    unitaries: list | None = field(default=None, init=False, repr=False)
    identity_branch: int | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        ops = [np.asarray(K, dtype=complex) for K in self.operators]
        if not ops:
            raise QuantumError("channel needs at least one Kraus operator")
        d = ops[0].shape[0]
        self.k = _log2_dim(d)
        for K in ops:
            if K.shape != (d, d):
                raise QuantumError("Kraus operators must share one square shape")
        total = sum(K.conj().T @ K for K in ops)
        if not np.allclose(total, np.eye(d), atol=1e-10):
            raise QuantumError("Kraus operators are not complete")
        self.operators = ops
        probs, unitaries = [], []
        for K in ops:
            g = K.conj().T @ K
            p = np.trace(g).real / d
            if not np.allclose(g, p * np.eye(d), atol=1e-12):
                return
            probs.append(p)
            unitaries.append(K / np.sqrt(p) if p > 0 else np.eye(d, dtype=complex))
        self.mix_probs = np.array(probs)
        self.mix_cdf = np.cumsum(self.mix_probs)
        self.unitaries = unitaries
        for i, u in enumerate(unitaries):
            if np.allclose(u, np.eye(d), atol=1e-14):
                self.identity_branch = i
                break


def apply_channel(state: QuantumState, ch: KrausChannel, targets: Sequence[int],
                  rng: np.random.Generator | None = None) -> QuantumState:
    targets = _check_targets(targets, state.n, ch.k)
    if state.backend is Backend.DENSITY:
        rho = np.zeros_like(state.data)
        for K in ch.operators:
            left = QuantumState(state.backend, state.n, _op_dense(state, K, targets, "left"))
            rho += _op_dense(left, K, targets, "right")
        return QuantumState(state.backend, state.n, rho)
    if rng is None:
        raise QuantumError("trajectory sampling needs an rng")
    if ch.mix_probs is not None:
        c = ch.mix_cdf
        i = int(min(np.searchsorted(c, rng.random() * c[-1], side="right"), len(c) - 1))
        if i == ch.identity_branch:
            return state
        return QuantumState(state.backend, state.n, _op_dense(state, ch.unitaries[i], targets))
    branches = [_op_dense(state, K, targets) for K in ch.operators]
    probs = np.array([np.vdot(b, b).real for b in branches])
    i = _sample_index(rng, probs / probs.sum())
    psi = branches[i] / np.sqrt(max(probs[i], PROB_FLOOR))
    return QuantumState(state.backend, state.n, psi)


def _sample_index(rng: np.random.Generator, probs: np.ndarray) -> int:
    r = rng.random()
    c = np.cumsum(probs)
    return int(min(np.searchsorted(c, r * c[-1], side="right"), len(probs) - 1))


# -- standard channels --------------------------------------------------------

def _pauli_products(k: int):
    labels = ["I", "X", "Y", "Z"]
    out = [("", np.eye(1, dtype=complex))]
    for _ in range(k):
        # new label character is the more significant qubit
        out = [(lab + s, np.kron(PAULI[s], m)) for lab, m in out for s in labels]
    return out


def depolarizing(p: float, k: int = 1) -> KrausChannel:
    """rho -> (1 - p) rho + p I/2^k."""
    _check_prob(p)
    d2 = 4 ** k
    ops = []
    for label, m in _pauli_products(k):
        w = 1 - p + p / d2 if set(label) == {"I"} else p / d2
        ops.append(np.sqrt(w) * m)
    # identity first keeps identity_branch at index 0
    return KrausChannel(ops)


def bit_flip(p: float) -> KrausChannel:
    _check_prob(p)
    return KrausChannel([np.sqrt(1 - p) * I2, np.sqrt(p) * X])


def phase_flip(p: float) -> KrausChannel:
    _check_prob(p)
    return KrausChannel([np.sqrt(1 - p) * I2, np.sqrt(p) * Z])


def _check_prob(p: float) -> None:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability {p} outside [0, 1]")


# -- observables --------------------------------------------------------------

class PauliString:
    """Tensor product of single-qubit Paulis; ``ops[q]`` acts on qubit q."""

    def __init__(self, ops):
        if isinstance(ops, str):
            ops = list(ops)
        ops = tuple(str(o).upper() for o in ops)
        for o in ops:
            if o not in PAULI:
                raise ValueError(f"unknown Pauli {o!r}")
        self.ops = ops

    @classmethod
    def on(cls, n: int, **by_index) -> "PauliString":
        """``PauliString.on(5, q0='Z', q4='Z')``."""
        ops = ["I"] * n
        for key, val in by_index.items():
            ops[int(key.lstrip("q"))] = val
        return cls(ops)

    def __len__(self) -> int:
        return len(self.ops)

    def __repr__(self) -> str:
        return f"PauliString({''.join(self.ops)!r})"

    def __eq__(self, other) -> bool:
        return isinstance(other, PauliString) and self.ops == other.ops

    def __hash__(self) -> int:
        return hash(self.ops)

    @property
    def support(self) -> list[int]:
        return [q for q, o in enumerate(self.ops) if o != "I"]

    def matrix(self) -> np.ndarray:
        m = np.eye(1, dtype=complex)
        for o in self.ops:
            m = np.kron(PAULI[o], m)
        return m


def _apply_pauli(state: QuantumState, p: PauliString, side: str = "left") -> np.ndarray:
    out = state
    for q in p.support:
        out = QuantumState(state.backend, state.n, _op_dense(out, PAULI[p.ops[q]], (q,), side))
    return out.data


def _check_pauli(state: QuantumState, p: PauliString) -> None:
    if len(p) != state.n:
        raise QuantumError(f"Pauli string length {len(p)} != register size {state.n}")


def expectation(state: QuantumState, p: PauliString) -> float:
    _check_pauli(state, p)
    if state.backend is Backend.PURE:
        return float(np.vdot(state.data, _apply_pauli(state, p)).real)
    return float(np.trace(_apply_pauli(state, p)).real)


def measure_projective(state: QuantumState, p: PauliString,
                       rng: np.random.Generator | None = None,
                       forced: int | None = None) -> tuple[int, QuantumState]:
    """Projective measurement of a Pauli observable.

    ``forced`` selects the outcome instead of sampling; the returned state is
    then the normalized projection (used by exact branch enumeration).
    """
    _check_pauli(state, p)
    if not p.support:
        raise QuantumError("cannot measure the identity string")
    pd = _apply_pauli(state, p)
    if state.backend is Backend.PURE:
        exp = float(np.vdot(state.data, pd).real)
    else:
        exp = float(np.trace(pd).real)
    p_plus = min(max((1 + exp) / 2, 0.0), 1.0)
    if forced is None:
        if rng is None:
            raise QuantumError("sampling a measurement needs an rng")
        outcome = 1 if rng.random() < p_plus else -1
    else:
        outcome = forced
    prob = p_plus if outcome == 1 else 1 - p_plus
    prob = max(prob, PROB_FLOOR)
    if state.backend is Backend.PURE:
        psi = (state.data + outcome * pd) / 2
        return outcome, QuantumState(state.backend, state.n, psi / np.sqrt(prob))
    # Pi rho Pi with Pi = (I + s P)/2
    half = (state.data + outcome * pd) / 2
    tmp = QuantumState(state.backend, state.n, half)
    rho = (half + outcome * _apply_pauli(tmp, p, "right")) / 2
    return outcome, QuantumState(state.backend, state.n, rho / prob)


def partial_trace(state: QuantumState, keep: Sequence[int]) -> QuantumState:
    keep = sorted(set(int(q) for q in keep))
    if not keep:
        raise QuantumError("keep list must be non-empty")
    for q in keep:
        if not 0 <= q < state.n:
            raise QuantumError(f"qubit {q} out of range")
    n = state.n
    rho = state.density().reshape((2,) * (2 * n))
    drop = [q for q in range(n) if q not in keep]
    # tensor axis of qubit q is n-1-q (rows) and 2n-1-q (columns)
    letters = "abcdefghijklmnopqrstuvwxyz"
    row = [letters[i] for i in range(n)]
    col = [letters[n + i] for i in range(n)]
    for q in drop:
        col[n - 1 - q] = row[n - 1 - q]
    out_row = [row[n - 1 - q] for q in reversed(keep)]
    out_col = [col[n - 1 - q] for q in reversed(keep)]
    spec = "".join(row + col) + "->" + "".join(out_row + out_col)
    m = len(keep)
    red = np.einsum(spec, rho).reshape(2 ** m, 2 ** m)
    return QuantumState(Backend.DENSITY, m, red)


def fidelity_to_pure(state: QuantumState, psi) -> float:
    psi = np.asarray(psi, dtype=complex).reshape(-1)
    if state.backend is Backend.PURE:
        return float(abs(np.vdot(psi, state.data)) ** 2)
    return float(np.vdot(psi, state.data @ psi).real)


# -- seeding ------------------------------------------------------------------

def derived_rng(seed: int, *key: int) -> np.random.Generator:
    """Generator for the stream ``key`` under ``seed``.

    Streams are counter-addressed, so shot k can be replayed without running
    shots 0..k-1.
    """
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key)))
