"""Repeated three-qubit repetition-code correction on the nuclear register.

One shot: logical(-photon) preparation, M rounds of ZIZ / IZZ syndrome readout
through the electron with optional lookup-table feedback, then the final
ZIZ, IZZ, ZII readout plus time-bin photon detection.
"""
from __future__ import annotations

import enum
import json
import math
import struct
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .core import Backend, QuantumState, apply_unitary
from .ghz import photon_z_measurement
from .node import (
    C1, C2, C3, ELECTRON, N_QUBITS, P0, P1, apply_idle_round_noise, cnot_gate, emit_time_bin,
    flip, fluorescence_readout, map_carbon_parity, mw_pulse, mw_rotation, new_register, reset_electron,
    swap_gate,
)
from .analysis import PopulationVector, mitigate_readout
from .noise import NoiseModel
from .sampling import herald_mask, shot_rng

CHECKS = {"ZIZ": (C1, C3), "IZZ": (C2, C3), "ZII": (C1,)}


class Action(enum.Enum):
    NONE = "None"
    FLIP_Q1 = "FlipQ1"
    FLIP_Q2 = "FlipQ2"
    FLIP_Q3 = "FlipQ3"

    @property
    def carbon(self) -> int | None:
        return {Action.FLIP_Q1: C1, Action.FLIP_Q2: C2, Action.FLIP_Q3: C3}.get(self)


CORRECTION_TABLE = {
    (-1, +1): Action.FLIP_Q1,
    (+1, -1): Action.FLIP_Q2,
    (-1, -1): Action.FLIP_Q3,
    (+1, +1): Action.NONE,
}


def decode(ziz: int, izz: int) -> Action:
    return CORRECTION_TABLE[(int(ziz), int(izz))]


@dataclass(frozen=True)
class LogicalPrep:
    kind: str  # "zero" | "one" | "plus"
    alpha: complex = 1 / math.sqrt(2)
    beta: complex = 1 / math.sqrt(2)

    def __post_init__(self):
        if self.kind not in ("zero", "one", "plus"):
            raise ValueError(f"unknown preparation {self.kind!r}")
        if self.kind == "plus" and abs(abs(self.alpha) ** 2 + abs(self.beta) ** 2 - 1) > 1e-12:
            raise ValueError("|alpha|^2 + |beta|^2 must equal 1")

    @classmethod
    def zero(cls):
        return cls("zero")

    @classmethod
    def one(cls):
        return cls("one")

    @classmethod
    def plus(cls, alpha=1 / math.sqrt(2), beta=1 / math.sqrt(2)):
        return cls("plus", alpha, beta)

    @property
    def target_index(self) -> int | None:
        """Final-outcome index of the prepared product state."""
        return {"zero": 0, "one": 15}.get(self.kind)


def prepare_logical(prep: LogicalPrep, noise: NoiseModel, backend: Backend = Backend.PURE,
                    rng=None) -> tuple[QuantumState, bool]:
    """Encode the logical qubit (and photon) starting from the all-zero register."""
    state = new_register(backend)
    if prep.kind == "plus":
        a, b = complex(prep.alpha), complex(prep.beta)
        u = np.array([[a, -b.conjugate()], [b, a.conjugate()]])
        state = mw_pulse(state, u, noise, rng)
        state, heralded = emit_time_bin(state, noise, rng)
        state = cnot_gate(state, ELECTRON, C1, noise, rng)
        state = cnot_gate(state, ELECTRON, C2, noise, rng)
        state = swap_gate(state, ELECTRON, C3, noise, rng)
        return state, heralded
    if prep.kind == "zero":
        return emit_time_bin(state, noise, rng)
    state = mw_rotation(state, "X", math.pi, noise, rng)
    state, heralded = emit_time_bin(state, noise, rng)
    state = mw_rotation(state, "X", math.pi, noise, rng)
    for c in (C1, C2, C3):
        state = flip(state, c, noise, rng)
    return state, heralded


def parity_round(state, check: str, noise: NoiseModel, rng) -> tuple[int, QuantumState]:
    """Map a parity onto the electron (+1 -> dark), read it out, reset the electron."""
    state = map_carbon_parity(state, CHECKS[check], noise, rng)
    bit, state = fluorescence_readout(state, noise, rng)
    state = reset_electron(state, noise, rng)
    return (1 if bit == 1 else -1), state


def outcome_index(zii: int, ziz: int, izz: int, zp: int) -> int:
    """Index of |i1 i2 i3>_c |j>_p as i1 i2 i3 j in binary (|000>|e> = 0)."""
    i1 = 0 if zii == 1 else 1
    i3 = i1 ^ (0 if ziz == 1 else 1)
    i2 = i3 ^ (0 if izz == 1 else 1)
    j = 0 if zp == 1 else 1
    return (i1 << 3) | (i2 << 2) | (i3 << 1) | j


def final_layout() -> np.ndarray:
    """Outcome index for each final readout-bit pattern.

    Pattern bit order: ZIZ, IZZ, ZII electron bits (1 = dark = parity +1),
    then the photon bin (0 = early).
    """
    perm = np.empty(16, dtype=int)
    for k in range(16):
        pm = [1 if (k >> b) & 1 else -1 for b in range(3)]
        perm[k] = outcome_index(pm[2], pm[0], pm[1], -1 if (k >> 3) & 1 else 1)
    return perm


def final_confusions(noise: NoiseModel) -> list:
    return [noise.confusion] * 3 + [None]


def mitigated_population(raw: PopulationVector, noise: NoiseModel) -> PopulationVector:
    return mitigate_readout(raw, final_confusions(noise), final_layout())


def index_bits(index: int) -> tuple[int, int, int, int]:
    return (index >> 3) & 1, (index >> 2) & 1, (index >> 1) & 1, index & 1


def final_measurement(state, noise: NoiseModel, rng) -> tuple[int, dict]:
    ziz, state = parity_round(state, "ZIZ", noise, rng)
    izz, state = parity_round(state, "IZZ", noise, rng)
    zii, state = parity_round(state, "ZII", noise, rng)
    zp, state = photon_z_measurement(state, noise, rng)
    return outcome_index(zii, ziz, izz, zp), dict(ziz=ziz, izz=izz, zii=zii, zp=zp)


@dataclass(frozen=True, slots=True)
class SyndromeRecord:
    round: int
    ziz: int
    izz: int
    action: Action
    feedback_applied: bool


@dataclass(frozen=True, slots=True)
class ShotRecord:
    shot: int
    heralded: bool
    syndromes: tuple = ()
    final_outcome: int | None = None
    final_ziz: int | None = None
    final_izz: int | None = None
    final_zii: int | None = None
    final_zp: int | None = None


# maps round r (1..M, or M+1 for just before the final readout) to a carbon or tuple of carbons
Injector = Callable[[np.random.Generator, int], dict]
_X = np.array([[0, 1], [1, 0]])


def _inject_x(state, carbons):
    for c in carbons if isinstance(carbons, tuple) else (carbons,):
        state = apply_unitary(state, _X, [c], check=False)
    return state


def single_x_injector(rng: np.random.Generator, rounds: int) -> dict:
    """One X on a uniformly random carbon before a uniformly random round 1..M."""
    if rounds < 1:
        return {}
    return {int(rng.integers(1, rounds + 1)): int(rng.choice((C1, C2, C3)))}


def run_shot(prep: LogicalPrep, rounds: int, feedback: bool, noise: NoiseModel, rng,
             backend: Backend = Backend.PURE, injector: Injector | None = None,
             final_idle: bool = True, shot: int = 0) -> ShotRecord:
    injections = injector(rng, rounds) if injector else {}
    state, _ = prepare_logical(prep, noise, backend, rng)
    syndromes = []
    for r in range(1, rounds + 1):
        if r in injections:
            state = _inject_x(state, injections[r])
        state = apply_idle_round_noise(state, noise, rng)
        ziz, state = parity_round(state, "ZIZ", noise, rng)
        izz, state = parity_round(state, "IZZ", noise, rng)
        action = decode(ziz, izz) if feedback else Action.NONE
        if action.carbon is not None:
            state = flip(state, action.carbon, noise, rng)
        syndromes.append(SyndromeRecord(r, ziz, izz, action, feedback))
    if rounds + 1 in injections:
        state = _inject_x(state, injections[rounds + 1])
    if final_idle:
        state = apply_idle_round_noise(state, noise, rng)
    idx, par = final_measurement(state, noise, rng)
    return ShotRecord(shot, True, tuple(syndromes), idx, par["ziz"], par["izz"], par["zii"], par["zp"])


def run_qec(prep: LogicalPrep, rounds: int, feedback: bool, shots: int, noise: NoiseModel,
            seed: int, backend: Backend = Backend.PURE, injector: Injector | None = None,
            final_idle: bool = True, start: int = 0) -> list[ShotRecord]:
    """Simulate ``shots`` repetitions; unheralded shots carry no quantum payload.

    Shot ``start + k`` uses streams derived from (seed, experiment tag, shot),
    so ``start`` lets workers produce disjoint slices of one run.
    """
    if rounds < 0:
        raise ValueError("rounds must be >= 0")
    if shots <= 0:
        raise ValueError("shots must be positive")
    tag = experiment_tag(prep, rounds, feedback)
    mask = herald_mask(seed, tag, start, shots, noise.herald_prob)
    records = []
    for k in range(shots):
        n = start + k
        if not mask[k]:
            records.append(ShotRecord(n, False))
            continue
        records.append(run_shot(prep, rounds, feedback, noise, shot_rng(seed, tag, n), backend,
                                injector, final_idle, shot=n))
    return records


def experiment_tag(prep: LogicalPrep, rounds: int, feedback: bool) -> tuple:
    return (2, ("zero", "one", "plus").index(prep.kind), int(rounds), int(bool(feedback)))


# -- statistics over records --------------------------------------------------------

def heralded(records: Iterable[ShotRecord]) -> list[ShotRecord]:
    return [r for r in records if r.heralded]


def outcome_counts(records: Iterable[ShotRecord]) -> np.ndarray:
    counts = np.zeros(16, dtype=np.int64)
    for r in records:
        if r.heralded:
            counts[r.final_outcome] += 1
    return counts


def parity_means(records: Sequence[ShotRecord], rounds: int) -> np.ndarray:
    """Mean reported (ZIZ, IZZ) per round, shape (rounds, 2)."""
    her = heralded(records)
    out = np.zeros((rounds, 2))
    if not her:
        return out
    for r in her:
        for s in r.syndromes:
            out[s.round - 1] += (s.ziz, s.izz)
    return out / len(her)


@dataclass(frozen=True)
class PostSelection:
    selected: float
    selected_sigma: float
    unselected: float
    unselected_sigma: float
    n_selected: int
    n_total: int
    improvement_sigma: float

    @property
    def improvement(self) -> float:
        return self.selected - self.unselected


def post_select_no_error(records: Iterable[ShotRecord]) -> PostSelection:
    """<Z_L Z_p> on shots whose final ZIZ and IZZ both read +1, and on all shots."""
    her = heralded(records)
    if not her:
        raise ValueError("no heralded records")
    vals = np.array([r.final_zii * r.final_zp for r in her], dtype=float)
    keep = np.array([r.final_ziz == 1 and r.final_izz == 1 for r in her])
    if not keep.any():
        raise ValueError("post-selection left no records")
    n, ns = len(vals), int(keep.sum())
    sel, uns = vals[keep].mean(), vals.mean()
    diff_sigma = _improvement_sigma(vals, keep)
    return PostSelection(float(sel), _mean_sigma(vals[keep]), float(uns), _mean_sigma(vals),
                         ns, n, diff_sigma)


def _mean_sigma(v: np.ndarray) -> float:
    m = v.mean()
    return float(math.sqrt(max(1 - m * m, 0.0) / len(v)))


def _improvement_sigma(vals: np.ndarray, keep: np.ndarray) -> float:
    """Delta-method sigma of mean(v[keep]) - mean(v); the two means share shots."""
    f = keep.mean()
    if f in (0.0, 1.0):
        return 0.0
    infl = keep * (vals - vals[keep].mean()) / f - (vals - vals.mean())
    return float(np.sqrt(np.mean(infl ** 2) / len(vals)))


# -- exact density-matrix reference ------------------------------------------------

@dataclass
class ExactQEC:
    distribution: np.ndarray  # reported 16-outcome probabilities
    parity_means: np.ndarray  # expected reported (ZIZ, IZZ) per round
    zlzp_selected: float
    zlzp_unselected: float


def _project(state, bit: int) -> QuantumState:
    return apply_unitary(state, P0 if bit == 0 else P1, [ELECTRON], check=False)


def _exact_parity(state, check: str, noise: NoiseModel) -> dict:
    """Unnormalized post-reset states keyed by reported parity (+1 / -1)."""
    state = map_carbon_parity(state, CHECKS[check], noise)
    conf = noise.confusion.matrix
    proj = [reset_electron(_project(state, t), noise) for t in (0, 1)]
    out = {}
    for rep_bit, parity in ((1, 1), (0, -1)):
        data = conf[rep_bit, 0] * proj[0].data + conf[rep_bit, 1] * proj[1].data
        out[parity] = QuantumState(Backend.DENSITY, state.n, data)
    return out


def qec_exact(prep: LogicalPrep, rounds: int, feedback: bool, noise: NoiseModel,
              final_idle: bool = True) -> ExactQEC:
    """Exact reported-outcome distribution by enumerating syndrome branches.

    Feedback depends only on the current round, so the branches are merged
    after each correction step.
    """
    return qec_exact_sweep(prep, rounds, feedback, noise, final_idle)[-1]


def qec_exact_sweep(prep: LogicalPrep, max_rounds: int, feedback: bool, noise: NoiseModel,
                    final_idle: bool = True) -> list[ExactQEC]:
    """``qec_exact`` for every M in 0..max_rounds from one pass over the rounds."""
    if max_rounds < 0:
        raise ValueError("rounds must be >= 0")
    state, _ = prepare_logical(prep, noise, Backend.DENSITY)
    means = np.zeros((max_rounds, 2))
    out = [_exact_final(state, means[:0], noise, final_idle)]
    for r in range(max_rounds):
        state = apply_idle_round_noise(state, noise)
        merged = np.zeros_like(state.data)
        for ziz, s1 in _exact_parity(state, "ZIZ", noise).items():
            means[r, 0] += ziz * np.trace(s1.data).real
            for izz, s2 in _exact_parity(s1, "IZZ", noise).items():
                means[r, 1] += izz * np.trace(s2.data).real
                action = decode(ziz, izz) if feedback else Action.NONE
                if action.carbon is not None:
                    s2 = flip(s2, action.carbon, noise)
                merged += s2.data
        state = QuantumState(Backend.DENSITY, N_QUBITS, merged)
        out.append(_exact_final(state, means[:r + 1].copy(), noise, final_idle))
    return out


def _exact_final(state, means, noise: NoiseModel, final_idle: bool) -> ExactQEC:
    if final_idle:
        state = apply_idle_round_noise(state, noise)
    dist = np.zeros(16)
    q_bin = noise.bin_overlap_error
    b = noise.background_error
    for ziz, s1 in _exact_parity(state, "ZIZ", noise).items():
        for izz, s2 in _exact_parity(s1, "IZZ", noise).items():
            for zii, s3 in _exact_parity(s2, "ZII", noise).items():
                probs = s3.probabilities().reshape(2, -1).sum(axis=1)  # photon early / late
                probs = (1 - q_bin) * probs + q_bin * probs[::-1]
                probs = (1 - b) * probs + b * probs.sum() / 2
                for j, zp in enumerate((1, -1)):
                    dist[outcome_index(zii, ziz, izz, zp)] += probs[j]
    sel, uns = _zlzp_from_distribution(dist)
    return ExactQEC(dist, means, sel, uns)


def _zlzp_from_distribution(dist: np.ndarray) -> tuple[float, float]:
    vals = np.zeros(16)
    keep = np.zeros(16, dtype=bool)
    for idx in range(16):
        i1, i2, i3, j = index_bits(idx)
        vals[idx] = (1 - 2 * i1) * (1 - 2 * j)
        keep[idx] = i1 == i3 and i2 == i3
    uns = float((vals * dist).sum())
    sel = float((vals * dist)[keep].sum() / dist[keep].sum()) if dist[keep].sum() > 0 else math.nan
    return sel, uns


# -- record files -------------------------------------------------------------------

RECORD_SCHEMA = "nvqnode.shots/1"
_ACTIONS = list(Action)


def record_to_json(r: ShotRecord) -> dict:
    if not r.heralded:
        return {"shot": r.shot, "heralded": False}
    return {
        "shot": r.shot,
        "heralded": True,
        "syndromes": [[s.round, s.ziz, s.izz, s.action.value, int(s.feedback_applied)]
                      for s in r.syndromes],
        "final": [r.final_outcome, r.final_ziz, r.final_izz, r.final_zii, r.final_zp],
    }


def record_from_json(d: dict) -> ShotRecord:
    if not d["heralded"]:
        return ShotRecord(d["shot"], False)
    syn = tuple(SyndromeRecord(a, b, c, Action(act), bool(fb)) for a, b, c, act, fb in d["syndromes"])
    idx, ziz, izz, zii, zp = d["final"]
    return ShotRecord(d["shot"], True, syn, idx, ziz, izz, zii, zp)


def write_records(path, records: Iterable[ShotRecord], header: dict) -> None:
    with open(path, "w") as fh:
        fh.write(json.dumps({"schema": RECORD_SCHEMA, **header}, sort_keys=True) + "\n")
        for r in records:
            fh.write(json.dumps(record_to_json(r), separators=(",", ":")) + "\n")


def read_records(path) -> tuple[dict, list[ShotRecord]]:
    with open(path) as fh:
        header = json.loads(fh.readline())
        if header.get("schema") != RECORD_SCHEMA:
            raise ValueError(f"unsupported record schema {header.get('schema')!r}")
        return header, [record_from_json(json.loads(line)) for line in fh if line.strip()]


_MAGIC = b"NVQS"
_REC = struct.Struct("<IBH")
_SYN = struct.Struct("<HbbB")
_FIN = struct.Struct("<Bbbbb")


def encode_binary(records: Sequence[ShotRecord], header: dict) -> bytes:
    head = json.dumps({"schema": RECORD_SCHEMA, **header}, sort_keys=True).encode()
    parts = [_MAGIC, struct.pack("<HI", 1, len(head)), head, struct.pack("<I", len(records))]
    for r in records:
        parts.append(_REC.pack(r.shot, int(r.heralded), len(r.syndromes)))
        for s in r.syndromes:
            parts.append(_SYN.pack(s.round, s.ziz, s.izz,
                                   (_ACTIONS.index(s.action) << 1) | int(s.feedback_applied)))
        if r.heralded:
            parts.append(_FIN.pack(r.final_outcome, r.final_ziz, r.final_izz, r.final_zii, r.final_zp))
    return b"".join(parts)


def decode_binary(blob: bytes) -> tuple[dict, list[ShotRecord]]:
    if blob[:4] != _MAGIC:
        raise ValueError("not a shot-record binary file")
    version, hlen = struct.unpack_from("<HI", blob, 4)
    if version != 1:
        raise ValueError(f"unsupported binary version {version}")
    pos = 10
    header = json.loads(blob[pos:pos + hlen])
    pos += hlen
    (count,) = struct.unpack_from("<I", blob, pos)
    pos += 4
    records = []
    for _ in range(count):
        shot, her, nsyn = _REC.unpack_from(blob, pos)
        pos += _REC.size
        syn = []
        for _ in range(nsyn):
            rnd, ziz, izz, packed = _SYN.unpack_from(blob, pos)
            pos += _SYN.size
            syn.append(SyndromeRecord(rnd, ziz, izz, _ACTIONS[packed >> 1], bool(packed & 1)))
        if her:
            fin = _FIN.unpack_from(blob, pos)
            pos += _FIN.size
            records.append(ShotRecord(shot, True, tuple(syn), *fin))
        else:
            records.append(ShotRecord(shot, False))
    return header, records
