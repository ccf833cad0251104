"""Electron-nuclear-photon GHZ generation and its stabilizer-witness fidelity bound."""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import Backend, H, PauliString, QuantumState, apply_unitary, measure_projective
from .node import (
    C1, ELECTRON, N_QUBITS, PHOTON, GateSpec, _noise, flip, map_electron_carbon_xx,
    map_electron_carbon_zz, new_register, run_gates,
)
from .noise import NoiseModel
from .sampling import herald_mask, shot_rng

UNFLIPPED, FLIPPED = 0, 1
VARIANTS = ("unflipped", "flipped")

# (|0>_e|0>_c|l>_p + |1>_e|1>_c|e>_p)/sqrt(2); bits (e, c1, p) little-endian
IDEAL_GHZ = np.zeros(2 ** N_QUBITS, dtype=complex)
IDEAL_GHZ[(0 << ELECTRON) | (0 << C1) | (1 << PHOTON)] = 1 / math.sqrt(2)
IDEAL_GHZ[(1 << ELECTRON) | (1 << C1) | (0 << PHOTON)] = 1 / math.sqrt(2)


class JointBasis(enum.Enum):
    ZeIcZp = "ZeIcZp"
    ZeZcIp = "ZeZcIp"
    XeXcXp = "XeXcXp"

    @property
    def photon_basis(self) -> str:
        return "X" if self is JointBasis.XeXcXp else "Z"

    @property
    def pauli(self) -> PauliString:
        ops = {JointBasis.ZeIcZp: dict(q0="Z", q4="Z"),
               JointBasis.ZeZcIp: dict(q0="Z", q1="Z"),
               JointBasis.XeXcXp: dict(q0="X", q1="X", q4="X")}[self]
        return PauliString.on(N_QUBITS, **ops)

    @property
    def witness_sign(self) -> int:
        # the witness uses <-Z_e I_c Z_p>
        return -1 if self is JointBasis.ZeIcZp else 1

    def uses_photon(self) -> bool:
        return self is not JointBasis.ZeZcIp

    def mapping_sequence(self, state, noise, rng=None):
        """Map the spin part of the observable onto the electron, +1 -> |0>_e (bright)."""
        if self is JointBasis.ZeZcIp:
            return map_electron_carbon_zz(state, C1, noise, rng)
        if self is JointBasis.XeXcXp:
            return map_electron_carbon_xx(state, C1, noise, rng)
        return state


def build_ghz_circuit() -> list[GateSpec]:
    """Pulse sequence from |0>_e|0>_c to (|00 l> + |11 e>)/sqrt(2).

    The spins end in (|1>_e|0>_c + |0>_e|1>_c)/sqrt(2) before emission; the
    microwave pi pulse between the two optical pulses is not undone, which
    puts the early photon on the |1>_e branch.
    """
    return [
        GateSpec("MwRot", axis="Y", angle=math.pi / 2),
        GateSpec("CondNucRot", (C1,)),
        GateSpec("NucRot", (C1,), axis="X", angle=math.pi / 2),
        GateSpec("MwRot", axis="Z", angle=-math.pi / 2),
        GateSpec("OpticalPiEmit"),
        GateSpec("MwRot", axis="X", angle=math.pi),
    ]


def prepare_ghz(noise: NoiseModel, backend: Backend = Backend.PURE, rng=None):
    state, _ = run_gates(new_register(backend), build_ghz_circuit(), noise, rng)
    return state


# -- photon detection ----------------------------------------------------------

_Z_P = PauliString.on(N_QUBITS, q4="Z")


def _photon_classical_error(outcome: int, noise: NoiseModel, rng, z_basis: bool) -> int:
    if z_basis and noise.bin_overlap_error > 0 and rng.random() < noise.bin_overlap_error:
        outcome = -outcome
    if noise.background_error > 0 and rng.random() < noise.background_error:
        outcome = 1 if rng.random() < 0.5 else -1
    return outcome


def _mzi_dephase(state, noise, rng=None):
    # interference contrast v scales X-type correlations by v
    return _noise(state, "phase", (1 - noise.mzi_visibility) / 2, [PHOTON], rng)


def mzi_photon_x_measurement(state, noise: NoiseModel, rng) -> tuple[int, QuantumState]:
    """X-basis time-bin measurement through an imbalanced interferometer."""
    state = _mzi_dephase(state, noise, rng)
    state = apply_unitary(state, H, [PHOTON], check=False)
    outcome, post = measure_projective(state, _Z_P, rng)
    return _photon_classical_error(outcome, noise, rng, z_basis=False), post


def photon_z_measurement(state, noise: NoiseModel, rng) -> tuple[int, QuantumState]:
    """Time-resolved detection: +1 early bin, -1 late bin."""
    outcome, post = measure_projective(state, _Z_P, rng)
    return _photon_classical_error(outcome, noise, rng, z_basis=True), post


# -- coincidence statistics -----------------------------------------------------

@dataclass
class CoincidenceTable:
    """Counts indexed by [variant, reported electron bit, photon outcome].

    Photon outcome index 0 is Z_p/X_p = +1 (early bin), index 1 is -1.
    Reported electron bit 0 is bright.
    """

    basis: JointBasis
    counts: np.ndarray = field(default_factory=lambda: np.zeros((2, 2, 2)))
    shots: np.ndarray = field(default_factory=lambda: np.zeros(2, dtype=np.int64))
    warnings: list = field(default_factory=list)

    @property
    def heralded(self) -> np.ndarray:
        return self.counts.sum(axis=(1, 2))

    def merge(self, other: "CoincidenceTable") -> "CoincidenceTable":
        if other.basis is not self.basis:
            raise ValueError("cannot merge tables of different bases")
        return CoincidenceTable(self.basis, self.counts + other.counts, self.shots + other.shots,
                                self.warnings + other.warnings)

    def populations(self, variant: int) -> np.ndarray:
        """Per-variant normalized (reported bit, photon) populations."""
        c = self.counts[variant]
        tot = c.sum()
        return c / tot if tot > 0 else np.zeros_like(c)

    def spin_photon_populations(self) -> tuple[np.ndarray, float]:
        """Populations of (mapped electron value s, photon) from bright coincidences.

        A coincidence needs a fluorescence photon, so only bright reports count.
        Value s = 0 is bright in the unflipped run and s = 1 in the flipped run;
        each run's bright counts are normalized by its heralded shots.
        """
        her = self.heralded
        if np.any(her <= 0):
            raise ValueError(f"{self.basis.value}: a run variant has zero heralded shots")
        rates = np.stack([self.counts[UNFLIPPED, 0] / her[UNFLIPPED],
                          self.counts[FLIPPED, 0] / her[FLIPPED]])
        n_coinc = float(self.counts[UNFLIPPED, 0].sum() + self.counts[FLIPPED, 0].sum())
        total = rates.sum()
        if total <= 0:
            raise ValueError(f"{self.basis.value}: no coincidence counts")
        return rates / total, n_coinc

    def variant_expectation(self, variant: int) -> float:
        """Expectation from all reported bits of one run, undoing the flip."""
        pop = self.populations(variant)
        sign = _value_signs(self.basis)
        if variant == FLIPPED:
            sign = -sign
        return float(self.basis.witness_sign * (pop * sign).sum())


def _value_signs(basis: JointBasis) -> np.ndarray:
    s = np.array([1.0, -1.0])
    if basis.uses_photon():
        return np.outer(s, s)
    return np.outer(s, np.ones(2))


def measure_joint(basis: JointBasis, shots: int, noise: NoiseModel, seed: int,
                  backend: Backend = Backend.PURE, start: int = 0) -> CoincidenceTable:
    """Sample ``shots`` repetitions split evenly over the unflipped/flipped runs.

    ``start`` offsets the shot counter so partial tables from workers merge
    into the same result as one big run.
    """
    if shots <= 0:
        raise ValueError("shots must be positive")
    table = CoincidenceTable(basis)
    per_variant = shots // 2
    if shots % 2:
        msg = f"{basis.value}: odd shot count {shots}, using {per_variant} per variant"
        table.warnings.append(msg)
        warnings.warn(msg, stacklevel=2)
    basis_idx = list(JointBasis).index(basis)
    for variant in (UNFLIPPED, FLIPPED):
        tag = (1, basis_idx, variant)
        mask = herald_mask(seed, tag, start, per_variant, noise.herald_prob)
        table.shots[variant] += per_variant
        for k in np.flatnonzero(mask):
            rng = shot_rng(seed, tag, start + int(k))
            bit, ph = _joint_shot(basis, variant, noise, backend, rng)
            table.counts[variant, bit, ph] += 1
    return table


def _joint_shot(basis, variant, noise, backend, rng) -> tuple[int, int]:
    from .node import fluorescence_readout

    state = prepare_ghz(noise, backend, rng)
    state = basis.mapping_sequence(state, noise, rng)
    if variant == FLIPPED:
        state = flip(state, ELECTRON, noise, rng)
    bit, state = fluorescence_readout(state, noise, rng)
    if basis.photon_basis == "X":
        out, _ = mzi_photon_x_measurement(state, noise, rng)
    else:
        out, _ = photon_z_measurement(state, noise, rng)
    return bit, 0 if out == 1 else 1


def expected_table(basis: JointBasis, noise: NoiseModel, shots: int = 1) -> CoincidenceTable:
    """Exact expected counts on the density-matrix backend (``shots`` per variant pair)."""
    table = CoincidenceTable(basis)
    per_variant = shots / 2 if shots > 1 else 1.0
    conf = noise.confusion.matrix
    for variant in (UNFLIPPED, FLIPPED):
        state = prepare_ghz(noise, Backend.DENSITY)
        state = basis.mapping_sequence(state, noise)
        if variant == FLIPPED:
            state = flip(state, ELECTRON, noise)
        if basis.photon_basis == "X":
            state = _mzi_dephase(state, noise)
            state = apply_unitary(state, H, [PHOTON], check=False)
        probs = state.probabilities().reshape([2] * N_QUBITS)
        # axes are qubits 4..0; keep photon (axis 0) and electron (axis 4)
        joint = probs.sum(axis=(1, 2, 3)).T  # [electron true bit, photon bit]
        joint = _expected_photon_errors(joint, noise, basis.photon_basis == "Z")
        reported = conf @ np.clip(joint, 0.0, None)
        table.counts[variant] = reported * per_variant * noise.herald_prob
        table.shots[variant] = int(per_variant)
    return table


def _expected_photon_errors(joint: np.ndarray, noise: NoiseModel, z_basis: bool) -> np.ndarray:
    if z_basis and noise.bin_overlap_error > 0:
        q = noise.bin_overlap_error
        joint = (1 - q) * joint + q * joint[:, ::-1]
    if noise.background_error > 0:
        b = noise.background_error
        joint = (1 - b) * joint + b * joint.sum(axis=1, keepdims=True) / 2
    return joint


# -- witness --------------------------------------------------------------------

@dataclass(frozen=True)
class WitnessResult:
    e1: float
    e2: float
    e3: float
    f_lb: float
    sigma_e1: float
    sigma_e2: float
    sigma_e3: float
    sigma_f_lb: float

    def as_dict(self) -> dict:
        return dict(e1=self.e1, e2=self.e2, e3=self.e3, f_lb=self.f_lb,
                    sigma_e1=self.sigma_e1, sigma_e2=self.sigma_e2,
                    sigma_e3=self.sigma_e3, sigma_f_lb=self.sigma_f_lb)


def witness_bound(e1: float, e2: float, e3: float) -> float:
    return (e1 + e2 + e3 - 1) / 2


def witness_from_values(e1, e2, e3, sigmas=(0.0, 0.0, 0.0)) -> WitnessResult:
    for e in (e1, e2, e3):
        if abs(e) > 1 + 1e-12:
            raise ValueError(f"expectation value {e} outside [-1, 1]")
    s1, s2, s3 = sigmas
    return WitnessResult(e1, e2, e3, witness_bound(e1, e2, e3), s1, s2, s3,
                         0.5 * math.sqrt(s1 ** 2 + s2 ** 2 + s3 ** 2))


def basis_expectation(table: CoincidenceTable) -> tuple[float, float]:
    """Witness-signed expectation and its normal-approximation binomial sigma."""
    pop, n = table.spin_photon_populations()
    e = float(table.basis.witness_sign * (pop * _value_signs(table.basis)).sum())
    sigma = math.sqrt(max(1 - e * e, 0.0) / n) if n > 0 else math.inf
    return e, sigma


def estimate_witness(tables: dict, bootstrap: int = 0, seed: int = 0) -> WitnessResult:
    """Fidelity lower bound from the three joint-basis tables.

    With ``bootstrap`` > 0 the per-term sigmas come from that many multinomial
    resamples of each run's counts instead of the binomial formula.
    """
    missing = [b.value for b in JointBasis if b not in tables]
    if missing:
        raise ValueError(f"missing bases: {', '.join(missing)}")
    values, sigmas = [], []
    for i, basis in enumerate(JointBasis):
        e, s = basis_expectation(tables[basis])
        if bootstrap:
            s = _bootstrap_sigma(tables[basis], bootstrap, seed + i)
        values.append(e)
        sigmas.append(s)
    return witness_from_values(*values, sigmas=sigmas)


def _bootstrap_sigma(table: CoincidenceTable, resamples: int, seed: int) -> float:
    rng = np.random.default_rng(seed)
    her = table.heralded.astype(np.int64)
    draws = []
    for v in (UNFLIPPED, FLIPPED):
        p = table.counts[v].reshape(-1) / her[v]
        draws.append(rng.multinomial(her[v], p, size=resamples).reshape(resamples, 2, 2))
    out = []
    for r in range(resamples):
        t = CoincidenceTable(table.basis, np.stack([draws[0][r], draws[1][r]]).astype(float))
        try:
            out.append(basis_expectation(t)[0])
        except ValueError:
            continue
    return float(np.std(out, ddof=1))


# -- report file ------------------------------------------------------------------

REPORT_SCHEMA = "nvqnode.ghz_report/1"
REPORT_COLUMNS = ("record", "basis", "variant", "electron_bit", "photon", "count", "value", "sigma")


def report_rows(tables: dict, result: WitnessResult) -> list[tuple]:
    rows = []
    for basis in JointBasis:
        t = tables[basis]
        for v in (UNFLIPPED, FLIPPED):
            pop = t.populations(v)
            n = t.counts[v].sum()
            for bit in (0, 1):
                for ph in (0, 1):
                    p = pop[bit, ph]
                    sig = math.sqrt(max(p * (1 - p), 0.0) / n) if n > 0 else 0.0
                    rows.append(("count", basis.value, VARIANTS[v], bit, "+1" if ph == 0 else "-1",
                                 _fmt(t.counts[v, bit, ph]), _fmt(p), _fmt(sig)))
    d = result.as_dict()
    for key in ("e1", "e2", "e3", "f_lb"):
        rows.append(("summary", key, "-", "-", "-", "-", _fmt(d[key]), _fmt(d["sigma_" + key])))
    return rows


def _fmt(x) -> str:
    x = float(x)
    if x.is_integer() and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def write_report(path, tables: dict, result: WitnessResult, header: list[str]) -> None:
    lines = [f"# schema: {REPORT_SCHEMA}"] + [f"# {h}" for h in header]
    lines.append("\t".join(REPORT_COLUMNS))
    lines += ["\t".join(str(c) for c in row) for row in report_rows(tables, result)]
    Path(path).write_text("\n".join(lines) + "\n")
