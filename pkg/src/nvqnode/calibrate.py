"""Fit the unpublished microscopic error rates to quoted node observables.

Every observable is computed exactly on the density-matrix backend, so the
search is deterministic.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
from scipy.optimize import least_squares

from .core import Backend, expectation, PauliString
from .analysis import PopulationVector, fit_exponential
from .ghz import JointBasis, basis_expectation, expected_table
from .node import (
    C1, C2, C3, ELECTRON, N_QUBITS, mw_rotation, map_carbon_parity, new_register,
    reset_electron, swap_gate,
)
from .noise import NoiseModel, load_noise
from .qec import CHECKS, LogicalPrep, mitigated_population, qec_exact_sweep

DEFAULT_NOISE_RESOURCE = "calibrated_noise.toml"


@dataclass(frozen=True)
class Target:
    name: str
    value: float
    sigma: float


WITNESS_TARGETS = (
    Target("e1", 0.97, 0.01),
    Target("e2", 0.88, 0.02),
    Target("e3", 0.82, 0.05),
    Target("parity_ziz", 0.85, 0.01),
    Target("parity_izz", 0.84, 0.01),
)
LIFETIME_TARGETS = (
    Target("t1l_open_ms", 20.0, 5.0),
    Target("t1l_feedback_ms", 31.0, 10.0),
    Target("pf_open", 0.18, 0.04),
    Target("pf_feedback", 0.23, 0.07),
)

FIT_PARAMS = ("p_gate_e", "p_gate_ec", "mzi_visibility")
LIFETIME_PARAMS = ("p_flip_round",)
_BOUNDS = {
    "p_gate_e": (0.0, 0.2),
    "p_gate_ec": (0.0, 0.3),
    "mzi_visibility": (0.5, 1.0),
    "p_flip_round": (0.0, 0.2),
    "p_phase_round": (0.0, 0.5),
    "ec_nuclear_share": (0.0, 1.0),
}


def shipped_noise() -> NoiseModel:
    """The calibrated noise model distributed with the package."""
    ref = resources.files("nvqnode").joinpath("data", DEFAULT_NOISE_RESOURCE)
    with resources.as_file(ref) as path:
        return load_noise(path)


# -- exact observables ------------------------------------------------------------

def witness_values(noise: NoiseModel) -> tuple[float, float, float]:
    """Expected (e1, e2, e3) in the infinite-shot limit."""
    return tuple(basis_expectation(expected_table(b, noise, shots=1))[0] for b in JointBasis)


def prepare_carbon_basis(bits, noise: NoiseModel, rng=None, backend=Backend.DENSITY):
    """|b1 b2 b3>_c by preparing each value on the electron and swapping it in."""
    state = new_register(backend)
    for c, b in zip((C1, C2, C3), bits):
        if b:
            state = mw_rotation(state, "X", math.pi, noise, rng)
        state = swap_gate(state, ELECTRON, c, noise, rng)
        state = reset_electron(state, noise, rng)
    return state


_Z_E = PauliString.on(N_QUBITS, q0="Z")


def parity_fidelity(noise: NoiseModel, check: str) -> float:
    """Mean probability of mapping the right parity over the 8 carbon basis states.

    Fluorescence detection is treated as ideal.
    """
    carbons = CHECKS[check]
    total = 0.0
    for k in range(8):
        bits = [(k >> j) & 1 for j in range(3)]
        state = prepare_carbon_basis(bits, noise)
        state = map_carbon_parity(state, carbons, noise)
        parity = (-1) ** sum(bits[c - C1] for c in carbons)
        # parity +1 maps to |1>_e, where <Z_e> = -1
        total += (1 - parity * expectation(state, _Z_E)) / 2
    return total / 8


def mitigated_fidelity_curve(noise: NoiseModel, feedback: bool, max_rounds: int = 12) -> np.ndarray:
    """Readout-mitigated fidelity to |0>_L|e>_p for M = 0..max_rounds."""
    sweep = qec_exact_sweep(LogicalPrep.zero(), max_rounds, feedback, noise)
    return np.array([mitigated_population(PopulationVector(s.distribution), noise).probs[0]
                     for s in sweep])


def decay_fits(noise: NoiseModel, max_rounds: int = 12) -> dict:
    """Unweighted decay fits of the exact open-loop and stabilized curves."""
    t = noise.round_duration_ms * np.arange(max_rounds + 1)
    out = {}
    for fb, label in ((False, "open"), (True, "feedback")):
        f = mitigated_fidelity_curve(noise, fb, max_rounds)
        r = fit_exponential(np.c_[t, f, np.ones_like(t)], weighted=False, n_boot=0)
        out[f"t1l_{label}_ms"] = r.t1l
        out[f"pf_{label}"] = r.p_f
    return out


def observables(noise: NoiseModel, lifetimes: bool = False, witness: bool = True) -> dict:
    obs = {}
    if witness:
        e1, e2, e3 = witness_values(noise)
        obs = dict(e1=e1, e2=e2, e3=e3, parity_ziz=parity_fidelity(noise, "ZIZ"),
                   parity_izz=parity_fidelity(noise, "IZZ"))
    if lifetimes:
        obs.update(decay_fits(noise))
    return obs


# -- search -----------------------------------------------------------------------

@dataclass
class CalibrationResult:
    noise: NoiseModel
    achieved: dict
    targets: tuple
    evaluations: int
    residuals: dict = field(init=False)

    def __post_init__(self):
        self.residuals = {t.name: self.achieved[t.name] - t.value for t in self.targets}

    @property
    def pulls(self) -> dict:
        return {t.name: self.residuals[t.name] / t.sigma for t in self.targets}

    @property
    def ok(self) -> bool:
        return all(abs(v) <= 1.0 for v in self.pulls.values())

    def summary_lines(self) -> list[str]:
        lines = []
        for t in self.targets:
            lines.append(f"{t.name}: target={t.value:g} sigma={t.sigma:g} "
                         f"achieved={self.achieved[t.name]:.6f} pull={self.pulls[t.name]:+.3f}")
        return lines


def _clip(name, v):
    lo, hi = _BOUNDS[name]
    return min(max(v, lo), hi)


def run_calibration(base: NoiseModel | None = None, targets=WITNESS_TARGETS,
                    params=FIT_PARAMS, grid: int = 4) -> CalibrationResult:
    """Grid search then bounded least squares over ``params``.

    Parameters not in ``params`` keep their values from ``base``.
    Lifetime targets switch on the exact M-sweep observables.
    """
    base = base or NoiseModel()
    names = {t.name for t in targets}
    lifetimes = bool(names & {t.name for t in LIFETIME_TARGETS})
    witness = bool(names & {t.name for t in WITNESS_TARGETS})
    evals = [0]

    def model(x):
        return base.replace(**{p: _clip(p, float(v)) for p, v in zip(params, x)})

    def resid(x):
        evals[0] += 1
        obs = observables(model(x), lifetimes, witness)
        return np.array([(obs[t.name] - t.value) / t.sigma for t in targets])

    lo = np.array([_BOUNDS[p][0] for p in params])
    hi = np.array([_BOUNDS[p][1] for p in params])
    x0 = np.array([_clip(p, getattr(base, p)) for p in params])
    best = (float(np.sum(resid(x0) ** 2)), x0)
    if grid > 1:
        axes = [np.linspace(lo[i] + (hi[i] - lo[i]) / (2 * grid), hi[i] - (hi[i] - lo[i]) / (2 * grid), grid)
                for i in range(len(params))]
        for pt in np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, len(params)):
            c = float(np.sum(resid(pt) ** 2))
            if c < best[0]:
                best = (c, pt)
    sol = least_squares(resid, best[1], bounds=(lo, hi), diff_step=1e-4, xtol=1e-10, ftol=1e-10)
    x = sol.x if sol.cost * 2 <= best[0] else best[1]
    noise = model(x)
    return CalibrationResult(noise, observables(noise, lifetimes, witness), tuple(targets), evals[0])


def calibrate_node(base: NoiseModel | None = None, lifetimes: bool = True,
                   grid: int = 4) -> tuple[NoiseModel, list[CalibrationResult]]:
    """Two-stage calibration.

    Stage one fits gate errors and interferometer visibility to the witness
    terms and parity-map fidelities. Stage two fits the per-round flip rate
    to the logical decay curves; it cannot disturb stage one, which involves
    no idle rounds.
    """
    first = run_calibration(base, WITNESS_TARGETS, FIT_PARAMS, grid)
    stages = [first]
    noise = first.noise
    if lifetimes:
        second = run_calibration(noise, LIFETIME_TARGETS, LIFETIME_PARAMS, grid)
        stages.append(second)
        noise = second.noise
    return noise, stages
