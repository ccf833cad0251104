"""Experiment orchestration shared by the command line and the acceptance suite."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .analysis import FitResult, PopulationVector, fit_exponential
from .core import Backend
from .ghz import (
    CoincidenceTable, JointBasis, WitnessResult, estimate_witness, expected_table, measure_joint,
)
from .noise import NoiseModel
from .qec import (
    LogicalPrep, PostSelection, ShotRecord, heralded, mitigated_population, outcome_counts,
    parity_means, post_select_no_error, qec_exact_sweep, run_qec,
)

PREPS = {"zero": LogicalPrep.zero, "one": LogicalPrep.one, "plus": LogicalPrep.plus}


# -- GHZ witness --------------------------------------------------------------------

def run_witness(shots: int, noise: NoiseModel, seed: int, exact: bool = False,
                workers: int = 1) -> tuple[dict, WitnessResult]:
    """Coincidence tables for all three bases (``shots`` per basis) and the bound."""
    tables = {}
    for basis in JointBasis:
        if exact:
            tables[basis] = expected_table(basis, noise, shots)
        else:
            tables[basis] = _split(measure_joint, basis, shots, noise, seed, workers)
    return tables, estimate_witness(tables)


def _split(fn, basis, shots, noise, seed, workers) -> CoincidenceTable:
    if workers <= 1 or shots < 2 * workers:
        return fn(basis, shots, noise, seed)
    # split on even boundaries so each variant keeps its shot indices
    per_variant = shots // 2
    bounds = np.linspace(0, per_variant, workers + 1).astype(int)
    with ProcessPoolExecutor(workers) as pool:
        futs = [pool.submit(fn, basis, 2 * (b - a), noise, seed, Backend.PURE, int(a))
                for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
        parts = [f.result() for f in futs]
    table = parts[0]
    for p in parts[1:]:
        table = table.merge(p)
    return table


# -- repetition-code sweeps ---------------------------------------------------------

@dataclass
class SweepPoint:
    prep: str
    feedback: bool
    rounds: int
    t_ms: float
    shots: int
    n_heralded: int
    raw: PopulationVector
    mitigated: PopulationVector
    parity: np.ndarray
    post: PostSelection | None
    records: list = field(default_factory=list, repr=False)

    @property
    def fidelity(self) -> float:
        """Mitigated population of the prepared product state (nan for plus)."""
        idx = PREPS[self.prep]().target_index
        return math.nan if idx is None else float(self.mitigated.probs[idx])

    @property
    def fidelity_sigma(self) -> float:
        idx = PREPS[self.prep]().target_index
        if idx is None or self.mitigated.sigma is None:
            return math.nan
        return float(self.mitigated.sigma[idx])


def qec_point(prep: str, rounds: int, feedback: bool, shots: int, noise: NoiseModel,
              seed: int, injector=None, final_idle: bool = True, workers: int = 1,
              keep_records: bool = False) -> SweepPoint:
    lp = PREPS[prep]()
    if workers > 1 and shots >= 2 * workers:
        bounds = np.linspace(0, shots, workers + 1).astype(int)
        with ProcessPoolExecutor(workers) as pool:
            futs = [pool.submit(run_qec, lp, rounds, feedback, int(b - a), noise, seed,
                                Backend.PURE, injector, final_idle, int(a))
                    for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
            records = [r for f in futs for r in f.result()]
    else:
        records = run_qec(lp, rounds, feedback, shots, noise, seed, Backend.PURE, injector, final_idle)
    return summarize(prep, rounds, feedback, records, noise, keep_records)


def summarize(prep: str, rounds: int, feedback: bool, records: list[ShotRecord],
              noise: NoiseModel, keep_records: bool = False) -> SweepPoint:
    her = heralded(records)
    counts = outcome_counts(her)
    if not her:
        raise ValueError(f"no heralded shots for prep={prep} M={rounds}")
    raw = PopulationVector.from_counts(counts)
    post = post_select_no_error(her) if any(r.final_ziz == 1 and r.final_izz == 1 for r in her) else None
    return SweepPoint(prep, feedback, rounds, rounds * noise.round_duration_ms, len(records), len(her),
                      raw, mitigated_population(raw, noise), parity_means(her, rounds), post,
                      records if keep_records else [])


def exact_point(prep: str, rounds: int, feedback: bool, noise: NoiseModel,
                final_idle: bool = True) -> list[SweepPoint]:
    """Exact points for M = 0..rounds (one pass)."""
    out = []
    for m, ex in enumerate(qec_exact_sweep(PREPS[prep](), rounds, feedback, noise, final_idle)):
        raw = PopulationVector(ex.distribution)
        sel, uns = ex.zlzp_selected, ex.zlzp_unselected
        post = PostSelection(sel, 0.0, uns, 0.0, 0, 0, 0.0)
        out.append(SweepPoint(prep, feedback, m, m * noise.round_duration_ms, 0, 0, raw,
                              mitigated_population(raw, noise), ex.parity_means, post))
    return out


def run_sweep(prep: str, rounds_list, feedbacks, shots: int, noise: NoiseModel, seed: int,
              exact: bool = False, workers: int = 1, keep_records: bool = False) -> list[SweepPoint]:
    points = []
    for fb in feedbacks:
        if exact:
            ex = exact_point(prep, max(rounds_list), fb, noise)
            points += [ex[m] for m in rounds_list]
            continue
        for m in rounds_list:
            points.append(qec_point(prep, m, fb, shots, noise, seed, workers=workers,
                                    keep_records=keep_records))
    return points


def fit_sweep(points: list[SweepPoint], feedback: bool, weighted: bool = True,
              n_boot: int = 1000, seed: int = 0) -> FitResult:
    """Decay fit of the mitigated fidelity versus time for one feedback mode."""
    sel = sorted((p for p in points if p.feedback == feedback), key=lambda p: p.rounds)
    if weighted and any(not p.fidelity_sigma > 0 for p in sel):
        weighted = False
    pts = [(p.t_ms, p.fidelity, p.fidelity_sigma if weighted else 1.0) for p in sel]
    return fit_exponential(pts, weighted=weighted, n_boot=n_boot, seed=seed)
