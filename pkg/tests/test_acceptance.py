"""Acceptance criteria 1-11, each at its stated tolerance.

Every test records one PASS/FAIL line that is echoed in the terminal summary.
All stochastic criteria use seed 2026, fixed before any of them was run.
"""
import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from nvqnode.analysis import PopulationVector, decay_model, fit_exponential, forward_confusion, mitigate_readout
from nvqnode.calibrate import WITNESS_TARGETS, run_calibration
from nvqnode.cli import main as cli_main
from nvqnode.core import (
    Backend, KrausChannel, QuantumState, apply_channel, apply_unitary, bit_flip, depolarizing,
    phase_flip,
)
from nvqnode.experiments import fit_sweep, qec_point, run_sweep, run_witness
from nvqnode.ghz import witness_from_values
from nvqnode.node import C1, C2, C3, flip, new_register
from nvqnode.noise import NoiseModel, save_noise
from nvqnode.qec import decode, final_layout, parity_round, single_x_injector
from oracle import z_string_expectation_from_probs

SEED = 2026
PAPER_CONFUSION = NoiseModel().confusion


def record(num: int, title: str, ok: bool, detail: str) -> None:
    line = f"criterion {num:2d} {'PASS' if ok else 'FAIL'} {title}: {detail}"
    ACCEPTANCE_LINES[f"{num:02d}"] = line
    print(line)


# -- 1 ---------------------------------------------------------------------------

def test_criterion_01_witness_identity():
    noise = NoiseModel.noiseless(herald_prob=0.01)
    t0 = time.perf_counter()
    _, exact = run_witness(100_000, noise, SEED, exact=True)
    _, traj = run_witness(100_000, noise, SEED)
    elapsed = time.perf_counter() - t0
    ex_err = max(abs(v - 1) for v in (exact.e1, exact.e2, exact.e3, exact.f_lb))
    terms = [(traj.e1, traj.sigma_e1), (traj.e2, traj.sigma_e2), (traj.e3, traj.sigma_e3),
             (traj.f_lb, traj.sigma_f_lb)]
    tr_ok = all(abs(v - 1) <= 4 * s + 1e-12 for v, s in terms)
    ok = ex_err <= 1e-10 and tr_ok and elapsed < 10
    record(1, "witness identity", ok,
           f"exact max|x-1|={ex_err:.1e}; trajectory e=({traj.e1:.6f}, {traj.e2:.6f}, {traj.e3:.6f}) "
           f"F_lb={traj.f_lb:.6f}; {elapsed:.1f} s")
    assert ok


# -- 2 ---------------------------------------------------------------------------

def test_criterion_02_quoted_value_arithmetic():
    r = witness_from_values(0.97, 0.88, 0.82)
    ok = r.f_lb == pytest.approx(0.835, abs=1e-12) and abs(r.f_lb - 0.84) <= 0.03
    record(2, "witness arithmetic", ok, f"F_lb={r.f_lb:.12f} (expected 0.835, window 0.84 +- 0.03)")
    assert ok


# -- 3 ---------------------------------------------------------------------------

def test_criterion_03_calibration_closure():
    t0 = time.perf_counter()
    cal = run_calibration(NoiseModel(), WITNESS_TARGETS)
    _, res = run_witness(100_000, cal.noise, SEED)
    elapsed = time.perf_counter() - t0
    pulls = ", ".join(f"{k}={v:+.2f}" for k, v in cal.pulls.items())
    ok = cal.ok and 0.81 <= res.f_lb <= 0.87 and elapsed < 300
    record(3, "calibration closure", ok,
           f"pulls {pulls}; sampled F_lb={res.f_lb:.4f}({res.sigma_f_lb:.4f}); {elapsed:.0f} s")
    assert ok


# -- 4 ---------------------------------------------------------------------------

def _carbon_bits(state) -> tuple:
    idx = int(np.argmax(state.probabilities()))
    assert state.probabilities()[idx] == pytest.approx(1)
    return tuple((idx >> c) & 1 for c in (C1, C2, C3))


def test_criterion_04_decoder_exhaustive():
    clean = NoiseModel.noiseless()
    rng = np.random.default_rng(SEED)
    t0 = time.perf_counter()
    good = 0
    for k in range(8):
        bits = [(k >> j) & 1 for j in range(3)]
        for err in (None, C1, C2, C3):
            state = new_register()
            for c, b in zip((C1, C2, C3), bits):
                if b:
                    state = flip(state, c, clean)
            if err is not None:
                state = flip(state, err, clean)
            before = _carbon_bits(state)
            ziz, state = parity_round(state, "ZIZ", clean, rng)
            izz, state = parity_round(state, "IZZ", clean, rng)
            action = decode(ziz, izz)
            if action.carbon is not None:
                state = flip(state, action.carbon, clean)
            after = _carbon_bits(state)
            nearest = (1, 1, 1) if sum(before) >= 2 else (0, 0, 0)
            good += after == nearest
    elapsed = time.perf_counter() - t0
    ok = good == 32 and elapsed < 1
    record(4, "decoder exhaustive", ok, f"{good}/32 restored; {elapsed:.2f} s")
    assert ok


# -- 5 ---------------------------------------------------------------------------

SHOTS_C5 = math.ceil(10_000 / 12)


def test_criterion_05_single_error_round_trip():
    clean = NoiseModel.noiseless()
    t0 = time.perf_counter()
    total = correct = 0
    for m in range(1, 13):
        p = qec_point("zero", m, True, SHOTS_C5, clean, SEED, injector=single_x_injector)
        counts = np.rint(p.raw.probs * p.n_heralded).astype(int)
        total += p.n_heralded
        correct += int(counts[0])
    elapsed = time.perf_counter() - t0
    ok = total >= 10_000 and correct == total and elapsed < 60
    record(5, "single-error round trip", ok, f"fidelity {correct}/{total}; {elapsed:.0f} s")
    assert ok


# -- 6, 7 ------------------------------------------------------------------------

SWEEP_SHOTS = 100_000


@pytest.fixture(scope="module")
def lifetime_sweep(shipped):
    t0 = time.perf_counter()
    pts = run_sweep("zero", list(range(13)), (True, False), SWEEP_SHOTS, shipped, SEED)
    fits = {fb: fit_sweep(pts, fb, n_boot=1000, seed=SEED) for fb in (True, False)}
    return pts, fits, time.perf_counter() - t0


@pytest.fixture(scope="module")
def detection_sweep(shipped):
    t0 = time.perf_counter()
    pts = run_sweep("plus", list(range(1, 13)), (True, False), SWEEP_SHOTS, shipped, SEED)
    return pts, time.perf_counter() - t0


def test_criterion_06_stabilized_vs_open_loop(lifetime_sweep):
    _, fits, elapsed = lifetime_sweep
    fb, op = fits[True], fits[False]
    ordered = fb.t1l > op.t1l
    separated = fb.ci_t1l[0] > op.ci_t1l[1]
    windows = 31 / 2 <= fb.t1l <= 31 * 2 and 20 / 2 <= op.t1l <= 20 * 2
    ok = ordered and separated and windows and elapsed < 900
    record(6, "stabilized vs open loop", ok,
           f"T1L feedback={fb.t1l:.2f} [{fb.ci_t1l[0]:.2f}, {fb.ci_t1l[1]:.2f}] ms, "
           f"open={op.t1l:.2f} [{op.ci_t1l[0]:.2f}, {op.ci_t1l[1]:.2f}] ms; ordered={ordered} "
           f"separated={separated} within-factor-2={windows}; {elapsed:.0f} s")
    assert ok


def test_criterion_07_error_detection_improvement(detection_sweep):
    pts, elapsed = detection_sweep
    z = {}
    for p in pts:
        ps = p.post
        z[(p.feedback, p.rounds)] = (ps.improvement, ps.improvement_sigma)
    each = {k: v[0] >= 3 * v[1] and v[0] >= 0 for k, v in z.items()}
    (d_open, s_open), (d_fb, s_fb) = z[(False, 12)], z[(True, 12)]
    gap = d_open - d_fb
    gap_sigma = math.hypot(s_open, s_fb)
    open_larger = gap >= 3 * gap_sigma
    ok = all(each.values()) and open_larger and elapsed < 900
    fmt = lambda fb: " ".join(f"{z[(fb, m)][0] / z[(fb, m)][1]:.1f}" if z[(fb, m)][1] > 0 else "inf"
                              for m in range(1, 13))
    record(7, "error-detection improvement", ok,
           f"{sum(each.values())}/24 points at >=3 sigma; z(feedback M=1..12)=[{fmt(True)}], "
           f"z(open)=[{fmt(False)}]; M=12 open-minus-feedback={gap:+.4f} ({gap / gap_sigma:+.1f} sigma); "
           f"{elapsed:.0f} s")
    assert ok


# -- 8 ---------------------------------------------------------------------------

def test_criterion_08_mitigation_round_trip():
    rng = np.random.default_rng(SEED)
    confs = [PAPER_CONFUSION] * 3 + [None]
    layout = final_layout()
    t0 = time.perf_counter()
    exact_err = 0.0
    worst_z = 0.0
    for _ in range(20):
        true = PopulationVector(rng.dirichlet(np.full(16, 0.5)))
        fwd = forward_confusion(true, confs, layout)
        exact_err = max(exact_err, float(np.max(np.abs(mitigate_readout(fwd, confs, layout).probs - true.probs))))
        counts = rng.multinomial(10_000, fwd.probs / fwd.probs.sum())
        est = mitigate_readout(PopulationVector.from_counts(counts), confs, layout)
        dev = np.abs(est.probs - true.probs)
        worst_z = max(worst_z, float(np.max(np.where(dev > 0, dev / np.maximum(est.sigma, 1e-300), 0))))
    elapsed = time.perf_counter() - t0
    ok = exact_err <= 1e-9 and worst_z <= 4 and elapsed < 5
    record(8, "mitigation round trip", ok,
           f"exact max error {exact_err:.1e}; sampled worst {worst_z:.2f} sigma over 20 vectors; {elapsed:.2f} s")
    assert ok


# -- 9 ---------------------------------------------------------------------------

def _random_unitary(rng, k):
    m = rng.normal(size=(2 ** k, 2 ** k)) + 1j * rng.normal(size=(2 ** k, 2 ** k))
    q, r = np.linalg.qr(m)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def _amplitude_damping(g):
    return KrausChannel([np.array([[1, 0], [0, math.sqrt(1 - g)]]), np.array([[0, math.sqrt(g)], [0, 0]])])


def _random_circuit(rng):
    n = int(rng.integers(1, 6))
    ops = []
    for _ in range(int(rng.integers(5, 31))):
        kind = rng.integers(0, 6)
        k = 2 if n >= 2 and kind in (1, 3) else 1
        targets = [int(t) for t in rng.choice(n, size=k, replace=False)]
        p = float(rng.uniform(0.02, 0.3))
        if kind in (0, 1):
            ops.append(("u", _random_unitary(rng, k), targets))
        elif kind == 2:
            ops.append(("c", _amplitude_damping(p), targets))
        elif kind == 3:
            ops.append(("c", depolarizing(p, k), targets))
        elif kind == 4:
            ops.append(("c", bit_flip(p), targets))
        else:
            ops.append(("c", phase_flip(p), targets))
    return n, ops


def _run(state, ops, rng=None):
    for kind, op, targets in ops:
        if kind == "u":
            state = apply_unitary(state, op, targets, check=False)
        else:
            state = apply_channel(state, op, targets, rng)
    return state


def test_criterion_09_backend_equivalence():
    rng = np.random.default_rng(SEED)
    shots = 10_000
    t0 = time.perf_counter()
    checks = fails = 0
    worst = 0.0
    for _ in range(20):
        n, ops = _random_circuit(rng)
        exact = _run(QuantumState.zeros(n, Backend.DENSITY), ops).probabilities()
        samples = np.empty(shots, dtype=np.int64)
        for s in range(shots):
            probs = _run(QuantumState.zeros(n), ops, rng).probabilities()
            samples[s] = rng.choice(len(probs), p=probs / probs.sum())
        freq = np.bincount(samples, minlength=2 ** n) / shots
        for mask in range(1, 2 ** n):
            e_exact = z_string_expectation_from_probs(exact, mask)
            e_traj = z_string_expectation_from_probs(freq, mask)
            sigma = math.sqrt(max(1 - e_exact ** 2, 0.0) / shots)
            checks += 1
            worst = max(worst, abs(e_traj - e_exact) / sigma if sigma > 0 else 0.0)
            fails += abs(e_traj - e_exact) > 4 * sigma + 1e-12
    elapsed = time.perf_counter() - t0
    ok = fails == 0 and elapsed < 120
    record(9, "backend equivalence", ok,
           f"{checks - fails}/{checks} Z-string expectations within 4 sigma (worst {worst:.2f}); {elapsed:.0f} s")
    assert ok


# -- 10 --------------------------------------------------------------------------

def test_criterion_10_fit_recovery():
    t = 5.0 * np.arange(13)
    clean = decay_model(t, 0.8, 31.0, 0.23)
    rng = np.random.default_rng(SEED)
    t0 = time.perf_counter()
    errors = []
    for _ in range(100):
        y = clean + rng.normal(0, 0.01, t.size)
        r = fit_exponential(np.c_[t, y, np.full(t.size, 0.01)], n_boot=0)
        errors.append(abs(r.t1l - 31.0) / 31.0)
    elapsed = time.perf_counter() - t0
    hits = int(np.sum(np.array(errors) < 0.05))
    ok = hits >= 95 and elapsed < 60
    record(10, "fit recovery", ok,
           f"{hits}/100 repetitions with T1L error < 5% (median error {100 * np.median(errors):.1f}%); "
           f"{elapsed:.1f} s")
    assert ok


# -- 11 --------------------------------------------------------------------------

def test_criterion_11_determinism(tmp_path):
    noise_c1 = tmp_path / "c1.toml"
    save_noise(NoiseModel.noiseless(herald_prob=0.01), noise_c1)
    noise_c5 = tmp_path / "c5.toml"
    save_noise(NoiseModel.noiseless(), noise_c5)
    configs = {
        "criterion 1": ["ghz", "--seed", str(SEED), "--shots", "100000", "--noise", str(noise_c1)],
        "criterion 5": ["qec", "--seed", str(SEED), "--shots", str(SHOTS_C5), "--rounds", "1-12",
                        "--feedback", "on", "--inject-x", "--noise", str(noise_c5)],
    }
    results = []
    for name, argv in configs.items():
        files = []
        for run in range(2):
            out = tmp_path / f"{name.replace(' ', '')}_{run}"
            assert cli_main(argv + ["--out", str(out)]) == 0
            files.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
        same = files[0] == files[1] and len(files[0]) > 0
        results.append((name, same, len(files[0])))
    ok = all(same for _, same, _ in results)
    record(11, "determinism", ok,
           "; ".join(f"{n}: {k} files {'identical' if s else 'DIFFER'}" for n, s, k in results))
    assert ok
