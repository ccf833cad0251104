"""GHZ preparation, joint-basis statistics and the witness bound."""
import math

import numpy as np
import pytest

from nvqnode.core import Backend, QuantumState, expectation
from nvqnode.experiments import run_witness
from nvqnode.ghz import (
    IDEAL_GHZ, CoincidenceTable, JointBasis, basis_expectation, estimate_witness, expected_table,
    measure_joint, prepare_ghz, report_rows, witness_bound, witness_from_values, write_report,
)
from nvqnode.noise import NoiseModel
from oracle import ket

CLEAN = NoiseModel.noiseless()

# bright-only coincidence estimate of a perfectly correlated pair read with
# bright/dark fidelities b, d: (b - (1 - d)) / (b + (1 - d)); derived by hand
READOUT_ONLY_E = (0.809 - 0.012) / (0.809 + 0.012)


def test_ideal_state_is_expected_ghz():
    want = (ket([0, 0, 0, 0, 1]) + ket([1, 1, 0, 0, 0])) / math.sqrt(2)
    assert np.allclose(IDEAL_GHZ, want)
    s = prepare_ghz(CLEAN)
    assert abs(np.vdot(IDEAL_GHZ, s.data)) == pytest.approx(1, abs=1e-12)


@pytest.mark.parametrize("basis", list(JointBasis))
def test_ideal_stabilizer_values(basis):
    s = prepare_ghz(CLEAN, Backend.DENSITY)
    assert basis.witness_sign * expectation(s, basis.pauli) == pytest.approx(1)


def test_readout_only_expectations_frozen():
    noise = CLEAN.replace(readout_bright_fid=0.809, readout_dark_fid=0.988)
    for basis in JointBasis:
        e, _ = basis_expectation(expected_table(basis, noise))
        assert e == pytest.approx(READOUT_ONLY_E, abs=1e-12)
    assert READOUT_ONLY_E == pytest.approx(0.97077, abs=1e-5)


def test_visibility_scales_only_x_term():
    noise = CLEAN.replace(mzi_visibility=0.9)
    vals = [basis_expectation(expected_table(b, noise))[0] for b in JointBasis]
    assert vals == pytest.approx([1, 1, 0.9])


def test_witness_arithmetic():
    r = witness_from_values(0.97, 0.88, 0.82, sigmas=(0.01, 0.02, 0.02))
    assert r.f_lb == pytest.approx(0.835)
    assert r.sigma_f_lb == pytest.approx(0.5 * math.sqrt(0.0001 + 0.0004 + 0.0004))
    assert witness_bound(1, 1, 1) == 1
    with pytest.raises(ValueError):
        witness_from_values(1.2, 0, 0)


def test_missing_basis_rejected():
    with pytest.raises(ValueError, match="missing"):
        estimate_witness({JointBasis.ZeIcZp: expected_table(JointBasis.ZeIcZp, CLEAN)})


def test_sampled_table_is_reproducible_and_split_invariant():
    noise = NoiseModel(herald_prob=0.2)
    a = measure_joint(JointBasis.XeXcXp, 400, noise, seed=9)
    b = measure_joint(JointBasis.XeXcXp, 400, noise, seed=9)
    assert np.array_equal(a.counts, b.counts)
    # two half-runs with shot offsets merge to the full run
    h1 = measure_joint(JointBasis.XeXcXp, 200, noise, 9, Backend.PURE, 0)
    h2 = measure_joint(JointBasis.XeXcXp, 200, noise, 9, Backend.PURE, 100)
    assert np.array_equal(h1.merge(h2).counts, a.counts)


def test_sampled_matches_exact():
    noise = NoiseModel(herald_prob=1.0)
    shots = 4000
    for basis in JointBasis:
        got = measure_joint(basis, shots, noise, seed=3)
        want = expected_table(basis, noise, shots)
        for v in (0, 1):
            p = want.counts[v] / want.counts[v].sum()
            n = got.counts[v].sum()
            assert np.all(np.abs(got.counts[v] / n - p) <= 4 * np.sqrt(p * (1 - p) / n) + 1e-12)


def test_odd_shot_count_warns():
    with pytest.warns(UserWarning, match="odd shot count"):
        t = measure_joint(JointBasis.ZeZcIp, 5, CLEAN, seed=1)
    assert t.shots.tolist() == [2, 2]


def test_zero_herald_variant_rejected():
    t = CoincidenceTable(JointBasis.ZeZcIp)
    with pytest.raises(ValueError):
        t.spin_photon_populations()


def test_report_rows(tmp_path):
    tables, res = run_witness(100, CLEAN, seed=0, exact=True)
    rows = report_rows(tables, res)
    assert len(rows) == 3 * 8 + 4
    assert rows[-1][:2] == ("summary", "f_lb")
    write_report(tmp_path / "r.tsv", tables, res, ["seed: 0"])
    text = (tmp_path / "r.tsv").read_text().splitlines()
    assert text[0] == "# schema: nvqnode.ghz_report/1"
    assert text[2].split("\t")[0] == "record"


def test_bootstrap_sigma_close_to_binomial():
    noise = NoiseModel(herald_prob=1.0)
    tables, res = run_witness(2000, noise, seed=4)
    boot = estimate_witness(tables, bootstrap=300, seed=1)
    assert boot.sigma_e1 == pytest.approx(res.sigma_e1, rel=0.3)


def test_ideal_sign_convention():
    from nvqnode.core import PauliString
    s = prepare_ghz(CLEAN, Backend.DENSITY)
    assert expectation(s, PauliString.on(5, q0="Z", q4="Z")) == pytest.approx(-1)
    _, res = run_witness(2, CLEAN, seed=0, exact=True)
    assert res.e1 == pytest.approx(1)


def test_double_run_symmetry_with_symmetric_readout():
    from nvqnode.ghz import FLIPPED, UNFLIPPED
    noise = NoiseModel(readout_bright_fid=0.9, readout_dark_fid=0.9, herald_prob=1.0)
    for basis in JointBasis:
        t = measure_joint(basis, 4000, noise, seed=12)
        a, b = t.variant_expectation(UNFLIPPED), t.variant_expectation(FLIPPED)
        sigma = math.sqrt((1 - a * a) / t.heralded[0] + (1 - b * b) / t.heralded[1])
        assert abs(a - b) <= 4 * sigma


def test_averaged_estimator_matches_exact_with_paper_readout(shipped):
    noise = shipped.replace(herald_prob=1.0)
    tables, res = run_witness(4000, noise, seed=13)
    _, ref = run_witness(2, noise, seed=0, exact=True)
    for k in ("e1", "e2", "e3"):
        assert abs(getattr(res, k) - getattr(ref, k)) <= 4 * getattr(res, "sigma_" + k)


def test_witness_is_a_lower_bound():
    from nvqnode.core import fidelity_to_pure
    rng = np.random.default_rng(14)
    for _ in range(50):
        noise = NoiseModel(
            readout_bright_fid=rng.uniform(0.7, 1), readout_dark_fid=rng.uniform(0.7, 1),
            p_gate_e=rng.uniform(0, 0.1), p_gate_ec=rng.uniform(0, 0.15), p_gate_c=rng.uniform(0, 0.1),
            mzi_visibility=rng.uniform(0.5, 1), background_error=rng.uniform(0, 0.05),
            bin_overlap_error=rng.uniform(0, 0.05))
        _, res = run_witness(2, noise, seed=0, exact=True)
        fid = fidelity_to_pure(prepare_ghz(noise, Backend.DENSITY), IDEAL_GHZ)
        assert res.f_lb <= fid + 1e-12


def test_parity_term_independent_of_photon_bin(shipped):
    from nvqnode.ghz import FLIPPED, UNFLIPPED
    t = measure_joint(JointBasis.ZeZcIp, 6000, shipped.replace(herald_prob=1.0), seed=15)
    her = t.heralded
    vals = []
    for ph in (0, 1):
        ru, rf = t.counts[UNFLIPPED, 0, ph] / her[0], t.counts[FLIPPED, 0, ph] / her[1]
        e = (ru - rf) / (ru + rf)
        n = t.counts[UNFLIPPED, 0, ph] + t.counts[FLIPPED, 0, ph]
        vals.append((e, math.sqrt((1 - e * e) / n)))
    (e0, s0), (e1, s1) = vals
    assert abs(e0 - e1) < 4 * math.hypot(s0, s1)


@pytest.mark.parametrize("v,want", [(1.0, 1.0), (0.0, 0.5)])
def test_mzi_visibility_limits(v, want):
    from nvqnode.ghz import mzi_photon_x_measurement
    plus = QuantumState.from_vector((ket([0, 0, 0, 0, 0]) + ket([0, 0, 0, 0, 1])) / math.sqrt(2))
    noise = CLEAN.replace(mzi_visibility=v)
    rng = np.random.default_rng(16)
    hits = sum(mzi_photon_x_measurement(plus, noise, rng)[0] == 1 for _ in range(2000))
    if want == 1.0:
        assert hits == 2000
    else:
        assert abs(hits / 2000 - 0.5) < 4 * math.sqrt(0.25 / 2000)

