"""Readout mitigation, decay fits and bootstrap intervals."""
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nvqnode.analysis import (
    PopulationVector, bootstrap_ci, decay_model, fit_exponential, forward_confusion,
    joint_confusion, mitigate_readout,
)
from nvqnode.noise import ConfusionMatrix
from nvqnode.qec import final_layout

CONF = ConfusionMatrix.from_fidelities(0.809, 0.988)


def test_joint_confusion_bit_order():
    a = ConfusionMatrix.from_fidelities(0.9, 1.0)
    j = joint_confusion([a, None])
    # readout 0 is the low bit: true |01> (bit0=1) never reports bit0=0
    assert j[0b00, 0b01] == 0
    assert j[0b01, 0b00] == pytest.approx(0.1)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.0, 1.0), min_size=16, max_size=16).filter(lambda v: sum(v) > 0))
def test_mitigation_inverts_forward(v):
    true = PopulationVector(np.array(v) / sum(v))
    confs = [CONF] * 3 + [None]
    fwd = forward_confusion(true, confs, final_layout())
    back = mitigate_readout(fwd, confs, final_layout())
    assert np.allclose(back.probs, true.probs, atol=1e-9)
    assert back.slack > -1e-9


def test_mitigation_clips_and_reports_slack():
    raw = PopulationVector(np.array([0.0, 1.0]), n_samples=10)
    out = mitigate_readout(raw, [ConfusionMatrix.from_fidelities(0.8, 0.9)])
    assert out.slack < 0
    assert out.probs.min() >= 0 and out.probs.sum() == pytest.approx(1)


def test_singular_confusion_rejected():
    bad = ConfusionMatrix(np.array([[0.5, 0.5], [0.5, 0.5]]))
    with pytest.raises(np.linalg.LinAlgError):
        mitigate_readout(PopulationVector(np.array([0.5, 0.5])), [bad])


def test_length_mismatch_rejected():
    with pytest.raises(ValueError):
        mitigate_readout(PopulationVector(np.ones(3) / 3), [CONF])


def test_mitigated_sigma_covers_sampling_error():
    rng = np.random.default_rng(0)
    true = PopulationVector(np.array([0.7, 0.3]))
    fwd = forward_confusion(true, [CONF]).probs
    n = 10_000
    errs = []
    for _ in range(200):
        raw = PopulationVector.from_counts(rng.multinomial(n, fwd))
        out = mitigate_readout(raw, [CONF])
        errs.append((out.probs[0] - 0.7) / out.sigma[0])
    assert np.std(errs) == pytest.approx(1, abs=0.15)


def exact_points(p_i=0.8, t=31.0, p_f=0.23, m=12, dt=5.0):
    ts = dt * np.arange(m + 1)
    return np.c_[ts, decay_model(ts, p_i, t, p_f), np.full_like(ts, 0.01)]


def test_fit_recovers_exact_parameters():
    r = fit_exponential(exact_points(), n_boot=200)
    assert (r.p_i, r.t1l, r.p_f) == pytest.approx((0.8, 31.0, 0.23), rel=1e-8)
    assert r.ci_t1l[0] < 31 < r.ci_t1l[1]


def test_fit_time_rescaling_is_exact():
    a = fit_exponential(exact_points(), n_boot=100, seed=1)
    pts = exact_points()
    pts[:, 0] *= 2
    b = fit_exponential(pts, n_boot=100, seed=1)
    assert b.t1l == 2 * a.t1l
    assert b.ci_t1l == (2 * a.ci_t1l[0], 2 * a.ci_t1l[1])


def test_fit_is_deterministic():
    pts = exact_points()
    pts[:, 1] += np.random.default_rng(3).normal(0, 0.01, len(pts))
    a = fit_exponential(pts, seed=7)
    b = fit_exponential(pts, seed=7)
    assert a.as_dict() == b.as_dict()


def test_flat_data_flagged():
    pts = np.c_[np.arange(6.0), np.full(6, 0.5), np.full(6, 0.01)]
    r = fit_exponential(pts)
    assert r.unbounded and math.isinf(r.t1l) and r.p_f == 0.5


@pytest.mark.parametrize("pts", [np.zeros((3, 3)), np.zeros((5, 2))])
def test_fit_input_validation(pts):
    with pytest.raises(ValueError):
        fit_exponential(pts)


def test_weighted_fit_needs_sigmas():
    pts = exact_points()
    pts[0, 2] = 0
    with pytest.raises(ValueError):
        fit_exponential(pts)
    fit_exponential(pts, weighted=False, n_boot=0)


def test_bootstrap_width_of_a_proportion():
    rng = np.random.default_rng(0)
    data = (rng.random(10_000) < 0.5).astype(float)
    lo, hi = bootstrap_ci(data, np.mean, resamples=1000, seed=1)
    # 68% interval of a mean with sd 0.005 is about 0.01 wide
    assert hi - lo == pytest.approx(0.01, rel=0.1)


def test_bootstrap_width_scales_as_inverse_sqrt_n():
    rng = np.random.default_rng(1)
    w = []
    for n in (2000, 8000):
        data = (rng.random(n) < 0.5).astype(float)
        lo, hi = bootstrap_ci(data, np.mean, resamples=1000, seed=2)
        w.append(hi - lo)
    assert w[0] / w[1] == pytest.approx(2, rel=0.2)


def test_bootstrap_on_records_and_determinism():
    recs = list(range(50))
    a = bootstrap_ci(recs, lambda r: sum(r) / len(r), resamples=200, seed=3)
    assert a == bootstrap_ci(recs, lambda r: sum(r) / len(r), resamples=200, seed=3)
    with pytest.raises(ValueError):
        bootstrap_ci(recs, len, resamples=10)
    with pytest.raises(ValueError):
        bootstrap_ci([], len)
