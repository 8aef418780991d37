import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dspose.evaluation import NoPositives, average_precision, detection_ap, pcp, pdj_curve, write_ap_csv


def _pcp_brute(est, truth, limbs):
    out = {}
    for name, a, b in limbs:
        hit = n = 0
        for e, t in zip(est, truth):
            length = math.dist(t[a], t[b])
            if length == 0:
                continue
            n += 1
            hit += math.dist(e[a], t[a]) <= length / 2 and math.dist(e[b], t[b]) <= length / 2
        out[name] = hit / n if n else float("nan")
    return out


def _pdj_brute(est, truth, d, f):
    hits = [math.dist(e[j], t[j]) < f * dd for e, t, dd in zip(est, truth, d) for j in range(len(t))]
    return sum(hits) / len(hits)


def _ap_brute(scores, positives):
    """Mean over positives of the best precision at that recall or beyond."""
    order = sorted(range(len(scores)), key=lambda i: -scores[i])
    n_pos = sum(positives)
    prec, rec = [], []
    tp = 0
    for r, i in enumerate(order, 1):
        tp += positives[i]
        prec.append(tp / r)
        rec.append(tp / n_pos)
    total = 0.0
    for r, i in enumerate(order):
        if positives[i]:
            total += max(p for p, q in zip(prec, rec) if q >= rec[r])
    return total / n_pos


def test_pcp_examples():
    truth = np.array([[[0.0, 0.0], [10.0, 0.0]]])
    limbs = [("bone", 0, 1)]
    assert pcp(truth, truth, limbs).rates["bone"] == 1.0
    edge = truth + np.array([[[5.0, 0.0], [0.0, 5.0]]])
    assert pcp(edge, truth, limbs).rates["bone"] == 1.0
    over = truth + np.array([[[5.1, 0.0], [0.0, 0.0]]])
    assert pcp(over, truth, limbs).rates["bone"] == 0.0


def test_pcp_skips_zero_length():
    truth = np.array([[[1.0, 1.0], [1.0, 1.0]], [[0.0, 0.0], [4.0, 0.0]]])
    res = pcp(truth, truth, [("bone", 0, 1)])
    assert res.skipped["bone"] == 1 and res.rates["bone"] == 1.0


def test_pdj_examples():
    truth = np.zeros((2, 3, 2))
    est = truth.copy()
    assert pdj_curve(est, truth, [1, 1], [0.0])["all"][0] == 0
    assert np.all(pdj_curve(est, truth, [1, 1], [0.01, 0.5])["all"] == 1)
    est[0, 0] = (0.2, 0)
    curve = pdj_curve(est, truth, [1.0, 1.0], [0.2, 0.2001], {"first": [0]})
    assert curve["all"].tolist() == [5 / 6, 1.0]
    assert curve["first"].tolist() == [0.5, 1.0]
    with pytest.raises(ValueError):
        pdj_curve(est, truth, [0, 1], [0.1])


def test_ap_examples():
    assert average_precision([0.9, 0.8, 0.1], [1, 1, 0]) == 1.0
    assert average_precision([0.9, 0.1], [0, 1]) == 0.5
    assert average_precision([0.9, 0.8, 0.7], [0, 1, 1]) == pytest.approx(2 / 3)
    assert math.isnan(average_precision([0.5], [0]))


def test_detection_ap_warns_and_excludes():
    lik = np.array([[0.2, 0.7, 0.1], [0.5, 0.3, 0.2]])
    with pytest.warns(NoPositives):
        ap, m = detection_ap(lik, [1, 0])
    assert ap[0] == 1.0 and math.isnan(ap[1]) and m == 1.0


def _cases():
    """Twenty small handcrafted-style cases: quantized coordinates so ties and
    exact boundaries actually occur."""
    rng = np.random.default_rng(42)
    limbs = [("a", 0, 1), ("b", 1, 2), ("c", 2, 3)]
    for k in range(20):
        n = 3 + k % 5
        truth = rng.integers(0, 12, (n, 4, 2)).astype(float)
        est = truth + rng.integers(-3, 4, (n, 4, 2))
        scores = rng.integers(0, 5, 12) / 4
        pos = rng.random(12) < 0.4
        pos[k % 12] = True
        yield truth, est, limbs, scores, pos


def test_metric_cases_match_brute_force():
    for truth, est, limbs, scores, pos in _cases():
        got = pcp(est, truth, limbs)
        want = _pcp_brute(est.tolist(), truth.tolist(), limbs)
        for name in want:
            assert got.rates[name] == want[name] or (math.isnan(got.rates[name]) and math.isnan(want[name]))
        d = np.linalg.norm(truth[:, 0] - truth[:, 3], axis=1) + 1
        fr = np.linspace(0, 1, 9)
        curve = pdj_curve(est, truth, d, fr)["all"]
        assert curve.tolist() == [_pdj_brute(est.tolist(), truth.tolist(), d.tolist(), f) for f in fr]
        assert np.all(np.diff(curve) >= 0)
        assert average_precision(scores, pos) == pytest.approx(_ap_brute(scores.tolist(), pos.tolist()), abs=1e-15)


errors = st.lists(st.floats(0, 10, allow_nan=False), min_size=1, max_size=30)


@given(errors, st.lists(st.floats(0, 1, allow_nan=False), min_size=2, max_size=10))
def test_pdj_monotone(errs, fractions):
    n = len(errs)
    truth = np.zeros((n, 1, 2))
    est = np.array(errs)[:, None, None] * np.array([1.0, 0.0])
    fr = np.sort(fractions)
    curve = pdj_curve(est, truth, np.full(n, 3.0), fr)["all"]
    assert np.all(np.diff(curve) >= 0)


@settings(max_examples=50)
@given(st.integers(0, 2**31), st.floats(-1e3, 1e3), st.floats(-1e3, 1e3))
def test_translation_invariance(seed, dx, dy):
    rng = np.random.default_rng(seed)
    truth = rng.integers(0, 50, (4, 5, 2)).astype(float)
    est = truth + rng.integers(-6, 7, (4, 5, 2))
    shift = np.array([dx, dy])
    limbs = [("a", 0, 1), ("b", 2, 3), ("c", 3, 4)]
    a, b = pcp(est, truth, limbs), pcp(est + shift, truth + shift, limbs)
    # translation may perturb distances by rounding; compare away from the boundary
    err = np.linalg.norm(est - truth, axis=-1)
    for name, i, j in limbs:
        length = np.linalg.norm(truth[:, i] - truth[:, j], axis=-1)
        margin = np.minimum(np.abs(err[:, i] - length / 2), np.abs(err[:, j] - length / 2))
        if np.all(margin > 1e-6):
            assert a.rates[name] == b.rates[name] or (math.isnan(a.rates[name]) and math.isnan(b.rates[name]))
    d = np.full(4, 7.3)
    fr = np.array([0.1, 0.35, 0.6])
    if np.all(np.abs(err[..., None] / 7.3 - fr).min(axis=-1) > 1e-6):
        np.testing.assert_array_equal(pdj_curve(est, truth, d, fr)["all"],
                                      pdj_curve(est + shift, truth + shift, d, fr)["all"])


@given(st.lists(st.tuples(st.integers(0, 4), st.booleans()), min_size=1, max_size=25), st.randoms())
def test_ap_bounds_and_ties(items, rnd):
    scores = np.array([s for s, _ in items], float)
    pos = np.array([p for _, p in items])
    if not pos.any():
        return
    ap = average_precision(scores, pos)
    assert 0 <= ap <= 1
    perm = list(range(len(items)))
    rnd.shuffle(perm)
    ap2 = average_precision(scores[perm], pos[perm])
    tied = sum(int(pos[scores == s].sum()) for s in np.unique(scores) if (scores == s).sum() > 1)
    assert abs(ap - ap2) <= tied / pos.sum() + 1e-12


def test_write_ap_csv(tmp_path):
    write_ap_csv(tmp_path / "ap.csv", {"dual": (np.array([0.5, 0.25]), 0.375)}, ["a", "b"])
    assert (tmp_path / "ap.csv").read_text().splitlines() == ["source,a,b,mAP", "dual,50.0,25.0,37.5"]
