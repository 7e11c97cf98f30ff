import numpy as np
import pytest

from salieval.analytics import (
    AIDED, ALWAYS, FLIPPED, comprehensiveness, detect_flips, flip_histogram,
    flip_report_to_json, format_flip_report, format_misclassified,
    format_overlap, histogram_csv, misclassified_report, overlap_matrix,
    overlap_to_json, sufficiency, sufficiency_comprehensiveness)
from salieval.errors import DataError
from salieval.saliency import Explanation, explain, top_k_words
from salieval.scoring import AggregateMatrix
from salieval.textmodel import make_sample

from helpers import linearized


def matrix(A, ks=(5, 10, 20, 30, 40), methods=None):
    A = np.asarray(A, dtype=np.int8)
    N, J, K = A.shape
    assert K == len(ks)
    methods = methods or tuple(f"m{j}" for j in range(J))
    return AggregateMatrix(
        A=A, sample_ids=tuple(f"s{i}" for i in range(N)),
        methods=tuple(methods), ks=tuple(ks), classes=2, uncovered=())


class TestDetectFlips:
    def test_canonical_rows(self):
        am = matrix([[[1, 1, 0, 1, 1], [0, 0, 1, 1, 1], [1, 1, 1, 1, 1]]])
        rep = detect_flips(am)
        assert rep.category[0, 0] == FLIPPED
        assert rep.category[0, 1] == AIDED
        assert rep.category[0, 2] == ALWAYS

    def test_never_correct_is_aided_and_flagged(self):
        am = matrix([[[0, 0, 0, 0, 0], [1, 1, 1, 1, 1]]], ks=(5, 10, 20, 30, 40))
        rep = detect_flips(am)
        assert rep.category[0, 0] == AIDED
        assert rep.never_correct_in_aided == 1

    def test_trailing_zero_flips(self):
        am = matrix([[[1, 1, 1, 1, 0]]])
        assert detect_flips(am).category[0, 0] == FLIPPED

    def test_recovered_flip_still_flips(self):
        # once a pass is followed by any later failure it counts, even if
        # an even larger k passes again
        am = matrix([[[1, 0, 1, 1, 1]]])
        assert detect_flips(am).category[0, 0] == FLIPPED

    def test_unsorted_ks_are_reordered(self):
        # same row under shuffled column order must classify identically
        am1 = matrix([[[1, 1, 0, 1, 1]]], ks=(5, 10, 20, 30, 40))
        am2 = matrix([[[1, 1, 1, 0, 1]]], ks=(5, 10, 40, 20, 30))
        assert detect_flips(am1).category[0, 0] == detect_flips(am2).category[0, 0] == FLIPPED

    def test_single_k_rejected(self):
        am = matrix([[[1]]], ks=(10,))
        with pytest.raises(DataError):
            detect_flips(am)

    def test_categories_partition(self):
        rng = np.random.default_rng(0)
        for trial in range(25):
            A = rng.integers(0, 2, size=(12, 4, 5))
            rep = detect_flips(matrix(A))
            for m in rep.methods:
                c = rep.counts[m]
                assert c[FLIPPED] + c[ALWAYS] + c[AIDED] == 12
            # brute-force recount
            for i in range(12):
                for j in range(4):
                    row = A[i, j]
                    flip = any(row[a] == 1 and row[b] == 0
                               for a in range(5) for b in range(a + 1, 5))
                    expect = FLIPPED if flip else (ALWAYS if row.all() else AIDED)
                    assert rep.category[i, j] == expect

    def test_counts_match_category_grid(self):
        rng = np.random.default_rng(3)
        A = rng.integers(0, 2, size=(30, 8, 5))
        rep = detect_flips(matrix(A))
        for j, m in enumerate(rep.methods):
            assert rep.counts[m][FLIPPED] == int((rep.category[:, j] == FLIPPED).sum())


class TestHistogram:
    def test_bins_sum_to_samples(self):
        rng = np.random.default_rng(1)
        A = rng.integers(0, 2, size=(40, 8, 5))
        rep = detect_flips(matrix(A))
        hist = flip_histogram(rep)
        assert hist.shape == (9,)
        assert hist.sum() == 40

    def test_recount(self):
        rng = np.random.default_rng(2)
        A = rng.integers(0, 2, size=(20, 3, 5))
        rep = detect_flips(matrix(A))
        hist = flip_histogram(rep)
        for n in range(4):
            assert hist[n] == sum(1 for i in range(20)
                                  if (rep.category[i] == FLIPPED).sum() == n)

    def test_no_flips_all_in_zero_bin(self):
        am = matrix(np.ones((7, 2, 5), dtype=int))
        hist = flip_histogram(detect_flips(am))
        assert hist[0] == 7 and hist[1:].sum() == 0

    def test_csv(self):
        am = matrix([[[1, 1, 0, 1, 1], [1, 1, 1, 1, 1]]])
        text = histogram_csv(detect_flips(am))
        assert text.splitlines()[0] == "methods_flipped,samples"
        assert text.splitlines()[2] == "1,1"


def expl(sid, method, scores, n_words):
    padded = tuple(float(x) for x in scores) + (0.0,) * (n_words - len(scores))
    return Explanation(sample_id=sid, method=method, scores=padded,
                       target_class=1, predicted_class=1, confidence=0.9)


class TestOverlap:
    def sample(self, sid="a", text="alpha beta gamma delta epsilon zeta"):
        return make_sample(sid, text, 1)

    def test_diagonal_is_100(self):
        s = self.sample()
        es = [expl("a", "VanillaGradient", [6, 5, 4, 3, 2, 1], 6),
              expl("a", "InputXGrad", [1, 2, 3, 4, 5, 6], 6)]
        om = overlap_matrix(es, [s], 3)
        assert np.allclose(np.diag(om.matrix), 100.0)

    def test_symmetric(self):
        rng = np.random.default_rng(0)
        samples = [self.sample(f"s{i}") for i in range(4)]
        es = []
        for m in ("VanillaGradient", "InputXGrad", "LIME"):
            for s in samples:
                es.append(expl(s.id, m, rng.normal(size=6), 6))
        om = overlap_matrix(es, samples, 2)
        assert np.allclose(om.matrix, om.matrix.T)

    def test_known_half_overlap(self):
        s = self.sample()
        # top-2 sets {0,1} and {1,2}: intersection 1 of 2
        es = [expl("a", "VanillaGradient", [9, 8, 0, 0, 0, 0], 6),
              expl("a", "InputXGrad", [0, 8, 9, 0, 0, 0], 6)]
        om = overlap_matrix(es, [s], 2)
        assert om.matrix[0, 1] == pytest.approx(50.0)

    def test_disjoint_is_zero(self):
        s = self.sample()
        es = [expl("a", "VanillaGradient", [9, 8, 7, 0, 0, 0], 6),
              expl("a", "InputXGrad", [0, 0, 0, 7, 8, 9], 6)]
        om = overlap_matrix(es, [s], 3)
        assert om.matrix[0, 1] == pytest.approx(0.0)

    def test_mean_over_samples(self):
        s1, s2 = self.sample("a"), self.sample("b")
        es = [expl("a", "VanillaGradient", [9, 8, 0, 0, 0, 0], 6),
              expl("a", "InputXGrad", [9, 8, 0, 0, 0, 0], 6),     # overlap 2/2
              expl("b", "VanillaGradient", [9, 8, 0, 0, 0, 0], 6),
              expl("b", "InputXGrad", [0, 8, 9, 0, 0, 0], 6)]     # overlap 1/2
        om = overlap_matrix(es, [s1, s2], 2)
        assert om.matrix[0, 1] == pytest.approx(75.0)

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(5)
        samples = [self.sample(f"s{i}") for i in range(3)]
        raw = {s.id: rng.normal(size=6) for s in samples}
        es1, es2 = [], []
        for s in samples:
            es1.append(expl(s.id, "VanillaGradient", raw[s.id], 6))
            es1.append(expl(s.id, "LIME", raw[s.id][::-1], 6))
            es2.append(expl(s.id, "VanillaGradient", 3 * raw[s.id] + 7, 6))
            es2.append(expl(s.id, "LIME", np.exp(raw[s.id][::-1]), 6))
        a = overlap_matrix(es1, samples, 3)
        b = overlap_matrix(es2, samples, 3)
        assert np.allclose(a.matrix, b.matrix)

    def test_short_sample_uses_eligible_denominator(self):
        s = make_sample("a", "alpha beta", 1)   # 2 eligible words, k=5
        es = [expl("a", "VanillaGradient", [2, 1], 2),
              expl("a", "InputXGrad", [1, 2], 2)]
        om = overlap_matrix(es, [s], 5)
        assert om.matrix[0, 1] == pytest.approx(100.0)
        assert om.short_samples == ("a",)

    def test_punctuation_never_in_top(self):
        s = make_sample("a", "alpha ! beta . gamma", 1)
        es = [expl("a", "VanillaGradient", [1, 99, 2, 99, 3], 5),
              expl("a", "InputXGrad", [3, 99, 2, 99, 1], 5)]
        om = overlap_matrix(es, [s], 3)
        # both top-3 sets are the full eligible set {0, 2, 4}
        assert om.matrix[0, 1] == pytest.approx(100.0)

    def test_incomplete_coverage_rejected(self):
        s1, s2 = self.sample("a"), self.sample("b")
        es = [expl("a", "VanillaGradient", [1] * 6, 6),
              expl("a", "InputXGrad", [1] * 6, 6),
              expl("b", "VanillaGradient", [1] * 6, 6)]
        with pytest.raises(DataError, match="cover"):
            overlap_matrix(es, [s1, s2], 2)

    def test_duplicate_explanation_rejected(self):
        s = self.sample()
        es = [expl("a", "VanillaGradient", [1] * 6, 6)] * 2
        with pytest.raises(DataError, match="duplicate"):
            overlap_matrix(es, [s], 2)

    def test_render(self):
        s = self.sample()
        es = [expl("a", "VanillaGradient", [6, 5, 4, 3, 2, 1], 6),
              expl("a", "InputXGrad", [1, 2, 3, 4, 5, 6], 6)]
        om = overlap_matrix(es, [s], 3)
        text = format_overlap(om)
        assert "VanillaGradient" in text and "100" in text
        js = overlap_to_json(om)
        assert js["k"] == 3 and len(js["matrix"]) == 2


def keyword_positions(sample):
    from helpers import KEYWORDS
    keys = {w for ws in KEYWORDS.values() for w in ws}
    return [i for i, w in enumerate(sample.words) if w.surface in keys]


def oracle_expl(sample):
    scores = [0.0] * len(sample.words)
    for p in keyword_positions(sample):
        scores[p] = 1.0
    return Explanation(sample_id=sample.id, method="VanillaGradient",
                       scores=tuple(scores), target_class=1,
                       predicted_class=1, confidence=0.9)


@pytest.fixture(scope="module")
def setup(trained2):
    # a confidently classified sample containing planted keywords
    model, corpus = trained2
    for s in corpus:
        out = model.forward_full(s)
        if out.predicted_class == s.label and float(out.confidence.max()) > 0.9:
            return model, s
    pytest.fail("no confident sample in fixture corpus")


class TestSuffComp:
    def test_keyword_masks_localize_signal(self, trained2):
        # the corpus label is decided by the planted keywords, so keeping
        # only them should barely move confidence while dropping them
        # should collapse it — on average over confident samples
        model, corpus = trained2
        suffs, comps = [], []
        for s in corpus:
            out = model.forward_full(s)
            if out.predicted_class != s.label or float(out.confidence.max()) < 0.9:
                continue
            e = oracle_expl(s)
            k = max(1, len(keyword_positions(s)))
            su, co = sufficiency_comprehensiveness(model, s, e, k)
            suffs.append(su)
            comps.append(co)
        assert len(suffs) >= 50
        assert np.mean(suffs) < 0.1
        assert np.mean(comps) > 0.3

    def test_k_zero(self, setup):
        model, s = setup
        e = oracle_expl(s)
        assert comprehensiveness(model, s, e, 0) == pytest.approx(0.0)

    def test_k_at_least_words_comp_equals_all_masked(self, setup):
        model, s = setup
        e = oracle_expl(s)
        big = comprehensiveness(model, s, e, len(s.words))
        suff_big = sufficiency(model, s, e, len(s.words))
        assert suff_big == pytest.approx(0.0)     # keep everything: identity
        assert big > 0.0                          # drop everything eligible

    def test_three_pass_matches_individual(self, setup):
        model, s = setup
        e = oracle_expl(s)
        suff, comp = sufficiency_comprehensiveness(model, s, e, 2)
        assert suff == pytest.approx(sufficiency(model, s, e, 2))
        assert comp == pytest.approx(comprehensiveness(model, s, e, 2))

    def test_delete_mode_runs(self, setup):
        model, s = setup
        e = oracle_expl(s)
        k = len(keyword_positions(s))
        suff, comp = sufficiency_comprehensiveness(model, s, e, k, mode="delete")
        assert np.isfinite(suff) and np.isfinite(comp)
        # deletion shifts every later position embedding, so the drop is
        # real but smaller than under PAD replacement
        assert comp > 0.1

    def test_delete_identity_when_nothing_masked(self, setup):
        model, s = setup
        e = oracle_expl(s)
        assert sufficiency(model, s, e, len(s.words), mode="delete") == pytest.approx(0.0)
        assert comprehensiveness(model, s, e, 0, mode="delete") == pytest.approx(0.0)

    def test_bad_mode_rejected(self, setup):
        model, s = setup
        with pytest.raises(DataError, match="mode"):
            sufficiency(model, s, oracle_expl(s), 1, mode="blank")

    def test_negative_k_rejected(self, setup):
        model, s = setup
        with pytest.raises(DataError):
            sufficiency(model, s, oracle_expl(s), -1)

    def test_matches_real_explanations(self, setup):
        # a model-derived explanation should also localize the signal
        model, s = setup
        e = explain(model, s, "InputXGrad")
        suff, comp = sufficiency_comprehensiveness(model, s, e, 2)
        assert -1.0 <= suff <= 1.0 and -1.0 <= comp <= 1.0

    def test_constant_model_zero_drop(self, setup):
        model, s = setup
        flat = linearized(model)
        flat.params["w_cls"] = np.zeros_like(flat.params["w_cls"])
        e = oracle_expl(s)
        suff, comp = sufficiency_comprehensiveness(flat, s, e, 1)
        assert suff == pytest.approx(0.0, abs=1e-12)
        assert comp == pytest.approx(0.0, abs=1e-12)


class TestMisclassified:
    def test_recount(self):
        rng = np.random.default_rng(9)
        A = rng.integers(0, 2, size=(15, 4, 5))
        rep = misclassified_report(matrix(A))
        assert rep["samples"] == 15
        for j in range(4):
            for x in range(5):
                assert rep["counts"][j][x] == int(A[:, j, x].sum())

    def test_render(self):
        A = np.ones((3, 2, 5), dtype=int)
        text = format_misclassified(misclassified_report(matrix(A)))
        assert "5 words" in text and " 3" in text


class TestFlipRender:
    def test_text_and_json(self):
        am = matrix([[[1, 1, 0, 1, 1], [1, 1, 1, 1, 1], [0, 0, 0, 0, 0]]],
                    methods=("A", "B", "C"))
        rep = detect_flips(am)
        text = format_flip_report(rep)
        assert "never-correct" in text
        js = flip_report_to_json(rep)
        assert js["counts"]["A"][FLIPPED] == 1
        assert js["counts"]["C"][AIDED] == 1
        assert js["never_correct_in_aided"] == 1
        assert js["flips_per_sample"]["s0"] == 1
