import json
import math

import numpy as np
import pytest
import scipy.stats

from dialrel import stats


# -- independent oracles: plain-Python rank transform + fsum two-pass covariance

def oracle_ranks(values):
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j) / 2 + 1
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        i = j + 1
    return ranks


def oracle_pearson(x, y):
    n = len(x)
    mx = math.fsum(x) / n
    my = math.fsum(y) / n
    sxy = math.fsum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = math.fsum((a - mx) ** 2 for a in x)
    syy = math.fsum((b - my) ** 2 for b in y)
    return sxy / math.sqrt(sxx * syy)


def oracle_spearman(x, y):
    return oracle_pearson(oracle_ranks(x), oracle_ranks(y))


def tied_sample(rng, n=120):
    # quantized values force heavy ties, like averaged Likert ratings do
    x = np.round(rng.normal(size=n) * 2) / 2
    y = np.round(rng.normal(size=n) * 2) / 2 + 0.1 * x
    return x, y


class TestPearson:
    def test_exact_linear(self):
        assert stats.pearson([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0)
        assert stats.pearson([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)

    def test_matches_covariance_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            x = rng.normal(size=50)
            y = rng.normal(size=50) + rng.uniform(-1, 1) * x
            got = stats.pearson(x, y)
            want = oracle_pearson(list(x), list(y))
            assert got == pytest.approx(want, rel=1e-12, abs=1e-12)

    def test_affine_invariance_up_to_sign(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            x = rng.normal(size=30)
            y = rng.normal(size=30)
            a, c = rng.choice([-3.0, -0.5, 0.7, 2.0], size=2)
            base = stats.pearson(x, y)
            assert stats.pearson(a * x + 1.5, c * y - 2.0) == pytest.approx(
                math.copysign(1.0, a * c) * base, rel=1e-9, abs=1e-12)

    def test_zero_variance_errors(self):
        with pytest.raises(ValueError, match="zero variance"):
            stats.pearson([1.0, 1.0, 1.0], [1, 2, 3])


class TestSpearman:
    def test_monotone_transform_gives_one(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            x = rng.normal(size=40)
            y = np.exp(x) + 3 * x
            assert stats.spearman(x, y) == pytest.approx(1.0, abs=1e-12)
            assert stats.spearman(x, -y) == pytest.approx(-1.0, abs=1e-12)

    def test_frozen_tie_case(self):
        # ranks x: (1, 2.5, 2.5, 4); ranks y: (1.5, 1.5, 3, 4) => r = 5/6
        assert stats.spearman([1, 2, 2, 4], [1, 1, 3, 4]) == pytest.approx(5 / 6, rel=1e-15)

    def test_matches_rank_oracle_and_scipy_with_ties(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            x, y = tied_sample(rng)
            got = stats.spearman(x, y)
            assert got == pytest.approx(oracle_spearman(list(x), list(y)), rel=1e-12, abs=1e-12)
            assert got == pytest.approx(scipy.stats.spearmanr(x, y).statistic, rel=1e-9, abs=1e-12)

    def test_invariance_under_increasing_transforms(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            # lattice values keep float ties exact under the transforms
            x = np.round(rng.normal(size=60) * 2) / 2
            y = np.round((rng.normal(size=60) + x) * 2) / 2
            gx = 3.0 * x + np.tanh(x)  # strictly increasing, tie-preserving
            hy = np.exp(0.5 * y)
            assert stats.spearman(gx, hy) == pytest.approx(stats.spearman(x, y), abs=1e-12)


class TestPermPvalue:
    def test_identity_gives_floor_p(self):
        x = np.arange(100, dtype=float)
        p = stats.perm_pvalue(x, x, "spearman", n_perm=10_000, seed=0)
        assert p == pytest.approx(1 / 10_001)
        assert p < 0.01

    def test_below_floor_errors(self):
        with pytest.raises(ValueError, match="n_perm"):
            stats.perm_pvalue([1, 2, 3], [1, 2, 3], "spearman", n_perm=10)

    def test_deterministic_given_seed(self):
        rng = np.random.default_rng(5)
        x, y = rng.normal(size=40), rng.normal(size=40)
        a = stats.perm_pvalue(x, y, "pearson", n_perm=2000, seed=11)
        assert a == stats.perm_pvalue(x, y, "pearson", n_perm=2000, seed=11)

    def test_relabeling_invariance(self):
        rng = np.random.default_rng(6)
        for _ in range(10):
            x, y = rng.normal(size=30), rng.normal(size=30)
            for stat in ("spearman", "pearson"):
                assert stats.perm_pvalue(x, y, stat, n_perm=1000, seed=3) == \
                    stats.perm_pvalue(y, x, stat, n_perm=1000, seed=3)

    def test_quick_calibration(self):
        # fuller 1,000-trial calibration runs in the acceptance suite
        rejected = 0
        trials = 200
        for t in range(trials):
            rng = np.random.default_rng([99, t])
            x, y = rng.normal(size=50), rng.normal(size=50)
            p = stats.perm_pvalue(x, y, "spearman", n_perm=1000, seed=t)
            rejected += p < 0.01
        assert rejected / trials <= 0.03


class TestAggregate:
    def _report(self, s, p, ps=0.001, pp=0.001):
        return stats.CorrelationReport(metric="m", dataset="HUMOD", split="test", n=100,
                                       spearman=s, pearson=p, p_spearman=ps, p_pearson=pp)

    def test_identical_runs_have_zero_std(self):
        agg = stats.aggregate_runs([self._report(0.58, 0.58)] * 3)
        assert agg.spearman == pytest.approx(0.58)
        assert agg.spearman_std == 0.0
        assert agg.runs == 3

    def test_mean_of_runs(self):
        agg = stats.aggregate_runs([self._report(s, s) for s in (0.32, 0.36, 0.31)])
        assert agg.spearman == pytest.approx(0.33)
        # population std, not sample std
        assert agg.spearman_std == pytest.approx(float(np.std([0.32, 0.36, 0.31])))

    def test_marker_semantics(self):
        runs = [self._report(0.3, 0.3, ps=p) for p in (0.005, 0.02, 0.001)]
        agg = stats.aggregate_runs(runs)
        assert agg.marker_spearman == stats.MARKER_SOME
        runs = [self._report(0.3, 0.3, ps=p) for p in (0.005, 0.009, 0.001)]
        assert stats.aggregate_runs(runs).marker_spearman == stats.MARKER_ALL
        runs = [self._report(0.3, 0.3, ps=p) for p in (0.5, 0.9, 0.2)]
        assert stats.aggregate_runs(runs).marker_spearman == ""

    def test_mixed_keys_rejected(self):
        other = stats.CorrelationReport(metric="m2", dataset="HUMOD", split="test", n=100,
                                        spearman=0.1, pearson=0.1, p_spearman=0.5, p_pearson=0.5)
        with pytest.raises(ValueError, match="mixed"):
            stats.aggregate_runs([self._report(0.3, 0.3), other])


class TestSensitivity:
    # per-dataset Spearman rows (HUMOD, USR_TC, P_DD, FED_COR, FED_REL)
    # paired with their published best/worst ratios
    PUBLISHED = [
        ((0.58, 0.18, 0.53, 0.15, 0.24), 3.9),    # fixed-negative head, HUMOD-trained
        ((0.33, 0.10, 0.62, 0.14, 0.22), 6.2),    # fine-tuned NUP baseline (H)
        ((0.29, 0.17, 0.58, 0.05, 0.16), 11.6),   # NUP (TC-S)
        ((0.30, 0.16, 0.62, 0.06, 0.18), 10.3),   # NUP (TC)
        ((0.13, 0.20, 0.03, 0.03, 0.06), 6.7),    # max-pooled cosine
        ((0.09, 0.26, -0.02, 0.08, 0.11), -13.0), # static-embedding cosine
        ((0.08, 0.08, 0.30, -0.03, -0.04), -7.5), # pooled-feature cosine
        ((0.19, -0.24, 0.65, 0.05, 0.07), -2.7),  # normalized log-probability
        ((-0.06, -0.08, -0.25, 0.17, 0.15), -0.7),  # follow-up correctness
    ]

    def test_published_rows_reproduce(self):
        datasets = ("HUMOD", "USR_TC", "P_DD", "FED_COR", "FED_REL")
        for row, want in self.PUBLISHED:
            got = stats.sensitivity_ratio(dict(zip(datasets, row))).ratio
            assert got == pytest.approx(want, abs=0.05), (row, want)

    def test_zero_worst_is_infinite(self):
        grade = {"HUMOD": 0.61, "USR_TC": 0.00, "P_DD": 0.70, "FED_COR": 0.12, "FED_REL": 0.15}
        assert stats.sensitivity_ratio(grade).ratio == math.inf

    def test_sign_preserved_for_negative_worst(self):
        fed = {"HUMOD": -0.06, "USR_TC": -0.08, "P_DD": -0.25, "FED_COR": 0.17, "FED_REL": 0.15}
        rep = stats.sensitivity_ratio(fed)
        assert rep.ratio == pytest.approx(-0.7, abs=0.05)
        assert rep.worst_dataset == "P_DD"

    def test_order_invariance(self):
        vals = {"A": 0.4, "B": 0.1, "C": 0.3}
        forward = stats.sensitivity_ratio(vals).ratio
        reordered = stats.sensitivity_ratio(dict(reversed(list(vals.items())))).ratio
        assert forward == reordered

    def test_needs_two_datasets(self):
        with pytest.raises(ValueError):
            stats.sensitivity_ratio({"A": 0.4})


class TestReportsAndRendering:
    def test_report_file_roundtrip(self, tmp_path):
        rep = stats.CorrelationReport(metric="m", dataset="HUMOD", split="test", n=10,
                                      spearman=0.1234567890123, pearson=-0.5,
                                      p_spearman=0.01, p_pearson=0.2)
        path = tmp_path / "r.json"
        stats.write_report(rep, path)
        assert stats.read_report(path) == rep

    def test_markdown_deterministic_metric_cell(self):
        runs = [stats.CorrelationReport(metric="relhead", dataset="HUMOD", split="test", n=10,
                                        spearman=0.58, pearson=0.58,
                                        p_spearman=0.0001, p_pearson=0.0001)] * 3
        agg = stats.aggregate_runs(runs)
        text = stats.render_reports([agg], fmt="markdown")
        assert "*0.58 (0.00)" in text
        assert "HUMOD S" in text and "HUMOD P" in text

    def test_single_run_single_dataset_table(self):
        rep = stats.CorrelationReport(metric="m", dataset="P_DD", split="test", n=10,
                                      spearman=0.5, pearson=0.4, p_spearman=0.5, p_pearson=0.5)
        text = stats.render_reports([rep], fmt="markdown")
        rows = [l for l in text.splitlines() if l.startswith("| m")]
        assert len(rows) == 1
        assert rows[0].count("|") == 4  # metric + S + P columns

    def test_csv_reparses_to_identical_values(self):
        rep = stats.CorrelationReport(metric="m", dataset="HUMOD", split="test", n=10,
                                      spearman=1 / 3, pearson=-2 / 7,
                                      p_spearman=0.012345, p_pearson=0.5)
        text = stats.render_reports([rep], fmt="csv")
        header, row = text.strip().splitlines()
        cells = dict(zip(header.split(","), row.split(",")))
        assert float(cells["spearman"]) == rep.spearman
        assert float(cells["pearson"]) == rep.pearson

    def test_json_format(self):
        rep = stats.CorrelationReport(metric="m", dataset="HUMOD", split="test", n=10,
                                      spearman=0.5, pearson=0.4, p_spearman=0.5, p_pearson=0.5)
        payload = json.loads(stats.render_reports([rep], fmt="json"))
        assert payload["reports"][0]["spearman"] == 0.5
