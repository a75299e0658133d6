"""The evaluation protocol: rank correlations, permutation significance,
multi-seed aggregation, and the domain-sensitivity ratio.

Metric scores are judged by Spearman and Pearson correlation against
averaged human ratings, with a seeded two-sided permutation test deciding
the significance markers: '*' when every run clears p < 0.01, a double
dagger when at least one does.
"""
import numpy as np

from dialrel.stats import (
    CorrelationReport,
    aggregate_runs,
    evaluate_scores,
    pearson,
    perm_pvalue,
    render_reports,
    sensitivity_ratio,
    spearman,
)

rng = np.random.default_rng(0)
n = 120
human = np.round(rng.uniform(1, 5, size=n) * 3) / 3  # averaged 3-annotator ratings
good_metric = human + rng.normal(0, 0.8, size=n)
noise_metric = rng.normal(size=n)

print(f"good metric : S={spearman(good_metric, human):+.3f} "
      f"P={pearson(good_metric, human):+.3f} "
      f"p={perm_pvalue(good_metric, human, 'spearman', 10_000, seed=0):.2e}")
print(f"noise metric: S={spearman(noise_metric, human):+.3f} "
      f"P={pearson(noise_metric, human):+.3f} "
      f"p={perm_pvalue(noise_metric, human, 'spearman', 10_000, seed=0):.2f}")

# Trained metrics get three seeded runs; the aggregate reports mean (std).
runs = []
for seed in (0, 1, 2):
    run_rng = np.random.default_rng(seed)
    scores = human + run_rng.normal(0, 0.9, size=n)
    runs.append(evaluate_scores(scores, human, metric="toy-head", dataset="HUMOD",
                                split="test", n_perm=2000, seed=seed))
agg = aggregate_runs(runs)
print(f"\naggregated over {agg.runs} runs: "
      f"S={agg.spearman:.2f} ({agg.spearman_std:.2f}){agg.marker_spearman} "
      f"P={agg.pearson:.2f} ({agg.pearson_std:.2f}){agg.marker_pearson}")

# Domain sensitivity: best-to-worst Spearman across evaluation datasets.
# Closer to 1 is better; a negative ratio means the metric flips sign
# somewhere, and a zero worst makes it infinite.
per_dataset = {"HUMOD": 0.58, "USR_TC": 0.18, "P_DD": 0.53,
               "FED_COR": 0.15, "FED_REL": 0.24}
report = sensitivity_ratio(per_dataset, metric="toy-head")
print(f"\nsensitivity: best {report.best:.2f} ({report.best_dataset}) / "
      f"worst {report.worst:.2f} ({report.worst_dataset}) -> ratio {report.ratio:.1f}")

# The renderer mirrors the usual results-table layout.
other = CorrelationReport(metric="cosine-baseline", dataset="HUMOD", split="test",
                          n=n, spearman=0.09, pearson=0.10,
                          p_spearman=0.2, p_pearson=0.18)
print("\n" + render_reports([agg, other], fmt="markdown"))
