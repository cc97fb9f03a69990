"""
The whole pipeline in one call
==============================

Filter rare labels, hold out four athletes, compute spectra, search the
kernel, refit and evaluate. The report below is what ``acrosense pipeline``
writes as eval.json. This takes a minute or two.
"""

import sys

from acrosense.pipeline import RunConfig, run_pipeline, write_pipeline_outputs

cfg = RunConfig(cv="sgkf", seed=0)
result = run_pipeline(cfg)
report = result.report

print("kernel:", report.kernel["expression"])
print("cv accuracy %.3f +- %.3f" % (report.cv_accuracy_mean, report.cv_accuracy_std))
print("holdout accuracy %.3f" % report.holdout_accuracy)
for row in report.importance:
    print("  %-6s drop %+.3f" % (row["channel"], row["mean_drop"]))

# Pass a directory to keep eval.json, confusion.csv, the model and the plots
if len(sys.argv) > 1:
    write_pipeline_outputs(result, sys.argv[1])
