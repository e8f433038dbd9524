"""Run the full pipeline and compare each stage with the published figure."""
# %%
from opasqueeze.report import ReportConfig, run_report

report = run_report()
print(report.to_table())

# %% change an input and watch which rows move
worse = run_report(ReportConfig(loss=0.5))
print()
print(worse.to_table())
