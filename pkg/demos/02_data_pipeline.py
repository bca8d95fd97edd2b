"""
From source files to standardized splits
========================================

Writes miniature source files in the documented layouts (monthly/daily
factor files in percent, a predictor file, a payout-yield file), runs the
ingestion pipeline, and prints what comes out.  Swap in the real
published files to build the full 1927-2019 dataset.
"""

import tempfile
from pathlib import Path

import numpy as np

from kellybench import data

root = Path(tempfile.mkdtemp(prefix="kellybench_demo_"))
rng = np.random.default_rng(0)

# --- factor monthly file: preamble, header with Mkt-RF and RF, percent units
lines = ["synthetic preamble line", "", ",Mkt-RF,SMB,HML,RF"]
date = 192607
while date <= 193012:
    lines.append(f"{date},{rng.normal(0.6, 5.0):.2f},0.0,0.0,"
                 f"{abs(rng.normal(0.25, 0.05)):.2f}")
    date = data.month_add(date, 1)
(root / "factors_monthly.csv").write_text("\n".join(lines) + "\n")

# --- factor daily file: same idea with YYYYMMDD keys
lines = [",Mkt-RF,RF"]
date = 192607
while date <= 193012:
    for day in range(1, 22):
        lines.append(f"{date:06d}{day:02d},{rng.normal(0.03, 1.0):.2f},0.01")
    date = data.month_add(date, 1)
(root / "factors_daily.csv").write_text("\n".join(lines) + "\n")

# --- predictor file: raw columns; dp/ep/tms/dfy are derived on load
lines = ["yyyymm,Index,D12,E12,b/m,tbl,AAA,BAA,lty,ntis,infl,ltr,corpr,svar"]
date, index = 192601, 100.0
while date <= 193012:
    index *= float(np.exp(rng.normal(0.004, 0.03)))
    tbl = abs(rng.normal(0.003, 0.001))
    aaa = tbl + abs(rng.normal(0.002, 0.0005))
    lines.append(f"{date},{index:.3f},{0.04 * index:.3f},{0.07 * index:.3f},"
                 f"{abs(rng.normal(0.5, 0.1)):.3f},{tbl:.5f},"
                 f"{aaa:.5f},{aaa + abs(rng.normal(0.001, 0.0004)):.5f},"
                 f"{tbl + abs(rng.normal(0.001, 0.0005)):.5f},"
                 f"{rng.normal(0.01, 0.02):.5f},{rng.normal(0.002, 0.004):.5f},"
                 f"{rng.normal(0.004, 0.02):.5f},{rng.normal(0.005, 0.015):.5f},"
                 f"{abs(rng.normal(0.002, 0.001)):.5f}")
    date = data.month_add(date, 1)
(root / "predictors.csv").write_text("\n".join(lines) + "\n")

# --- payout-yield file: one named column
lines = ["yyyymm,payout"]
date = 192601
while date <= 193012:
    lines.append(f"{date},{abs(rng.normal(0.04, 0.005)):.5f}")
    date = data.month_add(date, 1)
(root / "payout.csv").write_text("\n".join(lines) + "\n")

# --- run the pipeline.  Note the splits are degenerate here because the
# toy range ends in 1930; with the real files they are 1927-1957 /
# 1958-1988 / 1989-2019.
raw = data.parse_factor_monthly(root / "factors_monthly.csv")
table = data.build_feature_table(
    raw,
    data.parse_predictor_monthly(root / "predictors.csv"),
    data.parse_payout_monthly(root / "payout.csv"),
    data.monthly_realized_volatility(data.parse_factor_daily(root / "factors_daily.csv")),
)
print(f"aligned table: {len(table)} months "
      f"({table[0].date}..{table[-1].date}), {data.N_FEATURES} features each")
print("feature order:", ", ".join(data.FEATURE_NAMES))

splits = data.standardize(data.make_splits(table))
train = splits["train"]
print(f"\ntrain split: {len(train.records)} months; "
      f"feature means ~0: {abs(train.feature_matrix().mean(axis=0)).max():.2e}, "
      f"stds ~1: {abs(train.feature_matrix().std(axis=0) - 1).max():.2e}")

out = root / "prepared"
data.save_dataset(out, splits)
print(f"\nsplit files written to {out}:")
for path in sorted(out.iterdir()):
    print(" ", path.name)
