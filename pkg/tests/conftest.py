"""Shared fixtures: synthetic source files in the published layouts."""

import numpy as np
import pytest

from kellybench import data


def _write_factor_monthly(path, rng):
    lines = [
        "This file was created from synthetic data for testing.",
        "The layout mirrors the published monthly factor file.",
        "",
        ",Mkt-RF,SMB,HML,RF",
    ]
    date = 192607
    while date <= 201912:
        mkt = rng.normal(0.6, 5.4)
        smb = rng.normal(0.0, 3.0)
        hml = rng.normal(0.0, 3.0)
        rf = max(rng.normal(0.25, 0.08), 0.0)
        lines.append(f"{date},{mkt:7.2f},{smb:7.2f},{hml:7.2f},{rf:7.2f}")
        date = data.month_add(date, 1)
    lines += ["", "Annual Factors: January-December", ",Mkt-RF,SMB,HML,RF",
              "1927,  29.47,  -2.46,  -3.75,   3.12"]
    path.write_text("\n".join(lines) + "\n")


def _write_factor_daily(path, rng):
    lines = ["Synthetic daily factor file.", "", ",Mkt-RF,RF"]
    date = 192607
    while date <= 201912:
        for day in range(1, 22):
            mkt = rng.normal(0.03, 1.0)
            rf = max(rng.normal(0.012, 0.004), 0.0)
            lines.append(f"{date:06d}{day:02d},{mkt:7.2f},{rf:7.2f}")
        date = data.month_add(date, 1)
    path.write_text("\n".join(lines) + "\n")


def _write_predictors(path, rng):
    header = "yyyymm,Index,D12,E12,b/m,tbl,AAA,BAA,lty,ntis,infl,ltr,corpr,svar"
    lines = [header]
    index = 100.0
    date = 192601
    while date <= 201912:
        index *= float(np.exp(rng.normal(0.004, 0.03)))
        d12 = 0.04 * index * float(np.exp(rng.normal(0.0, 0.05)))
        e12 = 0.07 * index * float(np.exp(rng.normal(0.0, 0.08)))
        tbl = abs(rng.normal(0.003, 0.001))
        aaa = tbl + abs(rng.normal(0.002, 0.0005))
        baa = aaa + abs(rng.normal(0.001, 0.0003))
        lty = tbl + abs(rng.normal(0.001, 0.0004))
        row = [str(date), f"{index:.4f}", f"{d12:.4f}", f"{e12:.4f}",
               f"{abs(rng.normal(0.5, 0.1)):.4f}", f"{tbl:.6f}", f"{aaa:.6f}",
               f"{baa:.6f}", f"{lty:.6f}", f"{rng.normal(0.01, 0.02):.6f}",
               f"{rng.normal(0.002, 0.004):.6f}", f"{rng.normal(0.004, 0.02):.6f}",
               f"{rng.normal(0.005, 0.015):.6f}", f"{abs(rng.normal(0.002, 0.001)):.6f}"]
        lines.append(",".join(row))
        date = data.month_add(date, 1)
    path.write_text("\n".join(lines) + "\n")


def _write_payout(path, rng):
    lines = ["yyyymm,payout"]
    date = 192601
    level = 0.04
    while date <= 201912:
        level = max(level + rng.normal(0.0, 0.001), 0.005)
        lines.append(f"{date},{level:.6f}")
        date = data.month_add(date, 1)
    path.write_text("\n".join(lines) + "\n")


@pytest.fixture(scope="session")
def source_files(tmp_path_factory):
    """Four synthetic source files covering 1926-2019."""
    root = tmp_path_factory.mktemp("sources")
    rng = np.random.default_rng(20240901)
    paths = {
        "factors_monthly": root / "factors_monthly.csv",
        "factors_daily": root / "factors_daily.csv",
        "predictors": root / "predictors.csv",
        "payout": root / "payout.csv",
    }
    _write_factor_monthly(paths["factors_monthly"], rng)
    _write_factor_daily(paths["factors_daily"], rng)
    _write_predictors(paths["predictors"], rng)
    _write_payout(paths["payout"], rng)
    return paths


@pytest.fixture(scope="session")
def dataset(source_files):
    """Standardized splits built once from the synthetic sources."""
    return data.prepare_dataset(
        source_files["factors_monthly"], source_files["factors_daily"],
        source_files["predictors"], source_files["payout"],
    )


@pytest.fixture(scope="session")
def prepared_dir(tmp_path_factory, dataset):
    out = tmp_path_factory.mktemp("prepared")
    data.save_dataset(out, dataset, manifest="fixture000000")
    return out
