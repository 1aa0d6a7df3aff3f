"""Ingestion, alignment, synthetic generation, and the CLI surface."""

import json
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from eapo.cli import main as cli_main
from eapo.data import (align_forward_carry, complete_intensities, export_records,
                       ingest, synth_generate)
from eapo.errors import SchemaError


@pytest.fixture(scope="module")
def small_records():
    return synth_generate(n_assets=10, n_days=620, n_sectors=3,
                          missing_rate=0.2, seed=7)


@pytest.fixture(scope="module")
def small_dir(small_records, tmp_path_factory):
    d = tmp_path_factory.mktemp("dataset")
    export_records(small_records, d)
    return d


class TestIngest:
    def test_round_trip(self, small_records, small_dir):
        back = ingest(small_dir)
        for name in ("prices", "emissions", "revenues", "sectors"):
            a = getattr(small_records, name)
            a = a.sort_values(list(a.columns)).reset_index(drop=True)
            b = getattr(back, name)
            b = b.sort_values(list(b.columns)).reset_index(drop=True)
            pd.testing.assert_frame_equal(a, b, check_dtype=False)

    def test_empty_confidence_accepted(self, tmp_path):
        _write_minimal(tmp_path)
        records = ingest(tmp_path)
        assert (records.emissions["confidence"] == "").any()

    def test_duplicate_emission_key_rejected(self, tmp_path):
        _write_minimal(tmp_path)
        path = tmp_path / "emissions.csv"
        lines = path.read_text().splitlines()
        lines.append(lines[1])  # duplicate (ticker, fiscal_year, scope)
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(SchemaError) as err:
            ingest(tmp_path)
        assert "duplicate" in str(err.value)

    def test_bad_date_rejected_with_line(self, tmp_path):
        _write_minimal(tmp_path)
        path = tmp_path / "prices.csv"
        text = path.read_text().replace("2020-01-02", "01/02/2020", 1)
        path.write_text(text)
        with pytest.raises(SchemaError) as err:
            ingest(tmp_path)
        assert "line 2" in str(err.value)

    def test_nonpositive_revenue_rejected(self, tmp_path):
        _write_minimal(tmp_path)
        path = tmp_path / "revenues.csv"
        text = path.read_text().replace("1000000.0", "-5.0", 1)
        path.write_text(text)
        with pytest.raises(SchemaError):
            ingest(tmp_path)

    def test_wrong_header_rejected(self, tmp_path):
        _write_minimal(tmp_path)
        path = tmp_path / "sectors.csv"
        path.write_text("symbol,sector\nX,Tech\n")
        with pytest.raises(SchemaError):
            ingest(tmp_path)


def _write_minimal(d: Path):
    (d / "prices.csv").write_text(
        "date,ticker,adjusted_close\n"
        "2020-01-02,X,100.0\n2020-01-03,X,101.0\n"
        "2020-01-02,Y,50.0\n2020-01-03,Y,49.0\n")
    (d / "emissions.csv").write_text(
        "ticker,fiscal_year,scope,tco2e,confidence\n"
        "X,2019,1,5000.0,A\nY,2019,1,100.0,\n")
    (d / "revenues.csv").write_text(
        "ticker,quarter_end,revenue_usd\n"
        "X,2019-12-31,1000000.0\nY,2019-12-31,2000000.0\n")
    (d / "sectors.csv").write_text("ticker,sector\nX,Energy\nY,Tech\n")


class TestForwardCarry:
    def test_single_disclosure_carried_forward(self):
        records = synth_generate(n_assets=4, n_days=900, n_sectors=2,
                                 missing_rate=0.0, seed=11)
        # keep only the earliest fiscal year's disclosures for asset A0000
        emis = records.emissions
        keep = ~((emis["ticker"] == "A0000")
                 & (emis["fiscal_year"] > emis["fiscal_year"].min()))
        records.emissions = emis[keep].reset_index(drop=True)
        ds = align_forward_carry(records, scope=1)
        col = ds.intensity["A0000"].dropna()
        assert col.nunique() == 1  # same lambda carried through every date

    def test_disclosure_after_date_not_used(self):
        records = synth_generate(n_assets=3, n_days=550, n_sectors=2,
                                 missing_rate=0.0, seed=12)
        ds = align_forward_carry(records, scope=1)
        base_row = ds.intensity.iloc[2].copy()
        t = ds.intensity.index[2]
        # perturb every disclosure whose reference date falls on/after t
        mutated = records.emissions.copy()
        ref_years = mutated["fiscal_year"].astype(int)
        on_or_after = pd.to_datetime(ref_years.astype(str) + "-12-31") >= t
        mutated.loc[on_or_after, "tco2e"] *= 100.0
        records2 = synth_generate(n_assets=3, n_days=550, n_sectors=2,
                                  missing_rate=0.0, seed=12)
        records2.emissions = mutated
        ds2 = align_forward_carry(records2, scope=1)
        np.testing.assert_array_equal(base_row.values, ds2.intensity.loc[t].values)

    def test_intensity_unit_convention(self, tmp_path):
        # 100 tCO2e on 50mm TTM revenue -> 2.0 tCO2e per $mm
        (tmp_path / "prices.csv").write_text(
            "date,ticker,adjusted_close\n" + "".join(
                f"{d.date().isoformat()},X,100.0\n"
                for d in pd.bdate_range("2020-01-01", periods=40)))
        (tmp_path / "emissions.csv").write_text(
            "ticker,fiscal_year,scope,tco2e,confidence\nX,2019,1,100.0,A\n")
        quarters = ["2019-03-31", "2019-06-30", "2019-09-30", "2019-12-31"]
        (tmp_path / "revenues.csv").write_text(
            "ticker,quarter_end,revenue_usd\n" + "".join(
                f"X,{q},{12.5e6!r}\n" for q in quarters))
        (tmp_path / "sectors.csv").write_text("ticker,sector\nX,Industrials\n")
        ds = align_forward_carry(ingest(tmp_path), scope=1)
        values = ds.intensity["X"].dropna().unique()
        assert values.tolist() == [2.0]

    def test_partial_revenue_flagged(self, tmp_path):
        _write_minimal(tmp_path)
        ds = align_forward_carry(ingest(tmp_path), scope=1)
        assert (ds.provenance.values == "partial_revenue").any()

    def test_partial_price_coverage_dropped(self, small_records):
        records = synth_generate(n_assets=5, n_days=300, n_sectors=2,
                                 missing_rate=0.0, seed=13)
        # remove the first price row of one ticker
        prices = records.prices
        victim = prices[prices["ticker"] == "A0001"].index[0]
        records.prices = prices.drop(index=victim).reset_index(drop=True)
        with pytest.warns(RuntimeWarning):
            ds = align_forward_carry(records, scope=1)
        assert "A0001" not in ds.returns.columns


class TestCompleteIntensities:
    def test_fills_all_missing_and_preserves_observed(self, small_records):
        ds = align_forward_carry(small_records, scope=1)
        lam = complete_intensities(ds, k=4, seed=1)
        assert not np.isnan(lam.values).any()
        observed = np.isfinite(ds.intensity.values)
        np.testing.assert_array_equal(lam.values[observed],
                                      ds.intensity.values[observed])
        assert (lam.values > 0).all()

    def test_strict_mode_keeps_missing(self, small_records):
        ds = align_forward_carry(small_records, scope=1)
        lam = complete_intensities(ds, strict=True)
        assert np.isnan(lam.values).any()

    def test_deterministic(self, small_records):
        ds = align_forward_carry(small_records, scope=1)
        a = complete_intensities(ds, k=3, seed=9)
        b = complete_intensities(ds, k=3, seed=9)
        pd.testing.assert_frame_equal(a, b)


class TestSynth:
    def test_deterministic_given_seed(self):
        a = synth_generate(n_assets=6, n_days=50, seed=3)
        b = synth_generate(n_assets=6, n_days=50, seed=3)
        for name in ("prices", "emissions", "revenues", "sectors"):
            pd.testing.assert_frame_equal(getattr(a, name), getattr(b, name))

    def test_missing_rate_zero_complete(self):
        rec = synth_generate(n_assets=8, n_days=300, missing_rate=0.0, seed=4)
        ds = align_forward_carry(rec, scope=1)
        assert not np.isnan(ds.intensity.values).any()

    def test_zero_correlation_measured_small(self):
        rec = synth_generate(n_assets=200, n_days=500,
                             intensity_return_correlation=0.0, seed=5)
        ds = align_forward_carry(rec, scope=1)
        lam = ds.intensity.iloc[-1].values
        mean_ret = ds.returns.mean(axis=0).values
        corr = np.corrcoef(lam, mean_ret)[0, 1]
        assert abs(corr) < 0.1


class TestCli:
    def test_synth_ingest_roundtrip(self, tmp_path):
        out = tmp_path / "data"
        assert cli_main(["synth", "--n", "8", "--days", "400", "--seed", "5",
                         "--out", str(out)]) == 0
        assert cli_main(["ingest", "--data", str(out)]) == 0

    def test_backtest_single_strategy(self, tmp_path, capsys):
        data = tmp_path / "data"
        cli_main(["synth", "--n", "8", "--days", "620", "--seed", "6",
                  "--out", str(data)])
        out = tmp_path / "out"
        code = cli_main(["backtest", "--data", str(data), "--strategy", "ew",
                         "--seed", "1", "--out", str(out)])
        assert code == 0
        report = json.loads((out / "report_ew.json").read_text())
        assert report["strategy"] == "ew"
        assert (out / "weights_ew.csv").read_text().splitlines()[0] == "date,ticker,weight"

    def test_full_pipeline_all_strategies_and_infer(self, tmp_path):
        data = tmp_path / "data"
        cli_main(["synth", "--n", "10", "--days", "620", "--seed", "8",
                  "--missing-rate", "0.15", "--out", str(data)])
        out = tmp_path / "out"
        code = cli_main(["backtest", "--data", str(data), "--strategy", "all",
                         "--seed", "2", "--out", str(out)])
        assert code == 0
        weight_files = sorted(p.name for p in out.glob("weights_*.csv"))
        assert len(weight_files) == 4
        code = cli_main(["infer", str(out / "report_eapo.json"),
                         str(out / "report_ew.json"), "--replications", "50",
                         "--seed", "3", "--out", str(out)])
        assert code == 0
        payload = json.loads((out / "inference.json").read_text())
        assert payload["pair"] == ["eapo", "ew"]

    def test_infer_identical_reports_undefined_t(self, tmp_path, capsys):
        data = tmp_path / "data"
        cli_main(["synth", "--n", "6", "--days", "500", "--seed", "9",
                  "--out", str(data)])
        out = tmp_path / "out"
        cli_main(["backtest", "--data", str(data), "--strategy", "ew",
                  "--out", str(out)])
        capsys.readouterr()
        code = cli_main(["infer", str(out / "report_ew.json"),
                         str(out / "report_ew.json"), "--replications", "10"])
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["hac"]["mean_diff"] == 0.0
        assert payload["hac"]["t"] is None  # undefined, serialized as null

    def test_reports_byte_identical_across_runs(self, tmp_path):
        data = tmp_path / "data"
        cli_main(["synth", "--n", "6", "--days", "560", "--seed", "10",
                  "--missing-rate", "0.1", "--out", str(data)])
        out1, out2 = tmp_path / "o1", tmp_path / "o2"
        for out in (out1, out2):
            cli_main(["backtest", "--data", str(data), "--strategy", "eapo",
                      "--seed", "4", "--out", str(out)])
        assert ((out1 / "report_eapo.json").read_bytes()
                == (out2 / "report_eapo.json").read_bytes())
        assert ((out1 / "weights_eapo.csv").read_bytes()
                == (out2 / "weights_eapo.csv").read_bytes())

    def test_frontier_and_sweep_and_dp(self, tmp_path):
        data = tmp_path / "data"
        cli_main(["synth", "--n", "6", "--days", "560", "--seed", "11",
                  "--out", str(data)])
        out = tmp_path / "out"
        assert cli_main(["frontier", "--data", str(data), "--out", str(out),
                         "--points", "12"]) == 0
        header = (out / "frontier.csv").read_text().splitlines()[0]
        assert header == "mu,mean_return,intensity,value"
        assert cli_main(["sweep", "--data", str(data), "--out", str(out),
                         "--gammas", "0.0,1.0", "--thetas", "0.5",
                         "--ms", "1,10"]) == 0
        assert cli_main(["dp-demo", "--seed", "1"]) == 0

    def test_usage_error_exit_one(self):
        assert cli_main(["backtest", "--nonsense"]) == 1
        assert cli_main(["frontier"]) == 1

    def test_data_error_exit_two(self, tmp_path):
        missing = tmp_path / "nope"
        assert cli_main(["ingest", "--data", str(missing)]) == 2

    def test_config_file_round_trip(self, tmp_path):
        data = tmp_path / "data"
        cli_main(["synth", "--n", "6", "--days", "560", "--seed", "12",
                  "--out", str(data)])
        cfg = tmp_path / "cfg.toml"
        cfg.write_text('gamma = 1.5\ntheta = 0.25\nm = 4\nlookback = 150\n'
                       'cost_bps = 1.0\n')
        out = tmp_path / "out"
        code = cli_main(["backtest", "--data", str(data), "--strategy", "eapo",
                         "--config", str(cfg), "--out", str(out)])
        assert code == 0
        report = json.loads((out / "report_eapo.json").read_text())
        assert report["config"]["solver"]["gamma"] == 1.5
        assert report["config"]["lookback"] == 150
