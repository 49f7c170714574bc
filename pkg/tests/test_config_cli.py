"""Experiment recipes and the command-line interface."""
import json
import re
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from sparsevb import cli, harness, selftest
from sparsevb.config import (
    ConfigError,
    EstimatorSpec,
    apply_overrides,
    bundled_configs,
    load_config,
    parse_value,
)
from sparsevb.stats import stats_update

TINY = """\
name = "tiny"
N = 8
xi = 2
packet_len = 120
realizations = 2
seed = 5
snr_db = 20.0

[[estimator]]
kind = "rls"

[[estimator]]
kind = "asvb"
variant = "mpl"
"""


@pytest.fixture
def tiny(tmp_path):
    p = tmp_path / "tiny.toml"
    p.write_text(TINY)
    return p


def write(tmp_path, text):
    p = tmp_path / "cfg.toml"
    p.write_text(text)
    return p


class TestBundledConfigs:
    def test_all_figures_present(self):
        assert bundled_configs() == [f"fig{k}" for k in range(1, 9)]

    @pytest.mark.parametrize("name", [f"fig{k}" for k in range(1, 9)])
    def test_loads(self, name):
        cfg = load_config(name)
        assert cfg.N == 64 and cfg.xi == 8 and cfg.snr_db == 15.0
        assert cfg.estimators

    def test_fig1_roster(self):
        cfg = load_config("fig1")
        assert [e.label for e in cfg.estimators] == [
            "RLS", "GARLS", "CCD-lasso", "ASVB-S", "ASVB-L", "ASVB-mpL"]
        assert cfg.lam == 0.99 and cfg.packet_len == 1000 and cfg.doppler == 5e-5

    def test_fig2_forgetting_factors(self):
        cfg = load_config("fig2")
        lams = {e.label: (e.lam or cfg.lam) for e in cfg.estimators}
        assert lams.pop("ASVB-L") == 0.98
        assert set(lams.values()) == {0.96}

    def test_tracking_and_colored_scenarios(self):
        assert load_config("fig3").tracking_event == (750, None)
        assert load_config("fig3").packet_len == 1500
        assert load_config("fig8").input_kind == "butterworth_colored"
        assert load_config("fig6").sweep_key == "snr_db"


class TestValidation:
    def test_unknown_key_reports_line(self, tmp_path):
        p = write(tmp_path, TINY.replace('snr_db = 20.0', 'snr_db = 20.0\nbogus = 3'))
        with pytest.raises(ConfigError) as exc:
            load_config(p)
        assert exc.value.field == "bogus" and exc.value.line == 8
        assert f"{p}:8: bogus: unknown key" == str(exc.value)

    def test_type_error(self, tmp_path):
        p = write(tmp_path, TINY.replace("N = 8", 'N = "eight"'))
        with pytest.raises(ConfigError, match="N: expected int"):
            load_config(p)

    def test_sparsity_above_taps(self, tmp_path):
        p = write(tmp_path, TINY.replace("xi = 2", "xi = 9"))
        with pytest.raises(ConfigError) as exc:
            load_config(p)
        assert exc.value.field == "xi" and exc.value.line == 3

    def test_malformed_toml(self, tmp_path):
        p = write(tmp_path, TINY.replace("seed = 5", "seed = = 5"))
        with pytest.raises(ConfigError) as exc:
            load_config(p)
        assert exc.value.line == 6

    @pytest.mark.parametrize("block, field", [
        ('kind = "kalman"', "estimator[0].kind"),
        ('kind = "asvb"\nvariant = "x"', "estimator[0].variant"),
        ('kind = "rls"\ntau = 1.0', "estimator[0].tau"),
        ('kind = "ccd_lasso"\ntau = -1.0', "estimator[0].tau"),
        ('kind = "rls"\nlambda = 1.5', "estimator[0].lambda"),
    ])
    def test_estimator_blocks(self, tmp_path, block, field):
        head = TINY.split("[[estimator]]")[0]
        p = write(tmp_path, head + "[[estimator]]\n" + block + "\n")
        with pytest.raises(ConfigError) as exc:
            load_config(p)
        assert exc.value.field == field

    def test_duplicate_labels(self, tmp_path):
        p = write(tmp_path, TINY + '\n[[estimator]]\nkind = "rls"\n')
        with pytest.raises(ConfigError, match="duplicate label"):
            load_config(p)

    def test_missing_estimators(self, tmp_path):
        p = write(tmp_path, TINY.split("[[estimator]]")[0])
        with pytest.raises(ConfigError, match="at least one"):
            load_config(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_config(tmp_path / "nope.toml")


class TestOverrides:
    def test_parse_value(self):
        assert parse_value("20") == 20 and parse_value("0.5") == 0.5
        assert parse_value('"bpsk"') == "bpsk" and parse_value("bpsk") == "bpsk"
        assert parse_value("[1, 2]") == [1, 2]

    def test_dotted_keys(self):
        d = apply_overrides({}, ["tracking_event.time=10", "sweep.key=xi", "sweep.values=[2,4]"])
        assert d == {"tracking_event": {"time": 10}, "sweep": {"key": "xi", "values": [2, 4]}}

    def test_override_changes_digest(self):
        a = load_config("fig1")
        b = load_config("fig1", ["realizations=20"])
        assert b.realizations == 20 and a.digest() != b.digest()

    def test_bad_override(self):
        with pytest.raises(ConfigError):
            load_config("fig1", ["realizations"])
        with pytest.raises(ConfigError):
            load_config("fig1", ["realizations=0"])

    def test_replace_round_trip(self):
        cfg = load_config("fig3")
        again = cfg.replace()
        assert again == cfg and again.digest() == cfg.digest()
        assert isinstance(again.estimators[0], EstimatorSpec)


class TestRunCommand:
    def test_outputs_and_manifest(self, tiny, tmp_path):
        out = tmp_path / "out"
        res = CliRunner().invoke(cli.main, ["run", "--config", str(tiny), "--out", str(out)])
        assert res.exit_code == 0, res.output
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["seed"] == 5 and manifest["code_version"]
        assert manifest["config_digest"] == load_config(tiny).digest()
        for path in manifest["outputs"].values():
            assert Path(path).exists()
        lines = (out / "nmse_ASVB-mpL.csv").read_text().splitlines()
        assert lines[0] == "n,nmse_db,noise_var_est" and len(lines) == 121
        assert (out / "nmse_RLS.csv").read_text().splitlines()[0] == "n,nmse_db"
        for row in lines[1:]:
            assert re.fullmatch(r"\d+,[-+0-9.e]+,[-+0-9.e]+", row), row
        summary = json.loads((out / "summary.json").read_text())
        assert set(summary["estimators"]) == {"RLS", "ASVB-mpL"}

    def test_byte_identical_rerun(self, tiny, tmp_path):
        runner = CliRunner()
        for name in ("a", "b"):
            runner.invoke(cli.main, ["run", "--config", str(tiny), "--out", str(tmp_path / name)])
        for f in ("nmse_RLS.csv", "nmse_ASVB-mpL.csv"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()

    def test_overrides_and_env(self, tiny, tmp_path):
        out = tmp_path / "o"
        res = CliRunner().invoke(
            cli.main, ["run", "--out", str(out), "--set", "realizations=1", "--threads", "2"],
            env={"SPARSEVB_CONFIG": str(tiny), "SPARSEVB_SEED": "77"})
        assert res.exit_code == 0, res.output
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["seed"] == 77 and manifest["config"]["realizations"] == 1
        assert manifest["config_digest"] == load_config(
            tiny, ["realizations=1", "seed=77"]).digest()

    def test_sweep_outputs(self, tiny, tmp_path):
        out = tmp_path / "s"
        res = CliRunner().invoke(cli.main, [
            "run", "--config", str(tiny), "--out", str(out), "--set", "sweep.key=snr_db",
            "--set", "sweep.values=[10.0, 30.0]"])
        assert res.exit_code == 0, res.output
        lines = (out / "sweep_RLS.csv").read_text().splitlines()
        assert lines[0] == "snr_db,nmse_db" and lines[1].startswith("10,")

    def test_config_error_exit_code(self, tmp_path):
        p = write(tmp_path, TINY.replace("xi = 2", "xi = 9"))
        res = CliRunner().invoke(cli.main, ["run", "--config", str(p), "--out", str(tmp_path)])
        assert res.exit_code == 2
        assert ":3: xi:" in res.output

    def test_missing_config_is_io_error(self, tmp_path):
        res = CliRunner().invoke(cli.main, ["run", "--config", str(tmp_path / "x.toml"),
                                            "--out", str(tmp_path)])
        assert res.exit_code == 3

    def test_unwritable_output_is_io_error(self, tiny, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("")
        res = CliRunner().invoke(cli.main, ["run", "--config", str(tiny),
                                            "--out", str(blocker / "sub")])
        assert res.exit_code == 3

    def test_divergence_still_exits_zero(self, tiny, tmp_path, monkeypatch):
        class Exploding:
            def process(self, X, y):
                return np.full_like(X, np.inf), None

        real = harness.build_estimator
        monkeypatch.setattr(harness, "build_estimator",
                            lambda spec, cfg, support, tau=None: Exploding()
                            if spec.kind == "rls" else real(spec, cfg, support, tau))
        out = tmp_path / "d"
        res = CliRunner().invoke(cli.main, ["run", "--config", str(tiny), "--out", str(out)])
        assert res.exit_code == 0, res.output
        assert "diverged" in res.output
        info = json.loads((out / "summary.json").read_text())["estimators"]["RLS"]
        assert info["diverged_realizations"] == 2 and info["steady_state_nmse_db"] is None


class TestSelftestCommand:
    def test_clean_build_passes(self):
        res = CliRunner().invoke(cli.main, ["selftest"])
        assert res.exit_code == 0, res.output
        assert res.output.count("PASS") == 5 and "FAIL" not in res.output

    def test_injected_sign_error_fails(self, monkeypatch):
        def flipped(stats, x, y, lam, alpha_prev, alpha_prev2):
            out = stats_update(stats, x, y, lam, alpha_prev, alpha_prev2)
            out.R[np.diag_indices(len(x))] -= 2 * (np.asarray(alpha_prev)
                                                   - lam * np.asarray(alpha_prev2))
            return out

        monkeypatch.setattr(selftest, "stats_update", flipped)
        res = CliRunner().invoke(cli.main, ["selftest"])
        assert res.exit_code == 1
        assert re.search(r"FAIL\s+recursion vs batch", res.output)

    def test_oracle_tolerances(self):
        tols = {r.name: r.tol for r in selftest.run_all()}
        assert tols["Laplace marginal vs hierarchical quadrature"] == 1e-6
        assert tols["GIG(-1/2) moments vs quadrature"] <= 1e-6
