import json
import os
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from fcpsim import cli
from fcpsim.chain import decompose
from fcpsim.config import ParseError, ValidationError, load_config, parse_config
from fcpsim.errors import SingularSystem

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

SMALL = """
[model]
matrix = [[0.0, 1.0], [1.0, 0.0]]
init = [0.75, 0.25]
[[model.states]]
alpha = 0.8
[[model.states]]
alpha = 0.4

[experiment]
kind = "{kind}"
t_min = 1.0
t_max = 1e4
points_per_decade = 10
n_paths = 300
master_seed = 5
barrier = 1.0

[output]
prefix = "small"
"""


def write(tmp_path, text, name="c.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def model(matrix="[[0.5, 0.5], [0.5, 0.5]]", init="[1.0, 0.0]", states=None, extra=""):
    states = states or ["alpha = 0.5", "alpha = 0.5"]
    body = "".join(f"[[model.states]]\n{s}\n" for s in states)
    return f"[model]\nmatrix = {matrix}\ninit = {init}\n{extra}\n{body}\n[experiment]\nkind = \"msd\"\n"


class TestParse:
    def test_row_sum(self):
        with pytest.raises(ValidationError, match="row sum") as exc:
            parse_config(model(matrix="[[0.5, 0.6], [0.5, 0.5]]"))
        assert exc.value.key == "model.matrix[0]"

    def test_alpha_range(self):
        with pytest.raises(ValidationError, match="alpha range") as exc:
            parse_config(model(states=["alpha = 1.2", "alpha = 0.5"]))
        assert exc.value.key == "model.states[0].alpha"

    def test_three_block_config(self):
        cfg = load_config(CONFIGS / "reducible_uniform.toml")
        assert cfg.spec.n_states == 6
        assert len(decompose(cfg.spec.matrix, cfg.spec.init).blocks) == 3

    @pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.toml")), ids=lambda p: p.stem)
    def test_shipped_configs_parse(self, path):
        assert load_config(path).spec is not None

    def test_syntax_error_has_line(self):
        with pytest.raises(ParseError, match="line 2"):
            parse_config("[model]\nmatrix = = 1\n")

    @pytest.mark.parametrize("text,key", [
        (model(init="[0.5, 0.4]"), "model.init"),
        (model(init="[1.0]"), "model.init"),
        (model(states=["alpha = 0.5"]), "model.states"),
        (model(states=["kind = 'levy'\nalpha = 0.5", "alpha = 0.5"]), "model.states[0].kind"),
        (model(states=["alpha = 0.5\nB_alpha = -1", "alpha = 0.5"]), "model.states[0].B_alpha"),
        (model(states=["kind = 'pareto'\nalpha = 0.5\nB_alpha = 1", "alpha = 0.5"]), "model.states[0].B_alpha"),
        (model(extra="sigma = 0"), "model.sigma"),
        (model(matrix="[[1.0, 0.0], [0.5]]"), "model.matrix[1]"),
        (model(matrix="[[1.5, -0.5], [0.5, 0.5]]"), "model.matrix[0]"),
        (model() + "n_paths = 0\n", "experiment.n_paths"),
        (model() + "n_paths = 2.5\n", "experiment.n_paths"),
        (model() + "t_min = 10.0\nt_max = 1.0\n", "experiment.t_min"),
        (model() + "target_state = 3\n", "experiment.target_state"),
        (model() + "barrier = 1.0\nx0 = 2.0\n", "experiment.x0"),
        (model() + "master_seed = -1\n", "experiment.master_seed"),
        (model() + "n_nodes = 31\n", "experiment.n_nodes"),
        (model().replace('"msd"', '"plot"'), "experiment.kind"),
        ("[experiment]\nkind = 'msd'\n", "model"),
    ])
    def test_validation_names_key(self, text, key):
        with pytest.raises(ValidationError) as exc:
            parse_config(text)
        assert exc.value.key == key

    def test_subcommand_overrides_kind(self):
        assert parse_config(model(), "analyze-chain").kind == "analyze-chain"

    def test_missing_kind(self):
        with pytest.raises(ValidationError, match="experiment.kind"):
            parse_config(model().replace('kind = "msd"', ""))

    def test_pareto_state(self):
        cfg = parse_config(model(states=["kind = 'pareto'\nalpha = 0.4\ntau0 = 2.0", "alpha = 0.5"]))
        assert cfg.spec.waiting[0].kind == "pareto" and cfg.spec.waiting[0].tau0 == 2.0

    def test_digest_stable(self):
        a = parse_config(model())
        b = parse_config("# comment\n" + model())
        assert a.digest == b.digest
        assert a.digest != parse_config(model() + "n_paths = 7\n").digest


@st.composite
def valid_model(draw):
    n = draw(st.integers(1, 5))
    rows = []
    for _ in range(n):
        w = np.array(draw(st.lists(st.integers(0, 4), min_size=n, max_size=n)), dtype=float)
        if w.sum() == 0:
            w[0] = 1
        rows.append(w / w.sum())
    init = np.zeros(n)
    init[draw(st.integers(0, n - 1))] = 1.0
    states = []
    for _ in range(n):
        a = draw(st.floats(0.05, 0.95))
        if draw(st.booleans()):
            states.append(f"kind = 'pareto'\nalpha = {a!r}\ntau0 = {draw(st.floats(0.1, 10))!r}")
        else:
            states.append(f"alpha = {a!r}\nB_alpha = {draw(st.floats(0.1, 10))!r}")
    fmt = lambda v: "[" + ", ".join(repr(float(x)) for x in v) + "]"
    text = model(matrix="[" + ", ".join(fmt(r) for r in rows) + "]", init=fmt(init), states=states)
    return text + "n_paths = 20\nt_min = 1.0\nt_max = 100.0\npoints_per_decade = 2\n"


class TestAcceptedConfigsExecute:
    @settings(max_examples=30, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
    @given(valid_model())
    def test_runs(self, tmp_path, text):
        cfg = parse_config(text)
        out = tmp_path / "run"
        for kind in ("analyze-chain", "msd"):
            assert cli.execute(replace(cfg, kind=kind, output_dir=str(out)), workers=1) == 0


class TestCsv:
    @settings(max_examples=100)
    @given(st.lists(st.floats(allow_nan=False, allow_infinity=True, width=64), min_size=1, max_size=20))
    def test_round_trip(self, tmp_path_factory, vals):
        p = tmp_path_factory.mktemp("csv") / "x.csv"
        cli.write_csv(p, ["a", "b"], [vals, vals[::-1]])
        header, data = cli.read_csv(p)
        assert header == ["a", "b"]
        assert data[:, 0].tobytes() == np.asarray(vals, dtype=float).tobytes()

    def test_format(self, tmp_path):
        p = tmp_path / "x.csv"
        cli.write_csv(p, ["t", "v"], [[0.1, 1e300], [np.nan, -2.0]])
        raw = p.read_bytes()
        assert b"\r" not in raw
        assert raw == b"t,v\n0.10000000000000001,nan\n1.0000000000000001e+300,-2\n"


class TestCli:
    def run(self, tmp_path, kind, *extra, text=None):
        cfg = write(tmp_path, text or SMALL.format(kind=kind))
        return cli.main([kind, "--config", str(cfg), "--out", str(tmp_path / "out"), *extra])

    def test_msd_outputs(self, tmp_path):
        assert self.run(tmp_path, "msd", "--workers", "1") == 0
        header, data = cli.read_csv(tmp_path / "out" / "small_msd.csv")
        assert header == ["t", "msd", "stderr", "oracle_asymptotic", "oracle_exact"]
        assert data.shape == (41, 5)
        man = json.loads((tmp_path / "out" / "small_msd_manifest.json").read_text())
        assert man["master_seed"] == 5 and man["n_paths"] == 300
        assert len(man["config_sha256"]) == 64 and man["wall_time_s"] >= 0
        assert {"numpy", "scipy", "numba", "fcpsim"} <= set(man["versions"])

    def test_msd_byte_identical(self, tmp_path):
        outs = []
        for i, w in enumerate(["1", "4", str(os.cpu_count()), "1"]):
            d = tmp_path / f"r{i}"
            d.mkdir()
            assert self.run(d, "msd", "--workers", w) == 0
            outs.append((d / "out" / "small_msd.csv").read_bytes())
        assert all(o == outs[0] for o in outs)

    def test_seed_override(self, tmp_path):
        (tmp_path / "a").mkdir()
        (tmp_path / "b").mkdir()
        self.run(tmp_path / "a", "msd", "--seed", "5")
        self.run(tmp_path / "b", "msd", "--seed", "6")
        a = (tmp_path / "a" / "out" / "small_msd.csv").read_bytes()
        b = (tmp_path / "b" / "out" / "small_msd.csv").read_bytes()
        assert a != b
        man = json.loads((tmp_path / "b" / "out" / "small_msd_manifest.json").read_text())
        assert man["master_seed"] == 6

    def test_fpt_outputs(self, tmp_path):
        assert self.run(tmp_path, "fpt") == 0
        h1, surv = cli.read_csv(tmp_path / "out" / "small_fpt_survival.csv")
        h2, dens = cli.read_csv(tmp_path / "out" / "small_fpt_density.csv")
        assert h1 == ["t", "survival", "stderr", "oracle_survival"]
        assert h2[:5] == ["t_lo", "t_hi", "t", "density", "stderr"]
        assert np.all(np.diff(surv[:, 1]) <= 0)
        valid = surv[:, 0] >= 13.1
        assert np.all(np.isfinite(surv[valid, 3])) and np.all(np.isnan(surv[surv[:, 0] < 12.9, 3]))

    def test_occupation_outputs(self, tmp_path):
        text = SMALL.format(kind="occupation").replace("alpha = 0.8", "alpha = 0.4") + ""
        text = text.replace("[output]", "[output]\n").replace('barrier = 1.0', 't = 1e3\ntarget_state = 2')
        assert self.run(tmp_path, "occupation", text=text) == 0
        _, hist = cli.read_csv(tmp_path / "out" / "small_occupation_hist.csv")
        _, samples = cli.read_csv(tmp_path / "out" / "small_occupation_samples.csv")
        assert samples.shape == (300, 1)
        assert np.sum(hist[:, 2] * (hist[:, 1] - hist[:, 0])) == pytest.approx(1.0)
        assert np.all(np.isfinite(hist[:, 4]))

    def test_oracle_commands(self, tmp_path):
        assert self.run(tmp_path, "oracle-msd") == 0
        assert self.run(tmp_path, "oracle-fpt") == 0
        header, data = cli.read_csv(tmp_path / "out" / "small_oracle_fpt.csv")
        assert header == ["t", "pdf", "survival", "tail"] and np.all(data[:, 1] > 0)

    def test_analyze_chain_report(self, tmp_path, capsys):
        cfg = CONFIGS / "reducible_partial.toml"
        assert cli.main(["analyze-chain", "--config", str(cfg), "--out", str(tmp_path)]) == 0
        out = capsys.readouterr().out
        assert "alpha_star = 0.4" in out
        assert (tmp_path / "reducible_partial_chain_report.txt").read_text() == out

    def test_selftest(self, tmp_path, capsys):
        assert cli.main(["selftest", "--out", str(tmp_path)]) == 0
        out = capsys.readouterr().out
        assert "FAIL" not in out and out.count("PASS") >= 15

    def test_selftest_failure_code(self, tmp_path, monkeypatch):
        from fcpsim.selftest import Check
        monkeypatch.setattr(cli, "run_all", lambda: [Check("broken", False, "")])
        assert cli.main(["selftest", "--out", str(tmp_path)]) == 4

    def test_config_error_code(self, tmp_path, capsys):
        text = SMALL.format(kind="msd").replace("[1.0, 0.0]]", "[1.0, 0.5]]")
        assert self.run(tmp_path, "msd", text=text) == 2
        assert "row sum" in capsys.readouterr().err
        assert cli.main(["msd", "--config", str(tmp_path / "missing.toml")]) == 2
        assert self.run(tmp_path, "msd", "--workers", "0") == 2
        assert self.run(tmp_path, "msd", "--seed", str(2 ** 64)) == 2

    def test_oracle_fpt_needs_alternating_chain(self, tmp_path):
        text = SMALL.format(kind="oracle-fpt").replace("[[0.0, 1.0], [1.0, 0.0]]", "[[0.5, 0.5], [0.5, 0.5]]")
        assert self.run(tmp_path, "oracle-fpt", text=text) == 2
        assert not list((tmp_path / "out").glob("*"))

    def test_numerical_failure_cleans_up(self, tmp_path, monkeypatch):
        def boom(run, workers):
            run.csv("partial.csv", ["a"], [[1.0]])
            raise SingularSystem("forced")
        monkeypatch.setitem(cli.RUNNERS, "msd", boom)
        assert self.run(tmp_path, "msd") == 3
        assert not list((tmp_path / "out").glob("*"))
