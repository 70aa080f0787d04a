import json
import math
from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

from noma_mec.channel import ChannelParams
from noma_mec.errors import ConfigError
from noma_mec.experiments import (
    PRESETS,
    SEED_ENV,
    ExperimentSpec,
    TaskRanges,
    generate_tasks,
    parse_config,
    parse_config_text,
    preset,
    resolve_seed,
    run_experiment,
    summary_series,
)
from noma_mec.model import SystemConfig

SMALL = """
[experiment]
id = custom
replications = 2
seed = 5
[system]
freq_rbs = 4
max_users_per_rb = 2
[sweep]
users = 4, 6
"""


def test_empty_config_gives_defaults():
    spec = parse_config_text("")
    assert spec.experiment == "custom" and spec.sweep == () and spec.master_seed is None
    assert spec.points() == [{}]
    assert spec.system_config({}) == SystemConfig()
    assert spec.tasks == TaskRanges()


def test_sweep_points():
    spec = parse_config_text("[sweep]\nusers = 4,6,8\n")
    assert [p["users"] for p in spec.points()] == [4, 6, 8]
    assert [spec.system_config(p).num_users for p in spec.points()] == [4, 6, 8]


def test_sweep_product_first_axis_slowest():
    spec = parse_config_text("[sweep]\nfreq_rbs = 6, 8\nmax_users_per_rb = 1, 2\n")
    assert spec.points() == [{"freq_rbs": 6, "max_users_per_rb": 1}, {"freq_rbs": 6, "max_users_per_rb": 2},
                             {"freq_rbs": 8, "max_users_per_rb": 1}, {"freq_rbs": 8, "max_users_per_rb": 2}]


def test_compute_pairs():
    spec = parse_config_text("[sweep]\ncompute = 30x4, 120x1\n")
    cfgs = [spec.system_config(p) for p in spec.points()]
    assert [(c.num_comp_rbs, c.comp_rb_capacity) for c in cfgs] == [(30, 4e9), (120, 1e9)]


def test_input_mean_sets_range():
    spec = parse_config_text("[sweep]\ninput_mean = 4000\n")
    assert spec.task_ranges(spec.points()[0]).input_bits == (3000.0, 5000.0)


@pytest.mark.parametrize("text, needle", [
    ("[experiment]\nreplications = 0\n", "replications"),
    ("[experiment]\nid = fig9\n", "fig9"),
    ("[system]\nusers = 6\nbogus = 1\n", ":3"),
    ("[sweep]\nusers = 4, x\n", ":2"),
    ("[weird]\na = 1\n", "weird"),
    ("[system]\nusers = 4, 6\n", "bad.ini:2"),
    ("[system]\ncompute = 30x4, 3x1\n", "bad.ini:2"),
    ("[system]\nusers = 6\nmax_users_per_rb = 2\nclusters = 2\n", "N*u_max"),
])
def test_config_errors(text, needle):
    with pytest.raises(ConfigError) as err:
        parse_config_text(text, source="bad.ini")
    assert needle in str(err.value)


def test_missing_file():
    with pytest.raises(FileNotFoundError) as err:
        parse_config("/nonexistent/run.ini")
    assert "/nonexistent/run.ini" in str(err.value)


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_presets_parse(name):
    spec = preset(name)
    assert spec.experiment == name and spec.master_seed is None
    assert len(spec.points()) >= 2


def test_seed_precedence(monkeypatch):
    monkeypatch.delenv(SEED_ENV, raising=False)
    assert resolve_seed(ExperimentSpec()).master_seed == 0
    assert resolve_seed(ExperimentSpec(), 9).master_seed == 9
    monkeypatch.setenv(SEED_ENV, "4")
    assert resolve_seed(ExperimentSpec(), 9).master_seed == 4
    assert resolve_seed(ExperimentSpec(master_seed=2), 9).master_seed == 2
    monkeypatch.setenv(SEED_ENV, "four")
    with pytest.raises(ConfigError):
        resolve_seed(ExperimentSpec())


def test_common_random_numbers():
    spec = parse_config_text(SMALL)
    assert spec.instance_seed(0, 1) == spec.instance_seed(1, 1)
    assert spec.instance_seed(0, 0) != spec.instance_seed(0, 1)
    ind = parse_config_text(SMALL.replace("seed = 5", "seed = 5\nseed_mode = independent"))
    assert ind.instance_seed(0, 1) != ind.instance_seed(1, 1)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 12), st.integers(0, 2**40))
def test_generated_tasks_inside_ranges(U, seed):
    r = TaskRanges()
    for t in generate_tasks(U, seed, r):
        assert r.workload[0] <= t.workload <= r.workload[1]
        assert r.input_bits[0] <= t.input_bits <= r.input_bits[1]
        assert r.deadline[0] <= t.deadline <= r.deadline[1]


@pytest.fixture(scope="module")
def small_result():
    return run_experiment(parse_config_text(SMALL))


def test_rows_and_summary(small_result):
    rows = small_result.rows
    assert len(rows) == 4
    assert {r["status"] for r in rows} <= {"ok", "power_infeasible", "audit_failed", "computing_infeasible"}
    for s in small_result.summary:
        assert s["n"] == 2
        assert 0 <= s["n_feasible"] <= 2
    series = summary_series(small_result, "energy_mj_mean", "users")
    assert [x for x, _ in series[None]] == [4, 6]


def test_rerun_is_byte_identical(small_result, tmp_path):
    again = run_experiment(parse_config_text(SMALL))
    for kind in ("instances", "summary"):
        assert again.render(kind) == small_result.render(kind)
    paths = again.write(tmp_path)
    assert [p.name for p in paths] == ["custom_instances.csv", "custom_summary.csv"]
    assert paths[0].read_text().startswith("# schema: noma-mec/custom/instances/v1\n")


def test_threads_do_not_change_results(small_result):
    spec = parse_config_text(SMALL)
    assert run_experiment(spec, threads=2).render() == small_result.render()


def test_json_matches_csv_fields(small_result):
    doc = json.loads(small_result.render("summary", "json"))
    header = small_result.render("summary", "csv").splitlines()[1].split(",")
    assert doc["columns"] == header
    assert doc["schema"] == "noma-mec/custom/summary/v1"
    assert len(doc["rows"]) == 2


def test_oracle_columns():
    spec = parse_config_text("[experiment]\nreplications = 2\noracle = true\nseed = 1\n"
                             "[system]\nusers = 4\nfreq_rbs = 2\ncompute = 6x10\nmax_users_per_rb = 2\n")
    res = run_experiment(spec)
    for r in res.rows:
        assert "oracle_energy_mj" in r
        if math.isfinite(r["oracle_energy_mj"]) and r["feasible"]:
            assert r["gap_pct"] >= -1e-7
    assert "gap_pct_median" in res.summary[0]


CONFIGS = Path(__file__).resolve().parents[1] / "configs"


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_shipped_configs_match_presets(name):
    assert parse_config(CONFIGS / f"{name}.ini") == preset(name)


def test_custom_template_parses_to_defaults():
    spec = parse_config(CONFIGS / "custom.ini")
    assert spec.master_seed is None and spec.tasks == TaskRanges()
    assert spec.system_config({}) == SystemConfig()
    assert spec.channel_params() == ChannelParams()
    assert [p["users"] for p in spec.points()] == [6, 9, 12]
