import pytest

from clarq.config import EXPERIMENTS, PARAM_SCHEMAS, ConfigError, build_config, load_config, parse_yaml
from clarq.fbl import min_blocklength
from clarq.scenarios import SCENARIOS, get_scenario


@pytest.mark.parametrize("name, snr, label, n_min", [
    ("scenario_a", (0.05, 0.05), (-13, -13), (322, 322)),
    ("scenario_b", (0.07, 0.03), (-11, -15), (232, 533)),
])
def test_presets_expand_to_reference_system(name, snr, label, n_min):
    sc = get_scenario(name)
    assert (sc.ul_snr_linear, sc.dl_snr_linear) == snr
    assert sc.label_db == label
    # the whole-dB labels truncate the exact SNRs
    assert (int(sc.ul.snr_db), int(sc.dl.snr_db)) == label
    assert sc.frame_time == 10e-3 and sc.symbol_time == 4e-6 and sc.feedback_time == 0.0
    assert sc.packet_bits == 16 and sc.eps_max == 0.2
    assert sc.n_max == 2500
    p = sc.params()
    assert (min_blocklength(sc.ul, p), min_blocklength(sc.dl, p)) == n_min


def test_unknown_preset():
    with pytest.raises(ValueError):
        get_scenario("scenario_c")


def test_overrides():
    sc = SCENARIOS["scenario_a"].with_overrides({"n_max": 1200, "ul_snr_db": -10.0})
    assert sc.n_max == 1200
    assert sc.ul.snr_db == pytest.approx(-10.0)
    assert sc.label_db is None
    with pytest.raises(ValueError):
        SCENARIOS["scenario_a"].with_overrides({"n_max": 0})


def _cfg(text, cli=None):
    data, lines = parse_yaml(text, "t.yaml")
    return build_config(data, lines, "t.yaml", cli)


def test_defaults_fill_in():
    cfg = _cfg("experiment: policy\n")
    assert cfg.scenario == SCENARIOS["scenario_a"]
    assert cfg.seed == 0 and cfg.workers == 1
    assert cfg.params == {k: v[0] for k, v in PARAM_SCHEMAS["policy"].items()}


def test_explicit_scenario_mapping():
    cfg = _cfg("experiment: policy\nscenario:\n  ul_snr_db: -12\n  dl_snr_linear: 0.03\n")
    assert cfg.scenario.name == "custom"
    assert cfg.scenario.dl_snr_linear == 0.03


def test_unknown_top_level_key_reports_line():
    with pytest.raises(ConfigError) as exc:
        _cfg("experiment: policy\nseed: 3\nsede: 4\n")
    assert exc.value.line == 3
    assert str(exc.value).startswith("t.yaml:3:")


def test_unknown_override_reports_line():
    with pytest.raises(ConfigError) as exc:
        _cfg("experiment: policy\noverrides:\n  n_max: 1200\n  snr: -3\n")
    assert exc.value.line == 4


def test_unknown_param_reports_line():
    with pytest.raises(ConfigError) as exc:
        _cfg("experiment: sweep_nmax\nparams:\n  n_max_step: 5\n  nmax_min: 3\n")
    assert exc.value.line == 4


def test_negative_step_rejected_with_line():
    with pytest.raises(ConfigError) as exc:
        _cfg("experiment: sensitivity_grid\nparams:\n  snr_db_step: -1\n")
    assert exc.value.line == 3
    assert "positive" in str(exc.value)


@pytest.mark.parametrize("text", [
    "experiment: policy\nseed: -1\n",
    "experiment: policy\nseed: 1.5\n",
    "experiment: policy\nworkers: 0\n",
    "experiment: policy\nscenario: scenario_z\n",
    "experiment: policy\nscenario: 3\n",
    "experiment: policy\nscenario:\n  ul_snr_db: -12\n",
    "experiment: policy\noverrides:\n  ul_snr_db: -12\n  ul_snr_linear: 0.1\n",
    "experiment: policy\noverrides:\n  eps_max: 0.9\n",
    "experiment: policy\noverrides:\n  packet_bits: true\n",
    "experiment: sweep_nmax\nparams:\n  n_max_min: 900\n  n_max_max: 800\n",
    "experiment: apc_case\nparams:\n  power_levels: [1.25, 1.0]\n",
    "experiment: fading_campaign\nparams:\n  strategies: [optimal, magic]\n",
    "experiment: lut_resolution\nparams:\n  steps_db: []\n",
    "experiment: simulate\nparams:\n  frames: 0\n",
    "experiment: unknown\n",
    "experiment: policy\nseed: 1\nseed: 2\n",
    "- just\n- a list\n",
    "experiment: policy\nparams: [1, 2]\n",
    "experiment: [unclosed\n",
])
def test_invalid_configs(text):
    with pytest.raises(ConfigError):
        _cfg(text)


def test_cli_overrides_use_dotted_paths():
    cfg = _cfg("experiment: policy\noverrides:\n  n_max: 1200\n", {"overrides.n_max": 1400, "seed": 9})
    assert cfg.scenario.n_max == 1400 and cfg.seed == 9


def test_echo_round_trips():
    cfg = _cfg("experiment: fading_campaign\nseed: 5\nparams:\n  runs: 10\n  shadow_sigma_db: [3, 5]\n")
    again = build_config(cfg.echo())
    assert again.echo() == cfg.echo()
    assert again.scenario == cfg.scenario
    assert again.params["shadow_sigma_db"] == [3.0, 5.0]


def test_load_config_checks_experiment_label(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("experiment: policy\n")
    assert load_config(str(path), "policy").experiment == "policy"
    with pytest.raises(ConfigError):
        load_config(str(path), "simulate")
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "missing.yaml"), "policy")


def test_every_experiment_has_defaults():
    for name in EXPERIMENTS:
        assert build_config({"experiment": name}).experiment == name
