import math

import pytest

from sqzsim import cfgtext
from sqzsim.config import ConfigError, SCHEMA, load_config, parse_config, serialize_config

SHIPPED = ["paper.cfg", "bright.cfg", "gain_scan.cfg", "fit.cfg", "ideal.cfg"]


def test_cfgtext_grammar():
    raw = cfgtext.loads('# comment\na.b = 1e-3  # trailing\nname = "x # y"\nflag = true\nn = 3\nz = none\n')
    assert raw == {"a.b": 1e-3, "name": "x # y", "flag": True, "n": 3, "z": None}
    with pytest.raises(cfgtext.ConfigSyntaxError) as err:
        cfgtext.loads("a = 1\nno equals sign\n")
    assert err.value.lineno == 2
    with pytest.raises(cfgtext.ConfigSyntaxError):
        cfgtext.loads("a = 1\na = 2\n")


def test_reference_config_efficiency(data_dir):
    cfg = load_config(data_dir / "paper.cfg")
    assert abs(cfg.chain.total_efficiency / 0.533 - 1) < 0.01
    assert cfg.chain.pump_power == 0.06 and cfg.pump.shg_output == 0.11


@pytest.mark.parametrize("name", SHIPPED)
def test_shipped_configs_round_trip(data_dir, name):
    cfg = load_config(data_dir / name)
    again = parse_config(serialize_config(cfg))
    assert again == cfg
    assert serialize_config(again) == serialize_config(cfg)


def test_ideal_config_is_lossless(data_dir):
    cfg = load_config(data_dir / "ideal.cfg")
    assert cfg.chain.total_efficiency == 1.0
    assert cfg.chain.phase_jitter_rms == 0 and cfg.chain.opa.seed_jitter_rms == 0


def test_empty_document_lists_required_fields():
    with pytest.raises(ConfigError, match="missing required fields: mode"):
        parse_config("")


def test_range_error_names_interval():
    with pytest.raises(ConfigError, match=r"\[0, 1\]") as err:
        parse_config('mode = "vacuum_squeeze"\nchain.eta_fiber = 1.2\n')
    assert err.value.path == "chain.eta_fiber"


def test_unknown_key_rejected_with_path():
    with pytest.raises(ConfigError) as err:
        parse_config('mode = "vacuum_squeeze"\nchain.eta_fibre = 0.7\n')
    assert err.value.path == "chain.eta_fibre"


def test_syntax_error_carries_line_number():
    with pytest.raises(ConfigError) as err:
        parse_config('mode = "vacuum_squeeze"\n\nchain.eta_fiber 0.7\n')
    assert err.value.lineno == 3


def test_type_and_choice_errors():
    with pytest.raises(ConfigError):
        parse_config('mode = "squeeze_everything"')
    with pytest.raises(ConfigError):
        parse_config('mode = "vacuum_squeeze"\nchain.eta_fiber = "high"')
    with pytest.raises(ConfigError):
        parse_config('mode = "vacuum_squeeze"\nrng_seed = 1.5')


def test_fit_mode_requires_record():
    with pytest.raises(ConfigError, match="record"):
        parse_config('mode = "fit"\nrecord.gain_max = 5.06\n')


def test_sweep_validation():
    base = 'mode = "vacuum_squeeze"\nsweep.start = 0\nsweep.stop = 1\n'
    with pytest.raises(ConfigError, match="n_points"):
        parse_config(base + 'sweep.parameter = "chain.eta_detector"\nsweep.n_points = 1\n')
    with pytest.raises(ConfigError, match="numeric"):
        parse_config(base + 'sweep.parameter = "chain.no_such"\nsweep.n_points = 3\n')
    with pytest.raises(ConfigError, match="numeric"):
        parse_config(base + 'sweep.parameter = "mode"\nsweep.n_points = 3\n')
    cfg = parse_config(base + 'sweep.parameter = "chain.eta_detector"\nsweep.n_points = 5\n')
    assert cfg.sweep.values() == [0.0, 0.25, 0.5, 0.75, 1.0]


def test_pump_section_must_agree_with_chain():
    text = (
        'mode = "vacuum_squeeze"\npump.fundamental_power = 0.8\npump.shg_output = 0.11\n'
        "pump.pump_into_wg2 = 0.05\n"
    )
    assert parse_config(text).chain.pump_power == 0.05
    with pytest.raises(ConfigError, match="disagrees"):
        parse_config(text + "chain.pump_power = 0.06\n")
    with pytest.raises(ConfigError):
        parse_config(text.replace("0.05", "0.2"))


def test_eta_mid_below_eta_wg_is_config_error():
    with pytest.raises(ConfigError):
        parse_config('mode = "vacuum_squeeze"\nchain.opa.eta_mid = 0.5\n')


def test_overrides_revalidate():
    cfg = parse_config('mode = "vacuum_squeeze"')
    assert cfg.with_overrides(**{"chain.eta_detector": 0.5}).chain.eta_detector == 0.5
    with pytest.raises(ConfigError):
        cfg.with_overrides(**{"chain.eta_detector": 1.5})


def test_schema_defaults_are_documented():
    assert SCHEMA["chain.eta_fiber"].default == 0.74
    assert SCHEMA["waveform.amplitude"].default == pytest.approx(4 * math.pi)
    assert SCHEMA["bhd.dark_clearance_db"].default is None
