import math

import pytest

from ncota.config import ConfigError, parse_config, parse_quantity, to_db


@pytest.mark.parametrize("text,kind,want", [
    ("5MHz", "frequency", 5e6),
    ("3 GHz", "frequency", 3e9),
    ("30us", "time", 30e-6),
    ("2ms", "time", 2e-3),
    ("2km", "length", 2000.0),
    ("10dBm", "power", 1e-2),
    ("0dBW", "power", 1.0),
    ("-174dBm/Hz", "psd", 1e-3 * 10 ** -17.4),
    ("1e-20", "psd", 1e-20),
    ("250mW", "power", 0.25),
])
def test_parse_quantity(text, kind, want):
    assert parse_quantity(text, kind) == pytest.approx(want, rel=1e-12)


@pytest.mark.parametrize("text,kind", [("5 parsecs", "length"), ("10dBm/Hz", "power"),
                                       ("3dBm", "psd"), ("abc", "time")])
def test_parse_quantity_rejects(text, kind):
    with pytest.raises(ValueError):
        parse_quantity(text, kind)


def test_defaults_and_types():
    cfg = parse_config("[run]\ntrials = 3\n")
    assert cfg.get("run", "trials") == 3
    assert cfg.get("frame", "subcarriers") == 512
    assert cfg.get("channel", "bandwidth") == 5e6
    assert cfg.get("algorithm", "p_tx") is None
    assert cfg.get("problem", "batch") == "full"
    assert cfg.get("radio", "tx_power") is None


def test_error_carries_line_number():
    text = "[run]\ntrials = 3\n\n[frame]\nsymbols = two\n"
    with pytest.raises(ConfigError, match=r"exp\.ini:5: \[frame\] symbols"):
        parse_config(text, "exp.ini")
    with pytest.raises(ConfigError, match=r"exp\.ini:2: unknown key 'bogus'"):
        parse_config("[run]\nbogus = 1\n", "exp.ini")
    with pytest.raises(ConfigError, match="unknown section"):
        parse_config("[nope]\n", "exp.ini")
    with pytest.raises(ConfigError, match="expected one of"):
        parse_config("[channel]\nkind = wired\n", "exp.ini")


def test_round_trip_and_set():
    text = "[run]\ntrials = 4\nseed = 9\n\n[radio]\ntx_power = 20dBm\n"
    cfg = parse_config(text)
    again = parse_config(cfg.to_text())
    assert again.raw == cfg.raw
    changed = cfg.set("run", "trials", 7)
    assert changed.get("run", "trials") == 7 and cfg.get("run", "trials") == 4
    with pytest.raises(ConfigError):
        cfg.set("run", "trials", "many")
    with pytest.raises(ConfigError):
        cfg.set("run", "nothing", 1)


def test_to_db():
    assert to_db(1e-3) == pytest.approx(0.0)
    assert to_db(1.0, 1.0) == 0.0
    assert to_db(0.0) == -math.inf
