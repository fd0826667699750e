import pytest

from sciunit.config import Config, load_config, parse_config_text
from sciunit.errors import ConfigError, ParseError


def test_defaults_are_valid():
    cfg = load_config(environ={})
    assert cfg.chunk_params().boundary_bits == 12
    assert cfg.backend == "auto"


def test_file_values_parsed(tmp_path):
    path = tmp_path / "sciunit.toml"
    path.write_text(
        "# comment\n"
        'sciunit_root = "/srv/units"\n'
        "api_port = 9000\n"
        "boundary_bits = 10\n"
        "min_chunk = 256\n"
        "max_chunk = 8192\n"
        'backend = "portable"\n')
    cfg = load_config(path, environ={})
    assert cfg.sciunit_root == "/srv/units"
    assert cfg.api_port == 9000
    assert cfg.chunk_params().boundary_bits == 10
    assert cfg.backend == "portable"


def test_precedence_file_then_flags_then_env(tmp_path):
    path = tmp_path / "sciunit.toml"
    path.write_text('sciunit_root = "/from-file"\n')
    cfg = load_config(path, overrides={"sciunit_root": "/from-flag"},
                      environ={})
    assert cfg.sciunit_root == "/from-flag"
    cfg = load_config(path, overrides={"sciunit_root": "/from-flag"},
                      environ={"SCIUNIT_ROOT": "/from-env"})
    assert cfg.sciunit_root == "/from-env"


def test_none_overrides_ignored(tmp_path):
    path = tmp_path / "sciunit.toml"
    path.write_text('sciunit_root = "/from-file"\n')
    cfg = load_config(path, overrides={"sciunit_root": None}, environ={})
    assert cfg.sciunit_root == "/from-file"


def test_unknown_keys_rejected(tmp_path):
    path = tmp_path / "sciunit.toml"
    path.write_text("mystery = 1\n")
    with pytest.raises(ConfigError):
        load_config(path, environ={})


def test_missing_explicit_config_rejected(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.toml", environ={})


def test_invalid_chunk_params_rejected(tmp_path):
    path = tmp_path / "sciunit.toml"
    path.write_text("min_chunk = 100000\n")
    with pytest.raises(Exception):
        load_config(path, environ={})


def test_parse_errors_carry_line():
    with pytest.raises(ParseError) as exc:
        parse_config_text("ok = 1\nbroken line\n")
    assert exc.value.line == 2


def test_value_types():
    values = parse_config_text(
        's = "text"\nn = 42\nb = true\nu = 64_000\nbare = hello\n')
    assert values == {"s": "text", "n": 42, "b": True, "u": 64000,
                      "bare": "hello"}


def test_show_lists_every_field():
    text = Config().show()
    assert "sciunit_root" in text and "boundary_bits" in text
