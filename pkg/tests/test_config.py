import pytest

from fraclab.config import SCHEMA, ConfigIssue, load_config, parse_config
from fraclab.errors import ConfigurationError

VALID = 'p = 2.0\ns = 0.5\ndomain = "interval"\na = -1\nb = 1\nn = 256'


def _errors(text, subcommand=None, **kw):
    with pytest.raises(ConfigurationError) as info:
        parse_config(text, subcommand, **kw)
    return info.value.errors


def test_valid_example():
    cfg = parse_config(VALID)
    assert cfg.params.p == 2.0 and cfg.params.s == 0.5
    assert cfg.domain.kind == "interval" and (cfg.domain.a, cfg.domain.b) == (-1.0, 1.0)
    assert cfg.n == 256 and isinstance(cfg["n"], int)
    assert cfg.echo == {"p": 2.0, "s": 0.5, "domain": "interval", "a": -1, "b": 1, "n": 256}


def test_defaults_fill_every_key():
    cfg = parse_config("p = 3\ns = 0.4")
    assert set(cfg.values) == set(SCHEMA)
    assert cfg["tol"] == SCHEMA["tol"][2] and cfg["source"] == 1.0
    assert isinstance(cfg["p"], float)


def test_p_must_exceed_one():
    errs = _errors("p = 0.5")
    assert any("p must exceed 1" in str(e) and e.key == "p" and e.line == 1 for e in errs)


def test_singular_threshold_for_eval_op():
    errs = _errors("s = 0.9\np = 1.5", "eval-op")
    assert len(errs) == 1
    assert errs[0].key == "s" and errs[0].line == 1
    assert "2(p-1)/p" in errs[0].message and "0.666667" in errs[0].message


def test_singular_threshold_override():
    cfg = parse_config("s = 0.9\np = 1.5", "eval-op", override_singular=True)
    assert cfg.override_singular


@pytest.mark.parametrize("sub,check", [("solve", None), ("verify", "boundary"), ("suite", None)])
def test_singular_threshold_only_for_pointwise(sub, check):
    text = "s = 0.9\np = 1.5" + (f'\ncheck = "{check}"' if check else "")
    parse_config(text, sub)


@pytest.mark.parametrize("check", ["delta", "series"])
def test_singular_threshold_for_pointwise_checks(check):
    errs = _errors(f's = 0.9\np = 1.5\ncheck = "{check}"', "verify")
    assert any("2(p-1)/p" in str(e) for e in errs)


def test_unknown_key_names_line():
    errs = _errors("p = 2\ns = 0.5\n\nbogus = 3")
    assert [(e.line, e.key) for e in errs] == [(4, "bogus")]
    assert str(errs[0]) == "line 4: key 'bogus': unknown key"


def test_tables_rejected():
    errs = _errors("p = 2\ns = 0.5\n[solver]\ntol = 1e-8")
    assert errs[0].key == "solver" and "tables" in errs[0].message


def test_type_errors():
    errs = _errors('p = 2\ns = 0.5\nn = 2.5\ntol = "small"\npoints = []')
    assert {e.key for e in errs} == {"n", "tol", "points"}


def test_all_errors_collected_in_line_order():
    errs = _errors('p = 1\ns = 1.5\ndomain = "square"\nstep = "newton"')
    assert [e.key for e in errs] == ["p", "s", "domain", "step"]
    assert [e.line for e in errs] == [1, 2, 3, 4]


def test_missing_required_keys():
    errs = _errors("n = 16")
    assert {e.key for e in errs} == {"p", "s"}


def test_syntax_error_reports_line():
    errs = _errors("p = 2\ns = = 0.5")
    assert len(errs) == 1 and errs[0].line == 2 and "syntax" in errs[0].message


@pytest.mark.parametrize("text,key", [
    ('domain = "disc"\nclosure = "barrier"', "closure"),
    ('domain = "disc"\npoints = [0.5]', "points"),
    ("points = [[0.1, 0.2]]", "points"),
    ('source = "no_such_field"', "source"),
    ('criteria = ["A13"]', "criteria"),
    ("K_list = [1.0, -1.0]", "K_list"),
    ("a = 1\nb = 0", "a"),
    ("levels = 4", "levels"),
    ("n = 4", "n"),
    ("jobs = 0", "jobs"),
])
def test_precondition_errors(text, key):
    errs = _errors("p = 2\ns = 0.5\n" + text)
    assert key in {e.key for e in errs}


def test_disc_config():
    cfg = parse_config('p = 2\ns = 0.5\ndomain = "disc"\nradius = 2\npoints = [[0.5, 0.0]]')
    assert cfg.domain.kind == "disc" and cfg.domain.radius == 2.0
    assert cfg["points"] == [[0.5, 0.0]]


def test_classical_normalization():
    cfg = parse_config('p = 2\ns = 0.5\nnormalization = "classical"')
    assert cfg.params.normalization != 1.0


def test_issue_without_line():
    assert str(ConfigIssue(None, "p", "missing required key")) == "config: key 'p': missing required key"


def test_with_out_keeps_everything_else():
    cfg = parse_config(VALID)
    moved = cfg.with_out("/tmp/elsewhere")
    assert moved["out"] == "/tmp/elsewhere" and moved.params == cfg.params and moved.echo == cfg.echo


def test_load_config(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text(VALID, encoding="utf-8")
    assert load_config(path, "solve").subcommand == "solve"
    with pytest.raises(ConfigurationError, match="cannot read"):
        load_config(tmp_path / "missing.toml")
