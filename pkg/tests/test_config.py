import json
import math
from pathlib import Path

import pytest

from bicure.config import StudyKind, load_design, load_params, load_study, parse_r
from bicure.errors import ConfigError

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def _write(tmp_path, obj, name="c.json"):
    path = tmp_path / name
    path.write_text(obj if isinstance(obj, str) else json.dumps(obj))
    return path


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.json")), ids=lambda p: p.name)
def test_shipped_configs_load(path):
    raw = json.loads(path.read_text())
    loader = load_study if "study" in raw else load_params if "copula" in raw else load_design
    loader(path)


def test_parse_r():
    assert parse_r("inf") == math.inf and parse_r("Infinity") == math.inf
    assert parse_r(2) == 2.0
    with pytest.raises(ValueError):
        parse_r("big")


def test_named_setting_with_override(tmp_path):
    d = load_design(_write(tmp_path, {"setting": "S_A", "R": 1.0, "n": 50, "seed": 3}))
    assert d.params.regime.regime == "eq1" and d.n == 50 and d.seed == 3
    assert load_design(_write(tmp_path, {"setting": "S_A", "R": 0.5})).params.regime.regime == "lt1"


def test_explicit_params_design():
    d = load_design(CONFIGS / "design_custom.json")
    assert d.params.copula == "fgm" and d.censor == (0.0, 5.0)


@pytest.mark.parametrize("obj,where", [
    ({"setting": "A", "nn": 3}, "nn"),
    ({"setting": "Z"}, "unknown setting"),
    ({"setting": "A", "params": {"p1": 0.1, "p2": 0.2}}, "exactly one"),
    ({"params": {"theta": 1.0}}, "p1/p2"),
    ({"setting": "A", "n": 0}, "n:"),
    ({"params": {"p1": 0.3, "p2": 0.4, "R": "inf"}}, "p1 == p2"),
    ({"params": {"p1": 0.3, "p2": 0.4, "gamma": -1.0}}, "frailty variance"),
])
def test_design_errors_name_the_field(tmp_path, obj, where):
    path = _write(tmp_path, obj)
    with pytest.raises(ConfigError, match=where) as info:
        load_design(path)
    assert str(path) in str(info.value)


def test_json_syntax_error_reports_position(tmp_path):
    path = _write(tmp_path, '{"setting": "A",\n  "n": }')
    with pytest.raises(ConfigError, match="line 2 column"):
        load_design(path)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_design(tmp_path / "absent.json")


@pytest.mark.parametrize("patch,where", [
    ({"replications": 0}, "replications"),
    ({"alpha": 1.0}, "alpha"),
    ({"study": "Nope"}, "study"),
    ({"r_grid": [1.0, -2.0]}, "positive"),
    ({"design": {"setting": "Q"}}, "unknown setting"),
])
def test_study_validation(tmp_path, patch, where):
    spec = {"study": "LrtPower", "design": {"setting": "A"}, "replications": 5, "r_grid": [2.0]}
    spec.update(patch)
    with pytest.raises(ConfigError, match=where):
        load_study(_write(tmp_path, spec))


def test_study_defaults(tmp_path):
    m = load_study(_write(tmp_path, {"study": "RankValidation", "design": {"setting": "S1", "n": 40},
                                     "replications": 2}))
    assert m.study is StudyKind.rank and m.alpha == 0.05 and m.ns() == [40]
    assert m.fit.regime == "truth"
