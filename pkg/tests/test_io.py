import csv
import json
import math

import numpy as np
import pytest

from fewtherm.errors import ConfigError
from fewtherm.io import atomic_path
from fewtherm.io import dumps_json
from fewtherm.io import load_structured_config
from fewtherm.io import write_csv
from fewtherm.io import write_json
from fewtherm.io import write_jsonl
from fewtherm.io import write_schema


def test_load_by_extension(tmp_path):
    (tmp_path / "a.yaml").write_text("model:\n  dim: 2\n")
    (tmp_path / "a.json").write_text('{"model": {"dim": 2}}')
    (tmp_path / "a.toml").write_text("[model]\ndim = 2\n")
    (tmp_path / "a.cfg").write_text("model: {dim: 2}\n")
    for name in ("a.yaml", "a.json", "a.toml", "a.cfg"):
        assert load_structured_config(tmp_path / name) == {"model": {"dim": 2}}


def test_load_errors(tmp_path):
    with pytest.raises(ConfigError) as exc:
        load_structured_config(tmp_path / "missing.yaml")
    assert exc.value.field == "config"
    bad = tmp_path / "bad.json"
    bad.write_text('{\n  "model": {\n    "dim":\n  }\n}\n')
    with pytest.raises(ConfigError) as exc:
        load_structured_config(bad)
    assert exc.value.line == 4
    toml = tmp_path / "bad.toml"
    toml.write_text("[model\n")
    with pytest.raises(ConfigError):
        load_structured_config(toml)


def test_atomic_path_leaves_nothing_on_failure(tmp_path):
    target = tmp_path / "sub" / "out.txt"
    with pytest.raises(RuntimeError):
        with atomic_path(target) as tmp:
            tmp.write_text("half")
            raise RuntimeError("boom")
    assert not target.exists()
    assert list(target.parent.iterdir()) == []


def test_atomic_path_replaces_existing(tmp_path):
    target = tmp_path / "out.txt"
    target.write_text("old")
    with atomic_path(target) as tmp:
        tmp.write_text("new")
    assert target.read_text() == "new"
    assert [p.name for p in tmp_path.iterdir()] == ["out.txt"]


def test_json_is_strict_and_keeps_floats(tmp_path):
    x = 0.1 + 0.2
    text = dumps_json({"x": x, "nan": math.nan, "inf": np.inf, "arr": np.array([1.5, 2.0]), "n": np.int64(3)})
    data = json.loads(text)
    assert data == {"x": x, "nan": None, "inf": None, "arr": [1.5, 2.0], "n": 3}
    write_json(tmp_path / "a.json", {"path": tmp_path})
    assert json.loads((tmp_path / "a.json").read_text()) == {"path": str(tmp_path)}


def test_jsonl_writes_one_record_per_line(tmp_path):
    write_jsonl(tmp_path / "a.jsonl", [{"i": 0}, {"i": 1}])
    lines = (tmp_path / "a.jsonl").read_text().splitlines()
    assert [json.loads(line) for line in lines] == [{"i": 0}, {"i": 1}]


def test_csv_floats_round_trip_exactly(tmp_path):
    values = [1 / 3, 2.0**-40, 1e300, -0.0]
    write_csv(tmp_path / "a.csv", ["i", "x"], [[i, v] for i, v in enumerate(values)])
    with (tmp_path / "a.csv").open() as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["i", "x"]
    assert [float(r[1]) for r in rows[1:]] == values
    assert rows[1][0] == "0"


def test_schema_files(tmp_path):
    prefix = tmp_path / "cfg"
    paths = write_schema(prefix, {"type": "object"}, {"a": 1})
    assert sorted(p.name for p in paths) == ["cfg.json", "cfg.schema.json", "cfg.yml"]
    assert (tmp_path / "cfg.yml").read_text().strip() == "a: 1"
