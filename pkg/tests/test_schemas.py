from __future__ import annotations

import json
from importlib import resources

import numpy as np
import pytest

from qdil.cli import main
from qdil.instrument import instrument_to_json
from qdil.operator_core import matrix_to_json
from qdil.vn_model import load_fixture

jsonschema = pytest.importorskip("jsonschema")


def schema(kind):
    path = resources.files("qdil") / "schemas" / f"{kind}.schema.json"
    return json.loads(path.read_text())


def test_all_shipped_schemas_are_valid_json_schema():
    for kind in ("instrument", "measuring-process", "correlation-system",
                 "report", "trajectory"):
        jsonschema.Draft202012Validator.check_schema(schema(kind))


def test_pipeline_outputs_validate(tmp_path, capsys):
    inst_path = tmp_path / "luders-z.json"
    inst_path.write_text(json.dumps(instrument_to_json(
        load_fixture("luders-z"))))
    state_path = tmp_path / "plus.json"
    state_path.write_text(json.dumps(matrix_to_json(np.full((2, 2), 0.5))))

    jsonschema.validate(json.loads(inst_path.read_text()),
                        schema("instrument"))

    for argv in (["dilate", "-i", str(inst_path)],
                 ["extend", "-i", str(inst_path)],
                 ["sample", "-i", str(inst_path), "--state", str(state_path),
                  "--steps", "25"]):
        assert main(argv) == 0
        report = json.loads(capsys.readouterr().out)
        jsonschema.validate(report, schema("report"))

    jsonschema.validate(
        json.loads((tmp_path / "luders-z.mp.json").read_text()),
        schema("measuring-process"))
    jsonschema.validate(
        json.loads((tmp_path / "luders-z.sys.json").read_text()),
        schema("correlation-system"))
    jsonschema.validate(
        json.loads((tmp_path / "luders-z.traj.json").read_text()),
        schema("trajectory"))
