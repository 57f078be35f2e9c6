import json
import os

import numpy as np
import pytest

from nvramsey.config import config_schema, load_config, parse_config
from nvramsey.exceptions import ConfigError


def test_defaults():
    cfg = parse_config("")
    assert cfg.protocol.build().name == "dq_4ramsey"
    assert cfg.camera_config().n_demod == 24
    assert cfg.dephasing_model().mode == "analytic-envelope"
    g = cfg.grid_config(seed=9)
    assert g.seed == 9 and g.width == 32


def test_unknown_key_reports_path_and_line():
    text = "sample:\n  width: 4\n  widht: 5\n"
    with pytest.raises(ConfigError) as e:
        parse_config(text, "c.yaml")
    assert "sample.widht" in str(e.value) and "line 3" in str(e.value)


def test_value_errors():
    with pytest.raises(ConfigError, match="camera.n_demod"):
        parse_config("camera: {n_demod: 0}")
    with pytest.raises(ConfigError, match="kind"):
        parse_config("protocol: {kind: dq_9ramsey}")
    with pytest.raises(ConfigError, match="cannot parse"):
        parse_config("sample: [1, 2\n")
    with pytest.raises(ConfigError, match="mapping"):
        parse_config("- 1\n- 2\n")


def test_explicit_table_degrees():
    cfg = parse_config("""
protocol:
  basis: DQ
  phases_deg: [[[0, 0], [0, 0]], [[0, 0], [0, 180]], [[0, 0], [180, 180]], [[0, 0], [180, 0]]]
  weights: [1, -1, 1, -1]
""")
    p = cfg.protocol.build()
    assert not cfg.protocol.is_builtin
    assert np.isclose(p.table.array()[1, 1, 1], np.pi)
    with pytest.raises(ConfigError, match="basis and weights"):
        parse_config("protocol: {phases: [[[0, 0], [0, 0]]]}")


def test_json_config(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"run": {"frames": 5}, "constants": {"hyperfine_splitting": 2.1e6}}))
    cfg = load_config(p)
    assert cfg.run.frames == 5
    assert cfg.grid_config().constants.hyperfine_splitting == 2.1e6
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "missing.yaml")


def test_schema_published():
    s = config_schema()
    assert set(s["properties"]) >= {"sample", "constants", "protocol", "dephasing", "camera",
                                    "sweep", "run"}


def test_schema_file_up_to_date():
    path = os.path.join(os.path.dirname(__file__), "..", "docs", "config.schema.json")
    with open(path) as fh:
        assert json.load(fh) == config_schema()
