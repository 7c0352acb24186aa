import numpy as np
import pytest
import yaml

from quadwind.config import default_config_text, from_dict, load_config
from quadwind.errors import ConfigError
from quadwind.trajectory import Figure8


def test_default_config_matches_documented_values(tmp_path):
    cfg = load_config("default", output_dir=tmp_path)
    assert cfg.output_dir == tmp_path.resolve()
    assert len(cfg.collection_winds) == 6 and cfg.collection.duration == 120.0
    assert [w.describe() for w in cfg.benchmark.winds][:4] == ["0", "4.2", "8.5", "12.1"]
    assert cfg.benchmark.seeds == (0, 1, 2, 3, 4)
    assert cfg.benchmark.controllers == ("learned", "constant", "nonlinear", "indi", "l1")
    assert isinstance(cfg.benchmark.trajectory, Figure8)
    assert cfg.training.epochs == 500 and cfg.training.alpha == 0.1
    assert cfg.gains.r == pytest.approx(cfg.residual.noise_sigma ** 2)
    np.testing.assert_allclose(cfg.gains.K, 15.0 * np.eye(3))


def test_empty_document_uses_defaults(tmp_path):
    cfg = from_dict({}, base_dir=tmp_path)
    assert cfg.output_dir == tmp_path / "runs" / "default"
    assert cfg.path("report_csv") == cfg.output_dir / "report.csv"


def test_file_round_trip(tmp_path):
    doc = yaml.safe_load(default_config_text())
    doc["benchmark"]["seeds"] = [7]
    doc["gains"]["K"] = [10.0, 11.0, 12.0]
    doc["output_dir"] = "out"
    path = tmp_path / "exp.yaml"
    path.write_text(yaml.safe_dump(doc))
    cfg = load_config(str(path))
    assert cfg.benchmark.seeds == (7,)
    np.testing.assert_allclose(np.diag(cfg.gains.K), [10.0, 11.0, 12.0])
    assert cfg.output_dir == tmp_path / "out"


@pytest.mark.parametrize("doc, field_path", [
    ({"benchmark": {"winds": [{"speed": 1.0}, {"speed": "fast"}]}}, "benchmark.winds[1].speed"),
    ({"benchmark": {"winds": [{"kind": "gusty"}]}}, "benchmark.winds[0].kind"),
    ({"benchmark": {"controllers": ["learned", "pid"]}}, "benchmark.controllers[1]"),
    ({"benchmark": {"seeds": []}}, "benchmark.seeds"),
    ({"gains": {"K": [1.0, 2.0]}}, "gains.K"),
    ({"gains": {"Lam": -1.0}}, "gains"),
    ({"vehicle": {"mass": True}}, "vehicle.mass"),
    ({"vehicle": {"thrust_max": 1.0}}, "vehicle"),
    ({"training": {"epochs": 1.5}}, "training.epochs"),
    ({"training": {"eta": 2.0}}, "training"),
    ({"collection": {"winds": [{"speed": 1.0}]}}, "collection.winds"),
    ({"residual": {"colour": 1}}, "residual.colour"),
    ({"wind": {}}, "wind"),
])
def test_errors_name_the_field(doc, field_path):
    with pytest.raises(ConfigError) as info:
        from_dict(doc)
    assert info.value.path == field_path
    assert field_path in str(info.value)


def test_unreadable_and_malformed_files(tmp_path):
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "missing.yaml"))
    bad = tmp_path / "bad.yaml"
    bad.write_text("benchmark: [unclosed\n")
    with pytest.raises(ConfigError):
        load_config(str(bad))
