import json
import pytest
import yaml

from scenefit import cli, fixtures
from scenefit.config import RunConfig
from scenefit.errors import ConfigError
from scenefit.scene_model import Variant


def _cfg(corpus, tmp_path, **changes):
    data = yaml.safe_load(corpus.config.read_text())
    data.update(changes)
    path = corpus.root / f"cfg_{tmp_path.name}.yaml"
    path.write_text(yaml.safe_dump(data))
    return path


# -- config -------------------------------------------------------------------------------


def test_config_loads_with_relative_paths(corpus):
    cfg = RunConfig.load(corpus.config)
    assert cfg.seed == fixtures.mock_config()["seed"]
    assert set(cfg.build_vlms()) == {"mock-vlm", "mock-vlm-b"}
    assert cfg.provenance()["config_checksum"] == cfg.checksum


@pytest.mark.parametrize(
    "mutate",
    [
        lambda d: d.pop("seed"),
        lambda d: d.update(seed="7"),
        lambda d: d.update(extra=1),
        lambda d: d["backends"].pop("vlm"),
        lambda d: d.update(modes={"blend": "poisson"}),
        lambda d: d.update(templates="no_such_dir"),
        lambda d: d["backends"]["vlm"].update(script="missing.json"),
        lambda d: d.update(evaluation={"k": 0}),
    ],
)
def test_config_errors(corpus, mutate):
    data = fixtures.mock_config()
    mutate(data)
    with pytest.raises(ConfigError):
        RunConfig.from_mapping(data, corpus.root)


def test_overrides_are_validated(corpus):
    cfg = RunConfig.load(corpus.config)
    assert cfg.with_overrides(seed=3, blend_mode=None).seed == 3
    with pytest.raises(ConfigError):
        cfg.with_overrides(prompting="three-stage")


# -- exit codes -----------------------------------------------------------------------------


def test_exit_codes(corpus, tmp_path, records_a):
    img = str(records_a[0].image_file)
    box = ",".join(str(v) for v in records_a[0].gt_box.as_tuple())
    out = str(tmp_path / "out")
    assert cli.main(["insert", "--config", str(_cfg(corpus, tmp_path, templates="nope")), "--image", img,
                     "--box", box, "--output-dir", out]) == 2
    bad_registry = tmp_path / "reg.jsonl"
    bad_registry.write_text("{not json}\n")
    assert cli.main(["sponsor", "--config", str(corpus.config), "--image", img, "--registry", str(bad_registry),
                     "--output-dir", out]) == 2
    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    assert cli.main(["evaluate", "--config", str(corpus.config), "--dataset", str(empty), "--output-dir", out]) == 4
    assert cli.main(["insert", "--config", str(corpus.config), "--image", str(tmp_path / "none.png"), "--box", box,
                     "--output-dir", out]) == 2


def test_backend_failure_exit_code(corpus, tmp_path, records_a):
    script = tmp_path / "empty_script.json"
    script.write_text("{}")
    data = yaml.safe_load(corpus.config.read_text())
    data["backends"]["vlm"]["script"] = str(script)
    for section in data["vlms"].values():
        section["script"] = str(script)
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text(yaml.safe_dump(data))
    box = ",".join(str(v) for v in records_a[0].gt_box.as_tuple())
    code = cli.main(["insert", "--config", str(cfg), "--image", str(records_a[0].image_file), "--box", box,
                     "--output-dir", str(tmp_path / "o")])
    assert code == 3


# -- commands -------------------------------------------------------------------------------


def _listing(root):
    return sorted(str(p.relative_to(root)) for p in root.rglob("*"))


def test_insert_writes_stages_and_is_deterministic(corpus, tmp_path, records_a):
    rec = records_a[0]
    box = ",".join(str(v) for v in rec.gt_box.as_tuple())
    before = _listing(corpus.root)
    outs = []
    for i in range(2):
        out = tmp_path / f"run{i}"
        assert cli.main(["insert", "--config", str(corpus.config), "--image", str(rec.image_file), "--box", box,
                         "--output-dir", str(out), "--dump-stages"]) == 0
        outs.append(out)
    assert _listing(corpus.root) == before
    assert sorted(p.name for p in (outs[0] / "stages").iterdir()) == [
        "00_source.png", "01_object.png", "02_box.png", "03_composite.png"]
    for name in ("composite.png", "metadata.json", "provenance.json"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


def test_insert_predicted_box_and_seamless(corpus, tmp_path, records_a):
    rec = records_a[1]
    assert cli.main(["insert", "--config", str(corpus.config), "--image", str(rec.image_file),
                     "--box-source", "predicted", "--blend-mode", "seamless", "--output-dir", str(tmp_path)]) == 0
    meta = json.loads((tmp_path / "metadata.json").read_text())
    assert meta["box_source"] == "predicted" and meta["box_confidence"] is not None


def test_sponsor_command(corpus, tmp_path, records_b):
    rec = next(r for r in records_b if r.variant is Variant.PRODUCT_NO_LOGO)
    assert cli.main(["sponsor", "--config", str(corpus.config), "--image", str(rec.image_file), "--registry",
                     str(corpus.sponsors), "--output-dir", str(tmp_path), "--dump-stages"]) == 0
    decision = json.loads((tmp_path / "decision.json").read_text())
    assert decision["decision"]["present"] is True
    assert sorted(p.name for p in (tmp_path / "stages").iterdir()) == ["00_scene.png", "01_logo.png", "02_final.png"]


def test_evaluate_with_predictions_file(corpus, tmp_path, records_a):
    preds = tmp_path / "preds.jsonl"
    preds.write_text("".join(json.dumps({"image_path": r.image_path, "category": r.canonical_category,
                                         "objects": ["a cup"], "box": r.gt_box.to_dict()}) + "\n"
                             for r in records_a))
    out = tmp_path / "out"
    assert cli.main(["evaluate", "--config", str(corpus.config), "--dataset", str(corpus.dataset_a),
                     "--predictions", str(preds), "--output-dir", str(out)]) == 0
    rep = json.loads((out / "report.json").read_text())
    row = next(r for r in rep["tables"]["category"]["rows"] if r["label"] == "predictions file")
    assert [c["value"] for c in row["cells"]] == [1.0, 1.0, 1.0]
    assert (out / "report.txt").exists() and (out / "provenance.json").exists()


def test_ablate_command(corpus, tmp_path):
    assert cli.main(["ablate", "--config", str(corpus.config), "--dataset", str(corpus.dataset_a), "--grid",
                     str(corpus.ablation_grid), "--output-dir", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    assert list(rep["tables"]) == ["ablation"]


def test_dataset_summary(corpus, tmp_path, capsys):
    assert cli.main(["dataset-summary", "--dataset", str(corpus.dataset_b), "--schema", "B",
                     "--output-dir", str(tmp_path)]) == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["total"] == 9
    assert json.loads(capsys.readouterr().out) == summary


def test_fixtures_command(tmp_path):
    assert cli.main(["fixtures", "--output-dir", str(tmp_path)]) == 0
    assert (tmp_path / "config.yaml").exists()
