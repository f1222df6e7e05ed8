import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from agarsynth import pngio
from agarsynth.cli import main
from agarsynth.coco import (
    CATEGORY_IDS,
    annotation_record,
    build_annotation_file,
    load_json,
    validate_annotations,
    write_json,
)
from agarsynth.preview import PALETTE


def dir_digest(root):
    digest = hashlib.sha256()
    for path in sorted(Path(root).rglob("*")):
        if path.is_file():
            digest.update(str(path.relative_to(root)).encode())
            digest.update(path.read_bytes())
    return digest.hexdigest()


def write_cfg(tmp_path, text):
    path = tmp_path / "cfg.toml"
    path.write_text(text)
    return str(path)


class TestExtract:
    def test_bank_contents(self, cluster_bank_dir):
        index = load_json(cluster_bank_dir / "bank.json")
        kept = index["summary"]["kept"]
        # 9 + 9 annotated colonies collapse into 15 clusters: one pair and
        # one triple overlap, everything else is a singleton
        assert sum(kept.values()) == 15
        assert set(kept) == {"B.subtilis", "C.albicans", "E.coli", "P.aeruginosa", "S.aureus"}
        sizes = sorted(
            len(load_json(cluster_bank_dir / e["meta"])["boxes"]) for e in index["clusters"]
        )
        assert sizes == [1] * 13 + [2, 3]

    def test_rerun_is_bitwise_identical(self, demo_tree, tmp_path):
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            rc = main(
                [
                    "extract",
                    "--images", str(demo_tree / "real"),
                    "--annotations", str(demo_tree / "real" / "annotations.json"),
                    "--out", str(out),
                    "--seed", "42",
                ]
            )
            assert rc == 0
            outs.append(out)
        assert dir_digest(outs[0]) == dir_digest(outs[1])

    def test_missing_inputs_exit_code(self, demo_tree, tmp_path):
        rc = main(
            [
                "extract",
                "--images", str(demo_tree / "nowhere"),
                "--annotations", str(demo_tree / "real" / "annotations.json"),
                "--out", str(tmp_path / "x"),
            ]
        )
        assert rc == 1


class TestGenerate:
    def test_small_dataset_valid(self, cluster_bank_dir, demo_tree, tmp_path):
        cfg = write_cfg(tmp_path, "[generate]\npatch_size = 256\nn_patches = 6\nseed = 7\n")
        out = tmp_path / "ds"
        rc = main(
            [
                "generate",
                "--config", cfg,
                "--bank", str(cluster_bank_dir),
                "--dishes", str(demo_tree / "dishes"),
                "--out", str(out),
            ]
        )
        assert rc == 0
        data = load_json(out / "annotations.json")
        validate_annotations(data)
        assert len(data["images"]) == 6
        for img in data["images"]:
            assert img["width"] == img["height"] == 256
            assert (out / img["file_name"]).is_file()
            assert pngio.load_rgb(out / img["file_name"]).shape == (256, 256, 3)
        for ann in data["annotations"]:
            x, y, w, h = ann["bbox"]
            assert 0 <= x and 0 <= y and x + w <= 256 and y + h <= 256

    def test_worker_count_does_not_change_annotations(self, cluster_bank_dir, demo_tree, tmp_path):
        cfg = write_cfg(tmp_path, "[generate]\npatch_size = 128\nn_patches = 8\nseed = 3\n")
        digests = []
        for name, workers in (("w1", "1"), ("w2", "2")):
            out = tmp_path / name
            rc = main(
                [
                    "generate",
                    "--config", cfg,
                    "--bank", str(cluster_bank_dir),
                    "--dishes", str(demo_tree / "dishes"),
                    "--out", str(out),
                    "--workers", workers,
                ]
            )
            assert rc == 0
            digests.append((out / "annotations.json").read_bytes())
        assert digests[0] == digests[1]

    def test_manifest_provenance(self, cluster_bank_dir, demo_tree, tmp_path):
        cfg = write_cfg(tmp_path, "[generate]\npatch_size = 128\nn_patches = 4\nseed = 5\n")
        out = tmp_path / "ds"
        assert (
            main(
                [
                    "generate",
                    "--config", cfg,
                    "--bank", str(cluster_bank_dir),
                    "--dishes", str(demo_tree / "dishes"),
                    "--out", str(out),
                ]
            )
            == 0
        )
        manifest = load_json(out / "manifest.json")
        assert manifest["status"] == "complete"
        assert manifest["seed"] == 5
        assert len(manifest["completed"]) == 4
        assert len(manifest["provenance"]) == 4
        for entry in manifest["provenance"]:
            assert entry["dish"] == "dish_00"
            assert entry["species"] in CATEGORY_IDS


@pytest.fixture(scope="module")
def small_dataset(cluster_bank_dir, demo_tree, tmp_path_factory):
    out = tmp_path_factory.mktemp("smallds")
    cfg = out / "cfg.toml"
    cfg.write_text("[generate]\npatch_size = 128\nn_patches = 8\nseed = 11\n")
    rc = main(
        [
            "generate",
            "--config", str(cfg),
            "--bank", str(cluster_bank_dir),
            "--dishes", str(demo_tree / "dishes"),
            "--out", str(out / "ds"),
        ]
    )
    assert rc == 0
    return out / "ds"


class TestStylize:
    def test_raw_passthrough(self, small_dataset, tmp_path):
        out = tmp_path / "raw"
        rc = main(["stylize", "--dataset", str(small_dataset), "--out", str(out), "--mode", "raw"])
        assert rc == 0
        for img in load_json(small_dataset / "annotations.json")["images"]:
            assert (small_dataset / img["file_name"]).read_bytes() == (out / img["file_name"]).read_bytes()

    def test_full_mode_records_styles(self, small_dataset, demo_tree, tmp_path):
        out = tmp_path / "full"
        rc = main(
            [
                "stylize",
                "--dataset", str(small_dataset),
                "--styles", str(demo_tree / "styles"),
                "--out", str(out),
                "--mode", "full",
                "--seed", "21",
            ]
        )
        assert rc == 0
        manifest = load_json(out / "stylize_manifest.json")
        style_ids = {"style_bright", "style_cool", "style_dim", "style_warm"}
        assert set(manifest["styles"].values()) <= style_ids
        assert len(manifest["styles"]) == 8
        # geometry untouched
        a = hashlib.sha256((small_dataset / "annotations.json").read_bytes()).hexdigest()
        b = hashlib.sha256((out / "annotations.json").read_bytes()).hexdigest()
        assert a == b

    def test_external_without_bridge_fails_fatally(self, small_dataset, demo_tree, tmp_path, monkeypatch):
        monkeypatch.delenv("AGARSYNTH_BRIDGE", raising=False)
        rc = main(
            [
                "stylize",
                "--dataset", str(small_dataset),
                "--styles", str(demo_tree / "styles"),
                "--out", str(tmp_path / "ext"),
                "--mode", "external",
            ]
        )
        assert rc == 1


class TestEvaluate:
    def _preds_from_gt(self, data, score=1.0):
        return [
            {
                "image_id": a["image_id"],
                "category_id": a["category_id"],
                "bbox": a["bbox"],
                "score": score,
            }
            for a in data["annotations"]
        ]

    def test_perfect_predictions(self, small_dataset, tmp_path):
        data = load_json(small_dataset / "annotations.json")
        preds = tmp_path / "preds.json"
        preds.write_text(json.dumps(self._preds_from_gt(data)))
        out = tmp_path / "eval"
        rc = main(
            [
                "evaluate",
                "--ground-truth", str(small_dataset / "annotations.json"),
                "--predictions", str(preds),
                "--out", str(out),
            ]
        )
        assert rc == 0
        metrics = load_json(out / "metrics.json")
        assert metrics["map"] == 1.0
        assert metrics["mae"] == 0.0
        assert metrics["smape_percent"] == 0.0
        assert (out / "counting.csv").read_text().startswith("image_id,true_count,predicted_count")

    def test_empty_predictions(self, small_dataset, tmp_path):
        data = load_json(small_dataset / "annotations.json")
        preds = tmp_path / "preds.json"
        preds.write_text("[]")
        out = tmp_path / "eval"
        rc = main(
            [
                "evaluate",
                "--ground-truth", str(small_dataset / "annotations.json"),
                "--predictions", str(preds),
                "--out", str(out),
            ]
        )
        assert rc == 0
        metrics = load_json(out / "metrics.json")
        assert metrics["map"] == 0.0
        true_counts = [
            sum(1 for a in data["annotations"] if a["image_id"] == img["id"])
            for img in data["images"]
        ]
        assert metrics["mae"] == pytest.approx(np.mean(true_counts))

    def test_id_mismatch_is_validation_failure(self, small_dataset, tmp_path):
        preds = tmp_path / "preds.json"
        preds.write_text(json.dumps([
            {"image_id": 999, "category_id": 1, "bbox": [0, 0, 5, 5], "score": 0.5},
            {"image_id": 1, "category_id": 77, "bbox": [0, 0, 5, 5], "score": 0.5},
        ]))
        rc = main(
            [
                "evaluate",
                "--ground-truth", str(small_dataset / "annotations.json"),
                "--predictions", str(preds),
                "--out", str(tmp_path / "eval"),
            ]
        )
        assert rc == 2


class TestPreview:
    def _one_annotation_dataset(self, root):
        rng = np.random.default_rng(0)
        img = rng.random((64, 64, 3)) * 0.3
        pngio.save_rgb(root / "images/patch_000000.png", img)
        mask = np.zeros((64, 64))
        mask[20:30, 12:40] = 1.0
        ann = annotation_record(1, 1, CATEGORY_IDS["E.coli"], mask)
        write_json(
            root / "annotations.json",
            build_annotation_file(
                [{"id": 1, "file_name": "images/patch_000000.png", "width": 64, "height": 64}],
                [ann],
            ),
        )
        return ann

    def test_zero_previews(self, small_dataset, tmp_path):
        rc = main(["preview", "--dataset", str(small_dataset), "--n", "0", "--out", str(tmp_path / "p")])
        assert rc == 0
        assert not list((tmp_path / "p").glob("*.png")) if (tmp_path / "p").exists() else True

    def test_four_patches_one_sheet(self, small_dataset, tmp_path):
        out = tmp_path / "p"
        rc = main(["preview", "--dataset", str(small_dataset), "--n", "4", "--out", str(out)])
        assert rc == 0
        sheets = sorted(out.glob("preview_*.png"))
        assert len(sheets) == 1
        assert pngio.load_rgb(sheets[0]).shape == (256, 256, 3)

    def test_overlay_matches_annotation_coordinates(self, tmp_path):
        ds = tmp_path / "ds"
        ann = self._one_annotation_dataset(ds)
        out = tmp_path / "p"
        rc = main(["preview", "--dataset", str(ds), "--n", "1", "--out", str(out)])
        assert rc == 0
        sheet = pngio.load_rgb(out / "preview_000.png")
        x, y, w, h = ann["bbox"]
        color = np.array(PALETTE[ann["category_id"]])
        # the patch sits in the top-left quadrant of the sheet
        assert np.allclose(sheet[y, x : x + w], color, atol=2 / 255)
        assert np.allclose(sheet[y + h - 1, x : x + w], color, atol=2 / 255)
        assert np.allclose(sheet[y : y + h, x], color, atol=2 / 255)
        outside = sheet[y - 2, x : x + w]
        assert not np.allclose(outside, color, atol=2 / 255)


def test_bad_config_exit_code(tmp_path):
    rc = main(["generate", "--config", str(tmp_path / "missing.toml"),
               "--bank", "x", "--dishes", "y", "--out", str(tmp_path / "o")])
    assert rc == 1
