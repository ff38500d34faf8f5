import json
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from voxcorr.cli import main

FAST = ["--halfwidth", "2", "--n-samples", "24", "--r-max", "3",
        "--mass-cap", "8", "--width", "90", "--height", "30"]


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    runner = CliRunner()
    res = runner.invoke(main, ["gen-synthetic", "--size", "24", "--seed", "3",
                               "-o", str(root / "data")])
    assert res.exit_code == 0, res.output
    return root


def run(args):
    res = CliRunner().invoke(main, args)
    return res


class TestGenSynthetic:
    def test_writes_descriptor_and_raws(self, workspace):
        data = workspace / "data"
        desc = json.loads((data / "dataset.json").read_text())
        assert len(desc["attributes"]) == 3
        for entry in desc["attributes"]:
            assert (data / entry["path"]).stat().st_size == 24**3 * 4
        assert (data / "labels.raw").exists()

    def test_loadable(self, workspace):
        from voxcorr.volume import load_volume

        vol = load_volume(workspace / "data" / "dataset.json")
        assert vol.dims == (24, 24, 24) and vol.m == 3


class TestPrecompute:
    def test_rejects_bad_thresholds_before_compute(self, workspace):
        res = run(["precompute", str(workspace / "data" / "dataset.json"),
                   "--t-e", "0.5", "--t-s", "0.1",
                   "--cache-dir", str(workspace / "cache")])
        assert res.exit_code != 0
        assert "t_e" in res.output
        assert not (workspace / "cache").exists() or \
            not list((workspace / "cache").glob("*.npz"))

    def test_first_run_then_cached(self, workspace):
        desc = str(workspace / "data" / "dataset.json")
        cache = str(workspace / "cache")
        r1 = run(["precompute", desc, "--cache-dir", cache] + FAST)
        assert r1.exit_code == 0, r1.output
        stats1 = json.loads(r1.output.splitlines()[-1].split("stats: ")[1])
        assert stats1["cached"]["fit"] is False
        assert stats1["pca_count"] > 0

        r2 = run(["precompute", desc, "--cache-dir", cache] + FAST)
        assert r2.exit_code == 0
        stats2 = json.loads(r2.output.splitlines()[-1].split("stats: ")[1])
        assert stats2["cached"]["fit"] is True
        assert stats2["pca_count"] == 0  # no fitting work on a cache hit

    def test_cache_key_changes_with_params(self, workspace):
        desc = str(workspace / "data" / "dataset.json")
        cache = str(workspace / "cache")
        r = run(["precompute", desc, "--cache-dir", cache, "--seed", "9"] + FAST)
        assert r.exit_code == 0
        stats = json.loads(r.output.splitlines()[-1].split("stats: ")[1])
        assert stats["cached"]["fit"] is False


class TestDensityExport:
    def test_png_written(self, workspace):
        desc = str(workspace / "data" / "dataset.json")
        cache = str(workspace / "cache")
        out = workspace / "density.png"
        r = run(["density", desc, "--subspace", "0", "--gamma", "0.7",
                 "-o", str(out), "--cache-dir", cache] + FAST)
        assert r.exit_code == 0, r.output
        from PIL import Image

        img = Image.open(out)
        assert img.size == (90, 30)


class TestRender:
    def _files(self, workspace):
        tf = workspace / "tf.json"
        tf.write_text(json.dumps({"widgets": [], "axis_brushes": {}}))
        cam = workspace / "cam.json"
        cam.write_text(json.dumps({"eye": [-60, 11.5, 11.5], "look_at": [11.5, 11.5, 11.5],
                                   "up": [0, 0, 1], "fov_deg": 25,
                                   "width": 32, "height": 32}))
        return tf, cam

    def test_missing_cache_instructs_precompute(self, workspace, tmp_path):
        tf, cam = self._files(workspace)
        r = run(["render", str(workspace / "data" / "dataset.json"),
                 "--tf", str(tf), "--camera", str(cam),
                 "-o", str(tmp_path / "out.png"),
                 "--cache-dir", str(tmp_path / "empty-cache")] + FAST)
        assert r.exit_code != 0
        assert "precompute" in r.output

    def test_empty_tf_background_and_deterministic(self, workspace):
        tf, cam = self._files(workspace)
        desc = str(workspace / "data" / "dataset.json")
        cache = str(workspace / "cache")
        outs = []
        for name in ("a.png", "b.png"):
            out = workspace / name
            r = run(["render", desc, "--tf", str(tf), "--camera", str(cam),
                     "-o", str(out), "--cache-dir", cache,
                     "--sampling-rate", "1.0"] + FAST)
            assert r.exit_code == 0, r.output
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]
        from io import BytesIO

        from PIL import Image

        arr = np.asarray(Image.open(BytesIO(outs[0])))
        assert np.all(arr[:, :, 3] == 0)  # fully transparent: background only
