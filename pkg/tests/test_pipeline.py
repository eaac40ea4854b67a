from __future__ import annotations

import json

import pytest

from aceforge.config import from_dict
from aceforge.errors import ToolchainError
from aceforge.manifest import read_manifest
from aceforge.pipeline import STAGES, Pipeline, run_pipeline


def cfg_for(out, **extra):
    return from_dict({"seed": 11, "out_dir": str(out), "synth": {"count": 20}, **extra})


def test_preflight_rejects_missing_engine(tmp_path):
    cfg = cfg_for(tmp_path, render={"engine": "no-such-engine {input}"})
    with pytest.raises(ToolchainError):
        run_pipeline(cfg)
    assert not any(tmp_path.iterdir())


@pytest.fixture(scope="module")
def twin_runs(tmp_path_factory, engine):
    a = run_pipeline(cfg_for(tmp_path_factory.mktemp("run_a")))
    b = run_pipeline(cfg_for(tmp_path_factory.mktemp("run_b")))
    return a, b


@pytest.mark.slow
def test_micro_corpus_run(twin_runs):
    a, _ = twin_runs
    assert a.synthesized == 20
    assert a.accepted >= 15
    header, samples = read_manifest(a.manifest_path)
    assert header.seed == 11 and header.split_ratios == (8, 1, 1)
    assert len(samples) == a.accepted
    for s in samples:
        assert (a.manifest_path.parent / s.image_path).is_file()
    stats = json.loads((a.run_dir / "stats.json").read_text())
    assert stats["total_samples"] == a.accepted
    for stage in STAGES:
        assert (a.run_dir / (".done-" + stage)).exists()


@pytest.mark.slow
def test_twin_runs_byte_identical(twin_runs):
    a, b = twin_runs
    assert a.run_dir.name == b.run_dir.name
    assert a.manifest_path.read_bytes() == b.manifest_path.read_bytes()
    assert (a.run_dir / "stats.json").read_bytes() == (b.run_dir / "stats.json").read_bytes()


@pytest.mark.slow
def test_resume_skips_and_invalidates(twin_runs):
    a, _ = twin_runs
    cfg = cfg_for(a.run_dir.parent)
    again = Pipeline(cfg).run()
    assert again.skipped_stages == list(STAGES)
    assert again.manifest_path.read_bytes() == a.manifest_path.read_bytes()
    # dropping the crop marker reruns crop and everything after it, but not render
    (a.run_dir / ".done-crop").unlink()
    partial = Pipeline(cfg).run()
    assert partial.skipped_stages == ["ingest", "extract", "synth", "render"]
    assert partial.manifest_path.read_bytes() == a.manifest_path.read_bytes()
