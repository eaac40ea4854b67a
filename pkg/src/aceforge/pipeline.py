"""End-to-end orchestration: each stage reads and writes files under one run directory.

Layout of ``<out_dir>/<hash12>/``::

    config.json          effective configuration
    corpus.jsonl         ingest
    pool.jsonl           extract (+ pool.stats.json)
    synth/               synth (<id>.tex, index.jsonl)
    pages/               render (<id>.png, render_log.jsonl)
    cropped/             crop (<id>.png, verdicts.jsonl)
    manifest.jsonl       manifest + split
    stats.json stats.csv stats
    .done-<stage>        completion markers used for resuming
"""

from __future__ import annotations

import json
import logging
import os
import shlex
import shutil
from dataclasses import dataclass, field
from pathlib import Path

from . import boundary, extract, ingest, manifest, render, synth
from .config import AUTO, ForgeConfig
from .errors import AceForgeError, PipelineError, ToolchainError

log = logging.getLogger(__name__)

STAGES = ("ingest", "extract", "synth", "render", "crop", "manifest", "split", "stats")


def resolve_engine(command: str) -> str:
    if command != AUTO:
        render.check_command(command, "TeX engine")
        return command
    found = render.default_engine_command()
    if found is None:
        raise ToolchainError("no TeX engine found: install pdflatex, or node with the pdftex.js package")
    return found


def resolve_rasterizer(command: str) -> str:
    if command == AUTO:
        try:
            import pymupdf  # noqa: F401
        except ImportError as exc:
            raise ToolchainError("default rasterizer needs PyMuPDF: %s" % exc) from exc
        return render.DEFAULT_RASTERIZER
    render.check_command(command, "rasterizer")
    return command


def build_samples(synth_dir: Path, cropped_dir: Path, manifest_dir: Path) -> list[manifest.Sample]:
    """Join accepted crops with their synthesized annotations."""
    docs = {d.synth_id: d for d in synth.read_synth(synth_dir)}
    samples = []
    with open(cropped_dir / "verdicts.jsonl", encoding="utf-8") as fh:
        for line in fh:
            v = json.loads(line)
            if not v["accepted"]:
                continue
            doc = docs[v["synth_id"]]
            image = Path(os.path.relpath(cropped_dir.resolve() / v["image_path"], manifest_dir.resolve()))
            samples.append(manifest.Sample(
                sample_id=doc.synth_id,
                image_path=image.as_posix(),
                annotation=doc.annotation,
                width_px=v["width_px"],
                height_px=v["height_px"],
                item_kinds=tuple(doc.item_kinds),
                annotation_chars=doc.annotation_chars,
            ))
    return samples


@dataclass
class ForgeResult:
    run_dir: Path
    manifest_path: Path
    stats: manifest.StatsReport
    compiled: int
    accepted: int
    synthesized: int
    skipped_stages: list[str] = field(default_factory=list)


class Pipeline:
    def __init__(self, cfg: ForgeConfig, resume: bool = True):
        self.cfg = cfg.validate()
        self.resume = resume
        self.run_dir = Path(cfg.out_dir) / cfg.config_hash[:12]
        self.skipped: list[str] = []

    # paths
    @property
    def corpus(self) -> Path:
        return self.run_dir / "corpus.jsonl"

    @property
    def pool(self) -> Path:
        return self.run_dir / "pool.jsonl"

    @property
    def synth_dir(self) -> Path:
        return self.run_dir / "synth"

    @property
    def pages_dir(self) -> Path:
        return self.run_dir / "pages"

    @property
    def cropped_dir(self) -> Path:
        return self.run_dir / "cropped"

    @property
    def manifest_path(self) -> Path:
        return self.run_dir / "manifest.jsonl"

    def _marker(self, stage: str) -> Path:
        return self.run_dir / (".done-" + stage)

    def done(self, stage: str) -> bool:
        return self.resume and self._marker(stage).exists()

    def _invalidate_from(self, stage: str) -> None:
        for later in STAGES[STAGES.index(stage):]:
            self._marker(later).unlink(missing_ok=True)

    def preflight(self) -> tuple[str, str]:
        return resolve_engine(self.cfg.render.engine), resolve_rasterizer(self.cfg.render.rasterizer)

    def run(self) -> ForgeResult:
        engine, rasterizer = self.preflight()
        self.run_dir.mkdir(parents=True, exist_ok=True)
        (self.run_dir / "config.json").write_text(
            json.dumps(self.cfg.to_json(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        log.info("run directory %s", self.run_dir, extra={"config_hash": self.cfg.config_hash})
        steps = {
            "ingest": self._ingest,
            "extract": self._extract,
            "synth": self._synth,
            "render": lambda: self._render(engine, rasterizer),
            "crop": self._crop,
            "manifest": self._manifest,
            "split": self._split,
            "stats": self._stats,
        }
        for stage in STAGES:
            if self.done(stage):
                log.info("stage %s already complete, skipping", stage, extra={"stage": stage})
                self.skipped.append(stage)
                continue
            self._invalidate_from(stage)
            log.info("stage %s started", stage, extra={"stage": stage})
            try:
                steps[stage]()
            except PipelineError:
                raise
            except (AceForgeError, OSError) as exc:
                raise PipelineError(stage, str(exc)) from exc
            self._marker(stage).touch()
            log.info("stage %s finished", stage, extra={"stage": stage})
        return self._result()

    # stages
    def _ingest(self) -> None:
        c = self.cfg.ingest
        docs = ingest.load_corpus(self.cfg.corpus_root(), c.limit, max_depth=c.max_depth)
        if not docs:
            raise PipelineError("ingest", "no LaTeX projects found under %s" % self.cfg.corpus_root())
        ingest.write_corpus(docs, self.corpus)

    def _extract(self) -> None:
        docs = ingest.read_corpus(self.corpus)
        pool = extract.build_pool(docs, self.cfg.extract.max_item_chars)
        if not pool.items:
            raise PipelineError("extract", "no structured items found in the corpus")
        extract.write_pool(pool, self.pool)

    def _synth(self) -> None:
        pool = extract.read_pool(self.pool)
        docs = synth.synthesize(pool, self.cfg.synth_config(), self.cfg.synth.count)
        if self.synth_dir.exists():
            shutil.rmtree(self.synth_dir)
        synth.write_synth(docs, self.synth_dir)

    def _render(self, engine: str, rasterizer: str) -> None:
        r = self.cfg.render
        settings = render.RenderSettings(engine, rasterizer, r.dpi, self.cfg.effective_jobs, r.timeout, r.keep_failures)
        if self.pages_dir.exists():
            shutil.rmtree(self.pages_dir)
        records = render.render_batch(synth.read_synth(self.synth_dir), self.pages_dir, settings)
        if not any(rec["image_path"] for rec in records):
            raise PipelineError("render", "no document compiled; see %s" % (self.pages_dir / "render_log.jsonl"))

    def _crop(self) -> None:
        b = self.cfg.boundary
        rules = boundary.LayoutRules(b.edge_eps, b.min_aspect, b.max_aspect, b.min_area)
        if self.cropped_dir.exists():
            shutil.rmtree(self.cropped_dir)
        boundary.crop_pages(self.pages_dir, self.cropped_dir, b.threshold, b.margin, rules)

    def _manifest(self) -> None:
        samples = build_samples(self.synth_dir, self.cropped_dir, self.run_dir)
        if not samples:
            raise PipelineError("manifest", "no page passed the layout checks")
        header = manifest.ManifestHeader(seed=self.cfg.seed, config_hash=self.cfg.config_hash)
        manifest.write_manifest(samples, self.manifest_path, header)

    def _split(self) -> None:
        manifest.split_dataset(self.manifest_path, self.cfg.split_seed, tuple(self.cfg.split.ratios), force=True)

    def _stats(self) -> None:
        report = manifest.compute_stats(self.manifest_path)
        (self.run_dir / "stats.json").write_text(json.dumps(report.to_json(), indent=2) + "\n", encoding="utf-8")
        manifest.write_stats_csv(report, self.run_dir / "stats.csv")

    def _result(self) -> ForgeResult:
        records = render.read_render_log(self.pages_dir)
        _, samples = manifest.read_manifest(self.manifest_path)
        return ForgeResult(
            run_dir=self.run_dir,
            manifest_path=self.manifest_path,
            stats=manifest.stats_from_samples(samples),
            compiled=sum(1 for r in records if r["status"] == render.CompileStatus.OK.value and r["image_path"]),
            accepted=len(samples),
            synthesized=len(records),
            skipped_stages=list(self.skipped),
        )


def run_pipeline(cfg: ForgeConfig, resume: bool = True) -> ForgeResult:
    return Pipeline(cfg, resume).run()


def describe_command(command: str) -> str:
    return " ".join(shlex.quote(t) for t in shlex.split(command))
