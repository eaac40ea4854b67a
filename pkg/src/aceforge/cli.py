"""``aceforge`` command-line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 missing external
tool, 3 pipeline or evaluation failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import (
    __version__,
    boundary,
    extract,
    ingest,
    logs,
    manifest,
    metrics,
    pipeline,
    render,
    synth,
)
from .config import ForgeConfig, load_config
from .errors import AceForgeError, ConfigError, EvaluationError, ToolchainError

log = logging.getLogger("aceforge.cli")

EXIT_OK, EXIT_USAGE, EXIT_ENV, EXIT_PIPELINE = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, "%s: error: %s\n" % (self.prog, message))


def _global_options(parser: argparse.ArgumentParser, suppress: bool) -> None:
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", default=default, help="JSON configuration file")
    parser.add_argument("--seed", type=int, default=default)
    parser.add_argument("--jobs", type=int, default=default, help="parallel workers (default: CPU count)")
    parser.add_argument("--verbose", action="store_true", default=argparse.SUPPRESS if suppress else False)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="aceforge", description=__doc__.splitlines()[0].strip("`"))
    ap.add_argument("--version", action="version", version="aceforge " + __version__)
    _global_options(ap, suppress=False)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def cmd(name, help_text):
        p = sub.add_parser(name, help=help_text)
        _global_options(p, suppress=True)
        return p

    p = cmd("ingest", "load and normalize a LaTeX corpus")
    p.add_argument("--root", required=True)
    p.add_argument("--limit", type=int)
    p.add_argument("--max-depth", type=int)
    p.add_argument("--out", required=True)

    p = cmd("extract", "pool structured items from an ingested corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--max-chars", type=int)
    p.add_argument("--out", required=True)

    p = cmd("synth", "synthesize LaTeX documents from a pool")
    p.add_argument("--pool", required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--target-chars", type=int)
    p.add_argument("--out", required=True)

    p = cmd("render", "compile and rasterize synthesized documents")
    p.add_argument("--synth", required=True)
    p.add_argument("--engine", help="engine command template ({input}, {outdir}, {jobname})")
    p.add_argument("--rasterizer", help="rasterizer command template ({input}, {output}, {dpi})")
    p.add_argument("--dpi", type=float)
    p.add_argument("--timeout", type=float)
    p.add_argument("--keep-failures", action="store_true")
    p.add_argument("--out", required=True)

    p = cmd("crop", "detect content boxes, judge layouts and crop pages")
    p.add_argument("--pages", required=True)
    p.add_argument("--threshold", type=float)
    p.add_argument("--margin", type=int)
    p.add_argument("--out", required=True)

    p = cmd("manifest", "write a manifest from synthesized documents and cropped pages")
    p.add_argument("--synth", required=True)
    p.add_argument("--cropped", required=True)
    p.add_argument("--out", required=True)

    p = cmd("split", "assign train/val/test splits in place")
    p.add_argument("--manifest", required=True)
    p.add_argument("--ratios", type=int, nargs=3, metavar=("TRAIN", "VAL", "TEST"))
    p.add_argument("--force", action="store_true", help="re-split an already split manifest")

    p = cmd("stats", "dataset statistics")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--csv")

    p = cmd("eval", "score parser predictions against a manifest's test split")
    p.add_argument("--pred", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--allow-partial", action="store_true")
    p.add_argument("--split", default="test")
    p.add_argument("--method", default="this run", help="row label in the report table")

    p = cmd("forge", "run every stage end to end")
    p.add_argument("--root", help="corpus directory (default: bundled demo corpus)")
    p.add_argument("--count", type=int)
    p.add_argument("--target-chars", type=int)
    p.add_argument("--engine")
    p.add_argument("--rasterizer")
    p.add_argument("--dpi", type=float)
    p.add_argument("--out", help="output directory")
    p.add_argument("--no-resume", action="store_true", help="rerun stages even if complete")
    return ap


def _overrides(args) -> dict:
    """Translate CLI flags into the nested config shape."""
    o: dict = {}

    def put(section, key, value):
        if value is not None:
            if section is None:
                o[key] = value
            else:
                o.setdefault(section, {})[key] = value

    put(None, "seed", getattr(args, "seed", None))
    put(None, "jobs", getattr(args, "jobs", None))
    put("ingest", "root", getattr(args, "root", None) if args.command == "forge" else None)
    put("ingest", "limit", getattr(args, "limit", None))
    put("ingest", "max_depth", getattr(args, "max_depth", None))
    put("extract", "max_item_chars", getattr(args, "max_chars", None))
    put("synth", "count", getattr(args, "count", None))
    put("synth", "target_annotation_chars", getattr(args, "target_chars", None))
    put("render", "engine", getattr(args, "engine", None))
    put("render", "rasterizer", getattr(args, "rasterizer", None))
    put("render", "dpi", getattr(args, "dpi", None))
    put("render", "timeout", getattr(args, "timeout", None))
    if getattr(args, "keep_failures", False):
        put("render", "keep_failures", True)
    put("boundary", "threshold", getattr(args, "threshold", None))
    put("boundary", "margin", getattr(args, "margin", None))
    if getattr(args, "ratios", None):
        put("split", "ratios", list(args.ratios))
    if args.command == "forge":
        put(None, "out_dir", getattr(args, "out", None))
    return o


def _write_json(path: str | Path, obj) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")


def run(args, cfg: ForgeConfig) -> int:
    c = args.command
    if c == "ingest":
        docs = ingest.load_corpus(args.root, cfg.ingest.limit, max_depth=cfg.ingest.max_depth)
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        ingest.write_corpus(docs, args.out)
        log.info("ingested %d documents", len(docs), extra={"documents": len(docs)})
    elif c == "extract":
        pool = extract.build_pool(ingest.read_corpus(args.corpus), cfg.extract.max_item_chars)
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        extract.write_pool(pool, args.out)
        log.info("pooled %d items", len(pool.items),
                 extra={"counts_by_kind": {k.value: v for k, v in pool.counts_by_kind.items()}})
    elif c == "synth":
        docs = synth.synthesize(extract.read_pool(args.pool), cfg.synth_config(), cfg.synth.count)
        synth.write_synth(docs, args.out)
        log.info("synthesized %d documents", len(docs))
    elif c == "render":
        engine = pipeline.resolve_engine(cfg.render.engine)
        rasterizer = pipeline.resolve_rasterizer(cfg.render.rasterizer)
        settings = render.RenderSettings(engine, rasterizer, cfg.render.dpi, cfg.effective_jobs,
                                         cfg.render.timeout, cfg.render.keep_failures)
        records = render.render_batch(synth.read_synth(args.synth), args.out, settings)
        ok = sum(1 for r in records if r["image_path"])
        log.info("rendered %d of %d documents", ok, len(records))
        if not ok and records:
            return EXIT_PIPELINE
    elif c == "crop":
        b = cfg.boundary
        rules = boundary.LayoutRules(b.edge_eps, b.min_aspect, b.max_aspect, b.min_area)
        verdicts = boundary.crop_pages(args.pages, args.out, b.threshold, b.margin, rules)
        log.info("accepted %d of %d pages", sum(v["accepted"] for v in verdicts), len(verdicts))
    elif c == "manifest":
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        samples = pipeline.build_samples(Path(args.synth), Path(args.cropped), out.parent.resolve())
        header = manifest.ManifestHeader(seed=cfg.seed, config_hash=cfg.config_hash)
        manifest.write_manifest(samples, out, header)
        log.info("wrote %d samples", len(samples))
    elif c == "split":
        samples = manifest.split_dataset(args.manifest, cfg.split_seed, tuple(cfg.split.ratios), force=args.force)
        counts = {k: sum(1 for s in samples if s.split == k) for k in ("train", "val", "test")}
        log.info("split %d samples", len(samples), extra=counts)
    elif c == "stats":
        report = manifest.compute_stats(args.manifest)
        _write_json(args.out, report.to_json())
        if args.csv:
            manifest.write_stats_csv(report, args.csv)
    elif c == "eval":
        try:
            report = metrics.evaluate_run(args.pred, args.manifest, allow_partial=args.allow_partial,
                                          split=args.split, method=args.method)
        except EvaluationError as exc:
            _write_json(args.out, {"error": str(exc), "missing": exc.missing})
            raise
        _write_json(args.out, report.to_json())
        Path(args.out).with_suffix(".txt").write_text(report.table(), encoding="utf-8")
        sys.stdout.write(report.table())
        if report.missing:
            log.warning("%d sample ids missing", len(report.missing), extra={"missing": report.missing[:50]})
    elif c == "forge":
        result = pipeline.run_pipeline(cfg, resume=not args.no_resume)
        summary = {
            "run_dir": str(result.run_dir),
            "manifest": str(result.manifest_path),
            "synthesized": result.synthesized,
            "compiled": result.compiled,
            "accepted": result.accepted,
            "char_len_median": result.stats.char_len_median,
            "dim_median": result.stats.dim_median,
            "skipped_stages": result.skipped_stages,
        }
        sys.stdout.write(json.dumps(summary, sort_keys=True) + "\n")
        if result.accepted < 1:
            return EXIT_PIPELINE
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logs.configure(getattr(args, "verbose", False))
    try:
        cfg = load_config(args.config, _overrides(args))
        if args.command in ("synth", "forge") and cfg.synth.count < 1:
            raise ConfigError("count must be at least 1")
        return run(args, cfg)
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        return EXIT_USAGE
    except ToolchainError as exc:
        log.error("environment error: %s", exc)
        return EXIT_ENV
    except EvaluationError as exc:
        log.error("evaluation failed: %s", exc, extra={"missing": exc.missing[:50]})
        return EXIT_PIPELINE
    except AceForgeError as exc:
        log.error("%s", exc, extra={"stage": getattr(exc, "stage", args.command)})
        return EXIT_PIPELINE
    except OSError as exc:
        log.error("%s", exc)
        return EXIT_PIPELINE


if __name__ == "__main__":
    sys.exit(main())
