"""Dataset manifest: JSON-lines index of accepted samples, splits and summary statistics."""

from __future__ import annotations

import csv
import json
import statistics
from collections import Counter
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ManifestError

SCHEMA_VERSION = 1
SPLITS = ("train", "val", "test", "unassigned")
CHAR_BUCKET = 100
DIM_BUCKET = 50


@dataclass(frozen=True)
class Sample:
    sample_id: str
    image_path: str  # relative to the manifest's directory
    annotation: str
    width_px: int
    height_px: int
    item_kinds: tuple[str, ...]
    annotation_chars: int
    split: str = "unassigned"

    def __post_init__(self):
        if self.annotation_chars != len(self.annotation):
            raise ManifestError("%s: annotation_chars %d != len(annotation) %d"
                                % (self.sample_id, self.annotation_chars, len(self.annotation)))
        if self.split not in SPLITS:
            raise ManifestError("%s: unknown split %r" % (self.sample_id, self.split))

    def to_json(self) -> dict:
        d = asdict(self)
        d["item_kinds"] = list(self.item_kinds)
        return {"record": "sample", **d}

    @classmethod
    def from_json(cls, rec: dict) -> Sample:
        rec = {k: v for k, v in rec.items() if k != "record"}
        rec["item_kinds"] = tuple(rec.get("item_kinds", ()))
        return cls(**rec)


@dataclass(frozen=True)
class ManifestHeader:
    seed: int | None = None
    config_hash: str | None = None
    toolkit_version: str = __version__
    schema: int = SCHEMA_VERSION
    split_seed: int | None = None
    split_ratios: tuple[int, ...] | None = None

    def to_json(self) -> dict:
        d = {"record": "header", "toolkit": "aceforge", **asdict(self)}
        if self.split_ratios is not None:
            d["split_ratios"] = list(self.split_ratios)
        return d

    @classmethod
    def from_json(cls, rec: dict) -> ManifestHeader:
        known = {f for f in cls.__dataclass_fields__}
        d = {k: v for k, v in rec.items() if k in known}
        if d.get("split_ratios") is not None:
            d["split_ratios"] = tuple(d["split_ratios"])
        return cls(**d)


def _dump(rec: dict) -> str:
    return json.dumps(rec, ensure_ascii=False, sort_keys=True)


def write_manifest(samples: list[Sample], out: str | Path, header: ManifestHeader | None = None,
                   *, require_images: bool = True) -> Path:
    """Write header plus one record per sample, sorted by ``sample_id``."""
    out = Path(out)
    header = header or ManifestHeader()
    ids = Counter(s.sample_id for s in samples)
    dupes = sorted(k for k, v in ids.items() if v > 1)
    if dupes:
        raise ManifestError("duplicate sample ids: %s" % ", ".join(dupes[:10]))
    if require_images:
        missing = [s.image_path for s in samples if not (out.parent / s.image_path).is_file()]
        if missing:
            raise ManifestError("image files missing: %s" % ", ".join(missing[:10]))
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = out.with_name(out.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_dump(header.to_json()) + "\n")
        for s in sorted(samples, key=lambda s: s.sample_id):
            fh.write(_dump(s.to_json()) + "\n")
    tmp.replace(out)
    return out


def read_manifest(path: str | Path) -> tuple[ManifestHeader, list[Sample]]:
    path = Path(path)
    header, samples = None, []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError("%s:%d: %s" % (path, lineno, exc)) from exc
            kind = rec.get("record")
            if kind == "header":
                header = ManifestHeader.from_json(rec)
            elif kind == "sample":
                samples.append(Sample.from_json(rec))
            else:
                raise ManifestError("%s:%d: unknown record type %r" % (path, lineno, kind))
    if header is None:
        raise ManifestError("%s has no header record" % path)
    return header, samples


# ---------------------------------------------------------------------------
# splitting


def split_sizes(n: int, ratios: tuple[int, ...] = (8, 1, 1)) -> tuple[int, int, int]:
    """``(train, val, test)`` sizes: floors of each share, test takes the remainder."""
    if len(ratios) != 3 or any(r < 0 for r in ratios) or sum(ratios) == 0:
        raise ValueError("ratios must be three nonnegative numbers with a positive sum")
    total = sum(ratios)
    train = n * ratios[0] // total
    val = n * ratios[1] // total
    return train, val, n - train - val


def assign_splits(samples: list[Sample], seed: int, ratios: tuple[int, ...] = (8, 1, 1)) -> list[Sample]:
    """Shuffle ``samples`` (taken in id order) by ``seed`` and cut contiguous blocks."""
    ordered = sorted(samples, key=lambda s: s.sample_id)
    train, val, _ = split_sizes(len(ordered), ratios)
    perm = np.random.default_rng(seed).permutation(len(ordered))
    out = []
    for rank, idx in enumerate(perm):
        tag = "train" if rank < train else "val" if rank < train + val else "test"
        out.append(replace(ordered[idx], split=tag))
    return sorted(out, key=lambda s: s.sample_id)


def split_dataset(manifest: str | Path, seed: int, ratios: tuple[int, ...] = (8, 1, 1),
                  force: bool = False) -> list[Sample]:
    """Assign every sample of ``manifest`` to train/val/test and rewrite it in place."""
    header, samples = read_manifest(manifest)
    if not force and any(s.split != "unassigned" for s in samples):
        raise ManifestError("%s is already split; pass force to re-split" % manifest)
    result = assign_splits(samples, seed, ratios)
    header = replace(header, split_seed=seed, split_ratios=tuple(ratios))
    write_manifest(result, manifest, header, require_images=False)
    return result


# ---------------------------------------------------------------------------
# statistics


@dataclass
class StatsReport:
    total_samples: int
    counts_by_kind: dict[str, int]
    char_len_histogram: dict[int, int]  # bucket lower edge -> count
    char_len_median: float | None
    dim_median: tuple[float, float] | None
    dim_histogram_2d: dict[tuple[int, int], int]  # (width edge, height edge) -> count
    split_counts: dict[str, int] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "total_samples": self.total_samples,
            "counts_by_kind": dict(sorted(self.counts_by_kind.items())),
            "char_len_bucket": CHAR_BUCKET,
            "char_len_histogram": {str(k): v for k, v in sorted(self.char_len_histogram.items())},
            "char_len_median": self.char_len_median,
            "dim_median": list(self.dim_median) if self.dim_median else None,
            "dim_bucket": DIM_BUCKET,
            "dim_histogram_2d": [[w, h, c] for (w, h), c in sorted(self.dim_histogram_2d.items())],
            "split_counts": dict(sorted(self.split_counts.items())),
        }


def stats_from_samples(samples: list[Sample]) -> StatsReport:
    kinds: Counter = Counter()
    chars: Counter = Counter()
    dims: Counter = Counter()
    for s in samples:
        kinds.update(s.item_kinds)
        chars[s.annotation_chars // CHAR_BUCKET * CHAR_BUCKET] += 1
        dims[(s.width_px // DIM_BUCKET * DIM_BUCKET, s.height_px // DIM_BUCKET * DIM_BUCKET)] += 1
    n = len(samples)
    return StatsReport(
        total_samples=n,
        counts_by_kind=dict(kinds),
        char_len_histogram=dict(chars),
        char_len_median=statistics.median(s.annotation_chars for s in samples) if n else None,
        dim_median=(statistics.median(s.width_px for s in samples),
                    statistics.median(s.height_px for s in samples)) if n else None,
        dim_histogram_2d=dict(dims),
        split_counts=dict(Counter(s.split for s in samples)),
    )


def compute_stats(manifest: str | Path) -> StatsReport:
    return stats_from_samples(read_manifest(manifest)[1])


def write_stats_csv(report: StatsReport, out: str | Path) -> None:
    """Flat ``table,key,count`` rows for plotting tools."""
    with open(out, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["table", "key", "count"])
        for k, v in sorted(report.counts_by_kind.items()):
            w.writerow(["kind", k, v])
        for k, v in sorted(report.char_len_histogram.items()):
            w.writerow(["char_len", "%d-%d" % (k, k + CHAR_BUCKET - 1), v])
        for (wd, ht), v in sorted(report.dim_histogram_2d.items()):
            w.writerow(["dims", "%dx%d" % (wd, ht), v])
