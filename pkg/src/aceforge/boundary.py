"""Locate the inked region of a rendered page, crop to it and screen odd layouts."""

from __future__ import annotations

import enum
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .render import PageImage

log = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 0.92
DEFAULT_MARGIN = 12
DEFAULT_FACTOR = 4
_REC601 = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class BBox:
    """Pixel box; ``right`` and ``bottom`` are exclusive."""

    left: int
    top: int
    right: int
    bottom: int

    def __post_init__(self):
        if not (0 <= self.left < self.right and 0 <= self.top < self.bottom):
            raise ValueError("degenerate box %r" % (self,))

    @property
    def width(self) -> int:
        return self.right - self.left

    @property
    def height(self) -> int:
        return self.bottom - self.top

    @property
    def area(self) -> int:
        return self.width * self.height

    @property
    def aspect(self) -> float:
        return self.width / self.height

    def fits(self, width: int, height: int) -> bool:
        return self.right <= width and self.bottom <= height

    def to_json(self) -> list[int]:
        return [self.left, self.top, self.right, self.bottom]


class RejectReason(str, enum.Enum):
    EMPTY_PAGE = "EmptyPage"
    OVERFLOW_TO_EDGE = "OverflowToEdge"
    EXTREME_ASPECT = "ExtremeAspect"
    TOO_SMALL = "TooSmall"


@dataclass(frozen=True)
class LayoutVerdict:
    accepted: bool
    reject_reason: RejectReason | None = None

    def __post_init__(self):
        if self.accepted == (self.reject_reason is not None):
            raise ValueError("a verdict is either accepted or carries a reason")


@dataclass(frozen=True)
class LayoutRules:
    edge_eps: int = 2
    min_aspect: float = 0.2
    max_aspect: float = 8.0
    min_area: int = 10_000


DEFAULT_RULES = LayoutRules()


def luminance(pixels: np.ndarray) -> np.ndarray:
    """Per-pixel luminance in [0, 1] (Rec. 601 weights for RGB input)."""
    if pixels.ndim == 2:
        return pixels.astype(np.float64) / 255.0
    return (pixels[..., :3].astype(np.float64) @ _REC601) / 255.0


def _block_any(mask: np.ndarray, factor: int) -> np.ndarray:
    """Downsample ``mask`` so a cell is set iff any pixel of its block is set."""
    h, w = mask.shape
    ph, pw = -h % factor, -w % factor
    if ph or pw:
        mask = np.pad(mask, ((0, ph), (0, pw)))
    return mask.reshape(mask.shape[0] // factor, factor, mask.shape[1] // factor, factor).any(axis=(1, 3))


def _span(flags: np.ndarray) -> tuple[int, int] | None:
    idx = np.flatnonzero(flags)
    if idx.size == 0:
        return None
    return int(idx[0]), int(idx[-1]) + 1


def detect_content_bbox(img: PageImage, whiteness_threshold: float = DEFAULT_THRESHOLD,
                        factor: int = DEFAULT_FACTOR) -> BBox | None:
    """Tightest box around every pixel darker than ``whiteness_threshold``.

    The search runs on a ``factor``-downsampled occupancy map first; only the
    outermost occupied blocks are then rescanned at full resolution, which
    gives exactly the full-scan answer.
    """
    if not 0.0 <= whiteness_threshold <= 1.0:
        raise ValueError("whiteness_threshold must lie in [0, 1]")
    if not 1 <= factor <= 4:
        raise ValueError("downsampling factor must be between 1 and 4")
    dark = luminance(img.pixels) < whiteness_threshold
    coarse = _block_any(dark, factor)
    rows = _span(coarse.any(axis=1))
    if rows is None:
        return None
    cols = _span(coarse.any(axis=0))
    r0, r1 = rows[0] * factor, min(rows[1] * factor, img.height_px)
    c0, c1 = cols[0] * factor, min(cols[1] * factor, img.width_px)
    window = dark[r0:r1, c0:c1]
    # refine: the true edges lie inside the first/last occupied block rows and columns
    top_band = window[:factor].any(axis=1)
    bottom_band = window[-factor:].any(axis=1) if r1 - r0 >= factor else window.any(axis=1)
    left_band = window[:, :factor].any(axis=0)
    right_band = window[:, -factor:].any(axis=0) if c1 - c0 >= factor else window.any(axis=0)
    top = r0 + int(np.argmax(top_band))
    bottom = r1 - int(np.argmax(bottom_band[::-1]))
    left = c0 + int(np.argmax(left_band))
    right = c1 - int(np.argmax(right_band[::-1]))
    return BBox(left, top, right, bottom)


def crop_with_margin(img: PageImage, box: BBox, margin_px: int = DEFAULT_MARGIN) -> PageImage:
    """Copy of ``box`` grown by ``margin_px`` per side, clamped to the image."""
    if margin_px < 0:
        raise ValueError("margin must be nonnegative")
    if not box.fits(img.width_px, img.height_px):
        raise ValueError("box %r lies outside a %dx%d image" % (box, img.width_px, img.height_px))
    left = max(0, box.left - margin_px)
    top = max(0, box.top - margin_px)
    right = min(img.width_px, box.right + margin_px)
    bottom = min(img.height_px, box.bottom + margin_px)
    return PageImage.from_array(img.pixels[top:bottom, left:right].copy(), img.synth_id, img.dpi)


def judge_layout(img: PageImage | tuple[int, int], box: BBox | None,
                 rules: LayoutRules = DEFAULT_RULES) -> LayoutVerdict:
    """Accept or reject a page from its size ``(width, height)`` and content box alone."""
    width, height = (img.width_px, img.height_px) if isinstance(img, PageImage) else img
    if box is None:
        return LayoutVerdict(False, RejectReason.EMPTY_PAGE)
    eps = rules.edge_eps
    if box.left <= eps or box.top <= eps or box.right >= width - eps or box.bottom >= height - eps:
        return LayoutVerdict(False, RejectReason.OVERFLOW_TO_EDGE)
    if not rules.min_aspect <= box.aspect <= rules.max_aspect:
        return LayoutVerdict(False, RejectReason.EXTREME_ASPECT)
    if box.area < rules.min_area:
        return LayoutVerdict(False, RejectReason.TOO_SMALL)
    return LayoutVerdict(True)


def crop_pages(pages_dir: str | Path, out_dir: str | Path, threshold: float = DEFAULT_THRESHOLD,
               margin: int = DEFAULT_MARGIN, rules: LayoutRules = DEFAULT_RULES) -> list[dict]:
    """Detect, judge and crop every rendered page; writes crops and ``verdicts.jsonl``.

    Pages listed in ``render_log.jsonl`` with more than one PDF page are
    rejected as ``OverflowToEdge``: their content did not fit the page.
    """
    pages_dir, out_dir = Path(pages_dir), Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    render_log = pages_dir / "render_log.jsonl"
    if render_log.is_file():
        with open(render_log, encoding="utf-8") as fh:
            entries = [json.loads(line) for line in fh if line.strip()]
        entries = [e for e in entries if e.get("image_path")]
    else:
        entries = [{"synth_id": p.stem, "image_path": p.name, "page_count": 1}
                   for p in sorted(pages_dir.glob("*.png"))]
    verdicts = []
    for entry in sorted(entries, key=lambda e: e["synth_id"]):
        sid = entry["synth_id"]
        img = PageImage.load(pages_dir / entry["image_path"], sid)
        box = detect_content_bbox(img, threshold)
        if entry.get("page_count", 1) > 1:
            verdict = LayoutVerdict(False, RejectReason.OVERFLOW_TO_EDGE)
        else:
            verdict = judge_layout(img, box, rules)
        record = {
            "synth_id": sid,
            "accepted": verdict.accepted,
            "reject_reason": verdict.reject_reason.value if verdict.reject_reason else None,
            "bbox": box.to_json() if box else None,
            "page_width_px": img.width_px,
            "page_height_px": img.height_px,
            "image_path": None,
        }
        if verdict.accepted:
            crop = crop_with_margin(img, box, margin)
            name = sid + ".png"
            crop.save(out_dir / name)
            record.update(image_path=name, width_px=crop.width_px, height_px=crop.height_px)
        else:
            log.info("rejected %s: %s", sid, record["reject_reason"])
        verdicts.append(record)
    with open(out_dir / "verdicts.jsonl", "w", encoding="utf-8") as fh:
        for r in verdicts:
            fh.write(json.dumps(r, sort_keys=True) + "\n")
    return verdicts
