"""Scoring of predicted annotations against gold LaTeX: edit distance, BLEU, token F1, Jaccard."""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import asdict, dataclass
from pathlib import Path

from .errors import EvaluationError
from .manifest import read_manifest

_TOKEN_RE = re.compile(r"\\[A-Za-z@]+|\\.|\$\$|[{}$^_&]|[^\s\\{}$^_&]+", re.DOTALL)

BLEU_VARIANT = ("BLEU-4, uniform weights, brevity penalty; zero n-gram matches for n>=2 "
                "smoothed as (m+1)/(t+1); no unigram match scores 0")

# Published scores, for side-by-side display only; they are never recomputed here.
REFERENCE_ROWS = (
    ("Tesseract", 0.52, 19.3, 51.3, 37.2, 1.79),
    ("PPOCR", 0.53, 18.4, 53.4, 39.4, 6.26),
    ("Pix2Text", 0.43, 33.6, 62.6, 47.2, 2.47),
    ("Mineru", 0.39, 45.6, 68.2, 53.4, 984.9),
    ("Nougat", 0.43, 44.9, 68.0, 53.4, 11.24),
    ("AceParser", 0.34, 50.2, 72.3, 58.4, 5.92),
)


def tokenize(text: str) -> list[str]:
    """LaTeX-aware tokens: control sequences, braces, ``$``/``$$``, ``^``, ``_``, ``&`` and words."""
    return _TOKEN_RE.findall(text)


def levenshtein(a: str, b: str) -> int:
    """Unit-cost edit distance (bit-parallel over the shorter string)."""
    if len(a) < len(b):
        a, b = b, a
    m = len(b)
    if m == 0:
        return len(a)
    peq: dict[str, int] = {}
    for i, ch in enumerate(b):
        peq[ch] = peq.get(ch, 0) | (1 << i)
    full = (1 << m) - 1
    high = 1 << (m - 1)
    pv, mv, score = full, 0, m
    for ch in a:
        eq = peq.get(ch, 0)
        xv = eq | mv
        xh = (((eq & pv) + pv) ^ pv) | eq
        ph = (mv | ~(xh | pv)) & full
        mh = pv & xh
        if ph & high:
            score += 1
        elif mh & high:
            score -= 1
        ph = (ph << 1) | 1
        mh <<= 1
        pv = (mh | ~(xv | ph)) & full
        mv = ph & xv
    return score


def normalized_levenshtein(pred: str, gold: str) -> float:
    """Edit distance over the longer length, in [0, 1]; trailing whitespace is ignored."""
    pred, gold = pred.rstrip(), gold.rstrip()
    longest = max(len(pred), len(gold))
    if longest == 0:
        return 0.0
    return levenshtein(pred, gold) / longest


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(pred: list[str], gold: list[str], max_n: int = 4) -> float:
    if not pred and not gold:
        return 100.0
    if not pred or not gold:
        return 0.0
    log_sum = 0.0
    for n in range(1, max_n + 1):
        cand, ref = _ngrams(pred, n), _ngrams(gold, n)
        matches = sum(min(c, ref[g]) for g, c in cand.items())
        total = max(len(pred) - n + 1, 0)
        if matches == 0:
            if n == 1:
                return 0.0
            p = 1.0 / (total + 1)
        else:
            p = matches / total
        log_sum += math.log(p)
    bp = 1.0 if len(pred) > len(gold) else math.exp(1.0 - len(gold) / len(pred))
    return 100.0 * bp * math.exp(log_sum / max_n)


def token_f1(pred: list[str], gold: list[str]) -> float:
    if not pred and not gold:
        return 100.0
    if not pred or not gold:
        return 0.0
    overlap = sum((Counter(pred) & Counter(gold)).values())
    if overlap == 0:
        return 0.0
    precision, recall = overlap / len(pred), overlap / len(gold)
    return 100.0 * 2 * precision * recall / (precision + recall)


def jaccard(pred: list[str], gold: list[str]) -> float:
    a, b = set(pred), set(gold)
    if not a and not b:
        return 100.0
    return 100.0 * len(a & b) / len(a | b)


# ---------------------------------------------------------------------------
# runs


@dataclass(frozen=True)
class SampleScore:
    sample_id: str
    ld: float
    bleu: float
    f1: float
    jaccard: float
    seconds: float


def score_sample(sample_id: str, pred: str, gold: str, seconds: float = 0.0) -> SampleScore:
    pt, gt = tokenize(pred), tokenize(gold)
    return SampleScore(sample_id, normalized_levenshtein(pred, gold), bleu(pt, gt),
                       token_f1(pt, gt), jaccard(pt, gt), float(seconds))


METRIC_FIELDS = ("ld", "bleu", "f1", "jaccard", "seconds")


@dataclass
class MetricReport:
    per_sample: list[SampleScore]
    aggregate: dict[str, float] | None
    n: int
    missing: list[str]
    method: str = "this run"

    @classmethod
    def from_scores(cls, scores: list[SampleScore], missing=(), method: str = "this run") -> MetricReport:
        scores = sorted(scores, key=lambda s: s.sample_id)
        agg = None
        if scores:
            agg = {f: math.fsum(getattr(s, f) for s in scores) / len(scores) for f in METRIC_FIELDS}
        return cls(scores, agg, len(scores), sorted(missing), method)

    def to_json(self) -> dict:
        return {
            "method": self.method,
            "n": self.n,
            "aggregate": self.aggregate,
            "per_sample": [asdict(s) for s in self.per_sample],
            "missing": self.missing,
            "tokenizer": "latex-aware (control sequences, braces, math shifts, ^ _ &)",
            "bleu_variant": BLEU_VARIANT,
            "reference_rows": [dict(zip(("method", "ld", "bleu", "f1", "jaccard", "seconds"), r))
                               for r in REFERENCE_ROWS],
        }

    def table(self) -> str:
        """Plain-text table in the published layout, with reference rows as a footer."""
        head = ("Method", "LD", "BLEU", "F1", "JS", "Time")
        rows = []
        if self.aggregate:
            a = self.aggregate
            rows.append((self.method, "%.2f" % a["ld"], "%.1f" % a["bleu"], "%.1f" % a["f1"],
                         "%.1f" % a["jaccard"], "%.2f" % a["seconds"]))
        ref = [(m, "%.2f" % ld, "%.1f" % b, "%.1f" % f, "%.1f" % j, "%g" % t)
               for m, ld, b, f, j, t in REFERENCE_ROWS]
        widths = [max(len(r[i]) for r in [head, *rows, *ref]) for i in range(len(head))]

        def fmt(r):
            return "  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths)))

        rule = "-" * len(fmt(head))
        lines = [fmt(head), rule, *(fmt(r) for r in rows)]
        if not rows:
            lines.append("(no scored samples)")
        lines += [rule, "Published reference scores (static, not recomputed):", *(fmt(r) for r in ref)]
        return "\n".join(lines) + "\n"


def read_predictions(path: str | Path) -> list[dict]:
    preds = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            rec = json.loads(line)
            if "sample_id" not in rec or "text" not in rec:
                raise EvaluationError("%s:%d: prediction needs sample_id and text" % (path, lineno))
            preds.append(rec)
    return preds


def evaluate_run(predictions: str | Path, manifest: str | Path, *, allow_partial: bool = False,
                 split: str = "test", method: str = "this run") -> MetricReport:
    """Score a prediction file against the ``split`` samples of ``manifest``.

    Predictions for ids outside the split, and split samples without a
    prediction, are reported as missing; unless ``allow_partial`` is set
    any missing id raises EvaluationError.
    """
    _, samples = read_manifest(manifest)
    gold = {s.sample_id: s.annotation for s in samples if s.split == split}
    preds = read_predictions(predictions)
    seen, scores, missing = set(), [], []
    for rec in preds:
        sid = rec["sample_id"]
        if sid not in gold or sid in seen:
            missing.append(sid)
            continue
        seen.add(sid)
        scores.append(score_sample(sid, rec["text"], gold[sid], rec.get("seconds", 0.0)))
    missing += [sid for sid in gold if sid not in seen]
    if missing and not allow_partial:
        raise EvaluationError("%d sample ids missing or not in the %s split" % (len(missing), split), missing)
    return MetricReport.from_scores(scores, missing, method)
