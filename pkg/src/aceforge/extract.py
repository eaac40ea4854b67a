"""Pull structured items (formulas, tables, lists, algorithms, math sentences) out of sources."""

from __future__ import annotations

import enum
import hashlib
import json
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from . import texscan
from .ingest import MacroDef, SourceDocument, macro_references
from .syntax import syntax_check

log = logging.getLogger(__name__)

DEFAULT_MAX_ITEM_CHARS = 2000
MIN_SENTENCE_CHARS = 8


class Kind(str, enum.Enum):
    FORMULA = "Formula"
    TABLE = "Table"
    LIST = "List"
    ALGORITHM = "Algorithm"
    INLINE_MATH_SENTENCE = "InlineMathSentence"


def _starred(*names: str) -> frozenset[str]:
    return frozenset(n + s for n in names for s in ("", "*"))


ENV_KINDS: dict[str, Kind] = {}
for _name in _starred("equation", "align", "gather", "multline", "eqnarray", "flalign", "alignat", "displaymath"):
    ENV_KINDS[_name] = Kind.FORMULA
for _name in _starred("table", "tabular", "tabularx"):
    ENV_KINDS[_name] = Kind.TABLE
for _name in ("itemize", "enumerate", "description"):
    ENV_KINDS[_name] = Kind.LIST
for _name in _starred("algorithm", "algorithmic", "algorithm2e"):
    ENV_KINDS[_name] = Kind.ALGORITHM

# environments dropped wholesale
SKIP_ENVS = _starred("figure", "wrapfigure", "subfigure", "tikzpicture", "picture", "thebibliography",
                     "filecontents", "comment", "titlepage", "tabbing") | texscan.VERBATIM_ENVS

# commands whose argument(s) end a paragraph (headings and the like)
BOUNDARY_COMMANDS = frozenset(
    "part chapter section subsection subsubsection paragraph subparagraph title author date "
    "caption bibliography bibliographystyle printbibliography".split()
)
# commands removed from prose together with their braced argument
DROP_WITH_ARG = frozenset(
    "footnote thanks includegraphics vspace hspace vskip hskip addcontentsline addtocounter setcounter "
    "setlength pagestyle thispagestyle input include".split()
)
# argument-less commands removed from prose
DROP_BARE = frozenset(
    "noindent medskip smallskip bigskip maketitle tableofcontents clearpage newpage appendix "
    "centering raggedright raggedleft indent vfill hfill linebreak pagebreak FloatBarrier".split()
)

_ABBREVIATIONS = frozenset(
    "e.g. i.e. fig. figs. eq. eqs. al. cf. vs. sec. secs. tab. resp. approx. ref. refs. no. thm. "
    "def. prop. lem. alg. dr. mr. ms. prof. ch. app.".split()
)


@dataclass(frozen=True)
class StructuredItem:
    item_id: str
    kind: Kind
    latex_body: str
    required_commands: frozenset[str]
    source_doc_id: str
    char_len: int

    def to_json(self) -> dict:
        return {
            "item_id": self.item_id,
            "kind": self.kind.value,
            "latex_body": self.latex_body,
            "required_commands": sorted(self.required_commands),
            "source_doc_id": self.source_doc_id,
            "char_len": self.char_len,
        }

    @classmethod
    def from_json(cls, rec: dict) -> StructuredItem:
        return cls(
            item_id=rec["item_id"],
            kind=Kind(rec["kind"]),
            latex_body=rec["latex_body"],
            required_commands=frozenset(rec.get("required_commands", ())),
            source_doc_id=rec["source_doc_id"],
            char_len=rec["char_len"],
        )


def make_item(kind: Kind, body: str, doc_id: str, macros=()) -> StructuredItem:
    digest = hashlib.sha1(body.encode("utf-8")).hexdigest()[:12]
    return StructuredItem(
        item_id="%s-%s" % (kind.value[:3].lower(), digest),
        kind=kind,
        latex_body=body,
        required_commands=frozenset(macro_references(body, macros)),
        source_doc_id=doc_id,
        char_len=len(body),
    )


@dataclass
class ItemPool:
    items: list[StructuredItem] = field(default_factory=list)
    counts_by_kind: dict[Kind, int] = field(default_factory=dict)
    # per-source definitions of every macro some pooled item still references
    macro_tables: dict[str, dict[str, MacroDef]] = field(default_factory=dict)

    def by_kind(self) -> dict[Kind, list[StructuredItem]]:
        out: dict[Kind, list[StructuredItem]] = {k: [] for k in Kind}
        for item in self.items:
            out[item.kind].append(item)
        return out


# ---------------------------------------------------------------------------
# sentence splitting


def _inline_math_end(text: str, i: int) -> int:
    """Index after the inline math span opened at ``i`` (``$`` or ``\\(``), or -1."""
    n = len(text)
    if text.startswith("\\(", i):
        j = i + 2
        while j < n:
            if text[j] == "\\":
                if text.startswith("\\)", j):
                    return j + 2
                j += 2
                continue
            j += 1
        return -1
    j = i + 1
    while j < n:
        c = text[j]
        if c == "\\":
            j += 2
            continue
        if c == "$":
            return j + 1
        j += 1
    return -1


def _display_math_end(text: str, i: int) -> int:
    """Index after ``\\[..\\]`` or ``$$..$$`` opened at ``i``, or -1."""
    n = len(text)
    if text.startswith("$$", i):
        close = i + 2
        while True:
            close = text.find("$$", close)
            if close < 0:
                return -1
            if text[close - 1] != "\\":
                return close + 2
            close += 1
    j = i + 2
    while j < n:
        if text[j] == "\\":
            if text.startswith("\\]", j):
                return j + 2
            j += 2
            continue
        j += 1
    return -1


def _is_abbreviation(text: str, dot: int) -> bool:
    k = dot
    while k > 0 and not text[k - 1].isspace() and text[k - 1] not in "(~[":
        k -= 1
    token = text[k : dot + 1].lower()
    return token in _ABBREVIATIONS


def sentence_split(prose: str) -> list[str]:
    """Split prose into sentences at ``.``, ``!`` or ``?`` followed by whitespace.

    Never splits inside inline/display math or brace groups, nor after the
    abbreviations in ``_ABBREVIATIONS``.  Sentences come back stripped.
    """
    out: list[str] = []
    start = 0
    depth = 0
    i, n = 0, len(prose)
    while i < n:
        c = prose[i]
        if c == "\\":
            if prose.startswith("\\(", i):
                end = _inline_math_end(prose, i)
                i = n if end < 0 else end
                continue
            if prose.startswith("\\[", i):
                end = _display_math_end(prose, i)
                i = n if end < 0 else end
                continue
            i += 2
            continue
        if c == "$":
            end = _display_math_end(prose, i) if prose.startswith("$$", i) else _inline_math_end(prose, i)
            i = n if end < 0 else end
            continue
        if c == "{":
            depth += 1
        elif c == "}":
            depth = max(0, depth - 1)
        elif c in ".!?" and depth == 0:
            nxt = i + 1
            if (nxt >= n or prose[nxt].isspace()) and not (c == "." and _is_abbreviation(prose, i)):
                piece = prose[start:nxt].strip()
                if piece:
                    out.append(piece)
                start = nxt
        i += 1
    tail = prose[start:].strip()
    if tail:
        out.append(tail)
    return out


def has_inline_math(text: str) -> bool:
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c == "\\":
            if text.startswith("\\(", i) and _inline_math_end(text, i) > 0:
                return True
            i += 2
            continue
        if c == "$":
            if text.startswith("$$", i):
                end = _display_math_end(text, i)
                i = n if end < 0 else end
                continue
            return _inline_math_end(text, i) > 0
        i += 1
    return False


# ---------------------------------------------------------------------------
# extraction


def _skip_command_args(text: str, j: int) -> int:
    """Skip an optional star, optional ``[..]`` and one brace group after a command."""
    if j < len(text) and text[j] == "*":
        j += 1
    _, j = texscan.read_optional(text, j)
    k = texscan.skip_space(text, j)
    if k < len(text) and text[k] == "{":
        close = texscan.match_brace(text, k)
        if close > 0:
            return close
    return j


class _Walker:
    def __init__(self, doc_id: str):
        self.doc_id = doc_id
        self.found: list[tuple[Kind, str]] = []
        self.paragraphs: list[str] = []
        self.buf: list[str] = []

    def flush(self) -> None:
        if self.buf:
            self.paragraphs.extend(re.split(r"\n\s*\n", "".join(self.buf)))
            self.buf = []
        self._emit_sentences()

    def _emit_sentences(self) -> None:
        for para in self.paragraphs:
            for sentence in sentence_split(para):
                sentence = re.sub(r"\s+", " ", sentence).strip()
                if len(sentence) >= MIN_SENTENCE_CHARS and has_inline_math(sentence):
                    self.found.append((Kind.INLINE_MATH_SENTENCE, sentence))
        self.paragraphs = []

    def walk(self, text: str) -> None:
        i, n = 0, len(text)
        prose_start = 0
        while i < n:
            c = text[i]
            if c == "$":
                if text.startswith("$$", i):
                    end = _display_math_end(text, i)
                    if end < 0:
                        log.info("%s: unterminated $$ at %d", self.doc_id, i)
                        i += 2
                        continue
                    self.buf.append(text[prose_start:i])
                    self.flush()
                    self.found.append((Kind.FORMULA, text[i:end]))
                    i = prose_start = end
                    continue
                end = _inline_math_end(text, i)
                i = n if end < 0 else end
                continue
            if c != "\\":
                i += 1
                continue
            if text.startswith("\\(", i):
                end = _inline_math_end(text, i)
                i = n if end < 0 else end
                continue
            if text.startswith("\\[", i):
                end = _display_math_end(text, i)
                if end < 0:
                    log.info("%s: unterminated \\[ at %d", self.doc_id, i)
                    i += 2
                    continue
                self.buf.append(text[prose_start:i])
                self.flush()
                self.found.append((Kind.FORMULA, text[i:end]))
                i = prose_start = end
                continue
            j = i + 1
            while j < n and text[j].isalpha():
                j += 1
            if j == i + 1:
                i += 2
                continue
            word = text[i + 1 : j]
            if word == "begin":
                located = texscan.environment_end(text, i)
                if located is None:
                    log.info("%s: unclosed environment at %d skipped", self.doc_id, i)
                    i = j
                    continue
                name, content_start, end = located
                self.buf.append(text[prose_start:i])
                kind = ENV_KINDS.get(name)
                if kind is not None:
                    self.flush()
                    body = text[i:end]
                    if kind is Kind.TABLE and "\\includegraphics" in body:
                        pass
                    else:
                        self.found.append((kind, body))
                elif name in SKIP_ENVS:
                    self.flush()
                else:
                    # theorem-like and layout environments: look inside
                    self.flush()
                    close_tag = text.rfind("\\end", content_start, end)
                    self.walk(text[content_start:close_tag])
                    self.flush()
                i = prose_start = end
                continue
            if word == "end":
                # stray \end without matching \begin: treat as paragraph break
                m = texscan.end_match(text, i)
                self.buf.append(text[prose_start:i])
                self.flush()
                i = prose_start = m.end() if m else j
                continue
            if word in BOUNDARY_COMMANDS:
                self.buf.append(text[prose_start:i])
                self.flush()
                i = prose_start = _skip_command_args(text, j)
                continue
            if word == "par" or word == "item":
                self.buf.append(text[prose_start:i])
                self.flush()
                i = prose_start = j
                continue
            if word in DROP_WITH_ARG:
                self.buf.append(text[prose_start:i])
                i = prose_start = _skip_command_args(text, j)
                continue
            if word in DROP_BARE:
                self.buf.append(text[prose_start:i])
                i = prose_start = j
                continue
            i = j
        self.buf.append(text[prose_start:n])


def _clean_env_body(body: str) -> str:
    lines = [line.rstrip() for line in body.strip().split("\n")]
    # blank lines inside display math are fatal to TeX; drop them everywhere
    return "\n".join(line for line in lines if line.strip())


def _valid(kind: Kind, body: str) -> str | None:
    """Return a reason to discard ``body`` or ``None``."""
    diags = syntax_check(body)
    if diags:
        return "%s: %s" % (diags[0].code.value, diags[0].message)
    if kind is Kind.INLINE_MATH_SENTENCE:
        if not has_inline_math(body):
            return "no inline math"
        if "\\begin" in body or "\\[" in body or "$$" in body:
            return "display material in sentence"
    return None


def extract_items(
    doc: SourceDocument, max_chars: int = DEFAULT_MAX_ITEM_CHARS, report: list[str] | None = None
) -> list[StructuredItem]:
    """Return every structured item of ``doc`` in document order.

    Plain sentences without math are never returned; items that fail the
    syntax checks or exceed ``max_chars`` are dropped with a diagnostic.
    """
    walker = _Walker(doc.doc_id)
    walker.walk(texscan.document_body(doc.body))
    walker.flush()
    items = []
    for kind, raw in walker.found:
        body = raw if kind is Kind.INLINE_MATH_SENTENCE else _clean_env_body(raw)
        reason = _valid(kind, body)
        if reason is None and len(body) > max_chars:
            reason = "longer than %d chars" % max_chars
        if reason is not None:
            msg = "%s: dropped %s item (%s)" % (doc.doc_id, kind.value, reason)
            log.info(msg)
            if report is not None:
                report.append(msg)
            continue
        items.append(make_item(kind, body, doc.doc_id, doc.macro_table))
    return items


def _macro_closure(names, table: dict[str, MacroDef]) -> set[str]:
    todo, seen = list(names), set()
    while todo:
        name = todo.pop()
        if name in seen or name not in table:
            continue
        seen.add(name)
        todo.extend(macro_references(table[name].body, table))
    return seen


def build_pool(docs: list[SourceDocument], max_chars: int = DEFAULT_MAX_ITEM_CHARS) -> ItemPool:
    """Concatenate items over ``docs`` (in input order), deduplicating identical bodies."""
    pool = ItemPool()
    seen: set[str] = set()
    for doc in docs:
        needed: set[str] = set()
        for item in extract_items(doc, max_chars):
            if item.latex_body in seen:
                continue
            seen.add(item.latex_body)
            pool.items.append(item)
            needed |= item.required_commands
        closure = _macro_closure(needed, doc.macro_table)
        if closure:
            pool.macro_tables[doc.doc_id] = {n: doc.macro_table[n] for n in sorted(closure)}
    counts = Counter(item.kind for item in pool.items)
    pool.counts_by_kind = {k: counts.get(k, 0) for k in Kind}
    return pool


def write_pool(pool: ItemPool, out: str | Path) -> Path:
    """Write ``pool`` as JSONL plus a ``<stem>.stats.json`` sidecar; returns the sidecar path."""
    out = Path(out)
    with open(out, "w", encoding="utf-8") as fh:
        for item in pool.items:
            fh.write(json.dumps(item.to_json(), ensure_ascii=False, sort_keys=True) + "\n")
    sidecar = out.with_name(out.stem + ".stats.json")
    stats = {
        "total": len(pool.items),
        "counts_by_kind": {k.value: v for k, v in pool.counts_by_kind.items()},
        "macro_tables": {
            doc: {name: vars(m) for name, m in table.items()} for doc, table in pool.macro_tables.items()
        },
    }
    sidecar.write_text(json.dumps(stats, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")
    return sidecar


def read_pool(path: str | Path) -> ItemPool:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        items = [StructuredItem.from_json(json.loads(line)) for line in fh if line.strip()]
    pool = ItemPool(items=items)
    counts = Counter(item.kind for item in items)
    pool.counts_by_kind = {k: counts.get(k, 0) for k in Kind}
    sidecar = path.with_name(path.stem + ".stats.json")
    if sidecar.exists():
        meta = json.loads(sidecar.read_text(encoding="utf-8"))
        pool.macro_tables = {
            doc: {name: MacroDef(**m) for name, m in table.items()}
            for doc, table in meta.get("macro_tables", {}).items()
        }
    return pool
