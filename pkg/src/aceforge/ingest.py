"""Load LaTeX projects from disk and bring them into a canonical form.

A project is any ``.tex`` file that declares ``\\documentclass``; its
``\\input``/``\\include`` directives are resolved relative to the file's own
directory and spliced in place.  After flattening, the source goes through
comment removal, citation/reference normalization and macro sanitization.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from . import texscan
from .errors import ConfigError

log = logging.getLogger(__name__)

DEFAULT_MAX_DEPTH = 8
# Macros with more parameters than this stay in the body and travel to the
# synthesized preamble instead of being expanded in place.
EXPAND_MAX_ARITY = 2
MAX_INCLUDE_DEPTH = 16

# Standard LaTeX / amsmath vocabulary.  Redefinitions of these names are
# dropped and their uses are never expanded, so documents keep stock meaning.
STANDARD_COMMANDS = frozenset(
    """
    begin end item par section subsection subsubsection paragraph subparagraph chapter part
    label ref eqref cite citep citet caption centering documentclass usepackage
    newcommand renewcommand providecommand def gdef edef xdef let input include
    emph textbf textit texttt textrm textsf textsc textup textnormal underline
    mathbb mathbf mathcal mathrm mathit mathsf mathtt mathfrak boldsymbol bm operatorname
    frac dfrac tfrac sqrt sum prod int oint lim limsup liminf sup inf max min arg log exp
    sin cos tan det dim ker Pr gcd mod bmod pmod
    left right big Big bigg Bigg bigl bigr Bigl Bigr middle
    vec hat bar tilde dot ddot overline underbrace overbrace widehat widetilde
    alpha beta gamma delta epsilon varepsilon zeta eta theta vartheta iota kappa lambda mu nu
    xi pi varpi rho varrho sigma varsigma tau upsilon phi varphi chi psi omega
    Gamma Delta Theta Lambda Xi Pi Sigma Upsilon Phi Psi Omega
    in notin subset subseteq supset supseteq cup cap setminus emptyset forall exists neg
    leq geq neq le ge ne approx sim simeq equiv propto cdot cdots ldots dots vdots ddots times div pm mp
    infty partial nabla to rightarrow leftarrow Rightarrow Leftarrow leftrightarrow iff implies mapsto
    text mbox hbox vbox quad qquad hspace vspace hfill vfill newline linebreak pagebreak newpage clearpage
    hline cline multicolumn tabularnewline toprule midrule bottomrule
    small footnotesize scriptsize tiny large Large LARGE huge Huge normalsize
    footnote thanks title author date maketitle arraystretch baselinestretch tabcolsep arraycolsep
    """.split()
)

_DEF_COMMANDS = {"newcommand", "renewcommand", "providecommand"}
_TEX_DEF_COMMANDS = {"def", "gdef", "edef", "xdef"}
_OPERATOR_COMMANDS = {"DeclareMathOperator"}

_INCLUDE_RE = re.compile(r"\\(input|include)(?![A-Za-z@])\s*(?:\{([^{}]*)\}|([^\s{}%\\]+))")
_WORD_ONLY_RE = re.compile(r"^[A-Za-z]+$")
_ENDS_WITH_WORD_RE = re.compile(r"(?<!\\)(?:\\\\)*\\[A-Za-z]+$")

_CITE_NAMES = frozenset(
    """cite citep citet citealp citealt citeauthor citeyear citeyearpar citenum
    parencite textcite autocite footcite Cite Citep Citet Citealp Citealt Parencite Textcite Autocite""".split()
)
_REF_NAMES = frozenset("ref autoref cref Cref pageref nameref vref Vref".split())


@dataclass(frozen=True)
class MacroDef:
    """One user-defined command as harvested from a source."""

    arity: int
    body: str
    default: str | None = None
    # \def with delimited parameter text (e.g. ``\def\foo#1.{..}``)
    delimited: bool = False
    recursive: bool = False

    @property
    def supported(self) -> bool:
        return not (self.delimited or self.recursive)


@dataclass(frozen=True)
class SourceDocument:
    doc_id: str
    origin_path: str
    body: str
    macro_table: dict[str, MacroDef] = field(default_factory=dict)
    subfield_tag: str | None = None

    def to_json(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "origin_path": self.origin_path,
            "body": self.body,
            "macro_table": {k: asdict(v) for k, v in sorted(self.macro_table.items())},
            "subfield_tag": self.subfield_tag,
        }

    @classmethod
    def from_json(cls, rec: dict) -> SourceDocument:
        return cls(
            doc_id=rec["doc_id"],
            origin_path=rec["origin_path"],
            body=rec["body"],
            macro_table={k: MacroDef(**v) for k, v in rec.get("macro_table", {}).items()},
            subfield_tag=rec.get("subfield_tag"),
        )


strip_comments = texscan.strip_comments


def _read_text(path: Path) -> str:
    raw = path.read_bytes()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError:
        text = raw.decode("latin-1")
    return text.replace("\r\n", "\n").replace("\r", "\n")


def _resolve_include(target: str, base: Path, root: Path) -> Path | None:
    target = target.strip()
    candidates = [base / target]
    if not target.endswith(".tex"):
        candidates.insert(0, base / (target + ".tex"))
    root = root.resolve()
    for cand in candidates:
        try:
            resolved = cand.resolve()
        except OSError:
            continue
        if resolved.is_file() and (resolved == root or root in resolved.parents):
            return resolved
    return None


def flatten(tex: str, base: Path, root: Path, _stack: tuple[Path, ...] = ()) -> str:
    """Splice ``\\input``/``\\include`` targets into ``tex`` (comments must already be gone).

    Targets are resolved relative to ``base``; computed, missing, cyclic or
    out-of-tree targets are dropped with a warning.
    """

    def repl(m: re.Match) -> str:
        target = m.group(2) if m.group(2) is not None else m.group(3)
        if "\\" in target or "#" in target:
            log.warning("dropping computed inclusion %r", m.group(0))
            return ""
        path = _resolve_include(target, base, root)
        if path is None:
            log.warning("dropping unresolvable inclusion %r under %s", target, base)
            return ""
        if path in _stack or len(_stack) >= MAX_INCLUDE_DEPTH:
            log.warning("dropping cyclic or too deep inclusion %s", path)
            return ""
        try:
            sub = _read_text(path)
        except OSError as exc:
            log.warning("dropping unreadable inclusion %s: %s", path, exc)
            return ""
        sub = strip_comments(sub)
        return flatten(sub, base, root, _stack + (path,))

    return texscan.map_plain(tex, lambda chunk: _INCLUDE_RE.sub(repl, chunk))


def _tidy(chunk: str) -> str:
    chunk = re.sub(r"[ \t]+\n", "\n", chunk)
    return re.sub(r"\n{3,}", "\n\n", chunk)


def normalize_citations(tex: str) -> str:
    """Rewrite citations to ``\\cite{ref}``, references to the numeral 1 and drop labels."""
    return texscan.map_plain(tex, _normalize_citations_plain)


def _normalize_citations_plain(tex: str) -> str:
    out: list[str] = []
    pos = 0
    for start, end, name in texscan.iter_control_words(tex):
        if start < pos:
            continue
        if name not in _CITE_NAMES and name not in _REF_NAMES and name not in ("eqref", "label"):
            continue
        j = end
        if j < len(tex) and tex[j] == "*":
            j += 1
        if name in _CITE_NAMES:
            for _ in range(2):
                opt, j = texscan.read_optional(tex, j)
                if opt is None:
                    break
        k = texscan.skip_space(tex, j)
        close = texscan.match_brace(tex, k)
        if close < 0:
            continue
        out.append(tex[pos:start])
        if name in _CITE_NAMES:
            out.append("\\cite{ref}")
        elif name == "eqref":
            out.append("(1)")
        elif name in _REF_NAMES:
            out.append("1")
        pos = close
    out.append(tex[pos:])
    return "".join(out)


@dataclass
class _Harvest:
    table: dict[str, MacroDef] = field(default_factory=dict)
    spans: list[tuple[int, int]] = field(default_factory=list)


def _parse_definition(tex: str, start: int, end: int, name: str) -> tuple[str, MacroDef, int] | str:
    """Parse one definition whose command word spans ``tex[start:end]``.

    Returns ``(macro_name, MacroDef, end_index)`` or an error message.
    """
    j = end
    if name in _DEF_COMMANDS or name in _OPERATOR_COMMANDS:
        star = False
        if j < len(tex) and tex[j] == "*":
            star = True
            j += 1
        j = texscan.skip_space(tex, j)
        if j < len(tex) and tex[j] == "{":
            close = texscan.match_brace(tex, j)
            if close < 0:
                return "unbalanced braces around macro name"
            macro = tex[j + 1 : close - 1].strip()
            j = close
        else:
            got = texscan.read_argument(tex, j)
            if got is None:
                return "missing macro name"
            macro, j = got
        if not macro.startswith("\\") or not _WORD_ONLY_RE.match(macro[1:]):
            return "unsupported macro name %r" % macro
        macro = macro[1:]
        if name in _OPERATOR_COMMANDS:
            k = texscan.skip_space(tex, j)
            close = texscan.match_brace(tex, k)
            if close < 0:
                return "unbalanced braces in operator definition"
            op = "\\operatorname*" if star else "\\operatorname"
            return macro, MacroDef(0, "%s{%s}" % (op, tex[k + 1 : close - 1])), close
        arity = 0
        opt, j2 = texscan.read_optional(tex, j)
        if opt is not None:
            if not opt.strip().isdigit():
                return "non-numeric arity %r" % opt
            arity = int(opt.strip())
            j = j2
        default, j2 = texscan.read_optional(tex, j)
        if default is not None:
            j = j2
        k = texscan.skip_space(tex, j)
        close = texscan.match_brace(tex, k)
        if close < 0:
            return "unbalanced braces in macro body"
        return macro, MacroDef(arity, tex[k + 1 : close - 1], default), close
    # plain TeX \def\name<params>{body}
    j = texscan.skip_space(tex, j)
    m = re.match(r"\\([A-Za-z]+)", tex[j:])
    if not m:
        return "unsupported \\def target"
    macro = m.group(1)
    j += m.end()
    brace = tex.find("{", j)
    if brace < 0:
        return "missing body for \\def\\%s" % macro
    params = tex[j:brace]
    close = texscan.match_brace(tex, brace)
    if close < 0:
        return "unbalanced braces in \\def\\%s" % macro
    compact = params.replace(" ", "")
    arity = compact.count("#")
    plain = compact == "".join("#%d" % (i + 1) for i in range(arity))
    return macro, MacroDef(arity, tex[brace + 1 : close - 1], delimited=not plain), close


def _harvest(tex: str, report: list[str]) -> _Harvest:
    h = _Harvest()
    pos = 0
    for start, end, name in texscan.iter_control_words(tex):
        if start < pos:
            continue
        if name not in _DEF_COMMANDS and name not in _TEX_DEF_COMMANDS and name not in _OPERATOR_COMMANDS:
            continue
        parsed = _parse_definition(tex, start, end, name)
        if isinstance(parsed, str):
            # drop the rest of the offending line
            nl = tex.find("\n", end)
            stop = len(tex) if nl < 0 else nl
            report.append("malformed definition at offset %d: %s" % (start, parsed))
            h.spans.append((start, stop))
            pos = stop
            continue
        macro, mdef, stop = parsed
        h.spans.append((start, stop))
        pos = stop
        if macro in STANDARD_COMMANDS:
            report.append("ignoring redefinition of standard command \\%s" % macro)
            continue
        if macro in h.table and h.table[macro] != mdef:
            report.append("\\%s defined more than once; keeping the last definition" % macro)
        h.table[macro] = mdef
    return h


def macro_references(tex: str, names) -> set[str]:
    """Names from ``names`` used as control words in ``tex``."""
    return {name for _, _, name in texscan.iter_control_words(tex) if name in names}


def _mark_recursive(table: dict[str, MacroDef]) -> dict[str, MacroDef]:
    deps = {name: macro_references(m.body, table) for name, m in table.items()}
    recursive: set[str] = set()
    for root in table:
        seen: set[str] = set()
        stack = list(deps[root])
        while stack:
            cur = stack.pop()
            if cur == root:
                recursive.add(root)
                break
            if cur in seen:
                continue
            seen.add(cur)
            stack.extend(deps.get(cur, ()))
    return {n: replace(m, recursive=True) if n in recursive else m for n, m in table.items()}


class _Expander:
    def __init__(self, table: dict[str, MacroDef], max_depth: int, report: list[str]):
        self.table = {
            n: m for n, m in table.items() if not m.delimited and m.arity <= EXPAND_MAX_ARITY
        }
        self.max_depth = max_depth
        self.report = report
        self.exhausted: set[str] = set()

    def expand(self, tex: str, depth: int = 0) -> str:
        out: list[str] = []
        pos = 0
        for start, end, name in texscan.iter_control_words(tex):
            if start < pos or name not in self.table:
                continue
            if depth >= self.max_depth:
                if name not in self.exhausted:
                    self.exhausted.add(name)
                    self.report.append("\\%s left unexpanded at depth limit %d" % (name, self.max_depth))
                continue
            mdef = self.table[name]
            args: list[str] = []
            j = end
            n_required = mdef.arity
            if mdef.default is not None and mdef.arity > 0:
                opt, j = texscan.read_optional(tex, j)
                args.append(mdef.default if opt is None else opt)
                n_required -= 1
            ok = True
            for _ in range(n_required):
                got = texscan.read_argument(tex, j)
                if got is None:
                    ok = False
                    break
                arg, j = got
                args.append(arg)
            if not ok:
                self.report.append("\\%s at offset %d is missing arguments" % (name, start))
                continue
            expanded = self.expand(_substitute(mdef.body, args), depth + 1)
            if j < len(tex) and tex[j].isalpha() and _ENDS_WITH_WORD_RE.search(expanded):
                expanded += " "
            out.append(tex[pos:start])
            out.append(expanded)
            pos = j
        out.append(tex[pos:])
        return "".join(out)


def _substitute(body: str, args: list[str]) -> str:
    def repl(m: re.Match) -> str:
        if m.group(0) == "##":
            return "#"
        k = int(m.group(1)) - 1
        return args[k] if 0 <= k < len(args) else m.group(0)

    return re.sub(r"##|#([1-9])", repl, body)


def sanitize_commands(
    doc: SourceDocument, max_depth: int = DEFAULT_MAX_DEPTH, report: list[str] | None = None
) -> SourceDocument:
    """Harvest user macro definitions into ``macro_table`` and expand low-arity uses.

    Definitions are removed from the body.  Macros of arity at most
    ``EXPAND_MAX_ARITY`` are expanded in place up to ``max_depth`` nested
    levels; anything still unresolved at the limit is left as written.
    Messages about malformed or truncated definitions are appended to
    ``report`` when given, and logged either way.
    """
    if max_depth < 1:
        raise ConfigError("max_depth must be >= 1")
    notes: list[str] = []
    chunks = texscan.split_verbatim(doc.body)
    table: dict[str, MacroDef] = dict(doc.macro_table)
    cleaned: list[tuple[bool, str]] = []
    for verb, chunk in chunks:
        if verb:
            cleaned.append((verb, chunk))
            continue
        h = _harvest(chunk, notes)
        table.update(h.table)
        pieces, last = [], 0
        for s, e in h.spans:
            pieces.append(chunk[last:s])
            last = e
        pieces.append(chunk[last:])
        cleaned.append((False, "".join(pieces)))
    table = _mark_recursive(table)
    expander = _Expander(table, max_depth, notes)
    # bodies of macros that stay unexpanded are normalized too, so a preamble
    # built from them only needs the other unexpanded macros
    table = {
        n: (m if n in expander.table else replace(m, body=expander.expand(m.body)))
        for n, m in table.items()
    }
    body = "".join(chunk if verb else _tidy(expander.expand(chunk)) for verb, chunk in cleaned)
    for note in notes:
        log.info("%s: %s", doc.doc_id, note)
    if report is not None:
        report.extend(notes)
    return replace(doc, body=body, macro_table=table)


def _find_main_files(root: Path) -> list[Path]:
    mains = []
    for path in sorted(root.rglob("*.tex")):
        if not path.is_file():
            continue
        try:
            text = strip_comments(_read_text(path))
        except OSError as exc:
            log.warning("skipping unreadable file %s: %s", path, exc)
            continue
        if re.search(r"\\documentclass(?![A-Za-z])", text):
            mains.append(path)
    return mains


def load_document(path: Path, root: Path, doc_id: str, max_depth: int = DEFAULT_MAX_DEPTH,
                  subfield_tag: str | None = None) -> SourceDocument:
    text = strip_comments(_read_text(path))
    text = flatten(text, path.parent, root)
    text = texscan.map_plain(text, _tidy)
    text = normalize_citations(text)
    doc = SourceDocument(doc_id=doc_id, origin_path=str(path), body=text, subfield_tag=subfield_tag)
    return sanitize_commands(doc, max_depth=max_depth)


def load_corpus(
    root: str | Path,
    limit: int | None = None,
    *,
    max_depth: int = DEFAULT_MAX_DEPTH,
    subfield_tags: dict[str, str] | None = None,
) -> list[SourceDocument]:
    """Load one normalized :class:`SourceDocument` per LaTeX project under ``root``.

    Documents come back sorted by origin path.  ``subfield_tags`` optionally
    maps doc ids to a free-form subfield label.
    """
    root = Path(root)
    if not root.is_dir():
        raise ConfigError("corpus root %s does not exist or is not a directory" % root)
    mains = _find_main_files(root)
    if limit is not None:
        mains = mains[:limit]
    docs = []
    for path in mains:
        doc_id = path.relative_to(root).with_suffix("").as_posix()
        try:
            docs.append(
                load_document(path, root, doc_id, max_depth, (subfield_tags or {}).get(doc_id))
            )
        except OSError as exc:
            log.warning("skipping unreadable project %s: %s", path, exc)
    return docs


def write_corpus(docs: list[SourceDocument], out: str | Path) -> None:
    with open(out, "w", encoding="utf-8") as fh:
        for doc in docs:
            fh.write(json.dumps(doc.to_json(), ensure_ascii=False, sort_keys=True) + "\n")


def read_corpus(path: str | Path) -> list[SourceDocument]:
    with open(path, encoding="utf-8") as fh:
        return [SourceDocument.from_json(json.loads(line)) for line in fh if line.strip()]
