"""Assemble sampled structured items into compilable single-page LaTeX documents."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import texscan
from .errors import ConfigError, SynthesisError
from .extract import ItemPool, Kind, StructuredItem, _macro_closure
from .ingest import STANDARD_COMMANDS, MacroDef
from .syntax import DiagCode, Diagnostic, syntax_check

log = logging.getLogger(__name__)

OVERSHOOT = 1.25
ANNOTATION_SEPARATOR = "\n\n"
BEGIN_MARK = "%%-- aceforge annotation begin --%%"
END_MARK = "%%-- aceforge annotation end --%%"
MAX_ATTEMPTS = 8


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    target_annotation_chars: int = 1107
    # None means proportional to the pool's counts_by_kind
    kind_weights: dict[str, float] | None = None
    max_items: int = 24
    template_id: str = "single-column"
    # page size in points; content sits at the top of a deliberately tall page
    page_geometry: tuple[float, float] = (508.0, 640.0)
    margin_pt: float = 24.0
    font_size: int = 10

    def __post_init__(self):
        if self.target_annotation_chars <= 0:
            raise ConfigError("target_annotation_chars must be positive")
        if self.max_items < 1:
            raise ConfigError("max_items must be >= 1")
        if self.font_size not in (10, 11, 12):
            raise ConfigError("font_size must be 10, 11 or 12")
        if self.template_id not in TEMPLATES:
            raise ConfigError("unknown template %r" % self.template_id)
        if self.kind_weights is not None:
            for k, w in self.kind_weights.items():
                if k not in {kind.value for kind in Kind}:
                    raise ConfigError("unknown item kind %r in kind_weights" % k)
                if w < 0:
                    raise ConfigError("kind weight for %s is negative" % k)
            if not any(w > 0 for w in self.kind_weights.values()):
                raise ConfigError("at least one kind weight must be positive")
        w, h = self.page_geometry
        if w <= 2 * self.margin_pt or h <= 2 * self.margin_pt:
            raise ConfigError("page geometry leaves no room for content")

    @property
    def max_annotation_chars(self) -> int:
        return 2 * self.target_annotation_chars

    def to_json(self) -> dict:
        d = asdict(self)
        d["page_geometry"] = list(self.page_geometry)
        return d

    @classmethod
    def from_json(cls, d: dict) -> SynthConfig:
        d = dict(d)
        if "page_geometry" in d:
            d["page_geometry"] = tuple(d["page_geometry"])
        return cls(**d)


@dataclass(frozen=True)
class SynthDoc:
    synth_id: str
    tex_source: str
    annotation: str
    item_ids: list[str]
    annotation_chars: int
    item_kinds: list[str] = field(default_factory=list)

    def index_record(self) -> dict:
        return {
            "synth_id": self.synth_id,
            "annotation": self.annotation,
            "annotation_chars": self.annotation_chars,
            "item_ids": list(self.item_ids),
            "item_kinds": list(self.item_kinds),
        }


# ---------------------------------------------------------------------------
# template

_ALGORITHMIC_SUPPORT = r"""
\makeatletter
\newcounter{algorithm}
\def\fnum@algorithm{Algorithm~\thealgorithm}
\def\ext@algorithm{loa}
% inside algorithm, algorithm2e conventions apply until an algorithmic list opens
\newif\iface@atwo
\let\ace@semi\;
\def\ace@stmtend{\ifmmode\ace@semi\else\par\fi}
\newenvironment{algorithm}[1][]{\par\medskip\noindent\begin{minipage}{\linewidth}\def\@captype{algorithm}\hrule\smallskip\ace@atwotrue\let\;\ace@stmtend\begin{list}{}{\setlength{\leftmargin}{0pt}\setlength{\itemsep}{0pt}\setlength{\parsep}{0pt}\setlength{\topsep}{0pt}}\item[]}{\end{list}\par\smallskip\hrule\end{minipage}\par\medskip}
\newenvironment{algorithm*}[1][]{\begin{algorithm}}{\end{algorithm}}
\newenvironment{algorithm2e}[1][]{\begin{algorithm}}{\end{algorithm}}
\newenvironment{algorithmic}[1][]{\ace@atwofalse\begin{list}{}{\setlength{\leftmargin}{1em}\setlength{\itemsep}{0pt}\setlength{\parsep}{0pt}\setlength{\topsep}{2pt}}\item[]}{\end{list}}
\def\ace@kw#1{\textbf{#1}}
\def\ace@line{\item[]}
\long\def\ace@nest#1{\begin{list}{}{\setlength{\leftmargin}{1em}\setlength{\itemsep}{0pt}\setlength{\parsep}{0pt}\setlength{\topsep}{0pt}}\item[]#1\end{list}}
\def\ace@header#1#2#3{\ace@line\ace@kw{#1} #3 \ace@kw{#2}}
\long\def\ace@block#1#2#3#4{\ace@header{#1}{#2}{#3}\ace@nest{#4}}
\long\def\ace@elseblock#1{\ace@line\ace@kw{else}\ace@nest{#1}}
% one argument in algpseudocode, an extra body argument in algorithm2e
\long\def\ace@dual#1#2#3{\iface@atwo\expandafter\@firstoftwo\else\expandafter\@secondoftwo\fi
  {\ace@block{#1}{#2}{#3}}{\ace@header{#1}{#2}{#3}}}
% algorithmic
\providecommand{\STATE}{\ace@line}
\providecommand{\STATEx}{\ace@line}
\providecommand{\IF}[1]{\ace@line\ace@kw{if} #1 \ace@kw{then}}
\providecommand{\ELSIF}[1]{\ace@line\ace@kw{else if} #1 \ace@kw{then}}
\providecommand{\ELSE}{\ace@line\ace@kw{else}}
\providecommand{\ENDIF}{\ace@line\ace@kw{end if}}
\providecommand{\FOR}[1]{\ace@line\ace@kw{for} #1 \ace@kw{do}}
\providecommand{\FORALL}[1]{\ace@line\ace@kw{for all} #1 \ace@kw{do}}
\providecommand{\ENDFOR}{\ace@line\ace@kw{end for}}
\providecommand{\WHILE}[1]{\ace@line\ace@kw{while} #1 \ace@kw{do}}
\providecommand{\ENDWHILE}{\ace@line\ace@kw{end while}}
\providecommand{\REPEAT}{\ace@line\ace@kw{repeat}}
\providecommand{\UNTIL}[1]{\ace@line\ace@kw{until} #1}
\providecommand{\LOOP}{\ace@line\ace@kw{loop}}
\providecommand{\ENDLOOP}{\ace@line\ace@kw{end loop}}
\providecommand{\RETURN}{\ace@line\ace@kw{return} }
\providecommand{\REQUIRE}{\ace@line\ace@kw{Require:} }
\providecommand{\ENSURE}{\ace@line\ace@kw{Ensure:} }
\providecommand{\PRINT}{\ace@line\ace@kw{print} }
\providecommand{\COMMENT}[1]{\hfill\(\triangleright\) #1}
\providecommand{\TRUE}{\ace@kw{true}}
\providecommand{\FALSE}{\ace@kw{false}}
\providecommand{\AND}{\ace@kw{and} }
\providecommand{\OR}{\ace@kw{or} }
\providecommand{\NOT}{\ace@kw{not} }
\providecommand{\TO}{\ace@kw{to} }
% algpseudocode
\providecommand{\State}{\ace@line}
\providecommand{\Statex}{\ace@line}
\providecommand{\If}[1]{\ace@dual{if}{then}{#1}}
\providecommand{\ElsIf}[1]{\ace@dual{else if}{then}{#1}}
\providecommand{\ElseIf}[1]{\ace@dual{else if}{then}{#1}}
\providecommand{\Else}{\iface@atwo\expandafter\ace@elseblock\else\ace@line\ace@kw{else}\fi}
\providecommand{\EndIf}{\ace@line\ace@kw{end if}}
\providecommand{\For}[1]{\ace@dual{for}{do}{#1}}
\providecommand{\ForAll}[1]{\ace@dual{for all}{do}{#1}}
\providecommand{\EndFor}{\ace@line\ace@kw{end for}}
\providecommand{\While}[1]{\ace@dual{while}{do}{#1}}
\providecommand{\EndWhile}{\ace@line\ace@kw{end while}}
\providecommand{\Repeat}{\ace@line\ace@kw{repeat}}
\providecommand{\Until}[1]{\ace@line\ace@kw{until} #1}
\providecommand{\Loop}{\ace@line\ace@kw{loop}}
\providecommand{\EndLoop}{\ace@line\ace@kw{end loop}}
\providecommand{\Procedure}[2]{\ace@line\ace@kw{procedure} \textsc{#1}(#2)}
\providecommand{\EndProcedure}{\ace@line\ace@kw{end procedure}}
\providecommand{\Function}[2]{\ace@line\ace@kw{function} \textsc{#1}(#2)}
\providecommand{\EndFunction}{\ace@line\ace@kw{end function}}
\providecommand{\Return}{\ace@kw{return} }
\providecommand{\Require}{\ace@line\ace@kw{Require:} }
\providecommand{\Ensure}{\ace@line\ace@kw{Ensure:} }
\providecommand{\Input}{\ace@line\ace@kw{Input:} }
\providecommand{\Output}{\ace@line\ace@kw{Output:} }
\providecommand{\Comment}[1]{\hfill\(\triangleright\) #1}
\providecommand{\Call}[2]{\textsc{#1}(#2)}
% algorithm2e (line-oriented subset)
\providecommand{\KwIn}[1]{\ace@kw{Input:} #1\par}
\providecommand{\KwOut}[1]{\ace@kw{Output:} #1\par}
\providecommand{\KwData}[1]{\ace@kw{Data:} #1\par}
\providecommand{\KwResult}[1]{\ace@kw{Result:} #1\par}
\providecommand{\KwRet}[1]{\ace@kw{return} #1}
\providecommand{\eIf}[3]{\ace@block{if}{then}{#1}{#2}\ace@elseblock{#3}}
\providecommand{\uIf}[2]{\ace@block{if}{then}{#1}{#2}}
\providecommand{\uElseIf}[2]{\ace@block{else if}{then}{#1}{#2}}
\providecommand{\uElse}[1]{\ace@elseblock{#1}}
\providecommand{\ForEach}[2]{\ace@block{for each}{do}{#1}{#2}}
\providecommand{\KwTo}{\ace@kw{to}\space}
\providecommand{\tcc}[1]{\hfill\(\triangleright\) #1}
\providecommand{\SetAlgoLined}{}
\providecommand{\DontPrintSemicolon}{}
\providecommand{\LinesNumbered}{}
\providecommand{\SetKwInOut}[2]{}
\providecommand{\tcp}[1]{\hfill\(\triangleright\) #1}
\makeatother
"""

_TABLE_SUPPORT = r"""
\makeatletter
\renewenvironment{table}[1][]{\par\medskip\noindent\begin{minipage}{\linewidth}\centering\def\@captype{table}}{\end{minipage}\par\medskip}
\renewenvironment{table*}[1][]{\begin{table}}{\end{table}}
\def\ace@cmidrule@trim(#1)#2{}
\def\ace@cmidrule#1{}
\def\ace@multirow#1#2#3{#3}
\IfFileExists{booktabs.sty}{\usepackage{booktabs}}{%
  \providecommand{\toprule}{\hline}%
  \providecommand{\midrule}{\hline}%
  \providecommand{\bottomrule}{\hline}%
  \providecommand{\addlinespace}[1][]{}%
  \def\cmidrule{\@ifnextchar(\ace@cmidrule@trim\ace@cmidrule}}
\IfFileExists{multirow.sty}{\usepackage{multirow}}{\let\multirow\ace@multirow}
\makeatother
"""

_SINGLE_COLUMN = r"""\documentclass[{font_size}pt]{{article}}
\usepackage[paperwidth={paper_w}pt,paperheight={paper_h}pt,margin={margin}pt]{{geometry}}
\usepackage{{amsmath,amssymb,bm,array,tabularx,color}}
\pagestyle{{empty}}
\setlength{{\parindent}}{{0pt}}
\setlength{{\parskip}}{{3pt}}
\makeatletter
\@namedef{{b@ref}}{{1}}
\makeatother
{support}"""

TEMPLATES = {"single-column": _SINGLE_COLUMN}


def template_prologue(cfg: SynthConfig, prelude: str) -> str:
    w, h = cfg.page_geometry
    head = TEMPLATES[cfg.template_id].format(
        font_size=cfg.font_size,
        paper_w="%g" % w,
        paper_h="%g" % h,
        margin="%g" % cfg.margin_pt,
        support=_TABLE_SUPPORT + _ALGORITHMIC_SUPPORT,
    )
    prelude_block = prelude + "\n" if prelude else ""
    return head + prelude_block + "\\begin{document}\n" + BEGIN_MARK + "\n"


TEMPLATE_EPILOGUE = "\n" + END_MARK + "\n\\end{document}\n"


def annotation_from_source(tex_source: str) -> str:
    """Recover the gold annotation from an assembled source (inverse of assembly)."""
    start = tex_source.index(BEGIN_MARK + "\n") + len(BEGIN_MARK) + 1
    stop = tex_source.rindex("\n" + END_MARK)
    return tex_source[start:stop]


# ---------------------------------------------------------------------------
# sampling


def doc_rng(seed: int, index: int, attempt: int = 0) -> np.random.Generator:
    """Independent generator for document ``index`` of a run seeded with ``seed``."""
    return np.random.default_rng([seed, index, attempt])


def sample_items(pool: ItemPool, cfg: SynthConfig, rng: np.random.Generator) -> list[StructuredItem]:
    """Draw items without replacement until the annotation reaches its length target.

    Drawing stops once the running length reaches ``target_annotation_chars``,
    when the next item would push it past ``target × 1.25``, or at
    ``max_items``.  Kinds are chosen by ``cfg.kind_weights`` (default: pool proportions),
    items uniformly within a kind.  At least one item is always returned.
    """
    by_kind = pool.by_kind()
    if cfg.kind_weights is None:
        weights = {k: float(pool.counts_by_kind.get(k, len(by_kind[k]))) for k in Kind}
    else:
        weights = {k: float(cfg.kind_weights.get(k.value, 0.0)) for k in Kind}
    remaining = {k: list(by_kind[k]) for k in Kind if weights[k] > 0 and by_kind[k]}
    if not remaining:
        raise SynthesisError("no eligible items: pool is empty for every kind with positive weight")
    bound = cfg.target_annotation_chars * OVERSHOOT
    chosen: list[StructuredItem] = []
    total = 0
    while len(chosen) < cfg.max_items and total < cfg.target_annotation_chars:
        kinds = [k for k in Kind if remaining.get(k)]
        if not kinds:
            break
        w = np.array([weights[k] for k in kinds])
        kind = kinds[int(rng.choice(len(kinds), p=w / w.sum()))]
        bucket = remaining[kind]
        item = bucket.pop(int(rng.integers(len(bucket))))
        added = item.char_len + (len(ANNOTATION_SEPARATOR) if chosen else 0)
        if chosen and total + added > bound:
            break
        chosen.append(item)
        total += added
    return chosen


# ---------------------------------------------------------------------------
# macro harmonization


def _rename_words(tex: str, mapping: dict[str, str]) -> str:
    if not mapping:
        return tex
    out, pos = [], 0
    for start, end, name in texscan.iter_control_words(tex):
        if name in mapping:
            out.append(tex[pos:start])
            out.append("\\" + mapping[name])
            pos = end
    out.append(tex[pos:])
    return "".join(out)


def _definition_text(name: str, m: MacroDef) -> str:
    params = ""
    if m.arity:
        params = "[%d]" % m.arity
        if m.default is not None:
            params += "[%s]" % m.default
    return "\\providecommand{\\%s}{}\\renewcommand{\\%s}%s{%s}" % (name, name, params, m.body)


def _suffixes():
    letters = "abcdefghijklmnopqrstuvwxyz"
    for a in letters:
        yield a
    for a in letters:
        for b in letters:
            yield a + b


def harmonize_commands(
    items: list[StructuredItem], macro_tables: dict[str, dict[str, MacroDef]]
) -> tuple[str, list[StructuredItem], list[Diagnostic]]:
    """Build one preamble defining every macro the items need, renaming conflicts.

    When two sources define the same name differently, each definition gets
    a suffixed name (``\\R`` becomes ``\\Ra``, ``\\Rb``) and the use sites are
    rewritten.  Items depending on macros of unsupported form (delimited
    parameters, self-recursion) or with missing definitions are dropped.
    Returns ``(prelude, kept_items, diagnostics)``.
    """
    diags: list[Diagnostic] = []
    kept: list[tuple[StructuredItem, set[str]]] = []
    for item in items:
        table = macro_tables.get(item.source_doc_id, {})
        closure = _macro_closure(item.required_commands, table)
        missing = sorted(set(item.required_commands) - set(table))
        bad = sorted(n for n in closure if not table[n].supported)
        if missing or bad:
            name = (missing or bad)[0]
            at = item.latex_body.find("\\" + name)
            reason = "has no definition" if missing else "has an unsupported definition"
            diags.append(Diagnostic(DiagCode.CONFLICTING_MACRO,
                                    "dropping %s: \\%s %s" % (item.item_id, name, reason), max(at, 0)))
            continue
        kept.append((item, closure))

    # distinct definitions per name, in order of first use
    variants: dict[str, list[tuple[MacroDef, list[str]]]] = {}
    for item, closure in kept:
        table = macro_tables[item.source_doc_id] if closure else {}
        for name in sorted(closure):
            mdef = table[name]
            entries = variants.setdefault(name, [])
            for existing, sources in entries:
                if existing == mdef:
                    if item.source_doc_id not in sources:
                        sources.append(item.source_doc_id)
                    break
            else:
                entries.append((mdef, [item.source_doc_id]))

    taken = set(variants) | set(STANDARD_COMMANDS)
    for _, table in macro_tables.items():
        taken |= set(table)
    rename: dict[str, dict[str, str]] = {}  # source -> old -> new
    final: dict[str, MacroDef] = {}
    origin: dict[str, str] = {}
    for name, entries in variants.items():
        if len(entries) == 1:
            final[name] = entries[0][0]
            origin[name] = entries[0][1][0]
            continue
        suffixes = _suffixes()
        for mdef, sources in entries:
            new = name + next(suffixes)
            while new in taken:
                new = name + next(suffixes)
            taken.add(new)
            final[new] = mdef
            origin[new] = sources[0]
            for src in sources:
                rename.setdefault(src, {})[name] = new
        diags.append(Diagnostic(DiagCode.CONFLICTING_MACRO,
                                "\\%s has %d conflicting definitions; renamed per source" % (name, len(entries)), 0))

    lines = []
    for new, mdef in final.items():
        body = _rename_words(mdef.body, rename.get(origin[new], {}))
        lines.append(_definition_text(new, replace(mdef, body=body)))

    out_items = []
    for item, _ in kept:
        mapping = rename.get(item.source_doc_id, {})
        body = _rename_words(item.latex_body, mapping)
        if body != item.latex_body:
            item = replace(
                item,
                latex_body=body,
                char_len=len(body),
                required_commands=frozenset(mapping.get(n, n) for n in item.required_commands),
            )
        out_items.append(item)
    return "\n".join(lines), out_items, diags


# ---------------------------------------------------------------------------
# assembly


def assemble_document(items: list[StructuredItem], prelude: str, cfg: SynthConfig,
                      synth_id: str = "synth") -> SynthDoc:
    """Wrap ``prelude`` and ``items`` in the fixed single-page template."""
    if not items:
        raise SynthesisError("cannot assemble a document without items")
    problems = list(syntax_check(prelude)) if prelude else []
    for item in items:
        problems.extend(syntax_check(item.latex_body))
    if problems:
        raise SynthesisError("inputs fail syntax checks", problems)
    annotation = ANNOTATION_SEPARATOR.join(item.latex_body for item in items)
    if len(annotation) > cfg.max_annotation_chars:
        raise SynthesisError(
            "annotation too long",
            [Diagnostic(DiagCode.OVERSIZE_ANNOTATION,
                        "%d chars exceeds %d" % (len(annotation), cfg.max_annotation_chars),
                        cfg.max_annotation_chars)],
        )
    tex = template_prologue(cfg, prelude) + annotation + TEMPLATE_EPILOGUE
    problems = syntax_check(tex)
    if problems:
        raise SynthesisError("assembled source fails syntax checks", problems)
    return SynthDoc(
        synth_id=synth_id,
        tex_source=tex,
        annotation=annotation,
        item_ids=[item.item_id for item in items],
        annotation_chars=len(annotation),
        item_kinds=[item.kind.value for item in items],
    )


def synth_id_for(index: int) -> str:
    return "syn-%06d" % index


def synthesize_one(pool: ItemPool, cfg: SynthConfig, index: int) -> SynthDoc:
    """Synthesize document ``index``; retries on fresh substreams when items get dropped."""
    last: list[Diagnostic] = []
    for attempt in range(MAX_ATTEMPTS):
        rng = doc_rng(cfg.seed, index, attempt)
        items = sample_items(pool, cfg, rng)
        prelude, items, diags = harmonize_commands(items, pool.macro_tables)
        for d in diags:
            log.debug("%s: %s", synth_id_for(index), d.message)
        if not items:
            last = diags
            continue
        try:
            return assemble_document(items, prelude, cfg, synth_id_for(index))
        except SynthesisError as exc:
            log.info("%s attempt %d rejected: %s", synth_id_for(index), attempt, exc)
            last = exc.diagnostics
    raise SynthesisError("document %d could not be synthesized" % index, last)


def synthesize(pool: ItemPool, cfg: SynthConfig, count: int) -> list[SynthDoc]:
    return [synthesize_one(pool, cfg, i) for i in range(count)]


def write_synth(docs: list[SynthDoc], out_dir: str | Path) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for doc in docs:
        (out_dir / (doc.synth_id + ".tex")).write_text(doc.tex_source, encoding="utf-8")
    index = out_dir / "index.jsonl"
    with open(index, "w", encoding="utf-8") as fh:
        for doc in docs:
            fh.write(json.dumps(doc.index_record(), ensure_ascii=False, sort_keys=True) + "\n")
    return index


def read_synth(out_dir: str | Path) -> list[SynthDoc]:
    out_dir = Path(out_dir)
    docs = []
    with open(out_dir / "index.jsonl", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            tex = (out_dir / (rec["synth_id"] + ".tex")).read_text(encoding="utf-8")
            docs.append(SynthDoc(tex_source=tex, **rec))
    return docs
