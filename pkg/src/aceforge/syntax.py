"""Static checks run on LaTeX before it is handed to a TeX engine."""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass

from .texscan import VERBATIM_ENVS, _verb_end, _verbatim_env_end


class DiagCode(str, enum.Enum):
    UNBALANCED_BRACES = "UnbalancedBraces"
    UNMATCHED_ENV = "UnmatchedEnv"
    MATH_MODE_NESTING = "MathModeNesting"
    CONFLICTING_MACRO = "ConflictingMacro"
    OVERSIZE_ANNOTATION = "OversizeAnnotation"


@dataclass(frozen=True)
class Diagnostic:
    code: DiagCode
    message: str
    location: int

    def to_json(self) -> dict:
        return {"code": self.code.value, "message": self.message, "location": self.location}


DISPLAY_ENVS = frozenset(
    name + star
    for name in ("equation", "align", "gather", "multline", "eqnarray", "flalign", "alignat", "displaymath")
    for star in ("", "*")
)
# environments that may only appear inside display math
MATH_INNER_ENVS = frozenset(
    "aligned gathered split cases matrix pmatrix bmatrix Bmatrix vmatrix Vmatrix smallmatrix array subarray".split()
)
# commands whose braced argument is typeset in text mode even inside math
TEXT_IN_MATH = frozenset(
    "text mbox hbox textrm textbf textit textsf texttt textup textnormal intertext emph fbox".split()
)
_DEFINERS = frozenset(
    "newcommand renewcommand providecommand newenvironment renewenvironment def gdef edef xdef".split()
)

_BEGIN_RE = re.compile(r"\\(begin|end)\s*\{([^{}]*)\}")

TEXT, INLINE, DISPLAY = 0, 1, 2


@dataclass
class _Group:
    start: int
    mode: int
    text_switch: bool = False
    # math opener saved while a text-mode group runs inside math
    math_open: tuple | None = None


def syntax_check(tex: str) -> list[Diagnostic]:
    """Return structural problems in ``tex``; an empty list means the checks pass.

    Checked: brace balance, ``\\begin``/``\\end`` pairing by name,
    ``\\left``/``\\right`` pairing, math-shift parity and display math opened
    inside inline math.  Bodies of macro and environment definitions are
    checked for brace balance only.
    """
    diags: list[Diagnostic] = []
    n = len(tex)
    braces: list[_Group] = []
    envs: list[tuple[str, int, int]] = []  # (name, offset, brace depth)
    lefts: list[tuple[int, int]] = []  # (offset, brace depth)
    mode = TEXT
    math_open: tuple[int, int, str] | None = None  # (offset, brace depth, closer)
    pending_text_switch = False
    nested = 0  # flagged \[ or \( whose closer must not be reported again
    skip_env_check_until = -1
    i = 0

    def flag(code: DiagCode, msg: str, at: int) -> None:
        diags.append(Diagnostic(code, msg, max(0, min(at, n - 1))))

    while i < n:
        c = tex[i]
        in_def = i < skip_env_check_until
        if c == "%":
            nl = tex.find("\n", i)
            i = n if nl < 0 else nl
            continue
        if c == "\\":
            end = _verbatim_env_end(tex, i) or _verb_end(tex, i)
            if end is not None and not in_def:
                i = end
                continue
            j = i + 1
            while j < n and tex[j].isalpha():
                j += 1
            if j == i + 1:
                sym = tex[i + 1] if i + 1 < n else ""
                if not in_def and sym in "[]()":
                    mode, math_open, nested = _math_symbol(sym, i, mode, math_open, len(braces), nested, flag)
                i += 2
                continue
            word = tex[i + 1 : j]
            if word in _DEFINERS and not in_def:
                skip_env_check_until = _definition_end(tex, j, word)
            elif word in ("begin", "end") and not in_def:
                m = _BEGIN_RE.match(tex, i)
                if m:
                    name = m.group(2).strip()
                    if word == "begin":
                        if name in DISPLAY_ENVS:
                            if mode == INLINE:
                                flag(DiagCode.MATH_MODE_NESTING, "display environment %s inside inline math" % name, i)
                            elif mode == DISPLAY:
                                flag(DiagCode.MATH_MODE_NESTING, "display environment %s inside display math" % name, i)
                            mode = DISPLAY
                        envs.append((name, i, len(braces)))
                        if name in VERBATIM_ENVS:
                            end = _verbatim_env_end(tex, i)
                            envs.pop()
                            i = end if end is not None else n
                            continue
                    else:
                        if not envs:
                            flag(DiagCode.UNMATCHED_ENV, "\\end{%s} without \\begin" % name, i)
                        else:
                            open_name, at, depth = envs[-1]
                            if open_name != name:
                                flag(DiagCode.UNMATCHED_ENV, "\\begin{%s} closed by \\end{%s}" % (open_name, name), i)
                                # resynchronize so one mistake yields one diagnostic
                                if any(e[0] == name for e in envs):
                                    while envs[-1][0] != name:
                                        envs.pop()
                                envs.pop()
                            else:
                                envs.pop()
                                if depth != len(braces):
                                    flag(DiagCode.UNBALANCED_BRACES, "brace group straddles environment %s" % name, i)
                        if name in DISPLAY_ENVS and mode == DISPLAY:
                            mode = TEXT
                    i = m.end()
                    continue
            elif word == "left" and not in_def:
                lefts.append((i, len(braces)))
            elif word == "right" and not in_def:
                if not lefts:
                    flag(DiagCode.UNMATCHED_ENV, "\\right without \\left", i)
                else:
                    lefts.pop()
            elif word in TEXT_IN_MATH and mode != TEXT:
                pending_text_switch = True
            i = j
            continue
        if c == "{":
            braces.append(_Group(i, mode, pending_text_switch, math_open))
            if pending_text_switch:
                mode, math_open = TEXT, None
                pending_text_switch = False
            i += 1
            continue
        if c == "}":
            if not braces:
                flag(DiagCode.UNBALANCED_BRACES, "unmatched }", i)
            else:
                g = braces.pop()
                if g.text_switch:
                    if mode != TEXT:
                        flag(DiagCode.MATH_MODE_NESTING, "math opened inside text group is not closed", i)
                    mode, math_open = g.mode, g.math_open
            i += 1
            continue
        pending_text_switch = pending_text_switch and c in " \t\n"
        if c == "$" and not in_def:
            double = i + 1 < n and tex[i + 1] == "$"
            if double:
                if mode == TEXT:
                    mode, math_open = DISPLAY, (i, len(braces), "$$")
                elif mode == DISPLAY and math_open and math_open[2] == "$$":
                    mode, math_open = TEXT, None
                else:
                    flag(DiagCode.MATH_MODE_NESTING, "$$ inside inline or environment math", i)
                i += 2
                continue
            if mode == TEXT:
                mode, math_open = INLINE, (i, len(braces), "$")
            elif mode == INLINE and math_open and math_open[2] == "$":
                if math_open[1] != len(braces):
                    flag(DiagCode.MATH_MODE_NESTING, "inline math closes at a different brace depth", i)
                mode, math_open = TEXT, None
            else:
                flag(DiagCode.MATH_MODE_NESTING, "$ inside display math", i)
            i += 1
            continue
        i += 1

    for g in braces:
        flag(DiagCode.UNBALANCED_BRACES, "unclosed {", g.start)
    for name, at, _ in envs:
        flag(DiagCode.UNMATCHED_ENV, "\\begin{%s} never closed" % name, at)
    for at, _ in lefts:
        flag(DiagCode.UNMATCHED_ENV, "\\left without \\right", at)
    if mode != TEXT and math_open is not None:
        flag(DiagCode.MATH_MODE_NESTING, "math opened with %s is never closed" % math_open[2], math_open[0])
    diags.sort(key=lambda d: d.location)
    return diags


def _math_symbol(sym, i, mode, math_open, depth, nested, flag):
    if sym in "([":
        if mode != TEXT:
            where = "inline" if mode == INLINE else "display"
            flag(DiagCode.MATH_MODE_NESTING, "\\%s inside %s math" % (sym, where), i)
            return mode, math_open, nested + 1
        if sym == "(":
            return INLINE, (i, depth, "\\)"), nested
        return DISPLAY, (i, depth, "\\]"), nested
    closer = "\\" + sym
    if math_open is None or math_open[2] != closer:
        if nested:
            return mode, math_open, nested - 1
        flag(DiagCode.MATH_MODE_NESTING, "%s without matching opener" % closer, i)
        return mode, math_open, nested
    return TEXT, None, nested


def _skip_group(tex: str, k: int) -> int:
    depth = 0
    n = len(tex)
    while k < n:
        c = tex[k]
        if c == "\\":
            k += 2
            continue
        if c == "{":
            depth += 1
        elif c == "}":
            depth -= 1
            if depth == 0:
                return k + 1
        k += 1
    return n


def _definition_end(tex: str, j: int, word: str) -> int:
    """Index just past the definition whose command word ends at ``j``."""
    n = len(tex)

    def ws(k: int) -> int:
        while k < n and tex[k] in " \t\n":
            k += 1
        return k

    k = ws(j)
    if k < n and tex[k] == "*":
        k = ws(k + 1)
    if word in ("def", "gdef", "edef", "xdef"):
        if k < n and tex[k] == "\\":
            k += 1
            while k < n and tex[k].isalpha():
                k += 1
        brace = tex.find("{", k)
        return n if brace < 0 else _skip_group(tex, brace)
    # name: braced group or bare control word
    if k < n and tex[k] == "{":
        k = _skip_group(tex, k)
    elif k < n and tex[k] == "\\":
        k += 1
        while k < n and tex[k].isalpha():
            k += 1
    for _ in range(2):
        k2 = ws(k)
        if k2 < n and tex[k2] == "[":
            close = tex.find("]", k2)
            k = n if close < 0 else close + 1
    bodies = 2 if word in ("newenvironment", "renewenvironment") else 1
    for _ in range(bodies):
        k2 = ws(k)
        if k2 < n and tex[k2] == "{":
            k = _skip_group(tex, k2)
    return k
