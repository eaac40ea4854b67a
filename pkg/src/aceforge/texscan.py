"""Low-level LaTeX scanning helpers.

Nothing here tries to be TeX. The helpers understand exactly four things:
escapes (``\\x``), brace groups, ``\\begin{..}``/``\\end{..}`` pairs and
verbatim-like regions, which is what the cleaning and extraction passes need.
"""

from __future__ import annotations

import re
from collections.abc import Iterator

VERBATIM_ENVS = frozenset({"verbatim", "verbatim*", "lstlisting", "minted"})

_BEGIN_RE = re.compile(r"\\begin\s*\{([^{}]*)\}")
_END_RE = re.compile(r"\\end\s*\{([^{}]*)\}")


def _verb_end(tex: str, i: int) -> int | None:
    """If ``tex[i:]`` starts an inline ``\\verb`` span, return the index after it."""
    if not tex.startswith("\\verb", i):
        return None
    j = i + 5
    if j < len(tex) and tex[j] == "*":
        j += 1
    if j >= len(tex) or tex[j].isalpha() or tex[j].isspace():
        return None
    delim = tex[j]
    close = tex.find(delim, j + 1)
    nl = tex.find("\n", j + 1)
    if close < 0 or (0 <= nl < close):
        return None
    return close + 1


def _verbatim_env_end(tex: str, i: int) -> int | None:
    """If ``tex[i:]`` opens a verbatim-like environment, return the index after its end."""
    m = _BEGIN_RE.match(tex, i)
    if not m or m.group(1).strip() not in VERBATIM_ENVS:
        return None
    name = m.group(1).strip()
    end_tag = "\\end{%s}" % name
    close = tex.find(end_tag, m.end())
    if close < 0:
        return len(tex)
    return close + len(end_tag)


def split_verbatim(tex: str) -> list[tuple[bool, str]]:
    """Split ``tex`` into ``(is_verbatim, chunk)`` runs; chunks concatenate back to ``tex``."""
    out: list[tuple[bool, str]] = []
    plain_start = 0
    i, n = 0, len(tex)
    while i < n:
        c = tex[i]
        if c == "\\":
            end = _verbatim_env_end(tex, i) or _verb_end(tex, i)
            if end is not None:
                if i > plain_start:
                    out.append((False, tex[plain_start:i]))
                out.append((True, tex[i:end]))
                i = plain_start = end
                continue
            i += 2
            continue
        if c == "%":
            # comments may contain the word \begin{verbatim}; skip them whole
            nl = tex.find("\n", i)
            i = n if nl < 0 else nl
            continue
        i += 1
    if plain_start < n:
        out.append((False, tex[plain_start:]))
    return out


def map_plain(tex: str, fn) -> str:
    """Apply ``fn`` to every non-verbatim run of ``tex``."""
    return "".join(chunk if verb else fn(chunk) for verb, chunk in split_verbatim(tex))


def strip_comments(tex: str) -> str:
    """Remove every unescaped ``%`` through end of line (the newline itself is kept)."""
    out: list[str] = []
    i, n = 0, len(tex)
    while i < n:
        c = tex[i]
        if c == "\\":
            end = _verbatim_env_end(tex, i) or _verb_end(tex, i)
            if end is not None:
                out.append(tex[i:end])
                i = end
                continue
            out.append(tex[i : i + 2])
            i += 2
            continue
        if c == "%":
            nl = tex.find("\n", i)
            i = n if nl < 0 else nl
            continue
        out.append(c)
        i += 1
    return "".join(out)


def iter_control_words(tex: str, start: int = 0, end: int | None = None) -> Iterator[tuple[int, int, str]]:
    """Yield ``(start, end, name)`` for every control word ``\\name``.

    Control symbols such as ``\\\\`` or ``\\%`` are skipped as a unit so that
    ``\\\\R`` is never mistaken for ``\\R``.
    """
    n = len(tex) if end is None else end
    i = start
    while i < n:
        if tex[i] != "\\":
            i += 1
            continue
        j = i + 1
        while j < n and tex[j].isalpha():
            j += 1
        if j == i + 1:
            i += 2
            continue
        yield i, j, tex[i + 1 : j]
        i = j


def match_brace(tex: str, i: int) -> int:
    """Return the index just past the ``}`` closing the ``{`` at ``tex[i]``, or -1."""
    if i >= len(tex) or tex[i] != "{":
        return -1
    depth = 0
    j, n = i, len(tex)
    while j < n:
        c = tex[j]
        if c == "\\":
            j += 2
            continue
        if c == "{":
            depth += 1
        elif c == "}":
            depth -= 1
            if depth == 0:
                return j + 1
        j += 1
    return -1


def skip_space(tex: str, i: int) -> int:
    while i < len(tex) and tex[i] in " \t\n":
        i += 1
    return i


def read_argument(tex: str, i: int) -> tuple[str, int] | None:
    """Read one undelimited macro argument starting at ``i``.

    Returns ``(argument, next_index)``; a brace group yields its contents, a
    control sequence or a single character yields itself.
    """
    i = skip_space(tex, i)
    if i >= len(tex):
        return None
    c = tex[i]
    if c == "{":
        j = match_brace(tex, i)
        if j < 0:
            return None
        return tex[i + 1 : j - 1], j
    if c in "}":
        return None
    if c == "\\":
        j = i + 1
        while j < len(tex) and tex[j].isalpha():
            j += 1
        if j == i + 1:
            j = min(i + 2, len(tex))
        return tex[i:j], j
    return c, i + 1


def read_optional(tex: str, i: int) -> tuple[str | None, int]:
    """Read a ``[...]`` optional argument at ``i`` (after spaces) if present."""
    k = skip_space(tex, i)
    if k >= len(tex) or tex[k] != "[":
        return None, i
    depth = 0
    j = k + 1
    while j < len(tex):
        c = tex[j]
        if c == "\\":
            j += 2
            continue
        if c == "{":
            depth += 1
        elif c == "}":
            depth -= 1
        elif c == "]" and depth == 0:
            return tex[k + 1 : j], j + 1
        j += 1
    return None, i


def environment_end(tex: str, begin_index: int) -> tuple[str, int, int] | None:
    """Locate the ``\\end`` matching the ``\\begin`` at ``begin_index``.

    Returns ``(name, content_start, end_index)`` where ``end_index`` is just
    past ``\\end{name}``; ``None`` if the environment never closes.
    """
    m = _BEGIN_RE.match(tex, begin_index)
    if not m:
        return None
    name = m.group(1).strip()
    if name in VERBATIM_ENVS:
        end = _verbatim_env_end(tex, begin_index)
        return (name, m.end(), end) if end is not None else None
    depth = 0
    pos = begin_index
    pattern = re.compile(r"\\(begin|end)\s*\{" + re.escape(name) + r"\}")
    while True:
        hit = pattern.search(tex, pos)
        if not hit:
            return None
        # an escaped backslash in front means this is not a real \begin/\end
        k = hit.start() - 1
        slashes = 0
        while k >= 0 and tex[k] == "\\":
            slashes += 1
            k -= 1
        if slashes % 2:
            pos = hit.end()
            continue
        depth += 1 if hit.group(1) == "begin" else -1
        if depth == 0:
            return name, m.end(), hit.end()
        pos = hit.end()


def begin_match(tex: str, i: int) -> re.Match | None:
    return _BEGIN_RE.match(tex, i)


def end_match(tex: str, i: int) -> re.Match | None:
    return _END_RE.match(tex, i)


def document_body(tex: str) -> str:
    """Return the contents of the ``document`` environment, or ``tex`` if there is none."""
    start = tex.find("\\begin{document}")
    if start < 0:
        return tex
    start += len("\\begin{document}")
    stop = tex.rfind("\\end{document}")
    return tex[start:] if stop < start else tex[start:stop]


def braces_balanced(tex: str) -> bool:
    depth = 0
    i = 0
    while i < len(tex):
        c = tex[i]
        if c == "\\":
            i += 2
            continue
        if c == "{":
            depth += 1
        elif c == "}":
            depth -= 1
            if depth < 0:
                return False
        i += 1
    return depth == 0
