from __future__ import annotations

from collections import Counter

from hypothesis import given
from hypothesis import strategies as st

from aceforge.extract import (
    Kind,
    build_pool,
    extract_items,
    read_pool,
    sentence_split,
    write_pool,
)
from aceforge.ingest import SourceDocument, load_corpus, sanitize_commands
from aceforge.syntax import syntax_check
from aceforge.texscan import braces_balanced


def doc(body, doc_id="d"):
    return SourceDocument(doc_id, doc_id + ".tex", body)


def kinds(body):
    return [i.kind for i in extract_items(doc(body))]


# --- sentence_split ---------------------------------------------------------

def test_split_two_sentences():
    assert sentence_split("A. B.") == ["A.", "B."]


def test_no_split_inside_math():
    assert sentence_split("Set $a.b$ now.") == ["Set $a.b$ now."]
    assert sentence_split(r"Take \(x. y\) here. Next.") == [r"Take \(x. y\) here.", "Next."]


def test_abbreviations_guarded():
    for s in ("See Fig. 2 here.", "Use e.g. this.", "As in Eq. 3 above.", "Smith et al. show it."):
        assert sentence_split(s) == [s]


def test_no_split_inside_braces():
    assert sentence_split(r"A \emph{b. c} d. E!") == [r"A \emph{b. c} d.", "E!"]


def test_question_and_exclamation():
    assert sentence_split("Why? Because! Done.") == ["Why?", "Because!", "Done."]


@given(st.lists(st.sampled_from(["Alpha", "beta $x.y$", "gamma", r"\(a.b\)", "delta"]), min_size=1, max_size=5))
def test_split_concatenation_preserves_text(words):
    text = ". ".join(" ".join(words[: i + 1]) for i in range(len(words))) + "."
    parts = sentence_split(text)
    assert " ".join(parts) == text


# --- extract_items ----------------------------------------------------------

def test_plain_sentence_excluded():
    assert extract_items(doc("The sky is blue.")) == []


def test_inline_math_sentence():
    body = r"Let $x \in \mathbb{R}$ be a point."
    items = extract_items(doc(body))
    assert len(items) == 1
    assert items[0].kind is Kind.INLINE_MATH_SENTENCE
    assert items[0].latex_body == body


def test_equation_and_itemize():
    body = ("Intro text.\n\\begin{equation}\na = b\n\\end{equation}\n"
            "\\begin{itemize}\n\\item one\n\\item two\n\\end{itemize}\n")
    assert set(kinds(body)) == {Kind.FORMULA, Kind.LIST}
    assert len(kinds(body)) == 2


def test_every_kind():
    body = "\n".join([
        r"\[ x^2 \]",
        r"\begin{align*} a &= b \\ c &= d \end{align*}",
        r"\begin{tabular}{cc} 1 & 2 \\ \end{tabular}",
        r"\begin{table}[h]\centering\begin{tabular}{c} z \end{tabular}\caption{T}\end{table}",
        r"\begin{enumerate}\item a \end{enumerate}",
        r"\begin{description}\item[x] y \end{description}",
        r"\begin{algorithm}\caption{A}\begin{algorithmic}\STATE $x \gets 1$\end{algorithmic}\end{algorithm}",
        r"\begin{algorithmic}\STATE y\end{algorithmic}",
        r"Here \(y > 0\) holds. And plain prose follows. Then $z$ too.",
    ])
    got = Counter(kinds(body))
    assert got == {Kind.FORMULA: 2, Kind.TABLE: 2, Kind.LIST: 2, Kind.ALGORITHM: 2, Kind.INLINE_MATH_SENTENCE: 2}


def test_maximal_occurrence_only():
    # an itemize containing an equation is one List, not a List and a Formula
    body = r"\begin{itemize}\item $a$ \begin{equation} b \end{equation}\end{itemize}"
    assert kinds(body) == [Kind.LIST]


def test_figures_excluded():
    body = r"\begin{figure}\includegraphics{x}\caption{Plot of $f$.}\end{figure} Plain."
    assert kinds(body) == []


def test_unbalanced_item_dropped_with_report():
    report = []
    items = extract_items(doc(r"Broken $\frac{a}{b$ here."), report=report)
    assert items == []
    assert report


def test_oversize_dropped():
    body = r"\begin{equation}" + "x+" * 600 + r"x\end{equation}"
    assert extract_items(doc(body), max_chars=100) == []
    assert len(extract_items(doc(body), max_chars=2000)) == 1


def test_only_document_body_is_scanned():
    body = "\\documentclass{article}\n\\title{$x$ in title.}\n\\begin{document}\nBody has $y$.\n\\end{document}\n"
    items = extract_items(doc(body))
    assert [i.latex_body for i in items] == ["Body has $y$."]


def test_item_invariants_on_demo(demo_root):
    for d in load_corpus(demo_root):
        for item in extract_items(d):
            assert item.char_len == len(item.latex_body)
            assert braces_balanced(item.latex_body)
            assert syntax_check(item.latex_body) == []
            if item.kind is not Kind.TABLE:
                assert "\\begin{tabular}" not in item.latex_body
            # stability: the body extracts again to the same kind
            again = extract_items(doc(item.latex_body, "again"))
            assert [i.kind for i in again] == [item.kind]


# --- build_pool -------------------------------------------------------------

def test_empty_pool():
    pool = build_pool([])
    assert pool.items == []
    assert sum(pool.counts_by_kind.values()) == 0


def test_dedup_identical_formula():
    eq = "\\begin{equation}\nE = mc^2\n\\end{equation}\n"
    pool = build_pool([doc(eq, "a"), doc("Text.\n" + eq, "b")])
    assert len(pool.items) == 1
    assert pool.items[0].source_doc_id == "a"


# Ten small documents with contents counted by hand:
#   Formula 6, Table 3, List 4, Algorithm 2, InlineMathSentence 8  (total 23)
TEN_DOCS = [
    r"Only prose here. Nothing else.",
    r"\begin{equation} a \end{equation} \begin{equation*} b \end{equation*} We have $c$.",
    r"\[ d \] \begin{itemize}\item e\end{itemize} Sum $f+g$ is fine. Also $h$.",
    r"\begin{tabular}{c} 1 \end{tabular} \begin{enumerate}\item i\end{enumerate}",
    r"\begin{algorithm}\begin{algorithmic}\STATE j\end{algorithmic}\end{algorithm} Cost \(k\) grows.",
    r"\begin{gather} l \end{gather} \begin{multline} m \end{multline} Plain. Then $n$.",
    r"\begin{table}\begin{tabular}{cc} 2 & 3 \end{tabular}\end{table} \begin{description}\item[o] p\end{description}",
    r"\begin{align} q &= r \end{align} Now $s$ and $t$. Another $u$. ",
    r"\begin{algorithmic}\STATE v\end{algorithmic} \begin{itemize}\item w\end{itemize} "
    r"\begin{tabular}{l} 4 \end{tabular}",
    r"\begin{equation} a \end{equation} Last $x$ here. And prose.",  # repeated formula deduplicated
]


def test_ten_doc_hand_count():
    pool = build_pool([doc(b, "doc%d" % i) for i, b in enumerate(TEN_DOCS)])
    assert pool.counts_by_kind == {
        Kind.FORMULA: 6, Kind.TABLE: 3, Kind.LIST: 4, Kind.ALGORITHM: 2, Kind.INLINE_MATH_SENTENCE: 8,
    }
    assert sum(pool.counts_by_kind.values()) == len(pool.items)
    assert Counter(i.kind for i in pool.items) == Counter(pool.counts_by_kind)


def test_pool_deterministic_and_order_stable(demo_root):
    docs = load_corpus(demo_root)
    a, b = build_pool(docs), build_pool(docs)
    assert [i.to_json() for i in a.items] == [i.to_json() for i in b.items]
    order = {d.doc_id: n for n, d in enumerate(docs)}
    assert [order[i.source_doc_id] for i in a.items] == sorted(order[i.source_doc_id] for i in a.items)


def test_required_commands_and_macro_tables():
    src = doc(r"\newcommand{\pair}[3]{(#1,#2,#3)}" + "\n$\\pair{a}{b}{c}$ holds.", "m")
    pool = build_pool([sanitize_commands(src)])
    assert len(pool.items) == 1
    # the three-argument macro is kept unexpanded and recorded for the synthesizer
    assert pool.items[0].required_commands == frozenset({"pair"})
    assert set(pool.macro_tables["m"]) == {"pair"}


def test_pool_round_trip(tmp_path, demo_root):
    pool = build_pool(load_corpus(demo_root))
    sidecar = write_pool(pool, tmp_path / "pool.jsonl")
    assert sidecar.name == "pool.stats.json"
    back = read_pool(tmp_path / "pool.jsonl")
    assert back.items == pool.items
    assert back.counts_by_kind == pool.counts_by_kind
    assert back.macro_tables == pool.macro_tables
