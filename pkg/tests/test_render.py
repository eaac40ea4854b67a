from __future__ import annotations

import shlex
import sys
import time
from pathlib import Path

import numpy as np
import pytest
from conftest import make_pdf

from aceforge.errors import RenderError, ToolchainError
from aceforge.render import (
    CompileStatus,
    PageImage,
    RenderSettings,
    check_command,
    compile_tex,
    read_render_log,
    render_batch,
    render_pdf,
)
from aceforge.synth import TEMPLATE_EPILOGUE, SynthConfig, SynthDoc, template_prologue


def raw_doc(synth_id, tex):
    return SynthDoc(synth_id, tex, "", [], 0)


def templated(synth_id, body):
    return raw_doc(synth_id, template_prologue(SynthConfig(), "") + body + TEMPLATE_EPILOGUE)


HELLO = "\\documentclass{article}\n\\begin{document}\nhello\n\\end{document}\n"


# --- stub engine ------------------------------------------------------------

def test_stub_ok_and_pdf_moved(stub_engine, tmp_path):
    res = compile_tex(raw_doc("s1", "fine"), stub_engine, 30, tmp_path / "w1", pdf_dir=tmp_path / "pdf")
    assert res.status is CompileStatus.OK
    assert Path(res.pdf_path) == tmp_path / "pdf" / "s1.pdf"
    assert Path(res.pdf_path).read_bytes().startswith(b"%PDF-")
    assert res.engine_log_excerpt == ""
    assert not (tmp_path / "w1").exists()


def test_stub_failure_keeps_log(stub_engine, tmp_path):
    res = compile_tex(raw_doc("s2", "FAIL"), stub_engine, 30, tmp_path / "w2", keep_failures=True)
    assert res.status is CompileStatus.COMPILE_ERROR
    assert res.pdf_path is None
    assert "Undefined control sequence" in res.engine_log_excerpt
    assert (tmp_path / "w2" / "doc.tex").exists()


def test_stub_timeout_kills_process(stub_engine, tmp_path):
    t0 = time.monotonic()
    res = compile_tex(raw_doc("s3", "HANG"), stub_engine, 1.5, tmp_path / "w3")
    assert res.status is CompileStatus.TIMEOUT
    assert time.monotonic() - t0 < 1.5 + 2
    assert res.engine_log_excerpt


def test_workdir_must_be_empty(stub_engine, tmp_path):
    (tmp_path / "busy").mkdir()
    (tmp_path / "busy" / "x").write_text("x")
    with pytest.raises(RenderError):
        compile_tex(raw_doc("s4", "fine"), stub_engine, 30, tmp_path / "busy")


def test_missing_engine_is_environment_error(tmp_path):
    with pytest.raises(ToolchainError):
        check_command("definitely-not-a-tex-engine {input}", "TeX engine")
    with pytest.raises(ToolchainError):
        compile_tex(raw_doc("s5", "x"), "/nonexistent/engine {input}", 5, tmp_path / "w5")


def test_batch_accounting_and_parallel_isolation(stub_engine, tmp_path):
    kinds = ["fine", "FAIL", "HANG", "fine", "fine", "FAIL", "fine", "fine"]
    docs = [raw_doc("syn-%06d" % i, "%s %d" % (k, i)) for i, k in enumerate(kinds)]
    settings = RenderSettings(stub_engine, dpi=72, jobs=4, timeout=3)
    records = render_batch(docs, tmp_path / "pages", settings)
    assert [r["synth_id"] for r in records] == sorted(d.synth_id for d in docs)
    statuses = [r["status"] for r in records]
    assert statuses.count("Ok") + statuses.count("CompileError") + statuses.count("Timeout") == len(docs)
    assert statuses.count("Ok") == 5 and statuses.count("CompileError") == 2 and statuses.count("Timeout") == 1
    for r in records:
        if r["status"] == "Ok":
            assert (tmp_path / "pages" / r["image_path"]).is_file()
            assert r["page_count"] == 1
            # 300pt wide at 72 dpi
            assert r["width_px"] == 300
    assert read_render_log(tmp_path / "pages") == records
    assert not (tmp_path / "pages" / "work").exists()


def test_rasterizer_failure_recorded(stub_engine, tmp_path):
    failing = "%s -c 'import sys; sys.exit(4)' {input} {output}" % shlex.quote(sys.executable)
    settings = RenderSettings(stub_engine, rasterizer_command=failing, jobs=1)
    (rec,) = render_batch([raw_doc("syn-000000", "fine")], tmp_path / "pages", settings)
    assert rec["status"] == "Ok"
    assert rec["image_path"] is None
    assert "status 4" in rec["render_error"]


# --- rasterizer -------------------------------------------------------------

def test_render_page_count_and_dpi(tmp_path):
    pdf = make_pdf(tmp_path / "two.pdf", pages=2, size=(300, 200))
    low = render_pdf(pdf, dpi=96)
    high = render_pdf(pdf, dpi=192)
    assert len(low) == len(high) == 2
    assert low[0].width_px == 400 and low[0].height_px == 267
    assert abs(high[0].width_px - 2 * low[0].width_px) <= 1
    assert low[0].pixels.shape == (low[0].height_px, low[0].width_px)


def test_render_missing_pdf(tmp_path):
    with pytest.raises(RenderError):
        render_pdf(tmp_path / "none.pdf")


def test_page_image_round_trip(tmp_path):
    px = (np.arange(60, dtype=np.uint8).reshape(6, 10) * 4)
    img = PageImage.from_array(px, "x", 96)
    img.save(tmp_path / "p.png")
    back = PageImage.load(tmp_path / "p.png", "x", 96)
    assert back.width_px == 10 and back.height_px == 6
    assert np.array_equal(back.pixels, px)
    with pytest.raises(ValueError):
        PageImage("x", px, 11, 6, 96)


# --- real engine ------------------------------------------------------------

@pytest.mark.slow
def test_hello_compiles(engine, tmp_path):
    res = compile_tex(raw_doc("hello", HELLO), engine, 60, tmp_path / "w")
    assert res.status is CompileStatus.OK
    pages = render_pdf(res.pdf_path, dpi=96)
    assert len(pages) == 1
    again = render_pdf(res.pdf_path, dpi=192)
    assert abs(again[0].width_px - 2 * pages[0].width_px) <= 1


@pytest.mark.slow
def test_missing_argument_is_compile_error(engine, tmp_path):
    tex = HELLO.replace("hello", r"$\frac{1}$")
    res = compile_tex(raw_doc("frac", tex), engine, 60, tmp_path / "w")
    assert res.status is CompileStatus.COMPILE_ERROR
    assert res.engine_log_excerpt.strip()


@pytest.mark.slow
def test_display_math_in_inline_math_fails_to_compile(engine, tmp_path):
    # the same source the static checker flags as MathModeNesting
    res = compile_tex(templated("nest", r"$a + \[ b \]$"), engine, 60, tmp_path / "w")
    assert res.status is CompileStatus.COMPILE_ERROR


@pytest.mark.slow
def test_infinite_loop_times_out(engine, tmp_path):
    tex = HELLO.replace("hello", r"\def\x{\x}\x")
    t0 = time.monotonic()
    res = compile_tex(raw_doc("loop", tex), engine, 10, tmp_path / "w")
    assert res.status is CompileStatus.TIMEOUT
    assert time.monotonic() - t0 <= 10 + 2
