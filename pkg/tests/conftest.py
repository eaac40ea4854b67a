from __future__ import annotations

import shlex
import sys
from pathlib import Path

import pymupdf
import pytest

from aceforge.config import demo_corpus_path
from aceforge.render import default_engine_command


@pytest.fixture(scope="session")
def engine() -> str:
    cmd = default_engine_command()
    if cmd is None:
        pytest.skip("no TeX engine available")
    return cmd


@pytest.fixture(scope="session")
def demo_root():
    return demo_corpus_path()


def make_pdf(path: Path, pages: int = 1, size=(300, 200)) -> Path:
    doc = pymupdf.open()
    for i in range(pages):
        page = doc.new_page(width=size[0], height=size[1])
        page.insert_text((40, 60), "page %d" % (i + 1), fontsize=20)
        page.draw_rect(pymupdf.Rect(40, 70, size[0] - 40, size[1] - 40), color=(0, 0, 0), fill=(0, 0, 0))
    doc.save(str(path))
    return path


STUB_ENGINE = r'''
import shutil, sys, time
from pathlib import Path
tex, outdir, template = Path(sys.argv[1]), Path(sys.argv[2]), sys.argv[3]
src = tex.read_text()
if "HANG" in src:
    time.sleep(120)
if "FAIL" in src:
    print("! Undefined control sequence.")
    sys.exit(1)
(outdir / "doc.log").write_text("stub log for " + src[:20])
shutil.copy(template, outdir / "doc.pdf")
'''


@pytest.fixture()
def stub_engine(tmp_path):
    script = tmp_path / "stub_engine.py"
    script.write_text(STUB_ENGINE)
    pdf = make_pdf(tmp_path / "template.pdf")
    return "%s %s {input} {outdir} %s" % (shlex.quote(sys.executable), shlex.quote(str(script)), shlex.quote(str(pdf)))
