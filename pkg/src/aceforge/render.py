"""Compile synthesized sources with an external TeX engine and rasterize the PDFs.

Both tools are plain command templates.  Placeholders:

* engine: ``{input}`` (the .tex file), ``{outdir}``, ``{jobname}``
* rasterizer: ``{input}`` (the .pdf), ``{output}`` (file prefix; pages are
  read back from ``{output}-N.png``), ``{dpi}``
"""

from __future__ import annotations

import enum
import functools
import json
import logging
import os
import re
import shlex
import shutil
import signal
import subprocess
import sys
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import RenderError, ToolchainError
from .synth import SynthDoc

log = logging.getLogger(__name__)

DEFAULT_TIMEOUT = 60.0
MAX_PASSES = 2
LOG_EXCERPT_LINES = 40
SHIM_PATH = Path(__file__).with_name("engines") / "pdftex_node.js"
PDFLATEX_TEMPLATE = "pdflatex -interaction=nonstopmode -halt-on-error -output-directory={outdir} {input}"
DEFAULT_RASTERIZER = shlex.quote(sys.executable) + " -m aceforge.rasterize {input} {output} --dpi {dpi}"

_RERUN_RE = re.compile(r"Rerun to get|Label\(s\) may have changed")


class CompileStatus(str, enum.Enum):
    OK = "Ok"
    COMPILE_ERROR = "CompileError"
    TIMEOUT = "Timeout"


@dataclass(frozen=True)
class CompileResult:
    synth_id: str
    status: CompileStatus
    pdf_path: str | None
    engine_log_excerpt: str
    wall_seconds: float

    def to_json(self) -> dict:
        return {
            "synth_id": self.synth_id,
            "status": self.status.value,
            "pdf_path": self.pdf_path,
            "engine_log_excerpt": self.engine_log_excerpt,
            "wall_seconds": round(self.wall_seconds, 3),
        }


@dataclass(frozen=True, eq=False)
class PageImage:
    synth_id: str
    pixels: np.ndarray  # (h, w) grayscale or (h, w, 3) RGB, uint8
    width_px: int
    height_px: int
    dpi: float

    def __post_init__(self):
        if self.width_px <= 0 or self.height_px <= 0:
            raise ValueError("image dimensions must be positive")
        if self.pixels.shape[:2] != (self.height_px, self.width_px):
            raise ValueError("pixel buffer shape %s does not match %dx%d"
                             % (self.pixels.shape, self.width_px, self.height_px))

    @classmethod
    def from_array(cls, pixels: np.ndarray, synth_id: str = "", dpi: float = 0.0) -> PageImage:
        pixels = np.ascontiguousarray(pixels)
        return cls(synth_id, pixels, int(pixels.shape[1]), int(pixels.shape[0]), dpi)

    @classmethod
    def load(cls, path: str | Path, synth_id: str = "", dpi: float = 0.0) -> PageImage:
        with Image.open(path) as im:
            if im.mode not in ("L", "RGB"):
                im = im.convert("RGB" if "A" not in im.mode and im.mode != "P" else "L")
            arr = np.asarray(im)
        return cls.from_array(arr, synth_id, dpi)

    def save(self, path: str | Path) -> None:
        Image.fromarray(self.pixels).save(path)


# ---------------------------------------------------------------------------
# toolchain discovery


@functools.lru_cache(maxsize=None)
def locate_pdftex_js() -> str | None:
    """Directory of the ``pdftex.js`` npm package, if installed."""
    env = os.environ.get("PDFTEX_JS_DIR")
    if env and (Path(env) / "pdftex-worker.js").is_file():
        return env
    candidates = []
    npm = shutil.which("npm")
    if npm:
        try:
            root = subprocess.run([npm, "root", "-g"], capture_output=True, text=True, timeout=30).stdout.strip()
            if root:
                candidates.append(Path(root) / "pdftex.js")
        except (OSError, subprocess.SubprocessError):
            pass
    candidates.append(Path.cwd() / "node_modules" / "pdftex.js")
    for c in candidates:
        if (c / "pdftex-worker.js").is_file():
            return str(c)
    return None


def default_engine_command() -> str | None:
    """``pdflatex`` when installed, else the node-hosted pdfTeX build; ``None`` if neither."""
    if shutil.which("pdflatex"):
        return PDFLATEX_TEMPLATE
    node = shutil.which("node")
    pdftex_dir = locate_pdftex_js()
    if node and pdftex_dir:
        return "%s %s --pdftex-dir=%s -output-directory={outdir} {input}" % (
            shlex.quote(node), shlex.quote(str(SHIM_PATH)), shlex.quote(pdftex_dir))
    return None


def _expand(template: str, **values) -> list[str]:
    return [tok.format(**values) for tok in shlex.split(template)]


def check_command(template: str, what: str) -> None:
    """Raise ToolchainError unless the program named by ``template`` can be executed."""
    if not template:
        raise ToolchainError("no %s command configured" % what)
    prog = shlex.split(template)[0]
    if not (shutil.which(prog) or (os.path.sep in prog and os.access(prog, os.X_OK))):
        raise ToolchainError("%s program not found: %s" % (what, prog))


def _run(argv: list[str], cwd: Path, timeout: float) -> tuple[int | None, str]:
    """Run ``argv`` in its own process group; returns (exit code or None on timeout, output)."""
    try:
        proc = subprocess.Popen(argv, cwd=cwd, stdin=subprocess.DEVNULL, stdout=subprocess.PIPE,
                                stderr=subprocess.STDOUT, start_new_session=True)
    except FileNotFoundError as exc:
        raise ToolchainError("cannot execute %s: %s" % (argv[0], exc)) from exc
    except PermissionError as exc:
        raise ToolchainError("cannot execute %s: %s" % (argv[0], exc)) from exc
    try:
        out, _ = proc.communicate(timeout=timeout)
        return proc.returncode, out.decode("utf-8", "replace")
    except subprocess.TimeoutExpired:
        try:
            os.killpg(proc.pid, signal.SIGKILL)
        except ProcessLookupError:
            pass
        out, _ = proc.communicate()
        return None, out.decode("utf-8", "replace")


def _tail(text: str, n: int = LOG_EXCERPT_LINES) -> str:
    return "\n".join(text.rstrip("\n").splitlines()[-n:])


def _is_pdf(path: Path) -> bool:
    try:
        with open(path, "rb") as fh:
            return fh.read(5) == b"%PDF-"
    except OSError:
        return False


# ---------------------------------------------------------------------------
# compile


def compile_tex(doc: SynthDoc, engine_command: str, timeout: float = DEFAULT_TIMEOUT,
                workdir: str | Path | None = None, *, pdf_dir: str | Path | None = None,
                keep_failures: bool = False) -> CompileResult:
    """Compile ``doc`` in nonstop mode inside the empty directory ``workdir``.

    On success the PDF is moved to ``pdf_dir/<synth_id>.pdf`` (default: the
    parent of ``workdir``).  The working directory is removed afterwards
    unless compilation failed and ``keep_failures`` is set.
    """
    if workdir is None:
        workdir = tempfile.mkdtemp(prefix="aceforge-%s-" % doc.synth_id)
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    if any(workdir.iterdir()):
        raise RenderError("work directory %s is not empty" % workdir)
    pdf_dir = Path(pdf_dir) if pdf_dir is not None else workdir.parent
    jobname = "doc"
    tex = workdir / (jobname + ".tex")
    tex.write_text(doc.tex_source, encoding="utf-8")
    argv = _expand(engine_command, input=str(tex), outdir=str(workdir), jobname=jobname)

    start = time.monotonic()
    status, output, pdf_path = CompileStatus.COMPILE_ERROR, "", None
    for _ in range(MAX_PASSES):
        remaining = timeout - (time.monotonic() - start)
        if remaining <= 0:
            code = None
        else:
            code, output = _run(argv, workdir, remaining)
        if code is None:
            status = CompileStatus.TIMEOUT
            break
        engine_log = workdir / (jobname + ".log")
        if engine_log.is_file():
            output = engine_log.read_text(encoding="utf-8", errors="replace")
        pdf = workdir / (jobname + ".pdf")
        if code != 0 or not _is_pdf(pdf):
            status = CompileStatus.COMPILE_ERROR
            break
        status = CompileStatus.OK
        if not _RERUN_RE.search(output):
            break
    elapsed = time.monotonic() - start

    if status is CompileStatus.OK:
        pdf_dir.mkdir(parents=True, exist_ok=True)
        target = pdf_dir / (doc.synth_id + ".pdf")
        shutil.move(str(workdir / (jobname + ".pdf")), target)
        pdf_path = str(target)
    if status is CompileStatus.TIMEOUT and not output:
        output = "engine killed after %.1f s" % timeout
    if status is CompileStatus.OK or not keep_failures:
        shutil.rmtree(workdir, ignore_errors=True)
    excerpt = "" if status is CompileStatus.OK else _tail(output)
    if status is not CompileStatus.OK and not excerpt:
        excerpt = "engine exited without output"
    return CompileResult(doc.synth_id, status, pdf_path, excerpt, elapsed)


# ---------------------------------------------------------------------------
# rasterize


def _page_number(path: Path) -> int:
    m = re.search(r"-(\d+)\.png$", path.name)
    return int(m.group(1)) if m else 0


def render_pdf(pdf_path: str | Path, renderer_command: str = DEFAULT_RASTERIZER, dpi: float = 96.0,
               synth_id: str = "", timeout: float = DEFAULT_TIMEOUT) -> list[PageImage]:
    """Rasterize every page of ``pdf_path`` at ``dpi`` through the external renderer."""
    pdf_path = Path(pdf_path)
    if not pdf_path.is_file():
        raise RenderError("PDF not found: %s" % pdf_path)
    with tempfile.TemporaryDirectory(prefix="aceforge-raster-") as tmp:
        prefix = Path(tmp) / "page"
        argv = _expand(renderer_command, input=str(pdf_path.resolve()), output=str(prefix), dpi="%g" % dpi)
        code, output = _run(argv, Path(tmp), timeout)
        if code is None:
            raise RenderError("renderer timed out after %.1f s" % timeout, output)
        if code != 0:
            raise RenderError("renderer exited with status %d" % code, output)
        files = sorted(Path(tmp).glob("page-*.png"), key=_page_number)
        if not files:
            raise RenderError("renderer produced no page images", output)
        return [PageImage.load(f, synth_id, dpi) for f in files]


# ---------------------------------------------------------------------------
# batch


@dataclass(frozen=True)
class RenderSettings:
    engine_command: str
    rasterizer_command: str = DEFAULT_RASTERIZER
    dpi: float = 96.0
    jobs: int = 1
    timeout: float = DEFAULT_TIMEOUT
    keep_failures: bool = False


def _render_one(doc: SynthDoc, settings: RenderSettings, out_dir: Path, work_root: Path) -> dict:
    workdir = work_root / doc.synth_id
    if workdir.exists():
        shutil.rmtree(workdir)
    result = compile_tex(doc, settings.engine_command, settings.timeout, workdir,
                         pdf_dir=out_dir / "pdf", keep_failures=settings.keep_failures)
    record = result.to_json()
    # status stays the compile outcome so Ok + CompileError + Timeout always covers every input
    record.update(page_count=0, image_path=None, render_error=None)
    if result.status is CompileStatus.OK:
        try:
            pages = render_pdf(result.pdf_path, settings.rasterizer_command, settings.dpi,
                               doc.synth_id, settings.timeout)
        except RenderError as exc:
            record.update(render_error=_tail(str(exc) + "\n" + exc.output))
        else:
            image = out_dir / (doc.synth_id + ".png")
            pages[0].save(image)
            record.update(page_count=len(pages), image_path=image.name,
                          width_px=pages[0].width_px, height_px=pages[0].height_px)
    log.info("rendered %s: %s", doc.synth_id, record["status"])
    return record


def render_batch(docs: list[SynthDoc], out_dir: str | Path, settings: RenderSettings) -> list[dict]:
    """Compile and rasterize ``docs``; writes ``<id>.png`` and ``render_log.jsonl`` into ``out_dir``.

    Only the first page of each PDF is kept; ``page_count`` in the log lets
    the layout judge reject documents that spilled onto a second page.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    work_root = out_dir / "work"
    work_root.mkdir(exist_ok=True)
    jobs = max(1, settings.jobs)
    if jobs == 1:
        records = [_render_one(d, settings, out_dir, work_root) for d in docs]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            records = list(ex.map(lambda d: _render_one(d, settings, out_dir, work_root), docs))
    records.sort(key=lambda r: r["synth_id"])
    try:
        work_root.rmdir()
    except OSError:
        pass  # kept failures remain for inspection
    with open(out_dir / "render_log.jsonl", "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r, sort_keys=True) + "\n")
    return records


def read_render_log(out_dir: str | Path) -> list[dict]:
    with open(Path(out_dir) / "render_log.jsonl", encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]
