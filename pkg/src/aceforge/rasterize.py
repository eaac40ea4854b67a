"""Stand-alone PDF-to-PNG rasterizer, invoked as an external command.

Writes ``<prefix>-1.png``, ``<prefix>-2.png``, ... in 8-bit grayscale, the
same naming scheme as ``pdftoppm -png``, so either tool can sit behind the
renderer command template.
"""

from __future__ import annotations

import argparse
import sys


def rasterize(pdf_path: str, prefix: str, dpi: float) -> int:
    import pymupdf

    zoom = dpi / 72.0
    with pymupdf.open(pdf_path) as pdf:
        for number, page in enumerate(pdf, start=1):
            pix = page.get_pixmap(matrix=pymupdf.Matrix(zoom, zoom), colorspace=pymupdf.csGRAY, alpha=False)
            pix.set_dpi(round(dpi), round(dpi))
            pix.save("%s-%d.png" % (prefix, number))
        return pdf.page_count


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(prog="python -m aceforge.rasterize")
    ap.add_argument("pdf")
    ap.add_argument("prefix")
    ap.add_argument("--dpi", type=float, default=96.0)
    args = ap.parse_args(argv)
    try:
        rasterize(args.pdf, args.prefix, args.dpi)
    except Exception as exc:  # reported to the caller through stderr and exit status
        print("rasterize: %s" % exc, file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
