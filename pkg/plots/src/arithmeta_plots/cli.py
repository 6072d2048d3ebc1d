"""CLI: `plots <kind> --in <csv> --out <png>`.

Exit codes: 0 on success, 1 when the input fails schema validation or I/O.
"""

from __future__ import annotations

import argparse
import sys

from .render import RENDERERS, render_plane
from .schemas import SchemaError


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="plots",
        description="Render training-engine CSV exports to images (read-only).",
    )
    parser.add_argument("kind", choices=sorted(RENDERERS))
    parser.add_argument("--in", dest="input", required=True, help="input CSV path")
    parser.add_argument("--out", dest="output", required=True, help="output image path")
    parser.add_argument("--meta", help="plane annotations JSON (default: <csv>.json)")
    args = parser.parse_args(argv)

    try:
        if args.kind == "plane":
            render_plane(args.input, args.output, meta_path=args.meta)
        else:
            RENDERERS[args.kind](args.input, args.output)
    except (SchemaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {args.output}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
