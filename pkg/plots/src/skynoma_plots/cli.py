"""Figure-rendering CLI: a JSON spec runner plus per-kind shortcuts."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .figures import FIGURE_KINDS, FigureSpec, RenderError, render


def _spec_from_json(path: Path) -> FigureSpec:
    payload = json.loads(path.read_text())
    return FigureSpec(
        csv_paths=tuple(payload["csv_paths"]),
        kind=payload["kind"],
        out_path=payload["out_path"],
        atr_db=payload.get("atr_db"),
        detectors=tuple(payload.get("detectors", ())),
    )


def _run(spec: FigureSpec) -> int:
    result = render(spec)
    extra = f", {len(result.annotations)} peaks" if result.annotations else ""
    print(f"wrote {result.out_path} ({len(result.series)} series{extra})")
    return 0


def cmd_render(args) -> int:
    return _run(_spec_from_json(args.spec))


def _shortcut(kind: str):
    def handler(args) -> int:
        spec = FigureSpec(
            csv_paths=tuple(str(p) for p in args.csv),
            kind=kind,
            out_path=str(args.out),
            atr_db=args.atr,
            detectors=tuple(args.detectors or ()),
        )
        return _run(spec)

    return handler


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="skynoma-plots",
        description="Render skynoma result CSVs into figures",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_render = sub.add_parser("render", help="render a JSON figure spec")
    p_render.add_argument("--spec", type=Path, required=True)
    p_render.set_defaults(func=cmd_render)

    for kind in FIGURE_KINDS:
        name = kind.replace("_", "-")
        p_kind = sub.add_parser(name, help=f"render a {kind} figure")
        p_kind.add_argument("--csv", type=Path, nargs="+", required=True)
        p_kind.add_argument("--out", type=Path, required=True)
        p_kind.add_argument("--atr", type=float, default=None)
        p_kind.add_argument("--detectors", nargs="*", default=None)
        p_kind.set_defaults(func=_shortcut(kind))
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except RenderError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
