"""Command-line interface.

Subcommands: ``run`` (execute a configured protocol and write a result
file), ``compare`` (discrepancy metrics between two result files),
``symmetry`` (D4 convergence report of a result file), ``kz``
(Kibble-Zurek rescaling collapse of several runs).  Each subcommand
accepts ``--plot`` to render a figure next to the delimited output.

Exit code 0 on success; on failure a single JSON line with the machine
readable error category goes to stderr and the exit code is 2.
"""

from __future__ import annotations

import argparse
import json
import sys

from .diagnostics import KZ_ETA, KZ_NU, KZ_Z, SYMMETRY_THRESHOLD, XI_CORR, XI_MAG
from .errors import Tfim2dError


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tfim2d",
        description="Multi-engine 2D transverse-field Ising dynamics benchmark harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a configured protocol")
    p_run.add_argument("--config", required=True, help="YAML run configuration")
    p_run.add_argument("--plot", action="store_true",
                       help="render a figure next to the output file")

    p_cmp = sub.add_parser("compare", help="discrepancies between two result files")
    p_cmp.add_argument("--a", required=True, help="reference result file (A1)")
    p_cmp.add_argument("--b", required=True, help="second result file (A2)")
    p_cmp.add_argument("--t", help="comma-separated times (default: common records)")
    p_cmp.add_argument("--out", help="write the table here instead of stdout")
    p_cmp.add_argument("--plot", help="render the discrepancy figure to this file")

    p_sym = sub.add_parser("symmetry", help="D4 symmetry convergence report")
    p_sym.add_argument("--file", required=True, help="result file")
    p_sym.add_argument("--class", dest="observable_class", required=True,
                       choices=["mag", "corr"], help="observable class")
    p_sym.add_argument("--xi", type=float, default=None,
                       help=f"precision cutoff (default {XI_MAG} mag / {XI_CORR} corr)")
    p_sym.add_argument("--threshold", type=float, default=SYMMETRY_THRESHOLD)
    p_sym.add_argument("--out", help="write the table here instead of stdout")
    p_sym.add_argument("--plot", help="render the symmetry figure to this file")

    p_kz = sub.add_parser("kz", help="Kibble-Zurek rescaling collapse")
    p_kz.add_argument("--files", required=True,
                      help="comma-separated result files, one per ramp time")
    p_kz.add_argument("--tau", required=True, help="comma-separated ramp times")
    p_kz.add_argument("--tc", type=float, required=True, help="crossing time t_c")
    p_kz.add_argument("--dt", type=float, default=0.0,
                      help="offset from t_c at which correlations are taken")
    p_kz.add_argument("--nu", type=float, default=KZ_NU)
    p_kz.add_argument("--z", type=float, default=KZ_Z)
    p_kz.add_argument("--eta", type=float, default=KZ_ETA)
    p_kz.add_argument("--out", help="write the rescaled curves here instead of stdout")
    p_kz.add_argument("--plot", help="render the collapse figure to this file")
    return parser


def _emit(text: str, out_path: str | None):
    if out_path:
        from .runner import resolve_output_path

        path = resolve_output_path(out_path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _cmd_run(args) -> int:
    from .config import load_config
    from .runner import run

    config = load_config(args.config)
    series, out_path = run(config)
    if out_path is None:
        print("run finished (no output path configured)")
    else:
        print(f"wrote {out_path} ({len(series.times)} records)")
    if series.metadata.get("unconverged"):
        print("warning: run flagged unconverged "
              f"(failed at tJ = {series.metadata.get('failed_at')})")
    if args.plot and out_path is not None:
        from .plotting import plot_series

        fig_path = out_path.with_suffix(".png")
        plot_series(series, fig_path, lattice=config.lattice())
        print(f"wrote {fig_path}")
    return 0


def _cmd_compare(args) -> int:
    from .runner import compare_files

    times = [float(t) for t in args.t.split(",")] if args.t else None
    rows = compare_files(args.a, args.b, times=times)
    lines = ["t\teps_z\teps_zz"]
    for row in rows:
        zz = "%.17g" % row["eps_zz"] if row["eps_zz_defined"] else "undefined"
        lines.append("%.17g\t%.17g\t%s" % (row["t"], row["eps_z"], zz))
    _emit("\n".join(lines) + "\n", args.out)
    if args.plot:
        from .plotting import plot_compare

        plot_compare(rows, args.plot)
    return 0


def _cmd_symmetry(args) -> int:
    from .runner import symmetry_file

    series, reports, horizon = symmetry_file(
        args.file, args.observable_class, xi=args.xi, threshold=args.threshold
    )
    lines = ["t\teps\teps_rel\tconverged"]
    for t, report in zip(series.times, reports):
        lines.append("%.17g\t%.17g\t%.17g\t%d"
                     % (t, report.eps, report.eps_rel, report.converged))
    lines.append("# converged_until: %.17g" % horizon)
    _emit("\n".join(lines) + "\n", args.out)
    if args.plot:
        from .plotting import plot_symmetry

        plot_symmetry(series.times, reports, args.threshold, horizon, args.plot)
    return 0


def _cmd_kz(args) -> int:
    from .runner import kz_from_files

    files = [f.strip() for f in args.files.split(",") if f.strip()]
    taus = [float(t) for t in args.tau.split(",")]
    curveset, quality = kz_from_files(
        files, taus, args.tc, args.dt, nu=args.nu, z=args.z, eta=args.eta
    )
    lines = ["# collapse_quality: %.17g" % quality,
             "tau\tdelta_rescaled\tcorr_rescaled"]
    for curve, (x, y) in zip(curveset.curves, curveset.rescaled):
        for xi, yi in zip(x, y):
            lines.append("%.17g\t%.17g\t%.17g" % (curve.tau, xi, yi))
    _emit("\n".join(lines) + "\n", args.out)
    if args.plot:
        from .plotting import plot_collapse

        plot_collapse(curveset, quality, args.plot)
    return 0


_COMMANDS = {
    "run": _cmd_run,
    "compare": _cmd_compare,
    "symmetry": _cmd_symmetry,
    "kz": _cmd_kz,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except Tfim2dError as exc:
        print(json.dumps({"error": exc.category, "message": str(exc)}),
              file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
