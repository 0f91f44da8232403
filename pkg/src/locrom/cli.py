"""Command-line entry point: ``locrom offline|online|errors|elbow``."""

import argparse
import logging
import sys

from .errors import LocromError, StageError
from .pipeline import (estimate_bifurcation, load_artifacts, rescan_elbow, run_errors, run_offline,
                       run_online, theta_range)
from .sampling import load_points


def _parser():
    p = argparse.ArgumentParser(prog="locrom", description="Localized reduced-order models for steady bifurcations.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    off = sub.add_parser("offline", help="sample, solve, cluster and build reduced models")
    off.add_argument("--config", required=True)
    off.add_argument("--out", help="artifact directory (default: [output] dir of the config)")

    on = sub.add_parser("online", help="bifurcation diagram from reduced solves")
    on.add_argument("--artifacts", required=True)
    on.add_argument("--theta-min", type=float)
    on.add_argument("--theta-max", type=float)
    on.add_argument("--count", type=int)
    on.add_argument("--theta-file", help="one theta per line, instead of min/max/count")
    on.add_argument("--criterion", choices=("mean", "midrange"))
    on.add_argument("--out", required=True)

    er = sub.add_parser("errors", help="local vs global reduced-model errors")
    er.add_argument("--artifacts", required=True)
    er.add_argument("--held-out", help="one theta per line (default: 10 bin midpoints)")
    er.add_argument("--criterion", choices=("mean", "midrange"))
    er.add_argument("--out", required=True)

    el = sub.add_parser("elbow", help="rescan the elbow curve on stored snapshots")
    el.add_argument("--artifacts", required=True)
    el.add_argument("--kmax", type=int, required=True)
    el.add_argument("--alpha", type=float, default=0.05)
    el.add_argument("--out", help="CSV path (default: stdout)")
    return p


def _online_thetas(args, parser):
    if args.theta_file:
        return load_points(args.theta_file)
    if None in (args.theta_min, args.theta_max, args.count):
        parser.error("online needs --theta-file or all of --theta-min, --theta-max, --count")
    return theta_range(args.theta_min, args.theta_max, args.count)


def main(argv=None):
    parser = _parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "offline":
            out = run_offline(args.config, args.out)
            print(f"artifacts written to {out}")
        elif args.command == "online":
            thetas = _online_thetas(args, parser)
            art = load_artifacts_tagged(args.artifacts)
            diagram = run_online(art, thetas, args.criterion)
            diagram.write(args.out)
            est = estimate_bifurcation(diagram)
            print(f"{len(diagram.rows)} points written to {args.out}"
                  + (f"; first nonzero branch at theta={est!r}" if est is not None else ""))
        elif args.command == "errors":
            held = load_points(args.held_out) if args.held_out else None
            report = run_errors(load_artifacts_tagged(args.artifacts), held, args.criterion)
            report.write(args.out)
            m = report.mean
            print(f"mean errors local={m[0]:.3e} global1={m[1]:.3e} global2={m[2]:.3e}")
        else:
            scan = rescan_elbow(args.artifacts, args.kmax, args.alpha)
            text = scan.to_csv()
            if args.out:
                with open(args.out, "w") as fh:
                    fh.write(text)
            else:
                sys.stdout.write(text)
            print(f"chosen K={scan.chosen_K}" + (" (no elbow, k_max used)" if scan.flagged else ""),
                  file=sys.stderr)
    except StageError as exc:
        print(f"locrom: {exc}", file=sys.stderr)
        return 1
    except (LocromError, OSError) as exc:
        print(f"locrom: [{args.command}] {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


def load_artifacts_tagged(path):
    try:
        return load_artifacts(path)
    except LocromError as exc:
        raise StageError("load", exc) from exc


if __name__ == "__main__":
    sys.exit(main())
