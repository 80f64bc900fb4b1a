"""Command-line entry point: ``ccbm {run,sweep,validate,mesh}``.

Exit codes: 0 success, 1 usage error, 2 numerical failure.
"""

import argparse
import logging
import os
import sys

from . import mesh as meshmod
from .errors import GeometryError, NumericalError, MeshInversion
from .runner import ExitStatus, default_workers, initial_mesh, run_scenario, sweep
from .scenarios import METHODS, PRESETS, apply_overrides, normalize_keys, preset, read_config


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(ExitStatus.USAGE, f"{self.prog}: error: {message}\n")


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _add_scenario_flags(p):
    p.add_argument("--scenario", choices=sorted(PRESETS),
                   help="named preset (default: the config file's, else example2d1)")
    p.add_argument("--config", help="key = value file applied on top of the preset")
    p.add_argument("--lambda", dest="lam", type=float, help="Bernoulli constant")
    p.add_argument("--h", type=float, help="initial mesh size")
    p.add_argument("--mu", type=float, help="step-size parameter")
    p.add_argument("--tol", type=float, help="stopping tolerance")
    p.add_argument("--max-iters", dest="max_iters", type=int)
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--dump-every", dest="dump_every", type=int,
                   help="write boundary_<k>.txt every N iterations (default 10)")
    p.add_argument("--out", default="out", help="output directory (default: ./out)")


def build_parser():
    p = _Parser(prog="ccbm", description="CCBM solver for the exterior Bernoulli problem")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="run one scenario")
    _add_scenario_flags(r)

    s = sub.add_parser("sweep", help="Cartesian sweep over lambda, mu and h")
    _add_scenario_flags(s)
    s.add_argument("--lambdas", type=_floats, help="comma-separated, default: the preset's")
    s.add_argument("--mus", type=_floats)
    s.add_argument("--hs", type=_floats)
    s.add_argument("--workers", type=int, default=None,
                   help="process pool size (default: available CPUs)")

    sub.add_parser("validate", help="run the quick oracle and invariant checks")

    m = sub.add_parser("mesh", help="write the initial mesh only")
    _add_scenario_flags(m)
    return p


def _scenario(args):
    values = {}
    if args.config:
        values.update(normalize_keys(read_config(args.config)))
    # flags beat the file, the file beats the preset
    file_preset = values.pop("preset", None)
    base = preset(args.scenario or file_preset or "example2d1")
    for key in ("lam", "h", "mu", "tol", "max_iters", "method", "dump_every"):
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    return apply_overrides(base, values)


def _dispatch(args):
    if args.command == "validate":
        from .validate import run_all
        return ExitStatus.SUCCESS if run_all() else ExitStatus.NUMERICAL
    s = _scenario(args)
    if args.command == "run":
        return run_scenario(s, args.out)
    if args.command == "sweep":
        workers = default_workers() if args.workers is None else args.workers
        return sweep(s, args.lambdas or [s.lam], args.mus or [s.cfg.mu],
                     args.hs or [s.h], args.out, workers=workers)
    if args.command == "mesh":
        os.makedirs(args.out, exist_ok=True)
        m = initial_mesh(s)
        meshmod.write_mesh(m, os.path.join(args.out, "mesh.txt"))
        meshmod.write_polyline(m.gamma_polyline(), os.path.join(args.out, "gamma.txt"))
        meshmod.write_polyline(m.sigma_polyline(), os.path.join(args.out, "sigma.txt"))
        q = meshmod.mesh_quality(m)
        print(f"{s.name}: {m.n_vertices} vertices, {len(m.triangles)} triangles, "
              f"min area {q.min_area:.3e}, max aspect {q.max_aspect:.2f}")
        return ExitStatus.SUCCESS
    raise AssertionError(args.command)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return int(_dispatch(args))
    except (NumericalError, MeshInversion) as exc:
        print(f"ccbm: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return int(ExitStatus.NUMERICAL)
    except (GeometryError, ValueError, OSError) as exc:
        print(f"ccbm: error: {exc}", file=sys.stderr)
        return int(ExitStatus.USAGE)


if __name__ == "__main__":
    sys.exit(main())
