"""``tev run``: command-line driver.

Exit codes: 0 success, 1 configuration error, 2 solver (or output) failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from .assembly import RefractionField
from .multigrid import MultigridError
from .report import ConfigError, parse_config, run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tev", description="Transmission eigenvalues by multigrid correction")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    r = sub.add_parser("run", help="run one experiment and write the report")
    r.add_argument("--config", help="key=value config file")
    r.add_argument("--domain", help="unit_square or l_shape")
    g = r.add_mutually_exclusive_group()
    g.add_argument("--n", type=float, help="constant refraction index")
    g.add_argument("--n-affine", type=float, nargs=3, metavar=("A", "B1", "B2"),
                   help="n(x) = A + B1 x1 + B2 x2")
    r.add_argument("--coarse-div", type=int, help="cells per unit length on level 1")
    r.add_argument("--levels", type=int, help="number of levels N")
    r.add_argument("--q", type=int, help="number of tracked eigenvalues")
    r.add_argument("--shift-re", type=float, help="real part of the shift (lambda units)")
    r.add_argument("--shift-im", type=float, help="imaginary part of the shift")
    r.add_argument("--quad-order", type=int, help="Gauss points per direction")
    r.add_argument("--tol", type=float, help="Arnoldi tolerance")
    r.add_argument("--seed", type=int, help="Arnoldi start-vector seed")
    r.add_argument("--out", help="output directory")
    r.add_argument("-v", "--verbose", action="store_true")
    return p


def _flags(args) -> dict:
    n = None
    if args.n is not None:
        n = RefractionField.constant(args.n)
    elif args.n_affine is not None:
        n = RefractionField.affine(*args.n_affine)
    return {"domain": args.domain, "n": n, "coarse_div": args.coarse_div,
            "levels": args.levels, "q": args.q, "shift_re": args.shift_re,
            "shift_im": args.shift_im, "quad_order": args.quad_order, "tol": args.tol,
            "seed": args.seed, "out": args.out}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = parse_config(args.config, **_flags(args))
        if config.out is None:
            config = dataclasses.replace(config, out=Path("tev-output"))
    except ConfigError as exc:
        print(f"tev: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        bundle = run_experiment(config)
    except (MultigridError, ArithmeticError, OSError) as exc:
        print(f"tev: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    for level, h, j, kr, ki, res, sec in bundle.eigen:
        print(f"level {level} h={h:.6g} j={j} k={kr:.10g}{ki:+.10g}i residual={res:.3g}")
    print(f"wrote {config.out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
