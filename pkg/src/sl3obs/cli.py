"""Command-line front end.

Subcommands::

    simulate             run one observer against the configured scenario
    compare              run several gain variants on identical inputs
    gen-degenerate       write an image with a continuous stabilizer
    check-observability  print the cost-Hessian spectrum of an image

Exit codes: 0 success, 1 usage or configuration error, 2 I/O error,
3 numerical error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys

import numpy as np

from . import sl3
from .config import ConfigError, SimulationConfig, dump_config, load_config, parse_gain, with_overrides
from .degeneracy import SymmetryGenerator, builtin_generators, generate_degenerate_image
from .image import (MalformedHeader, RasterImage, UnsupportedFormat, as_spherical,
                    build_pixel_grid, load_image, render, save_image)
from .observer import (SingularHessian, check_nondegeneracy, gain_label, simulate,
                       warped_error_image)

log = logging.getLogger("sl3obs")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3
CSV_FIELDS = ("t", "eps_h", "eps_i", "cost", "delta_norm")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _snapshot(record, ref: RasterImage, out_dir: str, tag: str) -> None:
    warped = render(warped_error_image(record.state.h_hat, record.image), ref)
    diff = np.abs(warped.data - ref.data)
    top = diff.max()
    save_image(warped, os.path.join(out_dir, f"warped_{tag}.png"))
    save_image(diff / top if top > 0 else diff, os.path.join(out_dir, f"diff_{tag}.png"))


def run_simulation(cfg: SimulationConfig, gain=None, out_dir: str | None = None,
                   snapshots: bool = True) -> list:
    """Run one scenario, write ``errors.csv`` (and snapshots) and return the reports."""
    gain = cfg.gain if gain is None else gain
    out_dir = cfg.output_dir if out_dir is None else out_dir
    os.makedirs(out_dir, exist_ok=True)
    ref = load_image(cfg.reference_image)
    grid = build_pixel_grid(ref, cfg.quadrature, cfg.deterministic)
    pending = sorted(cfg.snapshot_times) if snapshots else []
    reports = []
    with open(os.path.join(out_dir, "errors.csv"), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_FIELDS)
        for rec in simulate(ref, cfg.h0, cfg.velocity(), gain, cfg.dt, cfg.duration,
                            h_hat0=cfg.h_hat0, quadrature=cfg.quadrature, grid=grid):
            rep = rec.report
            reports.append(rep)
            writer.writerow([_fmt(getattr(rep, f)) for f in CSV_FIELDS])
            while pending and pending[0] <= rep.t + 0.5 * cfg.dt:
                _snapshot(rec, ref, out_dir, f"t{pending.pop(0):.3f}s")
    return reports


def _print_final(label: str, rep) -> None:
    print(f"{label}: t={rep.t:.3f} eps_h={rep.eps_h:.6e} eps_i={rep.eps_i:.6e} "
          f"cost={rep.cost:.6e}")


def cmd_simulate(cfg: SimulationConfig) -> int:
    reports = run_simulation(cfg)
    _print_final(gain_label(cfg.gain), reports[-1])
    return EXIT_OK


def default_variants(cfg: SimulationConfig) -> list:
    from .observer import DualGain, InverseHessianGain, ScalarGain
    k = getattr(cfg.gain, "k", None) or getattr(cfg.gain, "k_s")
    return [ScalarGain(k), InverseHessianGain(k), DualGain(k, 2 * k)]


def cmd_compare(cfg: SimulationConfig, variants=None) -> int:
    variants = variants or cfg.variants or default_variants(cfg)
    columns, times = {}, None
    for gain in variants:
        label = gain_label(gain)
        reports = run_simulation(cfg, gain, os.path.join(cfg.output_dir, label))
        _print_final(label, reports[-1])
        t = [r.t for r in reports]
        if times is not None and t != times:
            raise RuntimeError("variant runs produced different timestamps")
        times = t
        for f in CSV_FIELDS[1:]:
            columns[f"{f}_{label}"] = [getattr(r, f) for r in reports]
    with open(os.path.join(cfg.output_dir, "compare.csv"), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", *columns])
        for i, t in enumerate(times):
            writer.writerow([_fmt(t), *(_fmt(col[i]) for col in columns.values())])
    return EXIT_OK


def _generator(args) -> SymmetryGenerator:
    if args.custom is not None:
        try:
            coords = [float(s) for s in args.custom.split(",")]
        except ValueError as exc:
            raise ConfigError(f"--custom expects 8 comma-separated numbers: {exc}") from exc
        if len(coords) != 8:
            raise ConfigError(f"--custom expects 8 numbers, got {len(coords)}")
        try:
            return SymmetryGenerator.from_coords(coords, "custom")
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    gens = builtin_generators()
    if not 0 <= args.builtin < len(gens):
        raise ConfigError(f"--builtin must be in 0..{len(gens) - 1}")
    return gens[args.builtin]


def cmd_gen_degenerate(args) -> int:
    gen = _generator(args)
    img = generate_degenerate_image(gen, args.width, args.height, rng_seed=args.seed)
    out = args.output or os.path.join(args.output_dir or ".", "degenerate.png")
    parent = os.path.dirname(out)
    if parent:
        os.makedirs(parent, exist_ok=True)
    save_image(img, out)
    print(f"wrote {out} ({gen.label or 'generator'}: {np.array2string(gen.coords, precision=4)})")
    return EXIT_OK


def cmd_check_observability(args) -> int:
    img = load_image(args.image)
    grid = build_pixel_grid(img, args.quadrature or "solid_angle")
    rep = check_nondegeneracy(as_spherical(img), grid, args.threshold)
    print("eigenvalues:")
    for lam in rep.eigenvalues:
        print(f"{lam:.6e}")
    print(f"min_ratio: {rep.min_ratio:.6e}")
    print(f"verdict: {rep.verdict}")
    for v in rep.null_directions:
        print("null direction: " + ",".join(f"{c:.6f}" for c in v))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="simulation config file")
    common.add_argument("--output-dir", default=argparse.SUPPRESS)
    common.add_argument("--deterministic", action="store_true", default=argparse.SUPPRESS)
    common.add_argument("--quadrature", choices=("solid_angle", "uniform"), default=argparse.SUPPRESS)
    common.add_argument("--dump-config", metavar="PATH", default=argparse.SUPPRESS,
                        help="write the effective config ('-' for stdout) and exit")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    p = _Parser(prog="sl3obs", description="Intensity-based homography observer on SL(3).",
                parents=[common])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("simulate", parents=[common], help="run one observer")
    c = sub.add_parser("compare", parents=[common], help="compare gain variants")
    c.add_argument("--variant", action="append", metavar="SPEC",
                   help="scalar:K, inverse_hessian:K[:RIDGE] or dual_gain:KS:KA (repeatable)")
    g = sub.add_parser("gen-degenerate", parents=[common], help="write a degenerate image")
    which = g.add_mutually_exclusive_group(required=True)
    which.add_argument("--builtin", type=int, metavar="N")
    which.add_argument("--custom", metavar="C1,...,C8")
    g.add_argument("--width", type=int, default=256)
    g.add_argument("--height", type=int, default=254)
    g.add_argument("--seed", type=int, default=42)
    g.add_argument("-o", "--output")
    o = sub.add_parser("check-observability", parents=[common], help="Hessian spectrum report")
    o.add_argument("image")
    o.add_argument("--threshold", type=float, default=1e-6)
    return p


def _load(args) -> SimulationConfig:
    if getattr(args, "config", None) is None:
        raise ConfigError("--config is required for this command")
    cfg = load_config(args.config)
    return with_overrides(
        cfg,
        output_dir=getattr(args, "output_dir", None),
        quadrature=getattr(args, "quadrature", None),
        deterministic=True if getattr(args, "deterministic", False) else None,
    )


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        if args.command in ("simulate", "compare"):
            cfg = _load(args)
            if getattr(args, "dump_config", None):
                text = dump_config(cfg)
                if args.dump_config == "-":
                    sys.stdout.write(text)
                else:
                    with open(args.dump_config, "w", encoding="utf-8") as fh:
                        fh.write(text)
                return EXIT_OK
            if args.command == "simulate":
                return cmd_simulate(cfg)
            variants = [parse_gain(s) for s in args.variant] if args.variant else None
            return cmd_compare(cfg, variants)
        if args.command == "gen-degenerate":
            args.output_dir = getattr(args, "output_dir", None)
            return cmd_gen_degenerate(args)
        args.quadrature = getattr(args, "quadrature", None)
        return cmd_check_observability(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, UnsupportedFormat, MalformedHeader) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (SingularHessian, sl3.DegenerateMatrix, sl3.OrientationError,
            np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
