"""Command-line front end: ``aprkit <command> ...``.

Exit codes: 0 success, 2 usage error, 3 I/O or format error, 4 capability error.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import bench, io
from ._parallel import ENV_THREADS, resolve_threads
from .build import BuildParams, ConstantSigma, LocalRangeSigma, build_apr
from .conv import (StencilPyramid, Stencil, box_stencil, convolve_apr, gaussian_stencil,
                   identity_stencil, sobel_stencil)
from .core import computational_ratio
from .deconv import RLConfig, rl_apr
from .exceptions import CapabilityError, FormatError
from .reconstruct import reconstruct_full, reconstruct_level
from .tree import fill_tree

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_CAPABILITY = 0, 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def parse_stencil(text) -> Stencil:
    """``identity``, ``box:K``, ``gaussian:SIGMA[:SIZE]``, ``sobel:AXIS`` or ``file:PATH`` (.npy)."""
    name, _, arg = text.partition(":")
    try:
        if name == "identity" and not arg:
            return identity_stencil()
        if name == "box":
            return box_stencil(int(arg))
        if name == "gaussian":
            sigma, _, size = arg.partition(":")
            return gaussian_stencil(float(sigma), int(size) if size else None)
        if name == "sobel":
            return sobel_stencil(int(arg))
        if name == "file":
            return Stencil(np.load(arg))
    except (ValueError, TypeError) as exc:
        raise UsageError(f"bad stencil {text!r}: {exc}") from exc
    raise UsageError(f"unknown stencil {text!r}")


def _threads(value):
    try:
        n = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {value!r}")
    if n < 1:
        raise argparse.ArgumentTypeError("threads must be >= 1")
    return n


def _dims(text):
    try:
        dims = tuple(int(d) for d in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"dims must look like 64x64x64, got {text!r}")
    if len(dims) == 1:
        dims = dims * 3
    if len(dims) != 3 or min(dims) < 1:
        raise argparse.ArgumentTypeError(f"bad dims {text!r}")
    return dims


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="aprkit", description="Adaptive particle representation toolkit.")
    p.add_argument("--threads", type=_threads, default=None,
                   help=f"worker threads (default ${ENV_THREADS} or hardware count)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("convert", help="pixel volume -> APR file")
    c.add_argument("input")
    c.add_argument("output")
    c.add_argument("-E", "--error", type=float, default=0.1)
    c.add_argument("--sigma", default="constant",
                   help="constant, constant:VALUE or local[:RADIUS]")
    c.add_argument("--gradient", choices=("central_diff", "sobel"), default="central_diff")
    c.add_argument("--smoothing", type=int, default=0)

    r = sub.add_parser("reconstruct", help="APR file -> pixel volume")
    r.add_argument("input")
    r.add_argument("output")
    r.add_argument("--level", type=int, default=None)
    r.add_argument("--dtype", choices=sorted(io.RAW_TYPES), default="f32")

    v = sub.add_parser("convolve", help="filter the particle values of an APR file")
    v.add_argument("input")
    v.add_argument("output")
    v.add_argument("--stencil", default="gaussian:1")
    v.add_argument("--pyramid", choices=("restricted", "rescaled", "uniform"), default="restricted")
    v.add_argument("--pad", choices=("reflect", "zero"), default="reflect")

    d = sub.add_parser("deconvolve", help="Richardson-Lucy on an APR file")
    d.add_argument("input")
    d.add_argument("output")
    d.add_argument("--psf", default="gaussian:2:13")
    d.add_argument("--iterations", type=int, default=100)

    b = sub.add_parser("bench", help="run the benchmark suite and write CSV")
    b.add_argument("output")
    b.add_argument("--inputs", nargs="*", default=None, help="raw volumes (default: CR sweep)")
    b.add_argument("--size", type=int, default=128, help="edge length of the generated sweep")
    b.add_argument("--stencils", type=int, nargs="+", default=[3, 5])
    b.add_argument("--repeats", type=int, default=5)
    b.add_argument("--no-pixels", action="store_true")

    i = sub.add_parser("info", help="print CR, per-level counts and memory estimate")
    i.add_argument("input")

    g = sub.add_parser("generate", help="write synthetic volumes")
    g.add_argument("output", help="output file, or directory for presets")
    g.add_argument("--preset", choices=("spheres", "cylinders", "cr-sweep"), default="spheres")
    g.add_argument("--dims", type=_dims, default=(64, 64, 64))
    g.add_argument("--count", type=int, default=8)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--blur", type=float, default=0.0)
    g.add_argument("--noise", type=float, default=0.0)
    return p


def _sigma_policy(text):
    name, _, arg = text.partition(":")
    try:
        if name == "constant":
            return ConstantSigma(float(arg) if arg else None)
        if name == "local":
            return LocalRangeSigma(int(arg) if arg else 2)
    except ValueError as exc:
        raise UsageError(f"bad sigma policy {text!r}: {exc}") from exc
    raise UsageError(f"unknown sigma policy {text!r}")


def _pyramid(mode, w, apr):
    if mode == "restricted":
        return StencilPyramid.restricted(w, apr.l_min, apr.l_max)
    if mode == "rescaled":
        return StencilPyramid.rescaled(w, apr.l_min, apr.l_max)
    return StencilPyramid.uniform(w, apr.l_min, apr.l_max)


def cmd_convert(args, threads, out):
    vol = io.read_volume(args.input)
    params = BuildParams(E=args.error, sigma_policy=_sigma_policy(args.sigma),
                         gradient_policy=args.gradient, smoothing_passes=args.smoothing)
    apr, values = build_apr(vol, params)
    io.write_apr(args.output, apr, values, fill_tree(apr, values, threads))
    print(f"{apr.n_particles} particles, CR {computational_ratio(apr):.4g}", file=out)


def cmd_reconstruct(args, threads, out):
    apr, values, tree = io.read_apr(args.input)
    if args.level is None:
        vol = reconstruct_full(apr, values)
    else:
        vol = reconstruct_level(apr, values, tree, args.level)
    io.write_volume(args.output, vol, args.dtype)


def cmd_convolve(args, threads, out):
    apr, values, _ = io.read_apr(args.input)
    w = parse_stencil(args.stencil)
    tree = fill_tree(apr, values, threads)
    result = convolve_apr(apr, values, _pyramid(args.pyramid, w, apr), tree, args.pad, threads)
    io.write_apr(args.output, apr, result, fill_tree(apr, result, threads))


def cmd_deconvolve(args, threads, out):
    apr, values, _ = io.read_apr(args.input)
    cfg = RLConfig(args.iterations, parse_stencil(args.psf), record_metrics_every=0)
    result = rl_apr(apr, values, cfg, threads=threads).astype(np.float32)
    io.write_apr(args.output, apr, result, fill_tree(apr, result, threads))


def cmd_bench(args, threads, out):
    images = None
    if args.inputs:
        images = {os.path.basename(p): io.read_volume(p) for p in args.inputs}
    config = bench.SuiteConfig(images=images, stencil_sizes=tuple(args.stencils),
                               repeats=args.repeats, threads=threads, n=args.size,
                               include_pixels=not args.no_pixels)
    records = bench.run_suite(config)
    bench.write_csv(args.output, records)
    print(f"{len(records)} records written to {args.output}", file=out)


def cmd_info(args, threads, out):
    apr, values, _ = io.read_apr(args.input)
    mem = bench.memory_estimate(apr)
    print(f"dims          {'x'.join(map(str, apr.source_dims))}", file=out)
    print(f"levels        {apr.l_min}..{apr.l_max}", file=out)
    print(f"particles     {apr.n_particles}", file=out)
    print(f"tree nodes    {apr.n_tree}", file=out)
    print(f"CR            {computational_ratio(apr):.6g}", file=out)
    for level in apr.access.levels:
        sl = apr.access.level_slice(level)
        print(f"  level {level:<3d}   {sl.stop - sl.start}", file=out)
    print(f"memory APR    {mem.apr_bytes} B", file=out)
    print(f"memory pixels {mem.pixel_bytes} B", file=out)
    print(f"memory ratio  {mem.ratio:.4g}", file=out)


def cmd_generate(args, threads, out):
    if args.preset == "cr-sweep":
        os.makedirs(args.output, exist_ok=True)
        n = args.dims[0]
        for i, spec in enumerate(bench.cr_sweep_specs(n, args.seed or 7)):
            path = os.path.join(args.output, f"sweep_{i:02d}_spheres{spec.object_count}.raw")
            io.write_volume(path, bench.generate_spheres(spec))
            print(path, file=out)
        return
    if args.preset == "spheres":
        spec = bench.SphereSpec(args.dims, args.count, (min(args.dims) / 32, min(args.dims) / 8),
                                blur_sigma=args.blur, noise_sigma=args.noise, seed=args.seed)
        vol = bench.generate_spheres(spec)
    else:
        spec = bench.CylinderSpec(args.dims, args.count, (min(args.dims) / 12, min(args.dims) / 6),
                                  thickness=max(min(args.dims) / 24, 1.0),
                                  blur_sigma=args.blur, noise_sigma=args.noise, seed=args.seed)
        vol = bench.generate_cylinders(spec)
    io.write_volume(args.output, vol)


COMMANDS = {"convert": cmd_convert, "reconstruct": cmd_reconstruct, "convolve": cmd_convolve,
            "deconvolve": cmd_deconvolve, "bench": cmd_bench, "info": cmd_info,
            "generate": cmd_generate}


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    try:
        args = build_parser().parse_args(argv)
        threads = resolve_threads(args.threads)
        COMMANDS[args.command](args, threads, out)
    except UsageError as exc:
        print(f"aprkit: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CapabilityError as exc:
        print(f"aprkit: capability error: {exc}", file=sys.stderr)
        return EXIT_CAPABILITY
    except (OSError, FormatError) as exc:
        print(f"aprkit: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"aprkit: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
