"""Command line interface: build, verify, report, print-entry."""
from __future__ import annotations

import argparse
import re
import sys
from pathlib import Path

from .config import RunConfig
from .io import BundleError, aggregate_reports, read_bundle, write_bundle, write_reports
from .model import build_centered, build_premodel, reexpand
from .multiindex import parse, render
from .verify import SUITES, Check, Context, SuiteResult, run_suites


def _overrides(args) -> dict:
    o = {}
    for flag, key in (("cutoff", "cutoff"), ("alpha", "alpha"), ("lam", "lam"), ("seed", "noise_seed"),
                      ("amplitude", "amplitude"), ("modes", "fourier_modes")):
        v = getattr(args, flag, None)
        if v is not None:
            o[key] = v
    return o


def load_config(args) -> RunConfig:
    return RunConfig.load(getattr(args, "config", None), _overrides(args))


def beta_filter(spec: str | None):
    """';'-separated canonical renderings, or 're:<pattern>' on the rendering."""
    if not spec:
        return None
    if spec.startswith("re:"):
        pat = re.compile(spec[3:])
        return lambda b: bool(pat.search(render(b)))
    wanted = {parse(s.strip()) for s in spec.split(";") if s.strip()}
    return lambda b: b in wanted


def cmd_build(args) -> int:
    cfg = load_config(args)
    pm = build_premodel(cfg.noise_field(), cfg.window())
    if not pm.indices:
        print("warning: empty model (no index within the cutoff)", file=sys.stderr)
    ctx = Context(cfg, premodel=pm, threads=args.threads)
    write_bundle(args.out, cfg, pm, ctx.centered)
    print(f"bundle {args.out}: {len(pm.indices)} indices, {len(ctx.centered)} base points, "
          f"fingerprint {cfg.fingerprint()}")
    return 0


def _bundle_consistency(ctx: Context, raw: dict) -> Check:
    """Characters stored in the bundle against those recomputed from it."""
    stored = raw.get("centered", [])
    worst, bad = 0.0, ""
    if len(stored) != len(ctx.centered):
        return Check("model", "bundle_characters", False, detail="base point count differs")
    for s, c in zip(stored, ctx.centered):
        for nkey, row in s["characters"].items():
            n = tuple(int(v) for v in nkey.split(","))
            for bs, v in row.items():
                d = abs(float(v) - float(c.chars.value(n, parse(bs))))
                if d > worst:
                    worst, bad = d, f"{nkey} / {bs} at {tuple(c.base)}"
        for n, row in c.chars.chars.items():
            for b, v in row.items():
                if render(b) not in s["characters"].get(f"{n[0]},{n[1]}", {}) and float(v) != 0.0:
                    worst, bad = max(worst, abs(float(v))), f"missing {n} / {render(b)}"
    return Check("model", "bundle_characters", worst <= 1e-9, worst, 1e-9, bad)


def cmd_verify(args) -> int:
    cfg = load_config(args) if (args.config or _overrides(args)) else None
    pm, raw = None, None
    if args.bundle:
        try:
            stored, pm, raw = read_bundle(args.bundle, cfg)
        except BundleError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        cfg = stored
    cfg = cfg or RunConfig()
    ctx = Context(cfg, premodel=pm, threads=args.threads, beta_filter=beta_filter(args.beta))
    results = run_suites(ctx, args.suite)
    if raw is not None and "model" in results:
        results["model"].add(_bundle_consistency(ctx, raw))
    summary = write_reports(args.out, cfg, results)
    for name, r in results.items():
        for c in r.checks:
            print(c.line())
    print(f"overall: {'PASS' if summary['pass'] else 'FAIL'}; reports in {args.out}")
    return 0 if summary["pass"] else 1


def cmd_report(args) -> int:
    try:
        text = aggregate_reports(args.reports)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.out:
        Path(args.out).write_text(text)
    print(text)
    return 0


def cmd_print_entry(args) -> int:
    if args.bundle:
        cfg, pm, _ = read_bundle(args.bundle)
    else:
        cfg = load_config(args)
        pm = build_premodel(cfg.noise_field(), cfg.window())
    pts = cfg.base_points
    cx = build_centered(pm, pts[args.base])
    if args.to is None:
        from .model import f_star
        g, what = f_star(cx), f"F_x* at x={cx.base}"
    else:
        cy = build_centered(pm, pts[args.to])
        g, what = reexpand(cy, cx).gamma, f"Gamma_yx* for x={cx.base}, y={cy.base}"
    beta = parse(args.beta)
    if beta not in set(g.scope):
        print(f"error: {render(beta)} is outside the truncation", file=sys.stderr)
        return 2
    row = g.row(beta)
    print(what)
    if args.gamma:
        gam = parse(args.gamma)
        print(f"entry [{render(beta)}][{render(gam)}] = {float(row.get(gam, 0)):.17g}")
        return 0
    print(f"row {render(beta)}: {len(row)} nonzero entries")
    for gam in sorted(row, key=lambda b: b.sort_key()):
        print(f"  {render(gam):<32s} {float(row[gam]): .17g}")
    return 0


def _config_flags(p):
    p.add_argument("--config", help="YAML or JSON run configuration")
    p.add_argument("--cutoff", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--amplitude", type=float)
    p.add_argument("--modes", type=int)


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="regmodel", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    b = sub.add_parser("build", help="build the model and write a bundle")
    _config_flags(b)
    b.add_argument("--out", default="bundle.json")
    b.add_argument("--threads", type=int, default=1)
    b.set_defaults(func=cmd_build)
    v = sub.add_parser("verify", help="run invariant suites")
    _config_flags(v)
    v.add_argument("--bundle")
    v.add_argument("--suite", choices=SUITES + ("all",), default="all")
    v.add_argument("--beta", help="restrict estimates to indices (';'-separated or re:pattern)")
    v.add_argument("--threads", type=int, default=1)
    v.add_argument("--out", default="reports")
    v.set_defaults(func=cmd_verify)
    r = sub.add_parser("report", help="summarise a reports directory")
    r.add_argument("reports")
    r.add_argument("--out")
    r.set_defaults(func=cmd_report)
    e = sub.add_parser("print-entry", help="print a row or entry of a group element")
    _config_flags(e)
    e.add_argument("--bundle")
    e.add_argument("--base", type=int, default=0, help="index of the base point x")
    e.add_argument("--to", type=int, help="index of y for the re-expansion Gamma_yx")
    e.add_argument("--beta", required=True)
    e.add_argument("--gamma")
    e.set_defaults(func=cmd_print_entry)
    return ap


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
