"""Model bundles (JSON) and reports (JSON, CSV, markdown)."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .config import RunConfig
from .model import Hierarchy, PreModel, build_order
from .multiindex import parse, render
from .torus import FourierField, Polynomial, PolyPeriodic

BUNDLE_FORMAT = "regmodel-bundle/1"


class BundleError(RuntimeError):
    pass


# -- encoding -----------------------------------------------------------------

def _key(n) -> str:
    return f"{n[0]},{n[1]}"


def _unkey(s: str) -> tuple:
    a, b = s.split(",")
    return int(a), int(b)


def encode_field(f: FourierField) -> dict:
    return {"band": f.band, "re": f.c.real.ravel().tolist(), "im": f.c.imag.ravel().tolist()}


def decode_field(d: dict, K: int) -> FourierField:
    b = int(d["band"])
    c = (np.asarray(d["re"], dtype=float) + 1j * np.asarray(d["im"], dtype=float)).reshape(2 * b + 1, 2 * b + 1)
    return FourierField(c, K)


def encode_pp(F: PolyPeriodic) -> dict:
    return {_key(n): encode_field(f) for n, f in sorted(F.terms.items())}


def decode_pp(d: dict, K: int) -> PolyPeriodic:
    return PolyPeriodic({_unkey(k): decode_field(v, K) for k, v in d.items()}, K)


def encode_poly(p: Polynomial) -> dict:
    return {_key(n): float(a) for n, a in sorted(p.terms.items())}


def decode_poly(d: dict) -> Polynomial:
    return Polynomial({_unkey(k): float(v) for k, v in d.items()})


def encode_chars(chars) -> dict:
    return {_key(n): {render(b): float(v) for b, v in sorted(row.items(), key=lambda kv: kv[0].sort_key())}
            for n, row in sorted(chars.chars.items())}


# -- bundle ---------------------------------------------------------------------

def bundle_dict(config: RunConfig, pm: PreModel, centered: list) -> dict:
    return {
        "format": BUNDLE_FORMAT,
        "fingerprint": config.fingerprint(),
        "config": config.to_dict(),
        "noise": encode_field(pm.noise),
        "indices": [render(b) for b in pm.indices],
        "pc1": [render(b) for b in pm.pc1],
        "max_degree": pm.max_degree,
        "Pi": {render(b): encode_pp(pm.Pi[b]) for b in pm.indices},
        "P": {render(b): encode_poly(pm.P[b]) for b in pm.indices + pm.pc1},
        "centered": [{"base": list(c.base), "characters": encode_chars(c.chars)} for c in centered],
    }


def write_bundle(path, config: RunConfig, pm: PreModel, centered: list) -> str:
    text = json.dumps(bundle_dict(config, pm, centered), sort_keys=True, separators=(",", ":"))
    Path(path).write_text(text)
    return text


def read_bundle(path, config: RunConfig | None = None) -> tuple:
    """(config, PreModel, raw dict); checks the config fingerprint when given."""
    try:
        d = json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise BundleError(f"cannot read bundle {path}: {exc}") from exc
    if d.get("format") != BUNDLE_FORMAT:
        raise BundleError("not a model bundle")
    stored = RunConfig.from_dict(d["config"])
    if stored.fingerprint() != d["fingerprint"]:
        raise BundleError("bundle fingerprint does not match its embedded config")
    if config is not None and config.fingerprint() != d["fingerprint"]:
        raise BundleError(f"config fingerprint {config.fingerprint()} does not match bundle {d['fingerprint']}")
    cfg = stored
    K = cfg.fourier_modes
    noise = decode_field(d["noise"], K)
    w = cfg.window()
    indices = [parse(s) for s in d["indices"]]
    pc1 = [parse(s) for s in d["pc1"]]
    Pi = {parse(s): decode_pp(v, K) for s, v in d["Pi"].items()}
    P = {parse(s): decode_poly(v) for s, v in d["P"].items()}
    hier = Hierarchy(noise, Pi, K)
    rhs = {b: hier.rhs(b) for b in build_order(indices + pc1, w.lam, w.alpha)}
    pm = PreModel(noise, w, indices, Pi, P, rhs, pc1, int(d["max_degree"]))
    return cfg, pm, d


# -- reports ------------------------------------------------------------------

def write_csv(path, rows: list):
    rows = list(rows)
    if not rows:
        Path(path).write_text("")
        return
    cols = list(rows[0].keys())
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        for r in rows:
            w.writerow({k: (f"{v:.17g}" if isinstance(v, float) else v) for k, v in r.items()})


def read_csv(path) -> list:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def summary_markdown(summary: dict) -> str:
    lines = ["# Verification summary", "",
             f"config fingerprint `{summary['fingerprint']}`", ""]
    for suite, info in summary["suites"].items():
        lines.append(f"## {suite}: {'PASS' if info['pass'] else 'FAIL'}")
        lines.append("")
        lines.append("| check | result | value | threshold | detail |")
        lines.append("|---|---|---|---|---|")
        for c in info["checks"]:
            v = "" if c["value"] is None else f"{c['value']:.3e}"
            t = "" if c["threshold"] is None else f"{c['threshold']:.3e}"
            lines.append(f"| {c['name']} | {'pass' if c['pass'] else 'FAIL'} | {v} | {t} | {c['detail']} |")
        lines.append("")
    return "\n".join(lines)


def write_reports(outdir, config: RunConfig, results: dict) -> dict:
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    summary = {
        "fingerprint": config.fingerprint(),
        "config": config.to_dict(),
        "pass": all(r.passed for r in results.values()),
        "suites": {name: {"pass": r.passed, "checks": [c.as_dict() for c in r.checks]} for name, r in results.items()},
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True))
    for name, r in results.items():
        for table, rows in sorted(r.tables.items()):
            write_csv(out / f"{table}.csv", rows)
    (out / "summary.md").write_text(summary_markdown(summary))
    return summary


def _worst_by(rows: list, group: str, key: str, pick=min) -> dict:
    out = {}
    for r in rows:
        g = r[group]
        v = float(r[key])
        if v != v:  # NaN: vacuous fit
            continue
        if g not in out or pick(v, out[g][0]) == v and v != out[g][0]:
            out[g] = (v, r)
    return out


def aggregate_reports(indir) -> str:
    """Markdown overview of a reports directory: checks and worst cases per estimate."""
    d = Path(indir)
    if not d.is_dir():
        raise FileNotFoundError(f"no reports directory {indir}")
    sfile = d / "summary.json"
    if not sfile.exists():
        raise FileNotFoundError(f"no summary.json in {indir}")
    summary = json.loads(sfile.read_text())
    lines = [summary_markdown(summary), "## Worst cases per estimate", ""]
    slopes = d / "slopes.csv"
    if slopes.exists() and slopes.stat().st_size:
        rows = read_csv(slopes)
        fits = {}
        for r in rows:
            fits.setdefault((r["kind"], r["base"], r["beta"], r["gamma_or_n"]), r)
        by_kind: dict = {}
        for r in fits.values():
            margin = float(r["slope"]) - float(r["expected"]) if r["slope"] not in ("nan", "") else float("nan")
            r = dict(r, margin=margin)
            by_kind.setdefault(r["kind"], []).append(r)
        lines += ["| estimate | fits | failing | worst margin | at (base; beta; gamma/n) | largest constant |",
                  "|---|---|---|---|---|---|"]
        for kind in sorted(by_kind):
            rs = [r for r in by_kind[kind] if r["margin"] == r["margin"]]
            fail = sum(r["pass"] == "False" for r in by_kind[kind])
            w = min(rs, key=lambda r: (r["margin"], r["base"], r["beta"], r["gamma_or_n"]))
            big = max(rs, key=lambda r: float(r["constant"]))
            lines.append(f"| {kind} | {len(by_kind[kind])} | {fail} | {w['margin']:.3f} | "
                         f"{w['base']}; {w['beta']}; {w['gamma_or_n'] or '-'} | {float(big['constant']):.3e} |")
        lines.append("")
    rc = d / "rhs_constants.csv"
    if rc.exists() and rc.stat().st_size:
        rows = read_csv(rc)
        var: dict = {}
        for r in rows:
            var[(r["base"], r["beta"])] = float(r["variation"])
        worst = max(sorted(var.items()), key=lambda kv: kv[1])
        fail = sum(v > float(summary["config"]["rhs_variation"]) for v in var.values())
        lines += [f"right-hand side constants: {len(var)} indices, {fail} with variation above bound, "
                  f"worst {worst[1]:.3f} at base {worst[0][0]} for {worst[0][1]}", ""]
    conv = d / "convergence.csv"
    if conv.exists() and conv.stat().st_size:
        rows = read_csv(conv)
        seen = {}
        for r in rows:
            seen[(r["nonlinearity"], r["N"])] = float(r["fitted_order"])
        lines += ["| nonlinearity | N | fitted order |", "|---|---|---|"]
        for (k, n), v in sorted(seen.items()):
            lines.append(f"| {k} | {n} | {v:.3f} |")
        lines.append("")
    return "\n".join(lines)
