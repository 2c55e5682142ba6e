"""The `higgs` command line: exact | expand | mc | scan | fit | compare.

Each run resolves a config (TOML or JSON, plus --set overrides), writes its
artifacts atomically under a run directory, and records a manifest with the
config hash so any run can be reproduced from its manifest alone.

Exit codes: 0 ok, 2 config error, 3 resource error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile

from . import __version__
from .config import apply_overrides, config_hash, load_config, validate_config
from .errors import ConfigError, NumericError, ResourceError
from .lattice import lattice_for
from .dec import BoxSpec, Cell


def _box(cfg):
    try:
        return BoxSpec(tuple((int(lo), int(hi)) for lo, hi in cfg["box"]))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad box spec {cfg['box']!r}: {exc}") from exc


def _gamma_mask(lat, spec):
    kind = spec.get("type")
    if kind == "line":
        n = int(spec["n"])
        axis = int(spec.get("axis", 0))
        if "start" in spec:
            return lat.straight_line_mask(tuple(spec["start"]), n, axis)
        return lat.centered_line_mask(n, axis)
    if kind == "edges":
        cells = [Cell.from_text(t) for t in spec["edges"]]
        return lat.edge_mask(cells)
    raise ConfigError(f"unknown gamma spec type {spec.get('type')!r}")


def _json_ready(obj):
    if isinstance(obj, dict):
        return {k: _json_ready(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_ready(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    if hasattr(obj, "item") and not isinstance(obj, (str, bytes)):
        return obj.item()
    return obj


def _write_atomic(path, text):
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path) or ".")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _write_json(path, payload):
    _write_atomic(path, json.dumps(_json_ready(payload), sort_keys=True,
                                   indent=2) + "\n")


def _versions():
    import numpy

    return {"z2higgs": __version__, "numpy": numpy.__version__,
            "python": "%d.%d.%d" % sys.version_info[:3]}


# -- mode runners ----------------------------------------------------------


def run_exact(cfg, outdir):
    from .exact import ModelParams, exact_partition

    box = _box(cfg)
    lat = lattice_for(box)
    params = ModelParams(box, float(cfg["beta"]), float(cfg["kappa"]),
                         oriented_double=cfg.get("oriented_double", True),
                         budget=cfg.get("budget", 26))
    mask = _gamma_mask(lat, cfg["gamma"])
    res = exact_partition(params, mask)
    payload = {"logZ0": res.logZ0, "logZgamma": res.logZgamma, "ratio": res.ratio}
    _write_json(os.path.join(outdir, "result.json"), payload)
    return ["result.json"]


def run_expand(cfg, outdir):
    from .clusters import Activities, ExpansionConfig, Expansion, bound_diagnostics
    from .polymers import PathPolymer

    box = _box(cfg)
    lat = lattice_for(box)
    gn = _gamma_mask(lat, cfg["gamma_n"])
    g0 = _gamma_mask(lat, cfg["gamma0"]) if "gamma0" in cfg else 0
    ecfg = ExpansionConfig(max_norm1=cfg["max_norm1"], max_norm2=cfg["max_norm2"],
                           max_cluster_size=cfg.get("max_cluster_size", 4),
                           alpha=cfg.get("alpha", 0.5), a=cfg.get("a", 0.5))
    act = Activities(float(cfg["beta"]), float(cfg["kappa"]), box.m,
                     cfg.get("oriented_double", True))
    expn = Expansion(lat, ecfg)
    value, tail = expn.log_ratio(gn, g0, act)
    payload = {
        "truncatedSum": value,
        "tailBound": tail.extrapolated_tail,
        "cutoffs": {"max_norm1": ecfg.max_norm1, "max_norm2": ecfg.max_norm2,
                    "max_cluster_size": ecfg.max_cluster_size},
        "shells": [list(s) for s in tail.shells],
        "nClusters": len(expn.clusters),
    }
    if cfg.get("diagnostics", False):
        gnp = PathPolymer(lat, gn)
        diag = bound_diagnostics(expn, act, gamma_n=gnp if lat.odd_vertices(gn) else None)
        payload["diagnostics"] = {
            "checks": [{"name": c.name, "lhs": c.lhs, "rhs": c.rhs,
                        "passed": c.passed} for c in diag.checks],
            "D_m": {str(k): v for k, v in diag.d_m.items()},
        }
    _write_json(os.path.join(outdir, "result.json"), payload)
    return ["result.json"]


def run_mc(cfg, outdir):
    from .exact import ModelParams
    from .mc import RngSpec, SamplingPlan, mc_ising_correlation, mc_wilson

    box = _box(cfg)
    lat = lattice_for(box)
    plan = SamplingPlan(n_sweeps=cfg["sweeps"], n_therm=cfg["therm"],
                        block_len=cfg["block_len"],
                        estimator=cfg.get("estimator", "auto"))
    streams = cfg.get("streams", 1)
    mode = cfg["mode"]
    records = []
    for stream in range(streams):
        rng = RngSpec(cfg["seed"], stream)
        if mode == "finite-beta":
            params = ModelParams(box, float(cfg["beta"]), float(cfg["kappa"]),
                                 oriented_double=cfg.get("oriented_double", True))
            est = mc_wilson(params, _gamma_mask(lat, cfg["gamma"]), plan, rng)
        elif mode == "ising":
            est = mc_ising_correlation(float(cfg["kappa"]), box,
                                       tuple(cfg["x"]), tuple(cfg["y"]), plan, rng,
                                       cfg.get("oriented_double", True))
        else:
            raise ConfigError(f"unknown mc mode {mode!r}")
        records.append({"stream": stream, "mean": est.mean, "stderr": est.stderr,
                        "sweeps": est.n_sweeps, "therm": est.n_therm,
                        "block_len": est.block_len, "estimator": est.estimator,
                        "mode": est.mode, "seed": est.seed})
    lines = [json.dumps(_json_ready(r), sort_keys=True) for r in records]
    _write_atomic(os.path.join(outdir, "records.jsonl"), "\n".join(lines) + "\n")
    pooled = {
        "mean": sum(r["mean"] for r in records) / len(records),
        "n_streams": len(records),
    }
    _write_json(os.path.join(outdir, "result.json"), pooled)
    return ["records.jsonl", "result.json"]


def run_scan(cfg, outdir):
    from .mc import SamplingPlan, decay_scan, dilute_schedule, fixed_schedule, scan_rows_to_csv

    box = _box(cfg)
    plan = SamplingPlan(n_sweeps=cfg["sweeps"], n_therm=cfg["therm"],
                        block_len=cfg["block_len"],
                        estimator=cfg.get("estimator", "auto"))
    mode = cfg.get("mode", "gauge")
    sched_cfg = cfg.get("schedule", {"type": "dilute", "lam": 1.0})
    oriented = cfg.get("oriented_double", True)
    if mode == "gauge":
        if sched_cfg.get("type") == "fixed":
            schedule = fixed_schedule(float(sched_cfg["beta"]))
        elif sched_cfg.get("type") == "dilute":
            schedule = dilute_schedule(float(sched_cfg.get("lam", 1.0)), box.m,
                                       oriented)
        else:
            raise ConfigError(f"unknown schedule {sched_cfg!r}")
    else:
        schedule = None
    rows = decay_scan(box, float(cfg["kappa"]), [int(n) for n in cfg["n_values"]],
                      schedule, plan, seed=cfg["seed"],
                      streams=cfg.get("streams", 1), axis=cfg.get("axis", 0),
                      translates=cfg.get("translates", 1),
                      rows=cfg.get("rows", 1), mode=mode,
                      oriented_double=oriented)
    _write_atomic(os.path.join(outdir, "scan.csv"), scan_rows_to_csv(rows))
    lines = [json.dumps(_json_ready(r.__dict__), sort_keys=True) for r in rows]
    _write_atomic(os.path.join(outdir, "rows.jsonl"), "\n".join(lines) + "\n")
    _write_json(os.path.join(outdir, "result.json"),
                {"n_rows": len(rows), "kappa": cfg["kappa"], "mode": mode})
    return ["scan.csv", "rows.jsonl", "result.json"]


def _read_scan_csv(path):
    rows = []
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        for line in fh:
            vals = dict(zip(header, line.strip().split(",")))
            rows.append((float(vals["n"]), float(vals["mean"]), float(vals["stderr"])))
    return rows


def run_fit(cfg, outdir):
    from .fits import fit_decay

    rows = _read_scan_csv(cfg["input"])
    rng = (cfg.get("n_min", -math.inf), cfg.get("n_max", math.inf))
    ns = [r[0] for r in rows]
    fit_range = (max(min(ns), rng[0]), min(max(ns), rng[1]))
    res = fit_decay(rows, fit_range=fit_range, kappa=cfg.get("kappa"))
    _write_json(os.path.join(outdir, "fit.json"), res.to_dict())
    return ["fit.json"]


def run_compare(cfg, outdir):
    from .fits import CompareReport, FitResult, compare_c

    def load_fit(path):
        d = json.load(open(path))
        return FitResult(
            C=d["C"], c=d["c"], p=d["p"],
            cov=tuple(tuple(r) for r in d["cov"]),
            fit_range=tuple(d["fit_range"]), residual_norm=d["residual_norm"],
            method=d["method"], n_used=d["n_used"], condition=d["condition"],
            aic=d["aic"], aic_pure=d["aic_pure"], pure_c=d["pure_c"],
            pure_C=d["pure_C"], prefers_correction=d["prefers_correction"],
            kappa=d.get("kappa"))

    rep = compare_c(load_fit(cfg["fit_a"]), load_fit(cfg["fit_b"]),
                    rel_tol=cfg.get("rel_tol", 0.10))
    _write_json(os.path.join(outdir, "compare.json"), rep.to_dict())
    return ["compare.json"]


RUNNERS = {"exact": run_exact, "expand": run_expand, "mc": run_mc,
           "scan": run_scan, "fit": run_fit, "compare": run_compare}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser():
    parser = _Parser(prog="higgs", description=__doc__)
    sub = parser.add_subparsers(dest="mode", required=True)
    for mode in RUNNERS:
        p = sub.add_parser(mode)
        p.add_argument("--config", required=True,
                       help="TOML/JSON config, or a manifest.json to re-run")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key (value parsed as JSON)")
        p.add_argument("--out", default=None, help="run directory")
    return parser


def run(mode, cfg, outdir=None):
    cfg = validate_config(mode, cfg)
    digest = config_hash(mode, cfg)
    if outdir is None:
        outdir = os.path.join("runs", f"{mode}-{digest[:8]}")
    os.makedirs(outdir, exist_ok=True)
    artifacts = RUNNERS[mode](cfg, outdir)
    manifest = {
        "mode": mode,
        "config": cfg,
        "config_hash": digest,
        "versions": _versions(),
        "seeds": {"seed": cfg.get("seed")} if "seed" in cfg else {},
        "artifacts": artifacts,
    }
    _write_json(os.path.join(outdir, "manifest.json"), manifest)
    return outdir, artifacts


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        cfg = load_config(args.config)
        if isinstance(cfg, dict) and "config" in cfg and "mode" in cfg:
            if cfg["mode"] != args.mode:
                raise ConfigError(
                    f"manifest mode {cfg['mode']!r} does not match {args.mode!r}")
            cfg = cfg["config"]
        cfg = apply_overrides(cfg, args.set)
        outdir, artifacts = run(args.mode, cfg, args.out)
    except ConfigError as exc:
        _fail(exc, "config-error")
        return 2
    except ResourceError as exc:
        _fail(exc, "resource-error")
        return 3
    except NumericError as exc:
        _fail(exc, "numeric-error")
        return 4
    print(json.dumps({"ok": True, "outdir": outdir, "artifacts": artifacts}))
    return 0


def _fail(exc, kind):
    sys.stderr.write(json.dumps({"ok": False, "error": kind, "message": str(exc)})
                     + "\n")


if __name__ == "__main__":
    sys.exit(main())
