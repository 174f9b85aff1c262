"""Command-line workflows: build tables, cone surveys, exponents, scaling
studies, SVG export and orbit dumps.

Exit codes: 0 pass, 2 geometry certificate failure, 3 cone violation,
4 singular or cap anomalies above threshold, 5 exponent check failed.
"""

from __future__ import annotations

import argparse
import datetime
import json
import os
import platform
import sys

import numpy as np

from . import io as hio

EXIT_OK, EXIT_CERT, EXIT_CONES, EXIT_SINGULAR, EXIT_LYAP = 0, 2, 3, 4, 5
FAMILIES = ("main", "optimal", "spiral", "bulk", "polygon", "square")

DEFAULTS = {
    "family": "optimal", "kd": -1.0, "kf": 0.1, "h": None, "l": None, "r0": None, "opening_y0": 0.0,
    "vertices": None, "table": None, "seed": 0, "orbits": 1000, "steps": 1000, "singular_threshold": 0.01,
    "section": None, "expect_positive": False, "time_reversed": False, "kf_list": "0.1,0.03,0.01,0.003,0.001",
    "orbit_index": 0, "trajectory_steps": 0, "out": ".", "grid": 400,
}
# keys that change where or how fast a run happens, not what it computes
NON_SEMANTIC = ("out", "threads", "config", "command")


# ----------------------------------------------------------------- config


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hypb", description="Hyperbolic billiards with focusing boundary pieces.")
    S = argparse.SUPPRESS
    common = argparse.ArgumentParser(add_help=False, argument_default=S)
    common.add_argument("--config", help="JSON file of options; flags on the command line take precedence")
    common.add_argument("--out", help="output directory")
    common.add_argument("--threads", type=int, help="worker threads (default: HYPB_THREADS or 1)")
    tab = argparse.ArgumentParser(add_help=False, argument_default=S)
    tab.add_argument("--table", help="table.json written by `build`; overrides the family options")
    tab.add_argument("--family", choices=FAMILIES)
    tab.add_argument("--kd", type=float, help="dispersing curvature (negative)")
    tab.add_argument("--kf", type=float, help="focusing curvature")
    tab.add_argument("--h", type=float, help="opening height (default h_o)")
    tab.add_argument("--l", type=float, help="strip length (default 1/k_f)")
    tab.add_argument("--r0", type=float, help="spiral inner radius")
    tab.add_argument("--opening-y0", dest="opening_y0", type=float)
    tab.add_argument("--vertices", help="polygon vertices as JSON, e.g. [[0,0],[1,0],[0,1]]")
    tab.add_argument("--grid", type=int, help="grid size of the (C1) check")
    runs = argparse.ArgumentParser(add_help=False, argument_default=S)
    runs.add_argument("--seed", type=int)
    runs.add_argument("--orbits", type=int)
    runs.add_argument("--steps", type=int)
    runs.add_argument("--section", choices=("psi", "full"))
    runs.add_argument("--singular-threshold", dest="singular_threshold", type=float,
                      help="largest tolerated fraction of abandoned orbits")

    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("build", parents=[common, tab], help="build a table and its certificate")
    sub.add_parser("verify-cones", parents=[common, tab, runs], help="cone invariance survey")
    p = sub.add_parser("lyapunov", parents=[common, tab, runs], help="largest Lyapunov exponent")
    p.add_argument("--expect-positive", dest="expect_positive", action="store_true", default=S)
    p.add_argument("--time-reversed", dest="time_reversed", action="store_true", default=S)
    p = sub.add_parser("scaling-study", parents=[common], argument_default=S, help="h_o, area, diameter vs k_f")
    p.add_argument("--kd", type=float)
    p.add_argument("--kf-list", dest="kf_list", help="comma-separated, decreasing")
    p.add_argument("--r0", type=float)
    p = sub.add_parser("export-svg", parents=[common, tab], argument_default=S,
                       help="table outline, optional trajectory")
    p.add_argument("--seed", type=int)
    p.add_argument("--orbit-index", dest="orbit_index", type=int)
    p.add_argument("--trajectory-steps", dest="trajectory_steps", type=int)
    p = sub.add_parser("orbit-dump", parents=[common, tab], argument_default=S, help="one orbit as CSV")
    p.add_argument("--seed", type=int)
    p.add_argument("--orbit-index", dest="orbit_index", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--section", choices=("psi", "full"))
    return ap


def resolve_config(argv) -> dict:
    """Defaults, then the config file, then explicit flags."""
    ns = vars(_parser().parse_args(argv))
    cfg = dict(DEFAULTS)
    if "config" in ns:
        with open(ns["config"]) as f:
            cfg.update({k.replace("-", "_"): v for k, v in json.load(f).items()})
    cfg.update(ns)
    cfg.setdefault("threads", int(os.environ.get("HYPB_THREADS", "1")))
    return cfg


def config_hash(cfg: dict) -> str:
    return hio.content_hash(semantic_config(cfg))


def semantic_config(cfg: dict) -> dict:
    keep = _relevant_keys(cfg["command"])
    return {k: cfg[k] for k in sorted(cfg) if k in keep and k not in NON_SEMANTIC}


def _relevant_keys(command: str):
    table = {"table", "family", "kd", "kf", "h", "l", "r0", "opening_y0", "vertices", "grid"}
    runs = {"seed", "orbits", "steps", "section", "singular_threshold"}
    return {
        "build": table,
        "verify-cones": table | runs,
        "lyapunov": table | runs | {"expect_positive", "time_reversed"},
        "scaling-study": {"kd", "kf_list", "r0"},
        "export-svg": table | {"seed", "orbit_index", "trajectory_steps"},
        "orbit-dump": table | {"seed", "orbit_index", "steps", "section"},
    }[command]


# ----------------------------------------------------------------- tables


def make_table(cfg: dict, certify: bool = False):
    """``(table, certificate or None)`` from a table file or family options."""
    from . import spiral, table as T
    if cfg.get("table"):
        with open(cfg["table"]) as f:
            doc = hio.loads(f.read())
        t = T.Table.from_dict(doc["table"] if "table" in doc else doc)
        cert = T.certify_main(t, cfg["grid"]) if certify and t.family in ("main", "optimal") else None
        return t, cert
    fam, kd, kf = cfg["family"], float(cfg["kd"]), float(cfg["kf"])
    if fam == "optimal":
        h = cfg["h"] if cfg["h"] is not None else T.compute_h_o(kd, kf, cfg["opening_y0"], grid=cfg["grid"])
        t = T.build_main_table(T.MainTableParams(kd, kf, h, cfg["l"] if cfg["l"] is not None else 1.0 / kf,
                                                 cfg["opening_y0"]))
        t.family = "optimal"
        t.params["h_o"], t.params["l_o"] = h, 1.0 / kf
        return t, (T.certify_main(t, cfg["grid"]) if certify else None)
    if fam == "main":
        h = cfg["h"] if cfg["h"] is not None else T.compute_h_o(kd, kf, cfg["opening_y0"], grid=cfg["grid"])
        l = cfg["l"] if cfg["l"] is not None else 1.0 / kf
        t = T.build_main_table(T.MainTableParams(kd, kf, h, l, cfg["opening_y0"]))
        return t, (T.certify_main(t, cfg["grid"]) if certify else None)
    if fam == "spiral":
        r0 = cfg["r0"] if cfg["r0"] is not None else spiral.R0_DEFAULT
        t, sp, cert = spiral.build_spiral_table(kd, kf, r0, certify=certify)
        return t, cert
    if fam == "bulk":
        return T.build_bulk_table(kd, kf), None
    if fam == "polygon":
        if not cfg["vertices"]:
            raise SystemExit("--vertices is required for the polygon family")
        v = cfg["vertices"] if isinstance(cfg["vertices"], list) else json.loads(cfg["vertices"])
        return T.build_polygon_table(np.asarray(v, dtype=float)), None
    if fam == "square":
        return T.unit_square_table(), None
    raise SystemExit(f"unknown family {fam!r}")


# ----------------------------------------------------------------- output


def _envelope(cfg: dict, table_hash: str | None, body: dict) -> dict:
    return {"config": semantic_config(cfg), "config_hash": config_hash(cfg), "table_hash": table_hash, **body}


def _write_meta(cfg: dict, name: str, outputs):
    import numba
    import scipy
    meta = {
        "command": cfg["command"], "outputs": sorted(outputs), "config_hash": config_hash(cfg),
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(), "threads": cfg["threads"],
        "python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__,
        "numba": numba.__version__, "argv": sys.argv[1:],
    }
    hio.write_json(os.path.join(cfg["out"], f"{name}.meta.json"), meta)


def _csv_with_header(cfg, table_hash, header, rows) -> str:
    return f"# config_hash={config_hash(cfg)} table_hash={table_hash}\n" + hio.csv_text(header, rows)


def _out(cfg, name):
    return os.path.join(cfg["out"], name)


# ---------------------------------------------------------------- commands


def cmd_build(cfg: dict) -> int:
    t, cert = make_table(cfg, certify=True)
    th = t.content_hash()
    hio.write_json(_out(cfg, "table.json"), _envelope(cfg, th, {"table": t.to_dict()}))
    hio.write_atomic(_out(cfg, "table.svg"), hio.svg_table(t))
    if cert is None:
        body = {"certificate": None, "ok": True, "note": "no certificate for this family"}
    else:
        body = {"certificate": cert.to_dict(), "ok": cert.ok}
    hio.write_json(_out(cfg, "certificate.json"), _envelope(cfg, th, body))
    _write_meta(cfg, "build", ["table.json", "table.svg", "certificate.json"])
    print(f"table {th[:12]}  pieces={t.n_pieces}  certificate={'pass' if body['ok'] else 'FAIL'}")
    return EXIT_OK if body["ok"] else EXIT_CERT


def _abandoned_exit(abandoned: int, n: int, cfg) -> bool:
    return n > 0 and abandoned / n > cfg["singular_threshold"]


def cmd_verify_cones(cfg: dict) -> int:
    from .cones import survey
    t, _ = make_table(cfg)
    rep = survey(t, cfg["orbits"], cfg["steps"], cfg["seed"], threads=cfg["threads"])
    d = rep.to_dict()
    hio.write_json(_out(cfg, "survey.json"), _envelope(cfg, rep.table_hash, {"survey": d}))
    _write_meta(cfg, "survey", ["survey.json"])
    ab = d["singular_counts"]["abandoned_orbits"]
    print(f"violations={rep.n_violations}  completed={rep.completed}/{rep.N}  abandoned={ab}")
    if not rep.passed:
        return EXIT_CONES
    if _abandoned_exit(ab, rep.N, cfg):
        return EXIT_SINGULAR
    return EXIT_OK


def cmd_lyapunov(cfg: dict) -> int:
    from .lyapunov import lyapunov_survey
    t, _ = make_table(cfg)
    th = t.content_hash()
    est = lyapunov_survey(t, cfg["orbits"], cfg["steps"], cfg["seed"], cfg["section"],
                          time_reversed=cfg["time_reversed"], threads=cfg["threads"])
    s0 = [t.offsets[int(p)] + s for p, s in zip(est.starts[:, 0], est.starts[:, 1])]
    rows = [(cfg["seed"], s0[o], est.starts[o, 2], int(est.n_effective[o]), est.per_orbit[o])
            for o in range(est.N_orbits)]
    hio.write_atomic(_out(cfg, "lyapunov.csv"),
                     _csv_with_header(cfg, th, ("seed", "s0", "alpha0", "n_effective", "lambda_hat"), rows))
    lo, hi = est.ci(0.99)
    d = est.to_dict()
    d["ci_excludes_zero"] = bool(lo > 0 or hi < 0)
    hio.write_json(_out(cfg, "lyapunov.json"), _envelope(cfg, th, {"lyapunov": d}))
    _write_meta(cfg, "lyapunov", ["lyapunov.json", "lyapunov.csv"])
    print(f"lambda={est.mean:.6g}  stderr={est.stderr:.3g}  ci99=[{lo:.6g}, {hi:.6g}]  excluded={est.excluded}")
    if _abandoned_exit(est.excluded, est.N_orbits, cfg):
        return EXIT_SINGULAR
    if cfg["expect_positive"] and not lo > 0:
        return EXIT_LYAP
    return EXIT_OK


def cmd_scaling_study(cfg: dict) -> int:
    from . import spiral, table as T
    kfs = [float(v) for v in str(cfg["kf_list"]).split(",")] if not isinstance(cfg["kf_list"], list) \
        else [float(v) for v in cfg["kf_list"]]
    if any(b >= a for a, b in zip(kfs, kfs[1:])):
        raise SystemExit("--kf-list must be decreasing")
    kd = float(cfg["kd"])
    r0 = cfg["r0"] if cfg["r0"] is not None else spiral.R0_DEFAULT
    header = ("k_f", "h_o", "h_o_over_k_f", "area_optimal", "diameter_optimal", "area_spiral",
              "diameter_spiral", "K1", "K2", "K3", "N_bar", "M")
    rows = []
    for kf in kfs:
        h_o = T.compute_h_o(kd, kf)
        t, cert = T.build_optimal_table(kd, kf, h_o)
        ts, sp, sc = spiral.build_spiral_table(kd, kf, r0, h_o=h_o)
        ex = sc.extra
        rows.append((kf, h_o, h_o / kf, cert.area, cert.diameter, sc.area, sc.diameter, ex["K1"], ex["K2"],
                     ex["K3"], sp.N_bar, sp.M))
        print(f"k_f={kf:g}  h_o={h_o:.6g}  N_bar={sp.N_bar}  M={sp.M}  diam_spiral={sc.diameter:.4g}")
    hio.write_atomic(_out(cfg, "study.csv"), _csv_with_header(cfg, None, header, rows))
    col = {h: [r[i] for r in rows] for i, h in enumerate(header)}
    hio.write_json(_out(cfg, "study.json"), _envelope(cfg, None, {"rows": [dict(zip(header, r)) for r in rows]}))
    plots = {
        "h_o.svg": hio.svg_plot(kfs, {"h_o / k_f": col["h_o_over_k_f"]}, "h_o / k_f", "k_f", "h_o / k_f", logx=True),
        "area.svg": hio.svg_plot(kfs, {"optimal": col["area_optimal"], "spiral": col["area_spiral"]},
                                 "table area", "k_f", "area", logx=True, logy=True),
        "diameter.svg": hio.svg_plot(kfs, {"optimal": col["diameter_optimal"], "spiral": col["diameter_spiral"]},
                                     "table diameter", "k_f", "diameter", logx=True, logy=True),
        "spiral_counts.svg": hio.svg_plot(kfs, {"N_bar": col["N_bar"], "M": col["M"]}, "spiral counts", "k_f",
                                          "count", logx=True, logy=True),
        "spiral_constants.svg": hio.svg_plot(kfs, {"K1": col["K1"], "K2": col["K2"], "K3": col["K3"]},
                                             "spiral constants", "k_f", "value", logx=True),
    }
    for name, text in plots.items():
        hio.write_atomic(_out(cfg, name), text)
    _write_meta(cfg, "study", ["study.csv", "study.json", *plots])
    return EXIT_OK


def _pp(row):
    from .dynamics import PhasePoint
    return PhasePoint(int(row[0]), float(row[1]), float(row[2]))


def cmd_export_svg(cfg: dict) -> int:
    from .dynamics import initial_states, iterate
    t, _ = make_table(cfg)
    traj = None
    if cfg["trajectory_steps"] > 0:
        st = initial_states(t, cfg["seed"], 1, 1, "full", offset=cfg["orbit_index"])[0, 0]
        orb = iterate(t, _pp(st), cfg["trajectory_steps"], "full")
        traj = np.array([x.position(t) for x in orb.points])
    hio.write_atomic(_out(cfg, "table.svg"), hio.svg_table(t, traj))
    _write_meta(cfg, "export", ["table.svg"])
    return EXIT_OK


def cmd_orbit_dump(cfg: dict) -> int:
    from .dynamics import initial_states, iterate
    from .lyapunov import default_section
    t, _ = make_table(cfg)
    section = cfg["section"] or default_section(t)
    st = initial_states(t, cfg["seed"], 1, 1, section, offset=cfg["orbit_index"])[0, 0]
    orb = iterate(t, _pp(st), cfg["steps"], section)
    rows = [(0, orb.points[0].s(t), orb.points[0].alpha, "", t.label_of(orb.points[0].piece), "")]
    for i, r in enumerate(orb.records, 1):
        rows.append((i, r.end.s(t), r.end.alpha, r.tau, t.label_of(r.end.piece), r.n_flat))
    th = t.content_hash()
    hio.write_atomic(_out(cfg, "orbit.csv"), _csv_with_header(
        cfg, th, ("step", "s", "alpha", "tau", "piece_label", "n_flat_hits"), rows))
    term = None if orb.terminated is None else repr(orb.terminated)
    hio.write_json(_out(cfg, "orbit.json"), _envelope(cfg, th, {"steps": len(orb.records), "terminated": term}))
    _write_meta(cfg, "orbit", ["orbit.csv", "orbit.json"])
    print(f"{len(orb.records)} steps" + (f", stopped: {term}" if term else ""))
    return EXIT_OK


COMMANDS = {
    "build": cmd_build, "verify-cones": cmd_verify_cones, "lyapunov": cmd_lyapunov,
    "scaling-study": cmd_scaling_study, "export-svg": cmd_export_svg, "orbit-dump": cmd_orbit_dump,
}


def main(argv=None) -> int:
    cfg = resolve_config(sys.argv[1:] if argv is None else argv)
    os.makedirs(cfg["out"], exist_ok=True)
    return COMMANDS[cfg["command"]](cfg)


if __name__ == "__main__":
    sys.exit(main())
