"""Experiment runner: connections -> eps sweep -> partition -> report.

Subcommands: connect | sweep | verify | report, driven by TOML configs or
named presets.  Exit statuses: 0 all checks pass, 1 a check failed,
2 config error, 3 a solve failed to converge.

Reports are deterministic: the same config and seed produce byte-identical
report.json files (wall times are kept out of the report for that reason).
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:                      # python < 3.11
    import tomli as tomllib

from . import connect1d, field2d, io, partition, verify
from .connect1d import ConvergenceFailure
from .potential import build_double_well, build_triple_well

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_NON_CONVERGED = 3

_TWO_PI = 2.0 * math.pi
_THIRD = _TWO_PI / 3.0


class ConfigError(ValueError):
    pass


PRESETS = {
    # symmetric three-phase disk: centered triod, 120 degree angles
    "triod": {
        "potential": {"kind": "triple-well", "radius": 1.0},
        "domain": {"shape": "disk", "radius": 1.0, "n": 256},
        "boundary": {"arcs": [[0.0, _THIRD, 0],
                              [_THIRD, 2 * _THIRD, 1],
                              [2 * _THIRD, _TWO_PI, 2]],
                     "width_c": 1.0},
        "solver": {"eps_list": [0.16, 0.08, 0.04], "accelerate": True,
                   "seed": 0, "init": "radial", "max_iter": 200000},
        "output": {"dir": "runs/triod"},
        "checks": [
            {"kind": "energy_close", "sigma_factor": 3.0, "rtol": 0.05},
            {"kind": "contour_sum_close", "value": 3.0, "rtol": 0.05},
            {"kind": "junction_count", "expect": 1},
            {"kind": "junction_near", "point": [0.0, 0.0], "atol_h": 3.0},
            {"kind": "angles", "degrees": 120.0, "atol_deg": 5.0},
            {"kind": "areas_equal", "value": math.pi / 3.0, "rtol": 0.05},
            {"kind": "energy_monotone_toward", "sigma_factor": 3.0},
        ],
    },
    # square with one side in the opposite phase: boundary layer, no
    # interior partition
    "figure3a": {
        "potential": {"kind": "double-well"},
        "domain": {"shape": "rectangle", "width": 1.0, "height": 1.0,
                   "n": 128},
        "boundary": {"arcs": [[0.0, 1.0, 1], [1.0, 4.0, 0]],
                     "width_c": 1.0},
        "solver": {"eps_list": [0.16, 0.08, 0.04], "accelerate": True,
                   "seed": 0, "init": "radial", "max_iter": 200000},
        "output": {"dir": "runs/figure3a"},
        "checks": [
            {"kind": "l1_to_well", "well": 0, "frac": 0.05},
            {"kind": "limiting_close", "sigma_factor": 1.0, "rtol": 0.05},
            {"kind": "junction_count", "expect": 0},
        ],
    },
    # disk with one quarter-arc in the second phase: the interface is the
    # chord, shorter than the boundary arc
    "figure3b": {
        "potential": {"kind": "double-well"},
        "domain": {"shape": "disk", "radius": 1.0, "n": 256},
        "boundary": {"arcs": [[0.0, 0.5 * math.pi, 1],
                              [0.5 * math.pi, _TWO_PI, 0]],
                     "width_c": 1.0},
        "solver": {"eps_list": [0.16, 0.08, 0.04], "accelerate": True,
                   "seed": 0, "init": "radial", "max_iter": 200000},
        "output": {"dir": "runs/figure3b"},
        "checks": [
            {"kind": "junction_count", "expect": 0},
            {"kind": "contour_sum_close", "value": math.sqrt(2.0),
             "rtol": 0.05},
            {"kind": "limiting_close", "sigma_factor": math.sqrt(2.0),
             "rtol": 0.05},
        ],
    },
    # unequal arcs: the junction moves to the Fermat point of the jumps
    "remark5": {
        "potential": {"kind": "triple-well", "radius": 1.0},
        "domain": {"shape": "disk", "radius": 1.0, "n": 256},
        "boundary": {"arcs": [[0.0, 0.5 * math.pi, 0],
                              [0.5 * math.pi, math.pi, 1],
                              [math.pi, _TWO_PI, 2]],
                     "width_c": 1.0},
        "solver": {"eps_list": [0.16, 0.08, 0.04], "accelerate": True,
                   "seed": 0, "init": "radial", "max_iter": 200000},
        "output": {"dir": "runs/remark5"},
        "checks": [
            {"kind": "junction_count", "expect": 1},
            {"kind": "junction_near", "fermat": True, "atol_h": 3.0},
            {"kind": "limiting_close", "reference": True, "rtol": 0.05},
        ],
    },
    # no boundary data; equal masses force three phases of equal area
    "mass-disk": {
        "potential": {"kind": "triple-well", "radius": 1.0},
        "domain": {"shape": "disk", "radius": 1.0, "n": 192},
        "solver": {"eps_list": [0.12, 0.06], "accelerate": True,
                   "seed": 0, "init": "radial", "max_iter": 200000},
        "mass": {"enabled": True, "target": [0.0, 0.0]},
        "output": {"dir": "runs/mass-disk"},
        "checks": [
            {"kind": "areas_equal", "value": math.pi / 3.0, "rtol": 0.05},
            {"kind": "junction_count", "expect": 1},
            {"kind": "angles", "degrees": 120.0, "atol_deg": 5.0},
            {"kind": "mass_violation_below", "tol": 1e-10},
        ],
    },
}


def _deep_merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config(args) -> dict:
    cfg = {}
    if args.preset:
        if args.preset not in PRESETS:
            raise ConfigError(
                f"unknown preset {args.preset!r}; "
                f"available: {', '.join(sorted(PRESETS))}")
        cfg = PRESETS[args.preset]
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            user = tomllib.loads(path.read_text(encoding="utf-8"))
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"config parse error: {exc}") from exc
        cfg = _deep_merge(cfg, user)
    if not cfg:
        raise ConfigError("either --preset or --config is required")
    if args.seed is not None:
        cfg.setdefault("solver", {})
        cfg = _deep_merge(cfg, {"solver": {"seed": int(args.seed)}})
    if args.out:
        cfg = _deep_merge(cfg, {"output": {"dir": str(args.out)}})
    return cfg


def build_potential(cfg: dict):
    pc = cfg.get("potential")
    if not pc or "kind" not in pc:
        raise ConfigError("potential.kind is required "
                          "(double-well | triple-well)")
    kind = pc["kind"]
    if kind == "double-well":
        p = build_double_well()
    elif kind == "triple-well":
        try:
            p = build_triple_well(float(pc.get("radius", 1.0)))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    else:
        raise ConfigError(f"unknown potential kind {kind!r}")
    if "wells" in pc:       # optional explicit list, cross-checked
        stated = np.asarray(pc["wells"], dtype=float)
        if stated.shape != p.wells.shape \
                or not np.allclose(stated, p.wells, atol=1e-9):
            raise ConfigError("potential.wells does not match the "
                              f"{kind} construction")
    return p


def build_domain(cfg: dict):
    dc = cfg.get("domain")
    if not dc or "shape" not in dc:
        raise ConfigError("domain.shape is required (disk | rectangle)")
    try:
        if dc["shape"] == "disk":
            return field2d.build_disk(radius=float(dc.get("radius", 1.0)),
                                      n=int(dc.get("n", 256)))
        if dc["shape"] == "rectangle":
            return field2d.build_rectangle(
                width=float(dc.get("width", 1.0)),
                height=float(dc.get("height", 1.0)),
                n=int(dc.get("n", 128)))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    raise ConfigError(f"unknown domain shape {dc['shape']!r}")


def _arcs_from_config(cfg: dict):
    bc = cfg.get("boundary")
    if not bc or "arcs" not in bc:
        return None, 1.0
    arcs = [((float(t0), float(t1)), int(k)) for t0, t1, k in bc["arcs"]]
    return arcs, float(bc.get("width_c", 1.0))


def _param_to_point(dom, t: float):
    if dom.shape == "disk":
        R = dom.params["radius"]
        return np.array([R * math.cos(t), R * math.sin(t)])
    W, H = dom.params["width"], dom.params["height"]
    t = t % dom.param_total
    if t <= W:
        return np.array([t, 0.0])
    if t <= W + H:
        return np.array([W, t - W])
    if t <= 2 * W + H:
        return np.array([W - (t - W - H), H])
    return np.array([0.0, H - (t - 2 * W - H)])


def _reference_geometry(dom, arcs, sigma: float):
    """Analytic sharp-limit reference for the configured boundary data.

    Three jumps: minimal cone through the Fermat point of the jump points.
    Two jumps: the cheaper of the connecting chord and the boundary layer
    along the shorter arc.  Returns (reference_energy, fermat_point).
    """
    if arcs is None:
        return None, None
    jumps = [arc[0][0] for arc in arcs]
    pts = [_param_to_point(dom, t) for t in jumps]
    if len(pts) == 3:
        center, _, ref = partition.triod_reference(pts, sigma)
        return float(ref), center
    if len(pts) == 2:
        chord = float(np.linalg.norm(pts[1] - pts[0]))
        arclens = [arc[0][1] - arc[0][0] for arc in arcs]
        R = dom.params.get("radius", 1.0) if dom.shape == "disk" else 1.0
        layer = min(arclens) * R
        return float(sigma * min(chord, layer)), None
    return None, None


def _evaluate_checks(cfg, dom, p, sigma, stages, pm, junctions, measures):
    checks = []
    h = dom.h
    final_energy = stages[-1].report.energy_trace[-1]

    for spec in cfg.get("checks", []):
        kind = spec["kind"]
        name = spec.get("name", kind)
        if kind in ("energy_close", "limiting_close", "contour_sum_close"):
            if "value" in spec:
                target = float(spec["value"])
            elif "sigma_factor" in spec:
                target = float(spec["sigma_factor"]) * sigma
            elif spec.get("reference"):
                target = measures["reference_energy"]
            else:
                raise ConfigError(f"check {name} needs a target")
            got = {"energy_close": final_energy,
                   "limiting_close": measures["limiting"]["total"],
                   "contour_sum_close": measures["contour_sum"]}[kind]
            rtol = float(spec.get("rtol", 0.05))
            measured = abs(got - target) / abs(target)
            checks.append({"name": name, "measured": measured,
                           "tolerance": rtol, "target": target,
                           "value": got, "passed": measured < rtol})
        elif kind == "junction_count":
            expect = int(spec["expect"])
            got = len(junctions)
            checks.append({"name": name, "measured": got,
                           "tolerance": 0, "target": expect,
                           "passed": got == expect})
        elif kind == "junction_near":
            if spec.get("fermat"):
                target_pt = measures["fermat_point"]
            else:
                target_pt = spec["point"]
            atol = float(spec.get("atol_h", 3.0)) * h
            if not junctions or target_pt is None:
                checks.append({"name": name, "measured": math.inf,
                               "tolerance": atol, "passed": False})
            else:
                d = min(math.hypot(j.location[0] - target_pt[0],
                                   j.location[1] - target_pt[1])
                        for j in junctions)
                checks.append({"name": name, "measured": d,
                               "tolerance": atol,
                               "target": [float(target_pt[0]),
                                          float(target_pt[1])],
                               "passed": d < atol})
        elif kind == "angles":
            want = math.radians(float(spec.get("degrees", 120.0)))
            atol = math.radians(float(spec.get("atol_deg", 5.0)))
            if not junctions or len(junctions[0].angles) != 3:
                checks.append({"name": name, "measured": math.inf,
                               "tolerance": math.degrees(atol),
                               "passed": False})
            else:
                dev = max(abs(a - want) for a in junctions[0].angles)
                checks.append({"name": name,
                               "measured": math.degrees(dev),
                               "tolerance": math.degrees(atol),
                               "passed": dev < atol})
        elif kind == "areas_equal":
            target = float(spec["value"])
            rtol = float(spec.get("rtol", 0.05))
            dev = max(abs(a - target) / target for a in measures["areas"])
            checks.append({"name": name, "measured": dev,
                           "tolerance": rtol, "target": target,
                           "passed": dev < rtol})
        elif kind == "energy_monotone_toward":
            target = float(spec.get("sigma_factor", 3.0)) * sigma
            dists = [abs(s.report.energy_trace[-1] - target)
                     for s in stages]
            worst = max((b - a) / max(target, 1e-30)
                        for a, b in zip(dists[:-1], dists[1:])) \
                if len(dists) > 1 else 0.0
            checks.append({"name": name, "measured": worst,
                           "tolerance": 1e-9, "target": target,
                           "passed": worst <= 1e-9})
        elif kind == "l1_to_well":
            well = p.wells[int(spec["well"])]
            inside = dom.mask > 0
            u = stages[-1].field.u
            l1 = float(np.linalg.norm(u - well, axis=-1)[inside].sum()) \
                * h * h
            bound = float(spec["frac"]) * dom.area
            checks.append({"name": name, "measured": l1,
                           "tolerance": bound, "passed": l1 < bound})
        elif kind == "mass_violation_below":
            tol = float(spec["tol"])
            worst = max((s.report.mass_violation_max or 0.0)
                        for s in stages)
            checks.append({"name": name, "measured": worst,
                           "tolerance": tol, "passed": worst < tol})
        else:
            raise ConfigError(f"unknown check kind {kind!r}")
    return checks


def run_connect(cfg: dict) -> int:
    p = build_potential(cfg)
    outdir = Path(cfg.get("output", {}).get("dir", "runs/connect"))
    outdir.mkdir(parents=True, exist_ok=True)
    cc = cfg.get("connection", {})
    L = float(cc.get("L", 10.0))
    n = int(cc.get("n", 2000))
    pairs = {}
    for i in range(p.n_wells):
        for j in range(i + 1, p.n_wells):
            prof = connect1d.solve_connection(p, i, j, L=L, n=n)
            defect = connect1d.equipartition_defect(prof, p)
            io.write_connection_csv(outdir / f"connection_{i}_{j}.csv",
                                    prof)
            pairs[f"{i}-{j}"] = {"i": i, "j": j, "action": prof.action,
                                 "defect": defect, "L": L, "n": n}
    actions = [v["action"] for v in pairs.values()]
    io.write_json(outdir / "sigma_table.json",
                  {"pairs": pairs, "mean": float(np.mean(actions))})
    for key, v in sorted(pairs.items()):
        print(f"sigma[{key}] = {v['action']:.7f}  "
              f"(equipartition defect {v['defect']:.2e})")
    print(f"wrote {outdir / 'sigma_table.json'}")
    return EXIT_OK


def run_sweep(cfg: dict) -> int:
    p = build_potential(cfg)
    dom = build_domain(cfg)
    arcs, width_c = _arcs_from_config(cfg)
    sc = cfg.get("solver", {})
    eps_list = [float(e) for e in sc.get("eps_list", [])]
    if not eps_list:
        raise ConfigError("solver.eps_list is required")
    mass_cfg = cfg.get("mass", {})
    mass_target = None
    if mass_cfg.get("enabled"):
        mass_target = np.asarray(mass_cfg.get("target"), dtype=float)
    if arcs is None and mass_target is None:
        raise ConfigError("either boundary.arcs or an enabled mass "
                          "constraint is required")

    cc = cfg.get("connection", {})
    table = connect1d.connection_table(p, L=float(cc.get("L", 10.0)),
                                       n=int(cc.get("n", 2000)))
    smat = np.zeros((p.n_wells, p.n_wells))
    for (i, j), prof in table.items():
        smat[i, j] = smat[j, i] = prof.action
    sigma = float(np.mean([prof.action for prof in table.values()]))

    setup = field2d.SweepSetup(
        domain=dom, arcs=arcs, conn_table=table, width_c=width_c,
        init=sc.get("init", "radial"), seed=int(sc.get("seed", 0)),
        tol=sc.get("tol"), max_iter=int(sc.get("max_iter", 200000)),
        accelerate=bool(sc.get("accelerate", True)),
        mass_target=mass_target)
    try:
        stages = field2d.epsilon_sweep(setup, eps_list, p)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    final = stages[-1].field
    pm = partition.extract(final, p)
    junctions = partition.find_junctions(pm)
    mc = cfg.get("measurement", {})
    cache = connect1d.build_phi_cache(p, sigma=smat,
                                      grid_n=int(mc.get("phi_grid_n", 481)))
    contour = {f"{i}-{j}": partition.interface_length_contour(pm, (i, j))
               for (i, j) in pm.pairs}
    limiting = partition.limiting_energy(pm, arcs, sigma) if arcs \
        else partition.LimitEnergy(
            interior=sigma * partition.total_interface_length(pm),
            boundary=0.0)
    ref_energy, fermat = _reference_geometry(dom, arcs, sigma)

    measures = {
        "areas": pm.areas.tolist(),
        "contour_lengths": contour,
        "contour_sum": float(sum(contour.values())),
        "coarea_energy": partition.coarea_energy(final, p, cache),
        "coarea_halfsum": partition.coarea_energy_halfsum(final, p, cache),
        "limiting": {"interior": limiting.interior,
                     "boundary": limiting.boundary,
                     "total": limiting.total},
        "reference_energy": ref_energy,
        "fermat_point": fermat,
        "junctions": [{"x": j.location[0], "y": j.location[1],
                       "angles": list(j.angles)} for j in junctions],
    }

    checks = _evaluate_checks(cfg, dom, p, sigma, stages, pm, junctions,
                              measures)

    outdir = Path(cfg.get("output", {}).get("dir", "runs/sweep"))
    outdir.mkdir(parents=True, exist_ok=True)
    io.write_labels_pgm(outdir / "labels.pgm", pm.labels)
    io.write_interfaces_svg(outdir / "interfaces.svg", pm, junctions)
    io.write_field_csv(outdir / "field_final.csv", final)
    io.write_json(outdir / "sigma_table.json",
                  {"pairs": {f"{i}-{j}": prof.action
                             for (i, j), prof in table.items()},
                   "mean": sigma})

    report = {
        "config": cfg,
        "seed": int(sc.get("seed", 0)),
        "sigma": sigma,
        "stages": [{
            "eps": s.eps,
            "energy": s.report.energy_trace[-1],
            "residual": s.report.final_residual,
            "iterations": s.report.iterations,
            "converged": s.report.converged,
            "stop_reason": s.report.stop_reason,
            "l1_prev": s.l1_prev,
            "mass_violation_max": s.report.mass_violation_max,
        } for s in stages],
        "partition": {k: v for k, v in measures.items()
                      if k != "fermat_point"},
        "fermat_point": (None if fermat is None
                         else [float(fermat[0]), float(fermat[1])]),
        "checks": checks,
        "figures": ["interfaces.svg", "labels.pgm"],
    }
    io.write_json(outdir / "report.json", report)

    for c in checks:
        status = "PASS" if c["passed"] else "FAIL"
        print(f"check {c['name']:<28} measured={c['measured']:<12.5g} "
              f"tol={c['tolerance']:<10.5g} {status}")
    print(f"wrote {outdir / 'report.json'}")

    if not all(s.report.converged for s in stages):
        print("warning: at least one solve did not converge", file=sys.stderr)
        return EXIT_NON_CONVERGED
    if not all(c["passed"] for c in checks):
        return EXIT_CHECK_FAILED
    return EXIT_OK


def run_verify(args) -> int:
    rows = verify.run_battery(seed=args.seed or 0,
                              corrupt_gradient=args.corrupt_gradient,
                              quick=args.quick)
    print(verify.format_rows(rows))
    return EXIT_OK if all(r["passed"] for r in rows) else EXIT_CHECK_FAILED


def run_report(args) -> int:
    outdir = Path(args.out or ".")
    rpath = outdir / "report.json"
    if not rpath.exists():
        raise ConfigError(f"no report.json under {outdir}")
    import json
    report = json.loads(rpath.read_text(encoding="utf-8"))
    cfg = report["config"]
    p = build_potential(cfg)
    dom = build_domain(cfg)
    fpath = outdir / "field_final.csv"
    if fpath.exists():
        u, h, eps = io.read_field_csv(fpath)
        f = field2d.Field(u=u, eps=eps, domain=dom)
        pm = partition.extract(f, p)
        junctions = partition.find_junctions(pm)
        io.write_interfaces_svg(outdir / "interfaces.svg", pm, junctions)
        io.write_labels_pgm(outdir / "labels.pgm", pm.labels)
    print(f"sigma = {report['sigma']:.7f}")
    for s in report["stages"]:
        l1 = "-" if s["l1_prev"] is None else f"{s['l1_prev']:.4e}"
        print(f"eps={s['eps']:<6g} J={s['energy']:<12.6f} "
              f"iters={s['iterations']:<7d} residual={s['residual']:.3e} "
              f"L1(prev)={l1} {'ok' if s['converged'] else 'NOT CONVERGED'}")
    part = report["partition"]
    print(f"areas: {['%.4f' % a for a in part['areas']]}")
    print(f"contour sum: {part['contour_sum']:.5f}")
    print(f"limiting energy: interior={part['limiting']['interior']:.5f} "
          f"boundary={part['limiting']['boundary']:.5f} "
          f"total={part['limiting']['total']:.5f}")
    for j in part["junctions"]:
        degs = ", ".join(f"{math.degrees(a):.1f}" for a in j["angles"])
        print(f"junction at ({j['x']:+.4f}, {j['y']:+.4f}) angles [{degs}]")
    for c in report["checks"]:
        status = "PASS" if c["passed"] else "FAIL"
        print(f"check {c['name']:<28} {status}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="phaselab",
        description="Vector phase-field minimization and partition "
                    "measurement on 2D domains")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (("connect", "solve 1D well-to-well connections"),
                        ("sweep", "run an eps sweep and measure the "
                                  "limiting partition"),
                        ("verify", "run the invariant check battery"),
                        ("report", "re-render figures and summarize an "
                                   "existing run")):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="TOML config file")
        sp.add_argument("--preset", help="named preset: "
                        + ", ".join(sorted(PRESETS)))
        sp.add_argument("--out", help="output directory override")
        sp.add_argument("--seed", type=int, default=None)
        if name == "verify":
            sp.add_argument("--quick", action="store_true",
                            help="skip the slow 2D solve checks")
            sp.add_argument("--corrupt-gradient", action="store_true",
                            help="testing hook: inject a gradient error "
                                 "(the battery must fail)")
    args = parser.parse_args(argv)

    try:
        if args.command == "verify":
            return run_verify(args)
        if args.command == "report":
            return run_report(args)
        cfg = load_config(args)
        if args.command == "connect":
            return run_connect(cfg)
        return run_sweep(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConvergenceFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_NON_CONVERGED


if __name__ == "__main__":
    sys.exit(main())
