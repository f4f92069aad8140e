"""Command line entry point: ``gpmppi run | batch | plot``.

Exit codes: 0 completed, 2 configuration error, 3 trapped, 4 collided.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .harness import ConfigError, MissionConfig, read_trajectory, run_batch, run_mission

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_TRAPPED = 3
EXIT_COLLIDED = 4

log = logging.getLogger("gpmppi")


def _load_json(path):
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def _mission_from_args(args, base: dict) -> MissionConfig:
    d = dict(base)
    if args.mode is not None:
        d["mode"] = args.mode
    if args.seed is not None:
        d["seed"] = args.seed
    if getattr(args, "world", None) is not None:
        world = dict(d.get("world", {}))
        world["kind"] = args.world
        world.pop("obstacles", None)
        d["world"] = world
    if getattr(args, "max_steps", None) is not None:
        d["max_steps"] = args.max_steps
    cfg = MissionConfig.from_dict(d)
    cfg.validate()
    return cfg


def _status_code(results) -> int:
    if any(r.collided for r in results):
        return EXIT_COLLIDED
    if any(not r.completed for r in results):
        return EXIT_TRAPPED
    return EXIT_OK


def cmd_run(args) -> int:
    base = _load_json(args.config) if args.config else {}
    cfg = _mission_from_args(args, base)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    world = cfg.build_world()
    world.save(out / "world.json")
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2))
    res = run_mission(cfg)
    res.write_csv(out / "trajectory.csv")
    (out / "result.json").write_text(json.dumps(res.summary(), indent=2))
    if args.dump_surface and res.last_recommendation is not None:
        (out / "surface.json").write_text(res.last_recommendation.to_json())
    print(f"{cfg.name}: {res.status} after {res.steps} steps, distance {res.distance:.2f} m, "
          f"v_av {res.mean_speed:.2f} m/s, A_gp {res.gp_assist:.2f}")
    return _status_code([res])


def cmd_batch(args) -> int:
    doc = _load_json(args.config) if args.config else {}
    missions = doc.get("missions") if isinstance(doc, dict) and "missions" in doc else [doc]
    trials = args.trials if args.trials is not None else int(doc.get("trials", 10)) if isinstance(doc, dict) else 10
    modes = args.modes.split(",") if args.modes else [None]
    configs = []
    for m in missions:
        for mode in modes:
            args.mode = mode if mode is not None else args.mode
            cfg = _mission_from_args(args, m)
            if mode is not None or len(missions) > 1:
                cfg.name = f"{m.get('name', cfg.world.get('kind', 'mission'))}_{cfg.mode}"
            configs.append(cfg)
    batch = run_batch(configs, trials, args.out)
    for name, s in batch.summaries.items():
        print(f"{name}: T_c {s['T_c']['mean']:.1f}  completed {s['completed']}/{s['trials']}  "
              f"d_av {s['d_av']['mean']:.2f}+-{s['d_av']['std']:.2f}  "
              f"v_av {s['v_av']['mean']:.2f}+-{s['v_av']['std']:.2f}  "
              f"A_gp {s['A_gp']['mean']:.2f}  R_lm {s['R_lm']}  collisions {s['collisions']}")
    return _status_code([r for runs in batch.results.values() for r in runs])


def cmd_plot(args) -> int:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    from matplotlib.patches import Circle, Rectangle

    from .sim.world import World

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    has_surface = args.surface is not None
    fig, axes = plt.subplots(1, 2 if has_surface else 1, figsize=(13 if has_surface else 7, 6))
    ax = axes[0] if has_surface else axes
    if args.world:
        try:
            world = World.load(args.world)
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError(f"cannot read world {args.world}: {exc}") from exc
        for o in world.obstacles:
            color = "0.2" if o.recommender_visible else "tab:red"
            if o.kind == "circle":
                ax.add_patch(Circle((o.x, o.y), o.radius, color=color))
            else:
                x0, y0, x1, y1 = o.bounds
                ax.add_patch(Rectangle((x0, y0), x1 - x0, y1 - y0, color=color))
        for p, marker in ((world.start, "o"), (world.goal, "*")):
            if p is not None:
                ax.plot(p.x, p.y, marker, color="tab:green", ms=10)
    for path in args.csv:
        try:
            tr = read_trajectory(path)
        except (OSError, KeyError, ValueError) as exc:
            raise ConfigError(f"cannot read trajectory {path}: {exc}") from exc
        ax.plot(tr["x"], tr["y"], lw=1.2, label=Path(path).stem)
        sub = tr["mode_target"] == "subgoal"
        ax.plot(tr["x"][sub], tr["y"][sub], ".", ms=2, color="tab:orange")
    ax.set_aspect("equal")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    if len(args.csv) > 1:
        ax.legend(fontsize=7)
    if has_surface:
        doc = _load_json(args.surface)
        surf = doc["surface"]
        import numpy as np
        az = np.degrees(surf["azimuths"])
        el = np.degrees(surf["elevations"])
        im = axes[1].pcolormesh(az, el, np.asarray(surf["variance"]), shading="nearest")
        fig.colorbar(im, ax=axes[1], label="predictive variance")
        for f in doc["frontiers"]:
            axes[1].plot(np.degrees(f["azimuth"]), np.degrees(f["elevation"]), "wx")
        axes[1].set_xlabel("azimuth [deg]")
        axes[1].set_ylabel("elevation [deg]")
        axes[1].set_title(f"threshold {surf['threshold']:.3g}")
    fig.tight_layout()
    fig.savefig(out, dpi=args.dpi)
    print(f"wrote {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gpmppi", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def mission_flags(p):
        p.add_argument("--config", help="mission config (JSON)")
        p.add_argument("--seed", type=int)
        p.add_argument("--mode", choices=("SM", "RM", "baseline"))
        p.add_argument("--world", choices=("maze", "forest", "corridor", "empty"))
        p.add_argument("--max-steps", type=int)
        p.add_argument("--out", default="out")

    run = sub.add_parser("run", help="run one mission")
    mission_flags(run)
    run.add_argument("--dump-surface", action="store_true",
                     help="write the last variance surface and frontier set")
    run.set_defaults(func=cmd_run)

    batch = sub.add_parser("batch", help="run seeded trial sweeps")
    mission_flags(batch)
    batch.add_argument("--trials", type=int)
    batch.add_argument("--modes", help="comma-separated modes to sweep, e.g. baseline,RM,SM")
    batch.set_defaults(func=cmd_batch)

    plot = sub.add_parser("plot", help="plot logged trajectories (and a variance surface)")
    plot.add_argument("csv", nargs="+", help="trajectory CSV files")
    plot.add_argument("--world", help="world JSON written by `run`")
    plot.add_argument("--surface", help="surface JSON written by `run --dump-surface`")
    plot.add_argument("--out", default="trajectory.png")
    plot.add_argument("--dpi", type=int, default=120)
    plot.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
