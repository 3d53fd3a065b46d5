"""Command-line front end.

Commands: fit, simulate, sim-study, ac-surface, mesh-info. Exit codes are
stable: 0 success, 2 data or validation error, 3 numerical failure with no
usable output. Errors are emitted as one-line JSON on stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__, dataio
from .errors import ConfigurationError, DataError, DomainError, MscrError, NumericalError
from .geometry import SurveyWindow, build_mesh, default_trap_grid
from .hazard import MSCR, SCR
from .inference import ac_surface, fit
from .likelihood import Dataset
from .simulation import (
    SimMscrConfig,
    SimOuConfig,
    StudyConfig,
    run_sim_study,
    simulate_mscr,
    simulate_ou,
)

EXIT_OK = 0
EXIT_DATA = 2
EXIT_NUMERICAL = 3


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except (DataError, ConfigurationError, DomainError) as exc:
        _emit_error(exc)
        return EXIT_DATA
    except NumericalError as exc:
        _emit_error(exc)
        return EXIT_NUMERICAL
    except MscrError as exc:
        _emit_error(exc)
        return EXIT_DATA


def _emit_error(exc: Exception) -> None:
    doc = {"error": {"type": type(exc).__name__, "message": str(exc)}}
    print(json.dumps(doc), file=sys.stderr)


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mscr", description=__doc__)
    p.add_argument("--version", action="version", version=f"mscr {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="fit MSCR and/or SCR to trap/capture CSVs")
    f.add_argument("--traps", required=True)
    f.add_argument("--captures", required=True)
    f.add_argument("--T", type=float, required=True, help="survey length, days")
    f.add_argument("--kind", choices=[MSCR, SCR, "both"], default="both")
    f.add_argument("--buffer", type=float, default=2.0, help="km around the trap box")
    f.add_argument("--spacing", type=float, required=True, help="mesh pitch, km")
    f.add_argument("--B", type=int, default=100, help="time quadrature budget")
    f.add_argument("--out", default=".", help="output directory")
    f.add_argument("--workers", type=int, default=os.cpu_count())
    f.add_argument("--h0-init", type=float)
    f.add_argument("--sigma2-init", type=float)
    f.add_argument("--beta-init", type=float)
    f.add_argument("--epoch", help="ISO date: time column holds timestamps")
    f.add_argument("--adapter", help="column mapping canonical=actual,...")
    f.set_defaults(handler=_cmd_fit)

    s = sub.add_parser("simulate", help="generate a synthetic dataset")
    s.add_argument("--model", choices=["mscr", "ou"], required=True)
    s.add_argument("--N", type=int, required=True, help="true population size")
    s.add_argument("--h0", type=float, help="hazard model only")
    s.add_argument("--sigma2", type=float, required=True)
    s.add_argument("--beta", type=float)
    s.add_argument("--kind", choices=[MSCR, SCR], default=MSCR,
                   help="hazard simulator: memory or memoryless")
    s.add_argument("--T", type=float, default=12.0)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--step-min", type=float, help="fine interval / movement cadence, minutes")
    s.add_argument("--radius-m", type=float, default=50.0, help="ou detection radius, metres")
    s.add_argument("--traps", help="traps CSV; defaults to the 30-trap grid")
    s.add_argument("--buffer", type=float, default=2.0)
    s.add_argument("--trajectories", action="store_true", help="also write ou paths")
    s.add_argument("--out", default=".")
    s.set_defaults(handler=_cmd_simulate)

    st = sub.add_parser("sim-study", help="replicated simulate-and-fit study")
    st.add_argument("--model", choices=["mscr", "ou"], required=True)
    st.add_argument("--N", type=int, required=True)
    st.add_argument("--h0", type=float)
    st.add_argument("--sigma2", type=float, required=True)
    st.add_argument("--beta", type=float)
    st.add_argument("--kind", choices=[MSCR, SCR], default=MSCR)
    st.add_argument("--T", type=float, default=12.0)
    st.add_argument("--seed", type=int, required=True)
    st.add_argument("--step-min", type=float)
    st.add_argument("--radius-m", type=float, default=50.0)
    st.add_argument("--traps")
    st.add_argument("--buffer", type=float, default=2.0)
    st.add_argument("--replicates", type=int, required=True)
    st.add_argument("--kinds", default="MSCR,SCR", help="comma-separated fit kinds")
    st.add_argument("--spacing", type=float, default=0.3)
    st.add_argument("--B", type=int, default=100)
    st.add_argument("--workers", type=int, default=os.cpu_count())
    st.add_argument("--out", default=".")
    st.set_defaults(handler=_cmd_sim_study)

    a = sub.add_parser("ac-surface", help="activity-center density surfaces")
    a.add_argument("--fit", required=True, help="fit_<kind>.json from `mscr fit`")
    a.add_argument("--traps", required=True)
    a.add_argument("--captures", required=True)
    a.add_argument("--individual", required=True, help="individual id or 'all'")
    a.add_argument("--epoch")
    a.add_argument("--adapter")
    a.add_argument("--out", default=".")
    a.set_defaults(handler=_cmd_ac_surface)

    m = sub.add_parser("mesh-info", help="report mesh size and area for a spacing")
    m.add_argument("--traps", required=True)
    m.add_argument("--buffer", type=float, default=2.0)
    m.add_argument("--spacing", type=float, required=True)
    m.set_defaults(handler=_cmd_mesh_info)
    return p


# ---------------------------------------------------------------------------

def _cmd_fit(args) -> int:
    out = _outdir(args.out)
    traps = dataio.read_traps(args.traps)
    window = SurveyWindow(t_end=args.T)
    histories = dataio.read_captures(args.captures, traps, window,
                                     adapter=args.adapter, epoch=args.epoch)
    if not histories:
        raise DataError(f"{args.captures}: no capture rows")
    dataset = Dataset(histories=histories, traps=traps, window=window)
    mesh = build_mesh(traps, args.buffer, args.spacing)
    kinds = [MSCR, SCR] if args.kind == "both" else [args.kind]
    if args.kind == SCR and args.beta_init is not None:
        print("warning: --beta-init is ignored for the SCR model", file=sys.stderr)
    init = None
    if args.h0_init or args.sigma2_init or args.beta_init:
        from .inference import default_init
        base = default_init(dataset, MSCR)
        init = base.with_values(h0=args.h0_init, sigma2=args.sigma2_init,
                                beta=args.beta_init)
    config = {
        "command": "fit",
        "T": args.T,
        "kind": args.kind,
        "buffer": args.buffer,
        "spacing": args.spacing,
        "B": args.B,
        "seed": None,  # fitting is deterministic
        "epoch": args.epoch,
        "adapter": args.adapter,
        "mesh_points": mesh.size,
        "mesh_area": mesh.total_area,
    }
    inputs = {
        "traps_csv": {"path": str(args.traps), "sha256": dataio.sha256_file(args.traps)},
        "captures_csv": {"path": str(args.captures), "sha256": dataio.sha256_file(args.captures)},
    }
    results = {}
    for kind in kinds:
        kind_init = None
        if init is not None:
            kind_init = init if kind == MSCR else init.with_values()
        result = fit(dataset, kind, mesh, args.B, init=kind_init, workers=args.workers)
        results[kind] = result
        doc = dataio.fit_result_document(result, config, inputs)
        dataio.write_json(out / f"fit_{kind}.json", doc)
    if len(kinds) == 2:
        comparison = {
            "tool": dataio.tool_stamp(),
            "config": config,
            "inputs": inputs,
            "aic": {kind: results[kind].aic for kind in kinds},
            "delta_aic_scr_minus_mscr": results[SCR].aic - results[MSCR].aic,
            "preferred": min(kinds, key=lambda k: results[k].aic),
        }
        dataio.write_json(out / "comparison.json", comparison)
    # non-convergence still yields usable output (flagged in the JSON);
    # exit 3 is reserved for numerical failures with nothing written
    return EXIT_OK


def _sim_config(args):
    traps = dataio.read_traps(args.traps) if args.traps else default_trap_grid()
    if args.model == "mscr":
        if args.h0 is None:
            raise ConfigurationError("--h0 is required for the hazard simulator")
        if args.kind == MSCR and args.beta is None:
            raise ConfigurationError("--beta is required for the memory hazard simulator")
        step = (args.step_min if args.step_min else 1.0) / 1440.0
        return SimMscrConfig(n_individuals=args.N, h0=args.h0, sigma2=args.sigma2,
                             beta=args.beta, T=args.T, seed=args.seed, traps=traps,
                             buffer=args.buffer, step=step, kind=args.kind)
    if args.beta is None:
        raise ConfigurationError("--beta is required for the movement simulator")
    step = (args.step_min if args.step_min else 10.0) / 1440.0
    return SimOuConfig(n_individuals=args.N, sigma2=args.sigma2, beta=args.beta,
                       T=args.T, seed=args.seed, traps=traps, buffer=args.buffer,
                       step=step, detect_radius=args.radius_m / 1000.0)


def _sim_config_dict(cfg) -> dict:
    d = {k: v for k, v in cfg.__dict__.items() if k != "traps"}
    d["traps"] = {"ids": list(cfg.traps.ids),
                  "xy": [list(map(float, p)) for p in cfg.traps.xy]}
    return d


def _cmd_simulate(args) -> int:
    out = _outdir(args.out)
    cfg = _sim_config(args)
    sim = simulate_mscr(cfg) if args.model == "mscr" else simulate_ou(cfg)
    dataio.write_traps(out / "traps.csv", cfg.traps)
    dataio.write_captures(out / "captures.csv", sim.dataset)
    dataio.write_truth(out / "truth.csv", sim)
    if args.trajectories:
        dataio.write_trajectories(out / "trajectories.csv", sim, cfg.step)
    dataio.write_json(out / "config.json", {
        "tool": dataio.tool_stamp(),
        "command": "simulate",
        "model": args.model,
        "config": _sim_config_dict(cfg),
        "inputs": {},
        "summary": {
            "n_true": sim.n_true,
            "n_observed": sim.n_observed,
            "n_detections": sim.dataset.n_detections,
        },
    })
    return EXIT_OK


def _cmd_sim_study(args) -> int:
    out = _outdir(args.out)
    cfg = _sim_config(args)
    kinds = tuple(k.strip() for k in args.kinds.split(",") if k.strip())
    study = StudyConfig(
        simulator=args.model,
        sim_mscr=cfg if args.model == "mscr" else None,
        sim_ou=cfg if args.model == "ou" else None,
        kinds=kinds,
        spacing=args.spacing,
        B=args.B,
    )
    report = run_sim_study(study, replicates=args.replicates,
                           workers=args.workers, progress=True)
    doc = {"tool": dataio.tool_stamp(), "command": "sim-study", "inputs": {}}
    doc.update(report.to_dict())
    dataio.write_json(out / "study.json", doc)
    (out / "study.txt").write_text(report.text_table(), encoding="utf-8")
    return EXIT_OK


def _cmd_ac_surface(args) -> int:
    out = _outdir(args.out)
    fit_doc = json.loads(Path(args.fit).read_text(encoding="utf-8"))
    config = fit_doc["config"]
    result = fit_doc["result"]
    params = _params_from_doc(result["params_hat"])
    traps = dataio.read_traps(args.traps)
    window = SurveyWindow(t_end=config["T"])
    histories = dataio.read_captures(args.captures, traps, window,
                                     adapter=args.adapter, epoch=args.epoch)
    dataset = Dataset(histories=histories, traps=traps, window=window)
    mesh = build_mesh(traps, config["buffer"], config["spacing"])
    by_id = {h.individual_id: h for h in dataset.histories}
    if args.individual == "all":
        wanted = list(by_id)
    elif args.individual in by_id:
        wanted = [args.individual]
    else:
        raise DataError(
            f"unknown individual {args.individual!r}; available: {sorted(by_id)}")
    for ident in wanted:
        surface = ac_surface(by_id[ident], params, mesh, traps, window, config["B"])
        extra = {
            "config": config,
            "kind": result["kind"],
            "inputs": {
                "fit_json": {"path": str(args.fit), "sha256": dataio.sha256_file(args.fit)},
                "captures_csv": {"path": str(args.captures),
                                 "sha256": dataio.sha256_file(args.captures)},
            },
        }
        dataio.write_surface(out / f"surface_{ident}.csv",
                             out / f"surface_{ident}.mode.json", surface, extra)
    return EXIT_OK


def _params_from_doc(doc: dict):
    from .hazard import ModelParams
    return ModelParams(h0=doc["h0"], sigma2=doc["sigma2"], beta=doc["beta"],
                       kind=doc["kind"])


def _cmd_mesh_info(args) -> int:
    traps = dataio.read_traps(args.traps)
    mesh = build_mesh(traps, args.buffer, args.spacing)
    print(json.dumps({
        "tool": dataio.tool_stamp(),
        "traps": traps.size,
        "buffer_km": args.buffer,
        "spacing_km": args.spacing,
        "mesh_points": mesh.size,
        "mesh_shape": list(mesh.shape) if mesh.shape else None,
        "cell_area_km2": mesh.cell_area,
        "total_area_km2": mesh.total_area,
        "bounding_region": list(mesh.bounding_region()),
    }))
    return EXIT_OK


def _outdir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


if __name__ == "__main__":
    sys.exit(main())
