"""Command-line entry points: train, simulate, compare, certify.

Every command writes a run manifest (resolved arguments, input hashes,
output paths, seed, tool version) next to its primary output, and every
output file carries the manifest path, so any result can be regenerated
from the manifest alone. ``--format json`` switches stdout to a single
machine-readable document.

Exit codes: 0 success, 1 strict-check failure, 2 usage or validation error.
``SWARMPATH_THREADS`` caps worker parallelism (1 is the fully deterministic
reference mode; the current kernels are single-threaded either way).
``SWARMPATH_NO_NUMBA=1`` selects the pure-numpy kernel fallbacks.
"""

import argparse
import hashlib
import json
import math
import os
import sys
from dataclasses import replace

import numpy as np

from . import __version__
from . import controller, convergence, simulator, surrogate
from .scenario import ScenarioError, load_scenario

EXIT_OK = 0
EXIT_STRICT = 1
EXIT_USAGE = 2


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _manifest_path(primary_out):
    return str(primary_out) + ".manifest.json"


def _write_manifest(command, args_dict, inputs, outputs, seed, primary_out):
    doc = {
        "command": command,
        "tool_version": __version__,
        "seed": seed,
        "config": args_dict,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": [str(p) for p in outputs],
    }
    path = _manifest_path(primary_out)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    return path


def _emit(doc, fmt, human_lines):
    if fmt == "json":
        print(json.dumps(doc, indent=2))
    else:
        for line in human_lines:
            print(line)


def _threads():
    raw = os.environ.get("SWARMPATH_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def cmd_train(args, parser):
    if args.samples <= 0:
        parser.error("--samples must be positive")
    if args.hidden <= 0:
        parser.error("--hidden must be positive")
    try:
        state = load_scenario(args.scenario)
    except ScenarioError as exc:
        parser.error(str(exc))

    dataset = surrogate.generate_dataset(state.params, args.samples, args.seed)
    net, report = surrogate.train(dataset, hidden=args.hidden,
                                  max_epochs=args.epochs, seed=args.seed,
                                  lr=args.lr, batch_size=args.batch,
                                  patience=args.patience)
    manifest = _manifest_path(args.out)
    surrogate.save_weights(net, args.out, manifest_path=manifest)
    _write_manifest("train", vars(args) | {"threads": _threads()},
                    [args.scenario], [args.out], args.seed, args.out)

    doc = {
        "weights": str(args.out),
        "manifest": manifest,
        "dataset_size": report.dataset_size,
        "dataset_hash": dataset.content_hash,
        "epochs_used": report.epochs_used,
        "train_mse": report.train_mse,
        "validation_mse": report.validation_mse,
        "test_mse": report.test_mse,
        "test_label_variance": report.label_variance,
        "label_scale": report.label_scale,
        "gradient_bound": surrogate.weight_bound(net),
    }
    _emit(doc, args.format, [
        f"trained {args.hidden}-unit surrogate on {report.dataset_size} samples",
        f"epochs used      : {report.epochs_used}",
        f"train MSE        : {report.train_mse:.3e}",
        f"validation MSE   : {report.validation_mse:.3e}",
        f"test MSE         : {report.test_mse:.3e}  (normalized labels)",
        f"test label var   : {report.label_variance:.3e}  (constant-predictor MSE)",
        f"weights written  : {args.out}",
    ])
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def _load_pair(args, parser):
    try:
        state = load_scenario(args.scenario)
    except ScenarioError as exc:
        parser.error(str(exc))
    try:
        net = surrogate.load_weights(args.weights)
    except Exception as exc:
        parser.error(f"cannot load weights {args.weights}: {exc}")
    if net.input_dim != state.params.input_dim:
        parser.error(
            f"weights expect input_dim={net.input_dim} "
            f"(N={net.n_agents}, M={net.n_threats}) but scenario has "
            f"2N+2M={state.params.input_dim}")
    return state, net


def cmd_simulate(args, parser):
    state, net = _load_pair(args, parser)
    config = controller.ControllerConfig(
        mode=args.mode, case=args.case, resync_period=args.resync,
        capture_radius=args.capture_radius)
    try:
        config.resolved(state.params)
    except ValueError as exc:
        parser.error(str(exc))

    trace = simulator.run(state, net, config, seed=args.seed,
                          max_ticks=args.ticks_max)
    cert = convergence.certify(net, state)
    manifest = _write_manifest(
        "simulate", vars(args) | {"threads": _threads()},
        [args.scenario, args.weights],
        [p for p in (args.trace, args.summary) if p], args.seed,
        args.trace or args.summary or "simulate")
    if args.trace:
        simulator.write_trace(trace, args.trace, manifest=manifest)
    if args.summary:
        simulator.write_summary(trace, args.summary, certificate=cert,
                                manifest=manifest)

    doc = simulator.summarize(trace, cert)
    doc["manifest"] = manifest
    del doc["timing"]["per_tick_ns"]
    arrivals = ", ".join(f"{a}@{t}" for a, t in sorted(trace.arrival_ticks.items()))
    _emit(doc, args.format, [
        f"run {'completed' if trace.completed else 'INCOMPLETE'} in {trace.ticks} ticks",
        f"captures         : {len(trace.arrival_ticks)} ({arrivals})",
        f"radar incursions : {doc['incursions']['radar_ticks']} agent-ticks",
        f"clamped steps    : {doc['clamped_steps']}",
        f"compute mean/max : {doc['timing']['mean_ms']:.3f} / "
        f"{doc['timing']['max_ms']:.3f} ms per tick",
    ])
    return EXIT_OK


# ---------------------------------------------------------------------------
# compare
# ---------------------------------------------------------------------------

def cmd_compare(args, parser):
    state, net = _load_pair(args, parser)
    p = state.params
    if p.target_max_speed > 0 or p.threat_speed > 0:
        print("warning: dynamic scenario supplied; entities frozen for comparison",
              file=sys.stderr)

    seeds = list(range(args.seed, args.seed + args.seeds))
    rows = simulator.compare_modes(state, net, seeds, interpose=not args.as_is)

    out_rows = []
    for row in rows:
        out_rows.append({
            "seed": row.seed,
            "surrogate": vars(row.surrogate) | {
                "per_agent_radar": list(row.surrogate.per_agent_radar)},
            "baseline": vars(row.baseline) | {
                "per_agent_radar": list(row.baseline.per_agent_radar)},
            "trajectory_divergence": row.trajectory_divergence,
        })
    manifest = _write_manifest("compare", vars(args) | {"threads": _threads()},
                               [args.scenario, args.weights],
                               [args.out], args.seed, args.out)
    doc = {"manifest": manifest, "rows": out_rows}
    with open(args.out, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")

    if args.polylines:
        _write_polylines(state, net, seeds, args, manifest)

    lines = ["seed  sur.radar  base.radar  sur.done  base.done  divergence"]
    for r in rows:
        lines.append(f"{r.seed:<5d} {r.surrogate.radar_ticks:>9d} "
                     f"{r.baseline.radar_ticks:>11d} "
                     f"{str(r.surrogate.completed):>9} {str(r.baseline.completed):>10} "
                     f"{r.trajectory_divergence:>11.3f}")
    _emit(doc, args.format, lines + [f"table written: {args.out}"])
    return EXIT_OK


def _write_polylines(state, net, seeds, args, manifest):
    """Re-run the first compare scenario and dump per-agent paths for plotting."""
    from .scenario import interposed_scenario

    frozen = replace(state.params, target_max_speed=0.0, threat_max_speed=0.0)
    scen = interposed_scenario(frozen, seeds[0]) if not args.as_is \
        else replace(state, params=frozen)
    doc = {"manifest": manifest, "seed": seeds[0], "modes": {}}
    for mode in (controller.MODE_SURROGATE, controller.MODE_BASELINE):
        cfg = controller.ControllerConfig(mode=mode, case=1)
        trace = simulator.run(scen, net, cfg, seed=seeds[0], max_ticks=20_000)
        doc["modes"][mode] = {
            "agents": [
                list(map(list, zip(trace.agent_x[:, i], trace.agent_y[:, i])))
                for i in range(trace.n_agents)],
            "targets": [[trace.target_x[0, j], trace.target_y[0, j]]
                        for j in range(trace.n_targets)],
            "threats": [[trace.threat_x[0, j], trace.threat_y[0, j]]
                        for j in range(trace.n_threats)],
        }
    with open(args.polylines, "w") as fh:
        json.dump(doc, fh)
        fh.write("\n")


# ---------------------------------------------------------------------------
# certify
# ---------------------------------------------------------------------------

def cmd_certify(args, parser):
    state, net = _load_pair(args, parser)
    cert = convergence.certify(net, state)
    doc = {"certificate": cert.to_dict()}
    lines = [
        f"gradient bound b : {cert.b:.6g} (limit {cert.b_limit:.6g})",
        f"target delta     : {cert.delta:.6g} km/tick (v = {cert.v_step:.6g})",
        f"epsilon          : {cert.epsilon:.6g}",
        f"conditions met   : {cert.all_met}",
    ]
    if cert.all_met:
        for aid, dist, bound in zip(cert.agent_ids, cert.initial_distances,
                                    cert.step_bounds):
            lines.append(f"  agent {aid}: D(0) = {dist:8.3f} km, "
                         f"arrival within {bound} ticks")

    if args.verify:
        if not cert.all_met:
            lines.append("verify skipped: certificate conditions not met")
            doc["verify"] = None
        else:
            config = controller.ControllerConfig(mode=args.mode, case=1)
            trace = simulator.run(state, net, config, seed=args.seed)
            report = convergence.monitor_descent(trace, cert)
            doc["verify"] = report.to_dict()
            lines.append(
                f"verify: {report.monitored_steps} monitored steps, "
                f"{len(report.violations)} violations, "
                f"{report.skipped_clamped} clamped steps excluded")

    _emit(doc, args.format, lines)
    if args.strict and not cert.all_met:
        return EXIT_STRICT
    if args.strict and args.verify and doc.get("verify") and not doc["verify"]["ok"]:
        return EXIT_STRICT
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(
        prog="swarmpath",
        description="Broadcast-commanded swarm path control: assignment, "
                    "surrogate training, simulation, and arrival certificates.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--format", choices=("table", "json"), default="table")

    t = sub.add_parser("train", help="train the penalty surrogate")
    t.add_argument("--scenario", required=True)
    t.add_argument("--samples", type=int, default=100_000)
    t.add_argument("--hidden", type=int, default=75)
    t.add_argument("--epochs", type=int, default=1000)
    t.add_argument("--out", required=True)
    t.add_argument("--lr", type=float, default=1e-2)
    t.add_argument("--batch", type=int, default=256)
    t.add_argument("--patience", type=int, default=20)
    common(t)

    s = sub.add_parser("simulate", help="run the receding-horizon loop")
    s.add_argument("--scenario", required=True)
    s.add_argument("--weights", required=True)
    s.add_argument("--case", type=int, choices=(1, 2), default=1)
    s.add_argument("--mode", choices=(controller.MODE_SURROGATE,
                                      controller.MODE_BASELINE),
                   default=controller.MODE_SURROGATE)
    s.add_argument("--ticks-max", type=int, default=None)
    s.add_argument("--resync", type=int, default=0,
                   help="Case II state resync period in ticks (0 = never)")
    s.add_argument("--capture-radius", type=float, default=None)
    s.add_argument("--trace", default=None)
    s.add_argument("--summary", default=None)
    common(s)

    c = sub.add_parser("compare", help="surrogate vs raw-gradient baseline")
    c.add_argument("--scenario", required=True)
    c.add_argument("--weights", required=True)
    c.add_argument("--seeds", type=int, default=1)
    c.add_argument("--out", required=True)
    c.add_argument("--polylines", default=None,
                   help="also dump per-agent path polylines to this file")
    c.add_argument("--as-is", action="store_true",
                   help="compare on the scenario as given instead of "
                        "interposed-threat variants")
    common(c)

    v = sub.add_parser("certify", help="arrival-time certificate")
    v.add_argument("--scenario", required=True)
    v.add_argument("--weights", required=True)
    v.add_argument("--verify", action="store_true",
                   help="simulate and monitor the certified decrease")
    v.add_argument("--strict", action="store_true",
                   help="exit 1 when conditions fail or verification finds "
                        "violations")
    v.add_argument("--mode", choices=(controller.MODE_SURROGATE,
                                      controller.MODE_BASELINE),
                   default=controller.MODE_SURROGATE)
    common(v)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = {"train": cmd_train, "simulate": cmd_simulate,
               "compare": cmd_compare, "certify": cmd_certify}[args.command]
    try:
        return handler(args, parser)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
