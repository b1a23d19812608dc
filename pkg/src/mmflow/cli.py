"""``mmflow`` command line: train, sample, optimize-path, oracle-check.

Configs, checkpoints and reports are JSON; tables are CSV. Exit codes:
0 success, 1 usage or config error, 2 numerical failure, 3 a check failed.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .couplings import IndependentCoupling, MongeCoupling, coupling_from_dict, joint_to_csv, substream
from .fields import TrainConfig, TrainingDivergedError, load_checkpoint, save_checkpoint, trace_to_csv, train
from .oracle import GaussianProblem, MongeProblem, check_gaussian, check_monge
from .pathopt import PathOptConfig, alpha_table, cost_trace_to_csv, optimize_path, transport_cost
from .simplex import SimplexPath
from .transport import IntegrationError, IntegratorConfig, route_path, trajectory_to_csv, transport

log = logging.getLogger("mmflow")

EXIT_USAGE, EXIT_NUMERIC, EXIT_GATE = 1, 2, 3


class ConfigError(Exception):
    pass


def read_json(path):
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: parse error at line {e.lineno}, column {e.colno}: {e.msg}") from None


def write_text(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _seed(args, cfg):
    seed = args.seed if args.seed is not None else cfg.get("seed")
    if seed is None:
        raise ConfigError("a seed is required (config 'seed' or --seed)")
    return int(seed)


def _out(args, cfg):
    out = args.out or cfg.get("out")
    if out is None:
        raise ConfigError("an output directory is required (config 'out' or --out)")
    return Path(out)


def _coupling(d):
    try:
        return coupling_from_dict(d)
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"invalid coupling spec: {e}") from None


def _integrator(d):
    return IntegratorConfig(**(d or {}))


def cmd_train(args):
    cfg = read_json(args.config)
    if "coupling" not in cfg:
        raise ConfigError("config needs a 'coupling' section")
    coupling = _coupling(cfg["coupling"])
    seed = _seed(args, cfg)
    try:
        tcfg = TrainConfig(**{**cfg.get("train", {}), "seed": seed})
    except TypeError as e:
        raise ConfigError(f"invalid train section: {e}") from None
    out = _out(args, cfg)
    model, trace = train(coupling, tcfg)
    extra = {"coupling": coupling.to_dict(), "train": tcfg.to_dict()}
    write_text(out / "checkpoint.json", save_checkpoint(model, extra=extra))
    write_text(out / "loss_trace.csv", trace_to_csv(trace))
    final = float(np.mean(trace[-min(len(trace), 100):])) if len(trace) else float("nan")
    print(f"final loss {final:.6f}")
    return 0


def cmd_sample(args):
    cfg = read_json(args.config) if args.config else {}
    model, meta = load_checkpoint(args.checkpoint)
    coupling = _coupling(meta["coupling"])
    seed = _seed(args, {"seed": cfg.get("seed", meta.get("seed"))})
    out = _out(args, cfg)
    route = args.route or cfg.get("route")
    if route is None:
        raise ConfigError("a route is required")
    if str(route).startswith("path:"):
        route = SimplexPath.from_dict(read_json(route[5:]))
    try:
        path = route_path(route, model.K)
    except (ValueError, IndexError) as e:
        raise ConfigError(str(e)) from None
    n = args.n if args.n is not None else int(cfg.get("n", 1000))
    integ = _integrator(cfg.get("integrator"))
    x = coupling.marginal(path.i).sample(n, substream(seed, 1)) if n else np.zeros((0, model.d))
    times = None
    if args.timeslices:
        times = [float(t) for t in args.timeslices.split(",")]
    if n:
        res = transport(model, path, x, integ, times=times)
    else:
        res = (x, np.zeros((len(times), 0, model.d))) if times else x
    endpoints, snaps = (res if times else (res, None))
    write_text(out / "samples.csv", joint_to_csv(endpoints))
    if times:
        for t, s in zip(times, snaps):
            write_text(out / f"timeslice_{t:g}.csv", trajectory_to_csv([t], s[None]))
    print(f"wrote {n} samples")
    return 0


def _fields_and_coupling(args, cfg):
    if args.checkpoint:
        model, meta = load_checkpoint(args.checkpoint)
        coupling = _coupling(cfg["coupling"]) if "coupling" in cfg else _coupling(meta["coupling"])
        return model, coupling
    if "coupling" not in cfg:
        raise ConfigError("need --checkpoint or a coupling in the config")
    coupling = _coupling(cfg["coupling"])
    if isinstance(coupling, MongeCoupling):
        return MongeProblem.from_coupling(coupling), coupling
    if isinstance(coupling, IndependentCoupling) and all(hasattr(m, "cov") for m in coupling.marginals):
        return GaussianProblem.from_marginals(coupling.marginals), coupling
    raise ConfigError("closed-form fields exist only for Gaussian or Monge couplings; pass --checkpoint")


def _initial_path(spec, K, seed):
    if spec is None:
        spec = {}
    if spec.get("kind", "fourier") != "fourier" or "coeffs" in spec:
        path = SimplexPath.from_dict({"K": K, **spec})
    else:
        N = int(spec.get("N", 20))
        scale = float(spec.get("init_scale", 0.01))
        coeffs = scale * substream(seed, 2).standard_normal((K + 1, N))
        path = SimplexPath.fourier(spec.get("i", 0), spec.get("j", K), K, N, coeffs, spec.get("squared", True))
    if path.kind != "fourier":
        raise ConfigError("path optimisation needs a fourier path")
    return path


def cmd_optimize_path(args):
    cfg = read_json(args.config)
    seed = _seed(args, cfg)
    out = _out(args, cfg)
    fields, coupling = _fields_and_coupling(args, cfg)
    try:
        pcfg = PathOptConfig(**{**cfg.get("pathopt", {}), "seed": seed})
    except TypeError as e:
        raise ConfigError(f"invalid pathopt section: {e}") from None
    initial = _initial_path(cfg.get("path"), coupling.K, seed)
    best, trace = optimize_path(fields, initial, coupling, pcfg)
    straight = SimplexPath.linear_edge(initial.i, initial.j, coupling.K)
    linear = transport_cost(fields, straight, coupling, pcfg)
    # re-score on fresh samples and a finer time grid, so quadrature aliasing cannot flatter the result
    check = PathOptConfig(**{**pcfg.to_dict(), "time_nodes": max(4 * pcfg.time_nodes, 8 * initial.coeffs.shape[1])})
    held_best = transport_cost(fields, best, coupling, check, seed=seed + 1)
    held_linear = transport_cost(fields, straight, coupling, check, seed=seed + 1)
    write_text(out / "path.json", json.dumps(best.to_dict()))
    write_text(out / "cost_trace.csv", cost_trace_to_csv(trace))
    write_text(out / "alpha_table.csv", alpha_table(best))
    write_text(out / "alpha_table_initial.csv", alpha_table(initial))
    summary = {"initial_cost": float(trace[0, 0]), "final_cost": float(trace[-1, 0]),
               "best_cost": float(trace[:, 0].min()), "linear_cost": linear.value,
               "linear_stderr": linear.stderr,
               "validation": {"time_nodes": check.time_nodes, "best_cost": held_best.value,
                              "best_stderr": held_best.stderr, "linear_cost": held_linear.value,
                              "linear_stderr": held_linear.stderr}}
    write_text(out / "summary.json", json.dumps(summary, indent=1, sort_keys=True))
    print(f"cost {summary['initial_cost']:.6f} -> {summary['best_cost']:.6f} (linear {linear.value:.6f}); "
          f"held-out {held_best.value:.6f} vs linear {held_linear.value:.6f}")
    return 0


def _problem(cfg):
    kind = cfg.get("type")
    try:
        if kind == "gaussian":
            return GaussianProblem(tuple(cfg["means"]), tuple(cfg["covs"]))
        if kind == "monge":
            return MongeProblem.from_coupling(_coupling(cfg))
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"invalid problem: {e}") from None
    raise ConfigError("problem type must be 'gaussian' or 'monge'")


def cmd_oracle_check(args):
    cfg = read_json(args.config)
    problem = _problem(cfg.get("problem", cfg))
    seed = _seed(args, {"seed": cfg.get("seed", 0)})
    out = _out(args, cfg)
    n = int(cfg.get("kernel_samples", 100_000))
    checks = check_gaussian(problem, seed, n) if isinstance(problem, GaussianProblem) else check_monge(problem, seed, n)
    report = {"problem": cfg.get("problem", cfg), "checks": checks, "passed": all(c["passed"] for c in checks.values())}
    write_text(out / "report.json", json.dumps(report, indent=1, sort_keys=True))
    for name, c in checks.items():
        print(f"{'PASS' if c['passed'] else 'FAIL'} {name}: {c['value']:.3e} (threshold {c['threshold']:g})")
    return 0 if report["passed"] else EXIT_GATE


def build_parser():
    p = argparse.ArgumentParser(prog="mmflow", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required, help="JSON config file")
        sp.add_argument("--seed", type=int, help="overrides the config seed")
        sp.add_argument("--out", help="output directory")

    sp = sub.add_parser("train", help="fit the field model to a coupling")
    common(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("sample", help="transport samples with a trained model")
    common(sp, config_required=False)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--route", help="edge(i,j), via-barycenter(i,j) or path:FILE.json")
    sp.add_argument("--n", type=int)
    sp.add_argument("--timeslices", help="comma-separated times at which to dump the state")
    sp.set_defaults(func=cmd_sample)

    sp = sub.add_parser("optimize-path", help="minimise transport cost over Fourier paths")
    common(sp)
    sp.add_argument("--checkpoint", help="trained fields; closed-form fields are used when omitted")
    sp.set_defaults(func=cmd_optimize_path)

    sp = sub.add_parser("oracle-check", help="closed-form field consistency report")
    common(sp)
    sp.set_defaults(func=cmd_oracle_check)
    return p


def _limit_threads():
    n = os.environ.get("MMFLOW_THREADS")
    if not n:
        return None
    from threadpoolctl import threadpool_limits

    return threadpool_limits(int(n))


def main(argv=None):
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s %(message)s", stream=sys.stderr)
    parser = build_parser()
    args = parser.parse_args(argv)
    _limit_threads()
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (TrainingDivergedError, IntegrationError, FloatingPointError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
