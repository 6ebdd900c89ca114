"""``msr`` command line: generate | estimate | solve | em | phase | noise-sweep.

Every subcommand accepts ``--config <json>``; keys are the long flag names
with dashes replaced by underscores. Flags given on the command line win
over the config file, which wins over built-in defaults.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .em import EmConfig, em_fit
from .experiments import (
    CASES,
    ExperimentConfig,
    draw_ground_truth,
    grid_summary,
    run_noise_sweep,
    run_phase_grid,
    write_grid_csv,
    write_sweep_csv,
)
from .invariants import NON_UNIFORM, UNIFORM, empirical_moments, to_uniform
from .model import align_and_mse, generate_observations, uniform_pmf
from .objective import ObjectivePoint, Weights
from .solver import SolverConfig, random_init, score_trials, solve_msr

log = logging.getLogger("msr")

DEFAULTS = {
    "generate": dict(d=9, m=9, K=10**5, sigma=0.0, seed=0, case="non-uniform", truth=None),
    "estimate": dict(input=None, mode=NON_UNIFORM),
    "solve": dict(features=None, mode=None, trials=1, seed=0, init=None, truth=None, th=1e-3,
                  max_iters=5000, grad_tol=1e-8, memory=10, lambda_t=1.0, lambda_c=1.0, lambda_mu=1.0,
                  trace_csv=False),
    "em": dict(input=None, seed=0, init=None, truth=None, max_iters=500, ll_tol=1e-6, trace_csv=False),
    "phase": dict(d_list=[6, 9, 12, 15], m_list=None, case="non-uniform+T", trials=50, th=1e-3, seed=0,
                  max_iters=5000, grad_tol=1e-8, lambda_t=1.0, lambda_c=1.0, lambda_mu=1.0),
    "noise-sweep": dict(d=45, m=25, K=10**5, sigmas=[0.01, 0.1, 0.5, 1.0], trials=10, em_restarts=3,
                        th=1e-3, seed=0, max_iters=5000, grad_tol=1e-8, em_max_iters=500,
                        lambda_t=1.0, lambda_c=1.0, lambda_mu=1.0),
}


class CliError(Exception):
    pass


def _ints(s: str) -> list[int]:
    return [int(v) for v in s.split(",") if v.strip()]


def _floats(s: str) -> list[float]:
    return [float(v) for v in s.split(",") if v.strip()]


def _weights_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--lambda-t", type=float)
    p.add_argument("--lambda-c", type=float)
    p.add_argument("--lambda-mu", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="msr", description="Multi-segment reconstruction from shift-invariant moments.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", type=Path, help="JSON file of option values")
        p.add_argument("--out", type=Path, default=Path("."), help="output directory")
        return p

    p = add("generate", "draw a ground truth and write noisy windows as MSR1")
    p.add_argument("--d", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--K", type=int)
    p.add_argument("--sigma", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--case", choices=["uniform", "non-uniform", "discrete"])
    p.add_argument("--truth", type=Path, help="JSON with x and p to use instead of a random draw")

    p = add("estimate", "MSR1 observations -> invariant features JSON")
    p.add_argument("--input", type=Path)
    p.add_argument("--mode", choices=[NON_UNIFORM, UNIFORM])

    p = add("solve", "features JSON -> solve report JSON")
    p.add_argument("--features", type=Path)
    p.add_argument("--mode", choices=[NON_UNIFORM, UNIFORM])
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--init", type=Path, help="start point: a solve/EM report or a truth file")
    p.add_argument("--truth", type=Path, help="ground truth for scoring (writes trials.json)")
    p.add_argument("--th", type=float)
    p.add_argument("--max-iters", type=int)
    p.add_argument("--grad-tol", type=float)
    p.add_argument("--memory", type=int)
    p.add_argument("--trace-csv", action="store_true", default=None)
    _weights_flags(p)

    p = add("em", "MSR1 observations -> EM report JSON")
    p.add_argument("--input", type=Path)
    p.add_argument("--seed", type=int)
    p.add_argument("--init", type=Path)
    p.add_argument("--truth", type=Path)
    p.add_argument("--max-iters", type=int)
    p.add_argument("--ll-tol", type=float)
    p.add_argument("--trace-csv", action="store_true", default=None)

    p = add("phase", "phase-transition grid over (d, m) on clean features")
    p.add_argument("--d-list", type=_ints)
    p.add_argument("--m-list", type=_ints)
    p.add_argument("--case", choices=list(CASES))
    p.add_argument("--trials", type=int)
    p.add_argument("--th", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--max-iters", type=int)
    p.add_argument("--grad-tol", type=float)
    _weights_flags(p)

    p = add("noise-sweep", "moments pipeline vs EM across noise levels")
    p.add_argument("--d", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--K", type=int)
    p.add_argument("--sigmas", type=_floats)
    p.add_argument("--trials", type=int)
    p.add_argument("--em-restarts", type=int)
    p.add_argument("--em-max-iters", type=int)
    p.add_argument("--th", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--max-iters", type=int)
    p.add_argument("--grad-tol", type=float)
    _weights_flags(p)
    return parser


def resolve_options(args: argparse.Namespace) -> dict:
    opts = dict(DEFAULTS[args.command])
    if args.config is not None:
        doc = io.read_json(args.config)
        if not isinstance(doc, dict):
            raise CliError(f"{args.config}: config must be a JSON object")
        unknown = set(doc) - set(opts) - {"schema"}
        if unknown:
            raise CliError(f"{args.config}: unknown option(s) {', '.join(sorted(unknown))}")
        opts.update({k: v for k, v in doc.items() if k != "schema"})
    for k in opts:
        v = getattr(args, k, None)
        if v is not None:
            opts[k] = v
    return opts


def _require(opts: dict, key: str) -> Path:
    if opts.get(key) is None:
        raise CliError(f"--{key.replace('_', '-')} is required")
    return Path(opts[key])


def _weights(opts: dict) -> Weights:
    return Weights(opts["lambda_t"], opts["lambda_c"], opts["lambda_mu"])


def cmd_generate(opts: dict, out: Path) -> None:
    seq = np.random.SeedSequence(opts["seed"])
    truth_seq, obs_seq = seq.spawn(2)
    if opts["truth"] is not None:
        x, p = io.read_point(opts["truth"])
        if p is None:
            p = uniform_pmf(x.size)
    else:
        case = {"uniform": "uniform+T", "non-uniform": "non-uniform+T", "discrete": "discrete+T"}[opts["case"]]
        x, p = draw_ground_truth(case, opts["d"], np.random.default_rng(truth_seq))
    obs = generate_observations(x, p, opts["m"], opts["sigma"], opts["K"], seed=int(obs_seq.generate_state(1)[0]))
    io.write_msr1(out / "observations.msr1", obs)
    io.write_json(out / "truth.json", dict(schema=io.SCHEMA, x=np.asarray(x).tolist(), p=np.asarray(p).tolist(),
                                           d=obs.d, m=obs.m, K=obs.K, sigma=obs.sigma, seed=opts["seed"]))


def cmd_estimate(opts: dict, out: Path) -> None:
    obs = io.read_msr1(_require(opts, "input"))
    feats = empirical_moments(obs)
    if opts["mode"] == UNIFORM:
        feats = to_uniform(feats, obs.d)
    io.write_json(out / "features.json", io.features_to_dict(feats))


def cmd_solve(opts: dict, out: Path) -> None:
    src = _require(opts, "features")
    target = io.features_from_dict(io.read_json(src), str(src))
    mode = opts["mode"] or target.kind
    if target.kind != mode:
        raise CliError(f"{src}: features are {target.kind}, but --mode is {mode}")
    if target.d is None:
        raise CliError(f"{src}: features file lacks the signal length d")
    d, m = target.d, target.m
    cfg = SolverConfig(max_iters=opts["max_iters"], grad_tol=opts["grad_tol"], memory=opts["memory"],
                       seed=opts["seed"], weights=_weights(opts), mode=mode)
    inits = None
    if opts["init"] is not None:
        x0, p0 = io.read_point(opts["init"])
        if x0.size != d:
            raise CliError(f"{opts['init']}: init has length {x0.size}, features need d={d}")
        if mode == NON_UNIFORM and p0 is None:
            p0 = uniform_pmf(d)
        inits = [ObjectivePoint(x0, p0)] * opts["trials"]
    children = np.random.SeedSequence(opts["seed"]).spawn(opts["trials"])
    if inits is None:
        inits = [random_init(d, mode, c) for c in children]
    reports = [solve_msr(target, m, cfg, init) for init in inits]
    best = min(reports, key=lambda r: r.final_objective)
    doc = io.solve_report_to_dict(best, mode)
    if opts["truth"] is not None:
        xt, pt = io.read_point(opts["truth"])
        pt = uniform_pmf(d) if (pt is None or mode == UNIFORM) else pt
        al = align_and_mse(xt, pt, best.x_hat, best.p_hat)
        doc.update(mse_x=al.mse_x, mse_p=al.mse_p, mse_x_normalized=al.mse_x_normalized, best_shift=al.best_shift)
        batch = score_trials(reports, opts["th"], xt, pt)
        io.write_json(out / "trials.json", io.batch_report_to_dict(batch))
    io.write_json(out / "solve.json", doc)
    if opts["trace_csv"]:
        io.write_trace_csv(out / "solve_trace.csv", best.trace)


def cmd_em(opts: dict, out: Path) -> None:
    obs = io.read_msr1(_require(opts, "input"))
    if obs.sigma <= 0:
        raise CliError("EM needs sigma > 0 in the MSR1 header")
    d = obs.d
    if opts["init"] is not None:
        x0, p0 = io.read_point(opts["init"])
        init = ObjectivePoint(x0, uniform_pmf(d) if p0 is None else p0)
    else:
        init = random_init(d, NON_UNIFORM, opts["seed"])
    rep = em_fit(obs, d, EmConfig(max_iters=opts["max_iters"], ll_tol=opts["ll_tol"], seed=opts["seed"]), init)
    doc = io.em_report_to_dict(rep)
    if opts["truth"] is not None:
        xt, pt = io.read_point(opts["truth"])
        al = align_and_mse(xt, uniform_pmf(d) if pt is None else pt, rep.x_hat, rep.p_hat)
        doc.update(mse_x=al.mse_x, mse_p=al.mse_p, mse_x_normalized=al.mse_x_normalized, best_shift=al.best_shift)
    io.write_json(out / "em.json", doc)
    if opts["trace_csv"]:
        io.write_trace_csv(out / "em_trace.csv", rep.log_likelihood_trace, "log_likelihood")


def cmd_phase(opts: dict, out: Path) -> None:
    cfg = ExperimentConfig(d_list=tuple(opts["d_list"]), m_list=None if opts["m_list"] is None else tuple(opts["m_list"]),
                           case=opts["case"], n_trials=opts["trials"], th=opts["th"], weights=_weights(opts),
                           master_seed=opts["seed"], max_iters=opts["max_iters"], grad_tol=opts["grad_tol"])
    cells = run_phase_grid(cfg)
    write_grid_csv(out / "phase_grid.csv", cells)
    io.write_json(out / "phase_summary.json", grid_summary(cfg, cells))


def cmd_noise_sweep(opts: dict, out: Path) -> None:
    cfg = ExperimentConfig(d=opts["d"], m=opts["m"], K=opts["K"], sigmas=tuple(opts["sigmas"]),
                           n_trials=opts["trials"], em_restarts=opts["em_restarts"], th=opts["th"],
                           weights=_weights(opts), master_seed=opts["seed"], max_iters=opts["max_iters"],
                           grad_tol=opts["grad_tol"], em_max_iters=opts["em_max_iters"])
    write_sweep_csv(out / "noise_sweep.csv", run_noise_sweep(cfg))


COMMANDS = {
    "generate": cmd_generate,
    "estimate": cmd_estimate,
    "solve": cmd_solve,
    "em": cmd_em,
    "phase": cmd_phase,
    "noise-sweep": cmd_noise_sweep,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        opts = resolve_options(args)
        args.out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](opts, args.out)
    except (CliError, ValueError, OSError) as exc:
        print(f"msr {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
