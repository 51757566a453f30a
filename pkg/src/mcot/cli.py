"""Command-line harness: solve/oracle runs, experiment recipes, tabular output.

Commands: solve, oracle, model-select, enc-dec, dist-matrix, sweep.  Each
reads a YAML config plus flag overrides (flags win), honors --seed, and
writes headered comma-separated tables with full-precision floats, so
identical configs reproduce byte-identical files.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np
import yaml

from .chains import (
    ChainFormatError,
    CostMatrix,
    MarkovChain,
    TransitionSampler,
    cost_from_rewards,
    ingest_transitions,
    load_chain,
    make_block_lift,
    make_random_walk,
)
from .oracle import bicausal_value_iteration, oracle_occupancy
from .solver import SolverConfig, SolverRun, run

# Hyperparameters of the named experiment presets: (eta0, decay_a, beta0,
# batch_size, gamma).  "practical"/"theory" leave gamma to the config.
PRESETS = {
    "enc-dec": (40.0, 0.0, 0.2, 1, 0.99),
    "similarity": (20.0, 0.0, 0.5, 1, 0.99),
    "model-select": (0.1, 0.001, 0.5, 8, 0.95),
    "trajectory": (0.1, 0.05, 0.2, 16, 0.95),
}


class ConfigError(ValueError):
    """Raised for invalid or incomplete experiment configs."""


def _fmt(v) -> str:
    if isinstance(v, float) or isinstance(v, np.floating):
        return f"{float(v):.17g}"
    return str(v)


def write_table(path, header: list[str], rows) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_dense_table(path, matrix: np.ndarray, row_label: str, col_prefix: str,
                      row_names=None) -> None:
    n_rows, n_cols = matrix.shape
    header = [row_label] + [f"{col_prefix}{j}" for j in range(n_cols)]
    names = row_names if row_names is not None else range(n_rows)
    rows = [[name, *matrix[i]] for i, name in zip(range(n_rows), names)]
    write_table(path, header, rows)


def write_tensor_table(path, tensor: np.ndarray) -> None:
    """Flattened indexed dump of a 4-tensor: columns x,y,xp,yp,value."""
    nx, ny = tensor.shape[0], tensor.shape[1]
    rows = []
    for x in range(nx):
        for y in range(ny):
            for xp in range(nx):
                for yp in range(ny):
                    rows.append((x, y, xp, yp, tensor[x, y, xp, yp]))
    write_table(path, ["x", "y", "xp", "yp", "value"], rows)


def build_chain(spec, field: str) -> MarkovChain:
    """Build a chain from a config entry: {file: path} or {walk: {...}}.

    Walk specs take n, theta, optional initial, rewards, and block (a
    block-lift factor).  File chains accept an optional block as well.
    """
    if not isinstance(spec, dict):
        raise ConfigError(f"{field}: expected a mapping with 'file' or 'walk'")
    if "file" in spec:
        path = spec["file"]
        if not os.path.exists(path):
            raise ConfigError(f"{field}.file: no such chain file: {path}")
        chain = load_chain(path)
    elif "walk" in spec:
        w = spec["walk"]
        try:
            chain = make_random_walk(int(w["n"]), float(w["theta"]))
        except KeyError as e:
            raise ConfigError(f"{field}.walk: missing key {e}") from None
        if "rewards" in w:
            chain = MarkovChain(chain.transition, chain.initial_state,
                                rewards=np.asarray(w["rewards"], dtype=float))
        if "initial" in w:
            chain = MarkovChain(chain.transition, int(w["initial"]), rewards=chain.rewards)
    else:
        raise ConfigError(f"{field}: needs 'file' or 'walk'")
    if spec.get("block"):
        chain = make_block_lift(chain, int(spec["block"]))
    return chain


def build_cost(cfg: dict, chain_x: MarkovChain | None, chain_y: MarkovChain | None) -> CostMatrix:
    spec = cfg.get("cost", "reward-abs-diff")
    if isinstance(spec, dict):
        path = spec.get("file")
        if path is None:
            raise ConfigError("cost: mapping form needs a 'file' key")
        if not os.path.exists(path):
            raise ConfigError(f"cost.file: no such file: {path}")
        with open(path) as fh:
            doc = yaml.safe_load(fh)
        return CostMatrix(np.asarray(doc["values"] if isinstance(doc, dict) else doc, dtype=float))
    if spec in ("reward-abs-diff", "indicator"):
        if chain_x is None or chain_y is None:
            raise ConfigError(f"cost: {spec} needs both chains (buffer mode requires a cost file)")
        return cost_from_rewards(chain_x, chain_y, spec)
    raise ConfigError(f"cost: unknown kind {spec!r}")


def solver_config(cfg: dict) -> SolverConfig:
    preset = cfg.get("preset", "practical")
    overrides = {}
    if preset in PRESETS:
        eta0, a, beta0, b, gamma = PRESETS[preset]
        overrides = {"eta0": eta0, "decay_a": a, "beta0": beta0, "batch_size": b, "gamma": gamma}
        rate_preset = "practical"
    elif preset in ("practical", "theory"):
        rate_preset = preset
    else:
        raise ConfigError(f"preset: unknown preset {preset!r}")
    def pick(key, default=None):
        if key in cfg and cfg[key] is not None:
            return cfg[key]
        return overrides.get(key, default)
    gamma = pick("gamma")
    if gamma is None:
        raise ConfigError("gamma: required (by config, preset, or --gamma)")
    kwargs = dict(
        gamma=float(gamma),
        iterations=int(cfg.get("iterations", 100_000)),
        batch_size=int(pick("batch_size", 1)),
        seed=int(cfg.get("seed", 0)),
        rate_preset=rate_preset,
        snapshot_every=int(cfg.get("snapshot_every", 1000)),
        average_last_half=bool(cfg.get("average_last_half", False)),
    )
    for key in ("eta0", "decay_a", "beta0"):
        val = pick(key)
        if val is not None:
            kwargs[key] = float(val)
    try:
        return SolverConfig(**kwargs)
    except ValueError as e:
        raise ConfigError(str(e)) from None


def _trace_rows(result: SolverRun, oracle_distance: float | None):
    has_resid = result.trace and result.trace[0].residuals is not None
    header = ["k", "distance_estimate"]
    if has_resid:
        header += ["flow_residual", "causal_x_residual", "causal_y_residual", "certificate"]
    if oracle_distance is not None:
        header.append("abs_error")
    rows = []
    for d in result.trace:
        row = [d.k, d.distance_estimate]
        if has_resid:
            row += [d.residuals.flow, d.residuals.causal_x, d.residuals.causal_y, d.certificate]
        if oracle_distance is not None:
            row.append(abs(d.distance_estimate - oracle_distance))
        rows.append(row)
    return header, rows


def _load_solve_inputs(cfg: dict):
    """Chains/samplers/cost for a solve-style command (kernel or buffer mode)."""
    chain_x = build_chain(cfg["chain_x"], "chain_x") if cfg.get("chain_x") else None
    chain_y = build_chain(cfg["chain_y"], "chain_y") if cfg.get("chain_y") else None
    samplers = None
    initial_states = None
    if cfg.get("transitions_x") or cfg.get("transitions_y"):
        if not (cfg.get("transitions_x") and cfg.get("transitions_y")):
            raise ConfigError("transitions_x/transitions_y: buffer mode needs both dumps")
        for key in ("transitions_x", "transitions_y"):
            if not os.path.exists(cfg[key]):
                raise ConfigError(f"{key}: no such file: {cfg[key]}")
        if "initial_x" not in cfg or "initial_y" not in cfg:
            raise ConfigError("initial_x/initial_y: required in buffer-ingestion mode")
        seed = int(cfg.get("seed", 0))
        ss = np.random.SeedSequence(seed).spawn(2)
        samplers = (
            _buffer_sampler(cfg["transitions_x"], ss[0]),
            _buffer_sampler(cfg["transitions_y"], ss[1]),
        )
        initial_states = (int(cfg["initial_x"]), int(cfg["initial_y"]))
        chain_x = chain_y = None
    elif chain_x is None or chain_y is None:
        raise ConfigError("chain_x/chain_y: required unless transition dumps are given")
    cost = build_cost(cfg, chain_x, chain_y)
    return chain_x, chain_y, cost, samplers, initial_states


def _buffer_sampler(path, seed_seq) -> TransitionSampler:
    sampler = ingest_transitions(path, np.random.Generator(np.random.PCG64(seed_seq)))
    return sampler


def cmd_solve(cfg: dict) -> dict:
    out = _ensure_outdir(cfg)
    chain_x, chain_y, cost, samplers, initial_states = _load_solve_inputs(cfg)
    sc = solver_config(cfg)
    result = run(chain_x, chain_y, cost, sc, samplers=samplers, initial_states=initial_states)

    oracle_distance = None
    if cfg.get("compare_oracle"):
        oracle_distance = _oracle_distance(cfg, chain_x, chain_y, cost, sc.gamma)

    header, rows = _trace_rows(result, oracle_distance)
    write_table(os.path.join(out, "trace.csv"), header, rows)

    last = result.trace[-1]
    res_header = ["iterations", "distance"]
    res_row = [sc.iterations, result.distance]
    if last.residuals is not None:
        res_header += ["flow_residual", "causal_x_residual", "causal_y_residual", "certificate"]
        res_row += [last.residuals.flow, last.residuals.causal_x, last.residuals.causal_y, last.certificate]
    if oracle_distance is not None:
        res_header += ["oracle_distance", "abs_error"]
        res_row += [oracle_distance, abs(result.distance - oracle_distance)]
    write_table(os.path.join(out, "result.csv"), res_header, [res_row])

    if cfg.get("dump_tensors"):
        write_tensor_table(os.path.join(out, "mu_bar.csv"), result.mu_bar.values)
        write_dense_table(os.path.join(out, "lambda_x.csv"), result.lambda_x_bar.values, "x", "y")
        write_dense_table(os.path.join(out, "lambda_y.csv"), result.lambda_y_bar.values, "y", "x")
    return {"distance": result.distance, "out": out}


def _oracle_distance(cfg, chain_x, chain_y, cost, gamma) -> float:
    oracle_file = cfg.get("oracle_file")
    if oracle_file:
        if not os.path.exists(oracle_file):
            raise ConfigError(f"oracle_file: no such file: {oracle_file}")
        with open(oracle_file) as fh:
            header = fh.readline().strip().split(",")
            row = fh.readline().strip().split(",")
        return float(row[header.index("distance")])
    if chain_x is None or chain_y is None:
        raise ConfigError("compare_oracle: needs known chains or an oracle_file")
    return bicausal_value_iteration(chain_x, chain_y, cost, gamma, float(cfg.get("oracle_tol", 1e-8))).distance


def cmd_oracle(cfg: dict) -> dict:
    out = _ensure_outdir(cfg)
    chain_x = build_chain(cfg["chain_x"], "chain_x")
    chain_y = build_chain(cfg["chain_y"], "chain_y")
    cost = build_cost(cfg, chain_x, chain_y)
    gamma = float(cfg.get("gamma", 0.9))
    tol = float(cfg.get("oracle_tol", 1e-8))
    result = bicausal_value_iteration(chain_x, chain_y, cost, gamma, tol)
    write_table(os.path.join(out, "oracle.csv"), ["distance", "gamma", "tol"],
                [[result.distance, gamma, tol]])
    write_dense_table(os.path.join(out, "value_table.csv"), result.value_table, "x", "y")
    mu_star = oracle_occupancy(chain_x, chain_y, cost, gamma, tol)
    write_tensor_table(os.path.join(out, "mu_star.csv"), mu_star.values)
    return {"distance": result.distance, "out": out}


def _run_distance_task(args) -> tuple[int, float]:
    """Worker for parallel fan-out; returns (index, distance estimates per K)."""
    idx, chain_x, chain_y, cost, sc, k_grid = args
    result = run(chain_x, chain_y, cost, sc)
    snap = {d.k: d.distance_estimate for d in result.trace}
    return idx, [snap[k] for k in k_grid]


def _fan_out(tasks, workers: int):
    if workers <= 1 or len(tasks) <= 1:
        return [_run_distance_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_distance_task, tasks))


def _snapshot_config(cfg: dict, k_grid: list[int], seed: int | None = None) -> SolverConfig:
    """Solver config whose snapshots land on every K in the grid."""
    sc = solver_config({**cfg, "iterations": max(k_grid)})
    if sc.rate_preset == "theory":
        raise ConfigError("k_grid: grid harvesting needs the practical preset "
                          "(theory rates depend on the total iteration count)")
    step = int(np.gcd.reduce(np.asarray(k_grid, dtype=np.int64)))
    sc = replace(sc, snapshot_every=step)
    if seed is not None:
        sc = replace(sc, seed=seed)
    return sc


def cmd_model_select(cfg: dict) -> dict:
    """Distance estimates between candidate walks and a block-lifted target.

    The target is walk(n, theta_star) lifted by B blocks; one solver run
    per candidate theta, with the estimate at every K in k_grid harvested
    from the running average.  Emits one row per (theta, K).
    """
    out = _ensure_outdir(cfg)
    n = int(cfg.get("walk_n", 10))
    B = int(cfg.get("block_B", 5))
    theta_star = float(cfg.get("theta_star", 0.5))
    theta_grid = [float(t) for t in cfg.get("theta_grid", [round(0.1 * i, 1) for i in range(1, 10)])]
    if not theta_grid:
        raise ConfigError("theta_grid: must be nonempty")
    cfg.setdefault("preset", "model-select")
    k_grid = sorted(int(k) for k in cfg.get("k_grid", [10_000, 100_000]))

    target = make_block_lift(make_random_walk(n, theta_star), B)
    tasks = []
    for i, theta in enumerate(theta_grid):
        cand = make_random_walk(n, theta)
        cost = cost_from_rewards(cand, target, str(cfg.get("cost", "reward-abs-diff")))
        tasks.append((i, cand, target, cost, _snapshot_config(cfg, k_grid), k_grid))
    results = dict(_fan_out(tasks, _workers(cfg, len(tasks))))

    oracle_col = bool(cfg.get("compare_oracle"))
    rows = []
    for i, theta in enumerate(theta_grid):
        oracle_d = None
        if oracle_col:
            cand = make_random_walk(n, theta)
            cost = cost_from_rewards(cand, target, str(cfg.get("cost", "reward-abs-diff")))
            oracle_d = bicausal_value_iteration(cand, target, cost,
                                                solver_config({**cfg, "iterations": 1}).gamma,
                                                float(cfg.get("oracle_tol", 1e-6))).distance
        for k, dist in zip(k_grid, results[i]):
            row = [theta, k, dist]
            if oracle_col:
                row.append(oracle_d)
            rows.append(row)
    header = ["theta", "K", "distance"] + (["oracle_distance"] if oracle_col else [])
    write_table(os.path.join(out, "model_select.csv"), header, rows)
    return {"out": out, "rows": rows}


def cmd_enc_dec(cfg: dict) -> dict:
    """Averaged conditional maps at several sample sizes, as dense tables."""
    out = _ensure_outdir(cfg)
    cfg.setdefault("preset", "enc-dec")
    sizes = sorted(int(s) for s in cfg.get("sample_sizes", [1000, 10_000, 100_000]))
    files = []
    for K in sizes:
        # Fresh inputs per size so each run restarts its sample stream.
        chain_x, chain_y, cost, samplers, initial_states = _load_solve_inputs(cfg)
        sc = solver_config({**cfg, "iterations": K, "snapshot_every": K})
        result = run(chain_x, chain_y, cost, sc, samplers=samplers, initial_states=initial_states)
        fx = os.path.join(out, f"lambda_x_K{K}.csv")
        fy = os.path.join(out, f"lambda_y_K{K}.csv")
        write_dense_table(fx, result.lambda_x_bar.values, "x", "y")
        write_dense_table(fy, result.lambda_y_bar.values, "y", "x")
        files += [fx, fy]
    return {"out": out, "files": files}


def cmd_dist_matrix(cfg: dict) -> dict:
    """Pairwise estimated distances over a grid of walk instances.

    Instances enumerate (theta, initial) pairs, theta-major.  Rewards may
    be overridden (e.g. symmetric end rewards) via ``rewards``.
    """
    out = _ensure_outdir(cfg)
    n = int(cfg.get("walk_n", 10))
    theta_grid = [float(t) for t in cfg.get("theta_grid", [0.3, 0.7])]
    init_grid = [int(i) for i in cfg.get("init_grid", list(range(1, n - 1)))]
    if not theta_grid or not init_grid:
        raise ConfigError("theta_grid/init_grid: must be nonempty")
    rewards = cfg.get("rewards")
    cost_kind = str(cfg.get("cost", "reward-abs-diff"))

    def instance(theta, init):
        chain = make_random_walk(n, theta)
        r = np.asarray(rewards, dtype=float) if rewards is not None else chain.rewards
        return MarkovChain(chain.transition, init, rewards=r)

    insts = [(theta, init) for theta in theta_grid for init in init_grid]
    chains = [instance(t, i) for t, i in insts]
    g = len(insts)
    K = int(cfg.get("iterations", 50_000))
    seeds = [int(s) for s in cfg.get("seeds", [int(cfg.get("seed", 0))])]
    tasks = []
    for a in range(g):
        for b in range(g):
            cost = cost_from_rewards(chains[a], chains[b], cost_kind)
            for i, s in enumerate(seeds):
                tasks.append(((a * g + b) * len(seeds) + i, chains[a], chains[b], cost,
                              _snapshot_config(cfg, [K], seed=s), [K]))
    results = dict(_fan_out(tasks, _workers(cfg, len(tasks))))
    # one estimate per (pair, seed); the matrix holds the per-pair median
    D = np.array([[float(np.median([results[(a * g + b) * len(seeds) + i][0]
                                    for i in range(len(seeds))]))
                   for b in range(g)] for a in range(g)])

    write_table(os.path.join(out, "instances.csv"), ["index", "theta", "initial"],
                [[i, t, s] for i, (t, s) in enumerate(insts)])
    write_dense_table(os.path.join(out, "dist_matrix.csv"), D, "i", "j")
    if cfg.get("compare_oracle"):
        gamma = solver_config({**cfg, "iterations": 1}).gamma
        tol = float(cfg.get("oracle_tol", 1e-6))
        O = np.zeros((g, g))
        for a in range(g):
            for b in range(g):
                cost = cost_from_rewards(chains[a], chains[b], cost_kind)
                O[a, b] = bicausal_value_iteration(chains[a], chains[b], cost, gamma, tol).distance
        write_dense_table(os.path.join(out, "oracle_matrix.csv"), O, "i", "j")
    return {"out": out, "matrix": D}


def cmd_sweep(cfg: dict) -> dict:
    """Solver runs across seeds and iteration budgets on one chain pair."""
    out = _ensure_outdir(cfg)
    chain_x, chain_y, cost, samplers, initial_states = _load_solve_inputs(cfg)
    if samplers is not None:
        raise ConfigError("sweep: kernel mode only (needs chains for per-seed samplers)")
    seeds = [int(s) for s in cfg.get("seeds", range(5))]
    k_grid = sorted(int(k) for k in cfg.get("k_grid", [int(cfg.get("iterations", 100_000))]))
    if not seeds or not k_grid:
        raise ConfigError("seeds/k_grid: must be nonempty")
    oracle_d = None
    if cfg.get("compare_oracle"):
        oracle_d = _oracle_distance(cfg, chain_x, chain_y, cost, solver_config({**cfg, "iterations": 1}).gamma)
    tasks = [(i, chain_x, chain_y, cost, _snapshot_config(cfg, k_grid, seed=s), k_grid)
             for i, s in enumerate(seeds)]
    results = dict(_fan_out(tasks, _workers(cfg, len(tasks))))
    rows = []
    for i, s in enumerate(seeds):
        for k, dist in zip(k_grid, results[i]):
            row = [s, k, dist]
            if oracle_d is not None:
                row.append(abs(dist - oracle_d))
            rows.append(row)
    header = ["seed", "K", "distance"] + (["abs_error"] if oracle_d is not None else [])
    write_table(os.path.join(out, "sweep.csv"), header, rows)
    return {"out": out, "rows": rows}


def _workers(cfg: dict, tasks: int) -> int:
    w = cfg.get("workers")
    if w is None:
        w = os.cpu_count() or 1
    return max(1, min(int(w), tasks))


def _ensure_outdir(cfg: dict) -> str:
    out = cfg.get("out", "results")
    os.makedirs(out, exist_ok=True)
    return out


COMMANDS = {
    "solve": cmd_solve,
    "oracle": cmd_oracle,
    "model-select": cmd_model_select,
    "enc-dec": cmd_enc_dec,
    "dist-matrix": cmd_dist_matrix,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mcot",
                                     description="Transport distances between Markov chains from samples")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="YAML experiment config")
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
        p.add_argument("--gamma", type=float)
        p.add_argument("--iters", type=int, dest="iterations")
        p.add_argument("--preset")
        p.add_argument("--compare-oracle", action="store_true", default=None, dest="compare_oracle")
        p.add_argument("--workers", type=int)
        p.add_argument("--dump-tensors", action="store_true", default=None, dest="dump_tensors")
    return parser


def merge_config(args: argparse.Namespace) -> dict:
    cfg = {}
    if args.config:
        if not os.path.exists(args.config):
            raise ConfigError(f"config: no such file: {args.config}")
        with open(args.config) as fh:
            loaded = yaml.safe_load(fh) or {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"config: {args.config} must hold a mapping")
        cfg.update(loaded)
    for key in ("seed", "out", "gamma", "iterations", "preset", "compare_oracle",
                "workers", "dump_tensors"):
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = merge_config(args)
        COMMANDS[args.command](cfg)
    except (ConfigError, ChainFormatError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
