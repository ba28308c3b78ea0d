#
# Copyright © 2024 Intel Corporation
# SPDX-License-Identifier: Apache 2.0
#

from screenbook.config import load_config, resolve_config
from screenbook.benchmark import BenchmarkConfig
from screenbook.screening import clear_cache, solve_cn
from screenbook.oracle import oracle_solve
from screenbook.oracle import clear_cache as clear_oracle_cache
from dataclasses import replace
import numpy as np
import argparse
import time
import json


def print_profile_data(name, data):
    runtimes = [elem["runtime"] for elem in data]
    config = ", ".join(f"{key}: {data[0][key]}" for key in ["solver", "grid_n"])
    print(f"{name} ({config}) => {np.mean(runtimes):.3f} ± {2 * np.std(runtimes):.3f} ms")


def profile(config_name, grid_n, solver="cn", n_iters=20, skip_first=2):
    config = load_config(resolve_config(config_name))
    bench: BenchmarkConfig = replace(config.solver.benchmark, grid_n=grid_n)
    cfg = replace(config.solver, benchmark=bench)
    oracle_cfg = replace(config.oracle, n_grid=grid_n + (grid_n + 1) % 2)

    data = []
    for idx in range(n_iters):
        # every solve starts cold
        clear_cache()
        clear_oracle_cache()
        t0 = time.perf_counter()
        if solver == "cn":
            solve_cn(config.spec, config.pi, cfg)
        else:
            oracle_solve(config.spec, config.pi, oracle_cfg)
        t1 = time.perf_counter()
        if idx > (skip_first - 1):
            data.append(dict(config=config.task.name, solver=solver, grid_n=grid_n, runtime=(t1 - t0) * 1000))

    print_profile_data(config.task.name, data)
    return data


def define_and_parse_args():
    parser = argparse.ArgumentParser(description="Profiling the book solvers")
    parser.add_argument("config", type=str, help="Configuration file or bundled configuration name")
    parser.add_argument("--grid-n", "-n", type=int, nargs="+", default=[401, 2001], help="Grid sizes to profile")
    parser.add_argument(
        "--solver",
        default="cn",
        choices=["cn", "oracle"],
        help="Select the solver (default: %(default)s)",
    )
    parser.add_argument("--n-iters", type=int, default=20, help="Timed solves per grid size")
    parser.add_argument("--output", "-o", type=str, default=None, help="Write the timings to a JSON file")

    return parser.parse_args()


if __name__ == "__main__":
    args = define_and_parse_args()
    results = []
    for n in args.grid_n:
        results += profile(args.config, n, solver=args.solver, n_iters=args.n_iters)
    if args.output:
        with open(args.output, "w") as fp:
            json.dump(results, fp, indent=2)
