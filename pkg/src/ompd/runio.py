"""CSV persistence for run state beyond the summary trace.

``bound_state.csv`` carries everything the verifier needs to rebuild the
ledger and bound without rerunning the solver: per-step scalars plus the
per-step optima, and the initial point as row k = 0.
"""

from __future__ import annotations

import csv

import numpy as np

from .solver import RunTrace


def write_state_csv(trace: RunTrace, path) -> None:
    if trace.optima is None:
        raise ValueError("state csv needs filled optima")
    n = trace.dim
    header = (["k", "eps", "e_norm", "q_norm", "L_k", "B_k", "f_x", "f_star"]
              + [f"xstar_{j}" for j in range(n)])
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        x0_row = ["0"] + ["0"] * 7 + [f"{v:.17g}" for v in trace.x0]
        fh.write(",".join(x0_row) + "\n")
        for i in range(trace.horizon):
            row = [str(i + 1)] + [
                f"{v:.17g}" for v in (
                    trace.eps[i], trace.grad_error_norms[i], trace.q_norms[i],
                    trace.smoothness[i], trace.reg_lipschitz[i],
                    trace.f_played[i], trace.f_star[i])
            ] + [f"{v:.17g}" for v in trace.optima[i]]
            fh.write(",".join(row) + "\n")


def read_state_csv(path) -> dict:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [list(map(float, row)) for row in reader]
    data = np.asarray(rows)
    n = len(header) - 8
    out = {
        "x0": data[0, 8:],
        "eps": data[1:, 1],
        "e_norm": data[1:, 2],
        "q_norm": data[1:, 3],
        "L_k": data[1:, 4],
        "B_k": data[1:, 5],
        "f_x": data[1:, 6],
        "f_star": data[1:, 7],
        "optima": data[1:, 8:],
        "dim": n,
    }
    return out


def trace_from_state(state: dict, step_size: float, domain_kind: str,
                     diameter) -> RunTrace:
    """Rebuild the trace fields the ledger and bound evaluators consume.

    Iterates and subproblem solutions are not persisted (the bound needs
    only the recorded scalars and optima), so those arrays are zeros.
    """
    T = state["eps"].shape[0]
    n = state["dim"]
    return RunTrace(
        horizon=T, dim=n, x0=state["x0"],
        iterates=np.zeros((T, n)), subproblem_solutions=np.zeros((T, n)),
        grad_error_norms=state["e_norm"], eps=state["eps"],
        f_played=state["f_x"], q_norms=state["q_norm"],
        smoothness=state["L_k"], reg_lipschitz=state["B_k"],
        step_seconds=np.zeros(T), step_size=step_size,
        domain_kind=domain_kind, domain_diameter=diameter,
        optima=state["optima"], f_star=state["f_star"],
        optimum_tolerance=None)


def read_trace_csv(path) -> dict:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        cols = {name: [] for name in reader.fieldnames}
        for row in reader:
            for name, value in row.items():
                cols[name].append(float(value))
    return {name: np.asarray(vals) for name, vals in cols.items()}
