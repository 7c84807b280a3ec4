"""
Scenario orchestration: flow, conditions and propagation, assembled into a
JSON report with optional per-pair CSV series, and parameter sweeps.

Module errors never abort a run; they are collected under ``diagnostics``.
"""

import csv
import json
import math
from pathlib import Path

import numpy as np

from .conditions import evaluate_conditions
from .errors import AdicheckError, ValidationError
from .flow import build_flow, phase_ledger
from .propagate import (adiabatic_prediction, deviation_metrics, evolve_coefficients,
                        evolve_exact)

SCHEMA = "adicheck-report/1"
SWEEP_COLUMNS = ("value", "g_max", "bound4", "bound5", "traditional_max", "ratio6_max",
                 "max_coeff_drift")
CONVENTIONS = {
    "coefficients": "c_m(t) = exp(i(alpha_m + beta_m)) <E_m(t)|psi(t)> in the report gauge",
    "initial": "eigenbasis coefficients c_n(0) at t = 0",
    "theta": "alpha_n - alpha_m + beta_n - beta_m + gamma_mn, gamma_mn = -arg A_mn",
    "nonfinite": "infinite or undefined values are written as null",
}


def _clean(obj):
    """Plain-Python, JSON-safe copy: numpy scalars unwrapped, non-finite floats -> None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def _diag(stage, exc, **extra):
    entry = {"stage": stage, "error": type(exc).__name__, "message": str(exc)}
    entry.update(extra)
    return entry


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def write_rows(fh, header, columns):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(header)
    for row in zip(*columns):
        w.writerow([_fmt(v) for v in row])


def write_csv(path, header, columns):
    """Comma-separated, LF-terminated table with 17-significant-digit floats."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        write_rows(fh, header, columns)
    return path


def _pair_key(m, n):
    return f"{m}_{n}"


def _summary(conditions, deviation):
    pairs = conditions["pairs"] if conditions else []

    def worst(key):
        vals = [p[key] for p in pairs]
        if not vals:
            return None
        if any(v is None for v in vals):
            return math.inf
        return max(vals)

    drifts = [d["max_coeff_drift"] for d in deviation if d.get("max_coeff_drift") is not None]
    oracle = [d["oracle_max_deviation"] for d in deviation
              if d.get("oracle_max_deviation") is not None]
    return {
        "verdict": conditions["verdict"] if conditions else None,
        "g_max": worst("g_max"),
        "bound4": worst("bound4"),
        "bound5": worst("bound5"),
        "traditional_max": worst("traditional_max"),
        "ratio6_max": worst("ratio6_max"),
        "max_coeff_drift": max(drifts) if drifts else None,
        "oracle_max_deviation": max(oracle) if oracle else None,
    }


class RunArtifacts:
    """In-memory arrays from one run, kept for series files and figures."""

    def __init__(self):
        self.times = None
        self.pairs = {}
        self.drift = {}
        self.populations = {}


def run_scenario(s, series_dir=None, gauge=None, figures_dir=None, keep_arrays=False):
    """
    Execute the full pipeline for one scenario.

    Parameters
    ----------
    s : Scenario
    series_dir : path, optional
        Write per-pair series (t, abs_A, theta, theta_dot, G) and per-start
        drift profiles as CSV files here; the report then references them.
        Without it, series are embedded only when the scenario requests
        ``"series"`` in its outputs.
    gauge : str, optional
        Overrides the scenario's gauge.
    figures_dir : path, optional
        Render PNG figures of the series here.
    keep_arrays : bool
        Also return the raw :class:`RunArtifacts`.

    Returns
    -------
    dict
        The report, already JSON-safe.
    """
    if gauge is not None:
        s = s.replace(gauge=gauge)
    diagnostics = []
    arts = RunArtifacts()
    conditions, deviation = None, []
    scenario_echo = s.to_dict()

    flow = ledger = None
    try:
        model = s.build_model()
        flow = build_flow(model, s.T, s.steps, s.gauge)
        ledger = phase_ledger(flow, allow_undefined=True)
    except AdicheckError as exc:
        extra = {"t": exc.t, "gap": exc.gap} if hasattr(exc, "gap") else {}
        diagnostics.append(_diag("flow", exc, **extra))

    if ledger is not None:
        arts.times = flow.times
        try:
            cr, gseries = evaluate_conditions(flow, ledger, s.epsilon, return_series=True)
            conditions = _clean(cr.to_dict())
            for p in cr.pairs:
                for flag in p.flags:
                    if flag.startswith(("phase_undefined", "segmentation_unstable", "error")):
                        diagnostics.append({"stage": "conditions", "pair": [p.m, p.n],
                                            "error": flag.split(":")[0], "message": flag})
                G = gseries.get((p.m, p.n))
                arts.pairs[(p.m, p.n)] = {
                    "abs_A": np.abs(flow.couplings[:, p.m, p.n]),
                    "theta": ledger.theta[:, p.m, p.n],
                    "theta_dot": ledger.theta_dot[:, p.m, p.n],
                    "G": G if G is not None else np.full(len(flow.times), np.nan),
                }
        except AdicheckError as exc:
            diagnostics.append(_diag("conditions", exc))

        for label, c0 in s.initial_states(flow.dim):
            entry = {"initial": label, "c0_re": c0.real, "c0_im": c0.imag}
            try:
                psi0 = flow.vectors[0] @ c0
                exact = evolve_exact(flow.model, psi0, s.T, s.steps, s.tol, flow=flow,
                                     ledger=ledger)
                metrics = deviation_metrics(exact, adiabatic_prediction(flow, ledger, c0))
                entry.update(metrics.to_dict())
                entry.update({
                    "coeff_norm_drift": exact.coeff_norm_drift,
                    "n_substeps": exact.n_substeps,
                    "error_estimate": exact.error_estimate,
                })
                arts.drift[label] = metrics.drift_profile
                arts.populations[label] = np.abs(exact.coefficients) ** 2
                try:
                    coeff = evolve_coefficients(flow, ledger, c0, s.T, s.tol)
                    entry["oracle_max_deviation"] = float(
                        np.max(np.abs(coeff.coefficients - exact.coefficients)))
                except AdicheckError as exc:
                    diagnostics.append(_diag("coefficient_ode", exc, initial=label))
                if not exact.norm_ok:
                    diagnostics.append({"stage": "propagation", "initial": label,
                                        "error": "NormDrift",
                                        "message": f"norm drift {exact.norm_drift:.3e}"})
            except (AdicheckError, ValueError) as exc:
                diagnostics.append(_diag("propagation", exc, initial=label))
            deviation.append(_clean(entry))

    series = None
    if arts.times is not None:
        if series_dir is not None:
            series = {"files": write_series(arts, series_dir)}
        elif "series" in s.outputs:
            series = _clean(inline_series(arts))
    if figures_dir is not None or ("figures" in s.outputs and series_dir is not None):
        target = figures_dir if figures_dir is not None else series_dir
        if arts.times is not None:
            from .plotting import plot_run

            figs = plot_run(arts, target, title=s.name or s.kind)
            series = series or {}
            series["figures"] = [str(p) for p in figs]

    report = {
        "schema": SCHEMA,
        "scenario": _clean(scenario_echo),
        "conditions": conditions,
        "deviation": deviation,
        "series": series,
        "diagnostics": diagnostics,
        "summary": _clean({**_summary(conditions, deviation), "gauge": s.gauge,
                           "conventions": CONVENTIONS}),
    }
    if keep_arrays:
        return report, arts
    return report


def inline_series(arts):
    out = {"t": arts.times, "pairs": {}, "deviation": {}}
    for (m, n), cols in arts.pairs.items():
        out["pairs"][_pair_key(m, n)] = dict(cols)
    for label, prof in arts.drift.items():
        out["deviation"][label] = {"drift": prof}
    return out


def write_series(arts, directory):
    """Write one CSV per ordered pair and per initial state; return {name: path}."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files = {}
    for (m, n), cols in arts.pairs.items():
        name = f"pair_{_pair_key(m, n)}"
        path = write_csv(directory / f"{name}.csv", ("t", "abs_A", "theta", "theta_dot", "G"),
                         [arts.times, cols["abs_A"], cols["theta"], cols["theta_dot"], cols["G"]])
        files[name] = str(path)
    for label, prof in arts.drift.items():
        pops = arts.populations[label]
        header = ["t", "drift"] + [f"population_{k}" for k in range(pops.shape[1])]
        name = f"drift_{label}"
        path = write_csv(directory / f"{name}.csv", header,
                         [arts.times, prof] + [pops[:, k] for k in range(pops.shape[1])])
        files[name] = str(path)
    return files


def dumps_report(report):
    """JSON text of a report; floats use the shortest repr that round-trips exactly."""
    return json.dumps(_clean(report), indent=2, allow_nan=False) + "\n"


def write_report(report, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_report(report))
    return path


def load_report(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def sweep(s, param, values, out=None, figures_dir=None):
    """
    Run ``s`` once per value of ``param`` and tabulate the headline numbers.

    Per-pair quantities are reduced to their worst case over pairs and the
    drift to its maximum over initial states. A failing row keeps NaNs and a
    diagnostics message; the sweep itself never aborts on a row.

    Returns
    -------
    list of dict
        One row per value, with the keys of ``SWEEP_COLUMNS`` plus
        ``verdict`` and ``diagnostics``.
    """
    s.with_param(param, s.T if param == "T" else _current(s, param))
    rows = []
    for v in values:
        row = {k: math.nan for k in SWEEP_COLUMNS}
        row.update(value=float(v), verdict="", diagnostics="")
        try:
            if not math.isfinite(float(v)):
                raise ValidationError(param, f"non-finite value {v!r}")
            rep = run_scenario(s.with_param(param, v))
            summ = rep["summary"]
            for k in SWEEP_COLUMNS[1:]:
                row[k] = math.nan if summ[k] is None else summ[k]
            row["verdict"] = summ["verdict"] or ""
            row["diagnostics"] = "; ".join(f"{d['stage']}: {d['message']}"
                                           for d in rep["diagnostics"])
        except (AdicheckError, ValueError) as exc:
            row["diagnostics"] = f"{type(exc).__name__}: {exc}"
        rows.append(row)
    if out is not None:
        write_sweep_csv(rows, out)
    if figures_dir is not None and rows:
        from .plotting import plot_sweep

        plot_sweep(rows, param, figures_dir, title=s.name or s.kind)
    return rows


def _current(s, param):
    if param in ("epsilon", "tol", "steps"):
        return getattr(s, param)
    if param not in s.params:
        raise ValidationError(param, f"cannot sweep {param!r} for kind {s.kind!r}")
    return s.params[param]


def write_sweep_csv(rows, target):
    """Write sweep rows to a path, or to an open text stream."""
    header = list(SWEEP_COLUMNS) + ["verdict", "diagnostics"]
    cols = [[r[h] for r in rows] for h in header]
    if hasattr(target, "write"):
        write_rows(target, header, cols)
        return target
    return write_csv(target, header, cols)
