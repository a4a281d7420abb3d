"""Experiment runner: config parsing, problem construction, the method grid,
results/trace/plot-data output and the comparison report."""

from __future__ import annotations

import csv
import dataclasses
import io
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import baselines, mpec, problems
from . import io as dataio
from .core import SolveResult, SolverConfig, trace_to_csv

__all__ = [
    "APPLICATIONS",
    "METHODS",
    "ConfigError",
    "ExperimentConfig",
    "ResultRow",
    "RESULT_COLUMNS",
    "parse_config_text",
    "apply_setting",
    "load_config",
    "build_problem",
    "run_cell",
    "run_experiment",
    "write_results",
    "read_results",
    "compare_report",
]

log = logging.getLogger(__name__)

METHODS = ("mpec_epm", "mpec_adm", "greedy", "qpm", "di_adm", "md_adm", "cvx_sweep")
APPLICATIONS = ("quadratic", "trend_filtering", "feature_logistic", "feature_hinge",
                "segmented_regression", "mrf", "l0tv")
RESULT_COLUMNS = ("method", "k", "seed", "objective", "l0_achieved", "gap",
                  "outer_iterations", "converged", "snr0", "snr1", "snr2")


class ConfigError(ValueError):
    pass


@dataclasses.dataclass
class ExperimentConfig:
    application: str = "trend_filtering"
    methods: Tuple[str, ...] = ("mpec_epm",)
    k: Tuple[float, ...] = ()
    k_fractions: Tuple[float, ...] = ()
    seeds: Tuple[int, ...] = (0,)
    data_path: Optional[str] = None
    aux_path: Optional[str] = None
    params: Dict[str, float] = dataclasses.field(default_factory=dict)
    overrides: Dict[str, Dict[str, str]] = dataclasses.field(default_factory=dict)
    out: str = "results"
    jobs: int = 1

    def validate(self):
        if self.application not in APPLICATIONS:
            raise ConfigError(f"unknown application {self.application!r}; "
                              f"choose from {', '.join(APPLICATIONS)}")
        if not self.methods:
            raise ConfigError("at least one method is required")
        for m in self.methods:
            if m not in METHODS:
                raise ConfigError(f"unknown method {m!r}; choose from {', '.join(METHODS)}")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        for scope in self.overrides:
            if scope not in ("mpec", "baseline") + METHODS:
                raise ConfigError(f"unknown override scope {scope!r}")
        return self


@dataclasses.dataclass
class ResultRow:
    method: str
    k: float
    seed: int
    objective: float
    l0_achieved: int
    gap: float
    outer_iterations: int
    converged: bool
    snr0: Optional[float] = None
    snr1: Optional[float] = None
    snr2: Optional[float] = None
    wall_ms: float = 0.0

    def as_record(self) -> List[str]:
        def num(v):
            return "" if v is None else repr(float(v))
        k = int(self.k) if float(self.k).is_integer() else self.k
        return [self.method, repr(k), str(self.seed), num(self.objective),
                str(self.l0_achieved), num(self.gap), str(self.outer_iterations),
                "1" if self.converged else "0", num(self.snr0), num(self.snr1), num(self.snr2)]


# ---------------------------------------------------------------------------
# config parsing

_LIST_KEYS = {"methods", "method", "k", "k_fractions", "seeds"}
_STR_KEYS = {"application", "data_path", "aux_path", "out"}


def _split_list(text: str) -> List[str]:
    return [t for t in (s.strip() for s in text.replace(";", ",").split(",")) if t]


def parse_config_text(text: str, source: str = "<config>") -> ExperimentConfig:
    """Parse the flat ``key = value`` format (``#`` starts a comment).

    Scalar generator parameters (``n``, ``noise``, ...) land in ``params``;
    dotted keys such as ``mpec_epm.rho0`` are per-method solver overrides.
    """
    cfg = ExperimentConfig()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value, got {raw.strip()!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        try:
            apply_setting(cfg, key, val)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{source}:{lineno}: {exc}") from exc
    return cfg


def apply_setting(cfg: ExperimentConfig, key: str, val: str):
    """Apply one ``key = value`` setting to ``cfg`` in place."""
    if "." in key:
        scope, field = key.split(".", 1)
        cfg.overrides.setdefault(scope, {})[field] = val
    elif key in ("methods", "method"):
        cfg.methods = tuple(_split_list(val))
    elif key == "k":
        cfg.k = tuple(float(v) for v in _split_list(val))
    elif key == "k_fractions":
        cfg.k_fractions = tuple(float(v) for v in _split_list(val))
    elif key in ("seeds", "seed"):
        cfg.seeds = tuple(int(v) for v in _split_list(val))
    elif key == "jobs":
        cfg.jobs = int(val)
    elif key in _STR_KEYS:
        setattr(cfg, key, val)
    else:
        cfg.params[key] = float(val)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    return parse_config_text(path.read_text(), str(path))


def _coerce(field: dataclasses.Field, text: str):
    typ = field.type if isinstance(field.type, str) else getattr(field.type, "__name__", "")
    if "bool" in typ:
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{field.name}: not a boolean: {text!r}")
    if "int" in typ and "Optional" not in typ:
        return int(float(text))
    if "Sequence" in typ:
        return tuple(float(v) for v in _split_list(text))
    if "str" in typ:
        return text
    if text.lower() in ("none", ""):
        return None
    return float(text)


def _apply_overrides(obj, mapping: Dict[str, str]):
    fields = {f.name: f for f in dataclasses.fields(obj)}
    changes = {}
    for name, text in mapping.items():
        if name not in fields:
            raise ConfigError(f"unknown setting {name!r} for {type(obj).__name__}")
        changes[name] = _coerce(fields[name], text)
    return dataclasses.replace(obj, **changes)


def solver_config_for(cfg: ExperimentConfig, method: str, seed: int):
    if method.startswith("mpec"):
        sc = SolverConfig(seed=seed)
        sc = _apply_overrides(sc, cfg.overrides.get("mpec", {}))
        return _apply_overrides(sc, cfg.overrides.get(method, {}))
    bc = baselines.BaselineConfig(method=method)
    bc = _apply_overrides(bc, cfg.overrides.get("baseline", {}))
    return _apply_overrides(bc, cfg.overrides.get(method, {}))


# ---------------------------------------------------------------------------
# problems


def _param(cfg, name, default):
    return cfg.params.get(name, default)


def build_problem(cfg: ExperimentConfig, k: Optional[float], seed: int):
    """Return ``(problem, context)`` for one cell; ``context`` carries what the
    metrics need (the clean image for l0tv)."""
    app = cfg.application
    ctx = {}
    if app == "quadratic":
        n = int(_param(cfg, "n", 64))
        kk = 8 if k is None else k
        prob = problems.generate_sparse_quadratic(n, int(kk), seed=seed,
                                                  noise=_param(cfg, "noise", 0.1))
        prob.k = kk
        return prob, ctx
    if app == "trend_filtering":
        if cfg.data_path:
            y = dataio.read_series(cfg.data_path)
            n_use = int(_param(cfg, "n", y.size))
            y = y[:n_use]
        else:
            y = problems.generate_trend_series(int(_param(cfg, "n", 300)), seed=seed,
                                               kinks=int(_param(cfg, "kinks", 30)),
                                               noise=_param(cfg, "noise", 0.02))
        return problems.build_trend_filtering(y, 30 if k is None else k), ctx
    if app in ("feature_logistic", "feature_hinge"):
        lam = _param(cfg, "lam", 0.01)
        if cfg.data_path:
            X, labels = dataio.read_libsvm(cfg.data_path)
            data = problems.FeatureSelectionData(X.toarray(), labels, lam)
        else:
            data = problems.generate_feature_selection(int(_param(cfg, "samples", 200)),
                                                       int(_param(cfg, "n", 100)),
                                                       seed=seed, lam=lam)
        kk = max(1, data.n // 10) if k is None else k
        loss = app.split("_", 1)[1]
        return problems.build_feature_selection(
            data, loss, kk, box_radius=_param(cfg, "box_radius", problems.DEFAULT_BOX_RADIUS)), ctx
    if app == "segmented_regression":
        if cfg.data_path:
            if not cfg.aux_path:
                raise ConfigError("segmented_regression with data_path needs aux_path "
                                  "(observations, one per line)")
            A = dataio.read_matrix_csv(cfg.data_path)
            b = dataio.read_series(cfg.aux_path)
            A = A / np.linalg.norm(A, axis=0)
            inst = problems.SegmentedRegressionInstance(A, b, np.array([], int), float("nan"))
        else:
            inst = problems.generate_segmented_regression(int(_param(cfg, "n", 64)), seed=seed,
                                                          sigma=_param(cfg, "sigma", 5.0))
        kk = max(1, inst.design.shape[1] // 16) if k is None else k
        return problems.build_segmented_regression(inst, kk), ctx
    if app == "mrf":
        if cfg.data_path:
            if not cfg.aux_path:
                raise ConfigError("mrf with data_path needs aux_path (unary, one per line)")
            Lap = dataio.read_matrix_csv(cfg.data_path)
            unary = dataio.read_series(cfg.aux_path)
        else:
            Lap, unary = problems.generate_mrf(int(_param(cfg, "n", 12)), seed=seed)
        return problems.build_mrf(Lap, unary), ctx
    if app == "l0tv":
        frac = _param(cfg, "noise_fraction", 0.3)
        if cfg.data_path:
            clean = dataio.read_pgm(cfg.data_path)
        else:
            clean = problems.piecewise_constant_image(int(_param(cfg, "height", 32)),
                                                      int(_param(cfg, "width", 32)), seed=seed)
        inst = problems.add_impulse_noise(clean, frac, seed=seed)
        ctx["clean"] = clean
        return problems.build_l0tv(inst, k, p=int(_param(cfg, "p", 2))), ctx
    raise ConfigError(f"unknown application {app!r}")


def k_values(cfg: ExperimentConfig, seed: int) -> List[Optional[float]]:
    """Absolute ``k`` values; fractions multiply the constraint row count."""
    if cfg.application == "mrf":
        return [None]
    if cfg.k:
        return list(cfg.k)
    if cfg.k_fractions:
        prob, _ = build_problem(cfg, None, seed)
        return [float(v) for v in problems.sparsity_grid(prob.m, cfg.k_fractions)]
    return [None]


# ---------------------------------------------------------------------------
# running


_SOLVERS = {
    "mpec_epm": mpec.epm_solve,
    "mpec_adm": mpec.adm_solve,
    "greedy": baselines.greedy_solve,
    "qpm": baselines.qpm_solve,
    "di_adm": baselines.di_adm_solve,
    "md_adm": baselines.md_adm_solve,
    "cvx_sweep": baselines.cvx_sweep_solve,
}


def run_cell(cfg: ExperimentConfig, method: str, k, seed: int):
    """Solve one ``(method, k, seed)`` cell; returns ``(row, trace_csv)``."""
    prob, ctx = build_problem(cfg, k, seed)
    sc = solver_config_for(cfg, method, seed)
    t0 = time.perf_counter()
    res: SolveResult = _SOLVERS[method](prob, sc)
    wall = 1e3 * (time.perf_counter() - t0)
    snr = (None, None, None)
    if "clean" in ctx:
        snr = problems.snr_metrics(res.x_final, ctx["clean"])
    row = ResultRow(method, float(prob.k), seed, res.objective_value, res.l0_achieved,
                    res.complementarity_gap, res.outer_iterations, res.converged,
                    *snr, wall_ms=wall)
    header = {"method": method, "k": prob.k, "seed": seed}
    if isinstance(sc, SolverConfig):
        header.update(rho0=sc.rho0, mu=sc.mu, alpha=sc.alpha, eta=sc.eta, T=sc.T)
    else:
        header.update(mu=sc.mu, beta0=sc.beta0, penalty_growth=sc.penalty_growth,
                      cadence=sc.cadence)
    return row, trace_to_csv(res.trace, header)


def _run_cell_args(args):
    return run_cell(*args)


def _trace_name(method, k, seed) -> str:
    kk = int(k) if float(k).is_integer() else k
    return f"{method}_k{kk}_s{seed}.csv"


def run_experiment(cfg: ExperimentConfig, write: bool = True) -> List[ResultRow]:
    """Run every ``(method, k, seed)`` cell and (optionally) write outputs.

    Rows come back ordered by seed, k, then the configured method order,
    independent of ``jobs``. Writes ``results.csv``, ``timings.csv``,
    ``traces/*.csv`` and ``objective_vs_k.dat`` under ``cfg.out``.
    """
    cfg.validate()
    cells = []
    for seed in cfg.seeds:
        for k in k_values(cfg, seed):
            for method in cfg.methods:
                cells.append((cfg, method, k, seed))
    for method in set(cfg.methods):
        if method == "greedy":
            prob, _ = build_problem(cfg, cells[0][2], cells[0][3])
            if not (prob.objective.is_smooth and prob.constraint_map.is_identity):
                raise ConfigError(f"greedy is not applicable to {cfg.application} "
                                  "(needs smooth f and A = I)")
    if cfg.jobs > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            outputs = list(pool.map(_run_cell_args, cells))
    else:
        outputs = [run_cell(*c) for c in cells]
    rows = [o[0] for o in outputs]
    if write:
        out = Path(cfg.out)
        (out / "traces").mkdir(parents=True, exist_ok=True)
        write_results(rows, out / "results.csv")
        _write_timings(rows, out / "timings.csv")
        for row, (_, trace) in zip(rows, outputs):
            (out / "traces" / _trace_name(row.method, row.k, row.seed)).write_text(trace)
        write_plot_data(rows, out / "objective_vs_k.dat")
    return rows


def write_results(rows: Sequence[ResultRow], path) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RESULT_COLUMNS)
    for r in rows:
        writer.writerow(r.as_record())
    Path(path).write_text(buf.getvalue())


def _write_timings(rows, path):
    lines = ["method,k,seed,wall_ms"]
    lines += [f"{r.method},{r.k!r},{r.seed},{r.wall_ms:.3f}" for r in rows]
    Path(path).write_text("\n".join(lines) + "\n")


def read_results(path) -> List[ResultRow]:
    def opt(v):
        return None if v == "" else float(v)
    rows = []
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != RESULT_COLUMNS:
            raise dataio.DataParseError(f"{path}: unexpected header {reader.fieldnames}")
        for lineno, rec in enumerate(reader, start=2):
            try:
                rows.append(ResultRow(rec["method"], float(rec["k"]), int(rec["seed"]),
                                      float(rec["objective"]), int(rec["l0_achieved"]),
                                      float(rec["gap"]), int(rec["outer_iterations"]),
                                      rec["converged"] == "1", opt(rec["snr0"]),
                                      opt(rec["snr1"]), opt(rec["snr2"])))
            except (KeyError, ValueError) as exc:
                raise dataio.DataParseError(f"{path}:{lineno}: {exc}") from exc
    return rows


def _methods_in_order(rows):
    seen = []
    for r in rows:
        if r.method not in seen:
            seen.append(r.method)
    return seen


def write_plot_data(rows: Sequence[ResultRow], path) -> None:
    """Whitespace columns ``k <method>...`` with the seed-mean objective
    (``nan`` where a method has no row); gnuplot-ready."""
    methods = _methods_in_order(rows)
    ks = sorted({r.k for r in rows})
    lines = ["# k " + " ".join(methods)]
    for k in ks:
        vals = []
        for m in methods:
            objs = [r.objective for r in rows if r.method == m and r.k == k]
            vals.append(repr(float(np.mean(objs))) if objs else "nan")
        lines.append(f"{k!r} " + " ".join(vals))
    Path(path).write_text("\n".join(lines) + "\n")


def compare_report(rows: Sequence[ResultRow], rel_tol: float = 1e-9):
    """Per-(k, seed) table with the best objective starred and split-tie
    winner counts. Returns ``(text, counts)``."""
    if not rows:
        raise ValueError("no rows to report")
    methods = _methods_in_order(rows)
    counts = {m: 0.0 for m in methods}
    cells = sorted({(r.k, r.seed) for r in rows})
    width = max(12, max(len(m) for m in methods) + 2)
    out = io.StringIO()
    out.write(f"{'k':>8} {'seed':>5} " + "".join(f"{m:>{width}}" for m in methods) + "\n")
    for k, seed in cells:
        here = {r.method: r for r in rows if r.k == k and r.seed == seed}
        best = min(r.objective for r in here.values())
        winners = [m for m, r in here.items()
                   if r.objective <= best + rel_tol * max(1.0, abs(best))]
        for m in winners:
            counts[m] += 1.0 / len(winners)
        kk = int(k) if float(k).is_integer() else k
        out.write(f"{kk!s:>8} {seed:>5} ")
        for m in methods:
            if m not in here:
                out.write(f"{'-':>{width}}")
                continue
            mark = ("*" if m in winners else "") + ("" if here[m].converged else "~")
            out.write(f"{here[m].objective:>{width - 2}.6g}{mark:<2}")
        out.write("\n")
    out.write("\nwins (ties split): " + ", ".join(
        f"{m}={_fmt_count(c)}" for m, c in counts.items()) + "\n")
    out.write("* best objective in the cell; ~ unconverged\n")
    return out.getvalue(), counts


def _fmt_count(c: float) -> str:
    return str(int(c)) if float(c).is_integer() else f"{c:.2f}"
