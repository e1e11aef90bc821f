"""Reproducible experiment runner.

Parses line-oriented experiment configs, orchestrates Monte Carlo runs over
the selected algorithm, aggregates metrics (interference CDFs, convergence
traces, budget trajectories), and writes the documented CSV outputs plus a
MANIFEST with content hashes. Given (config, seed) every output byte is
deterministic, including under the worker pool: runs write into
preallocated slots keyed by run index.

Config grammar (see data/reference.cfg for the shipped §-baseline file):
lines are ``key = value`` under ``[section]`` headers; ``#`` or ``;`` start
comments; unknown sections or keys are rejected.

CSV schemas (fixed headers):
    interference_cdf.csv: run,pu,link,nominal_w,worst_case_w,realized_w,limit_w
    mse_trace.csv:        run,cycle,sum_mse,sum_utility
    summary.csv:          run,algo,final_sum_mse,cycles,feasible
    budgets.csv:          run,master_iter,link,iota_w,lambda
"""

from __future__ import annotations

import csv
import hashlib
import io
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .allocator import AllocatorOptions, run_primal_decomposition
from .bca import BCAOptions, run_centralized
from .mse import interference, utility, worst_case_interference
from .scenario import NetworkConfig, generate, scenario_preset


class ParseError(ValueError):
    """Malformed config line (message carries the line number)."""


class UnknownKey(ParseError):
    """Config key or section not in the documented grammar."""


class RangeError(ParseError):
    """Config value outside its documented range."""


class EmptyInput(ValueError):
    """empirical_cdf needs at least one value."""


class ExperimentError(RuntimeError):
    """A run failed; partial results were flushed with a MANIFEST note."""


ALGOS = ("bca", "bca_proximal", "primal_decomp", "nonrobust")
SWEEP_PARAMETERS = ("iota_max", "rho", "snr_db")


@dataclass
class ExperimentConfig:
    scenario: str = "c1"
    algo: str = "bca"
    runs: int = 200
    seed: int = 1
    out_dir: str = "out"
    threads: int = 1
    figures: bool = True
    # network ([network] section; §-baseline defaults)
    links: int = 4
    tx_antennas: int = 2
    rx_antennas: int = 2
    pu_count: int = 1
    pu_antennas: int = 2
    path_loss_exponent: float = 3.5
    direct_distance_m: float = 30.0
    cross_distance_min_m: float = 30.0
    cross_distance_max_m: float = 100.0
    snr_db: float = 15.0
    noise_power_w: float = 2e-7
    iota_max_w: float = 4e-7
    rho: float = 0.05
    # bca ([bca] section)
    tau: float = 0.1
    upsilon: float = 1e-5
    max_cycles: int = 100
    neighbor_threshold: float = 0.0
    # primal decomposition ([decomp] section)
    step0_w: float | None = None
    max_masters: int = 100
    # sweep ([sweep] section)
    sweep_parameter: str | None = None
    sweep_values: tuple = ()

    def to_network_config(self) -> NetworkConfig:
        net = NetworkConfig(
            K=self.links, M=self.tx_antennas, N=self.rx_antennas,
            num_pu=self.pu_count, L=self.pu_antennas,
            eta=self.path_loss_exponent, d_direct=self.direct_distance_m,
            d_cross_range=(self.cross_distance_min_m, self.cross_distance_max_m),
            snr_db=self.snr_db, sigma2=self.noise_power_w,
            iota_max=self.iota_max_w,
            budget_mode=("aggregate" if self.algo == "primal_decomp"
                         else "prepartitioned_equal"),
            rho=self.rho, seed=self.seed)
        return scenario_preset(self.scenario, net)

    def bca_options(self) -> BCAOptions:
        return BCAOptions(
            mode="proximal" if self.algo == "bca_proximal" else "plain",
            tau=self.tau, upsilon=self.upsilon, max_cycles=self.max_cycles,
            neighbor_threshold=self.neighbor_threshold,
            nonrobust=self.algo == "nonrobust")

    def allocator_options(self) -> AllocatorOptions:
        return AllocatorOptions(bca=self.bca_options(), s0=self.step0_w,
                                max_masters=self.max_masters)

    def echo(self) -> list:
        """Resolved (section, key, value) triples for the MANIFEST.

        out_dir and threads are omitted: neither affects the computed
        results, and identical (config, seed) pairs must produce
        byte-identical outputs wherever and however they execute.
        """
        out = []
        for section, keys in _SCHEMA.items():
            for key, (attr, _) in keys.items():
                if attr in ("out_dir", "threads"):
                    continue
                val = getattr(self, attr)
                if attr == "sweep_values":
                    val = ", ".join(repr(v) for v in val)
                out.append((section, key, val))
        return out


def _pos_int(v):
    iv = int(v)
    if iv < 1:
        raise ValueError
    return iv


def _nonneg_float(v):
    fv = float(v)
    if fv < 0:
        raise ValueError
    return fv


def _pos_float(v):
    fv = float(v)
    if fv <= 0:
        raise ValueError
    return fv


def _bool(v):
    s = v.strip().lower()
    if s in ("true", "yes", "1", "on"):
        return True
    if s in ("false", "no", "0", "off"):
        return False
    raise ValueError


def _choice(options):
    def cast(v):
        if v not in options:
            raise ValueError
        return v
    return cast


def _float_list(v):
    vals = tuple(float(tok) for tok in v.replace(",", " ").split())
    if not vals:
        raise ValueError
    return vals


def _opt_pos_float(v):
    if v.strip() == "":
        return None
    return _pos_float(v)


# section -> key -> (ExperimentConfig attribute, caster)
_SCHEMA = {
    "experiment": {
        "scenario": ("scenario", _choice(("c1", "c2"))),
        "algo": ("algo", _choice(ALGOS)),
        "runs": ("runs", _pos_int),
        "seed": ("seed", int),
        "out_dir": ("out_dir", str.strip),
        "threads": ("threads", _pos_int),
        "figures": ("figures", _bool),
    },
    "network": {
        "links": ("links", _pos_int),
        "tx_antennas": ("tx_antennas", _pos_int),
        "rx_antennas": ("rx_antennas", _pos_int),
        "pu_count": ("pu_count", _pos_int),
        "pu_antennas": ("pu_antennas", _pos_int),
        "path_loss_exponent": ("path_loss_exponent", _pos_float),
        "direct_distance_m": ("direct_distance_m", _pos_float),
        "cross_distance_min_m": ("cross_distance_min_m", _pos_float),
        "cross_distance_max_m": ("cross_distance_max_m", _pos_float),
        "snr_db": ("snr_db", float),
        "noise_power_w": ("noise_power_w", _pos_float),
        "iota_max_w": ("iota_max_w", _pos_float),
        "rho": ("rho", _nonneg_float),
    },
    "bca": {
        "tau": ("tau", _pos_float),
        "upsilon": ("upsilon", _pos_float),
        "max_cycles": ("max_cycles", _pos_int),
        "neighbor_threshold": ("neighbor_threshold", _nonneg_float),
    },
    "decomp": {
        "step0_w": ("step0_w", _opt_pos_float),
        "max_masters": ("max_masters", _pos_int),
    },
    "sweep": {
        "parameter": ("sweep_parameter", _choice(SWEEP_PARAMETERS)),
        "values": ("sweep_values", _float_list),
    },
}


def parse_config(text: str) -> ExperimentConfig:
    """Parse the key = value grammar into a fully-populated config.

    Empty input yields all defaults (the §-baseline). Unknown sections or
    keys are rejected; out-of-range values raise RangeError with the line.
    """
    cfg = ExperimentConfig()
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].split(";", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ParseError(f"line {lineno}: malformed section header {raw!r}")
            section = line[1:-1].strip()
            if section not in _SCHEMA:
                raise UnknownKey(f"line {lineno}: unknown section [{section}]")
            continue
        if "=" not in line:
            raise ParseError(f"line {lineno}: expected key = value, got {raw!r}")
        if section is None:
            raise ParseError(f"line {lineno}: key before any [section] header")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _SCHEMA[section]:
            raise UnknownKey(f"line {lineno}: unknown key {key!r} in [{section}]")
        attr, cast = _SCHEMA[section][key]
        try:
            setattr(cfg, attr, cast(value))
        except (ValueError, TypeError):
            raise RangeError(
                f"line {lineno}: invalid value {value!r} for {section}.{key}"
            ) from None
    if cfg.cross_distance_max_m < cfg.cross_distance_min_m:
        raise RangeError("cross_distance_max_m < cross_distance_min_m")
    return cfg


def empirical_cdf(values) -> list:
    """Right-continuous empirical CDF: pairs (sorted value, fraction <= it)."""
    values = list(values)
    if not values:
        raise EmptyInput("empirical_cdf needs at least one value")
    v = np.sort(np.asarray(values, dtype=float))
    n = v.size
    pct = np.searchsorted(v, v, side="right") / n
    return list(zip(v.tolist(), pct.tolist()))


@dataclass
class MetricTable:
    """Long-format per-run metrics plus named CDF summaries."""

    rows: list = field(default_factory=list)   # (run, seed, metric, value)
    cdfs: dict = field(default_factory=dict)   # name -> [(value, pct)]

    def add(self, run: int, seed: int, metric: str, value: float):
        self.rows.append((run, seed, metric, float(value)))

    def values(self, metric: str) -> np.ndarray:
        return np.array([v for (_, _, m, v) in self.rows if m == metric])

    def build_cdf(self, name: str, values) -> None:
        self.cdfs[name] = empirical_cdf(values)


@dataclass
class RunResult:
    run: int
    seed: int
    algo: str
    interference: list          # (pu, link, nominal, worst, realized, limit)
    trace: list                 # (cycle, sum_mse, sum_utility)
    budgets: list               # (master_iter, link, iota, lambda)
    final_sum_mse: float
    final_u: list
    cycles: int
    converged: bool
    error: str | None = None


def _execute_run(cfg: ExperimentConfig, run_index: int) -> RunResult:
    net = cfg.to_network_config()
    ch = generate(net, run_index=run_index)
    budget_rows = []
    if cfg.algo == "primal_decomp":
        prof, state, trace = run_primal_decomposition(
            ch, cfg.iota_max_w, cfg.allocator_options())
        limits = np.tile(state.iota, (ch.num_pu, 1))
        for row in trace.rows:
            for k in range(ch.K):
                budget_rows.append((row["cycle"], k,
                                    row[f"iota_{k}"], row[f"lambda_{k}"]))
    else:
        budgets = np.full((ch.num_pu, ch.K), cfg.iota_max_w / ch.K)
        prof, trace = run_centralized(ch, budgets, cfg.bca_options())
        limits = budgets

    rep = utility(ch, prof)
    interf = []
    for p in range(ch.num_pu):
        for k in range(ch.K):
            nominal = interference(ch, prof.Q[k], k, p)
            worst = worst_case_interference(
                ch.G_hat[p][k], float(ch.eps[p, k]), prof.Q[k])[0]
            realized = interference(ch, prof.Q[k], k, p, use_true=True)
            interf.append((p, k, nominal, worst, realized,
                           float(limits[p, k])))
    trace_rows = [(r["cycle"], r["sum_mse"], r["sum_utility"])
                  for r in trace.rows]
    return RunResult(
        run=run_index, seed=cfg.seed, algo=cfg.algo, interference=interf,
        trace=trace_rows, budgets=budget_rows,
        final_sum_mse=rep.sum_mse, final_u=list(rep.u),
        cycles=trace.cycles, converged=trace.converged)


def _execute_run_safe(args) -> RunResult:
    cfg, run_index = args
    try:
        return _execute_run(cfg, run_index)
    except Exception as exc:  # flushed to the MANIFEST by the caller
        return RunResult(run=run_index, seed=cfg.seed, algo=cfg.algo,
                         interference=[], trace=[], budgets=[],
                         final_sum_mse=float("nan"), final_u=[],
                         cycles=0, converged=False,
                         error=f"{type(exc).__name__}: {exc}")


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _fmt(x: float) -> str:
    return repr(float(x))


def run_experiment(cfg: ExperimentConfig, out_dir: str | None = None) -> MetricTable:
    """Execute cfg.runs independent instances and write the output files.

    Outputs: interference_cdf.csv, mse_trace.csv, summary.csv, budgets.csv,
    figures (unless disabled), and a MANIFEST listing the resolved config
    and a sha256 per file. Raises ExperimentError after flushing partial
    results if any run failed.
    """
    out = out_dir or cfg.out_dir
    os.makedirs(out, exist_ok=True)

    tasks = [(cfg, r) for r in range(cfg.runs)]
    if cfg.threads > 1:
        with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(_execute_run_safe, tasks, chunksize=1))
    else:
        results = [_execute_run_safe(t) for t in tasks]
    results.sort(key=lambda r: r.run)  # defensive; map preserves order

    failures = [r for r in results if r.error]

    interf_rows, trace_rows, summary_rows, budget_rows = [], [], [], []
    table = MetricTable()
    for r in results:
        if r.error:
            continue
        feasible = all(w <= lim * (1 + 1e-6) and rz <= lim * (1 + 1e-6)
                       for (_, _, _, w, rz, lim) in r.interference)
        for (p, k, nom, wc, rz, lim) in r.interference:
            interf_rows.append((r.run, p, k, _fmt(nom), _fmt(wc), _fmt(rz),
                                _fmt(lim)))
        for (cyc, mse, su) in r.trace:
            trace_rows.append((r.run, cyc, _fmt(mse), _fmt(su)))
        summary_rows.append((r.run, r.algo, _fmt(r.final_sum_mse), r.cycles,
                             int(feasible)))
        for (mi, k, iw, lw) in r.budgets:
            budget_rows.append((r.run, mi, k, _fmt(iw), _fmt(lw)))
        table.add(r.run, r.seed, "final_sum_mse", r.final_sum_mse)
        table.add(r.run, r.seed, "cycles", r.cycles)
        table.add(r.run, r.seed, "converged", float(r.converged))
        table.add(r.run, r.seed, "feasible", float(feasible))
        total_rz = sum(rz for (_, _, _, _, rz, _) in r.interference)
        total_wc = sum(w for (_, _, _, w, _, _) in r.interference)
        table.add(r.run, r.seed, "total_realized_w", total_rz)
        table.add(r.run, r.seed, "total_worst_case_w", total_wc)

    ok = [r for r in results if not r.error]
    if ok:
        table.build_cdf("total_realized_w",
                        [sum(rz for (_, _, _, _, rz, _) in r.interference)
                         for r in ok])
        table.build_cdf("total_worst_case_w",
                        [sum(w for (_, _, _, w, _, _) in r.interference)
                         for r in ok])
        table.build_cdf("final_sum_mse", [r.final_sum_mse for r in ok])

    _write_csv(os.path.join(out, "interference_cdf.csv"),
               ["run", "pu", "link", "nominal_w", "worst_case_w",
                "realized_w", "limit_w"], interf_rows)
    _write_csv(os.path.join(out, "mse_trace.csv"),
               ["run", "cycle", "sum_mse", "sum_utility"], trace_rows)
    _write_csv(os.path.join(out, "summary.csv"),
               ["run", "algo", "final_sum_mse", "cycles", "feasible"],
               summary_rows)
    _write_csv(os.path.join(out, "budgets.csv"),
               ["run", "master_iter", "link", "iota_w", "lambda"],
               budget_rows)

    files = ["interference_cdf.csv", "mse_trace.csv", "summary.csv",
             "budgets.csv"]
    if cfg.figures and ok:
        from . import plots
        files += plots.render_experiment_figures(cfg, table, out)

    notes = [f"run {r.run}: {r.error}" for r in failures]
    write_manifest(cfg, out, files, notes=notes)

    if failures:
        raise ExperimentError(
            f"{len(failures)} of {cfg.runs} runs failed; partial results "
            f"and MANIFEST written to {out} ({notes[0]})")
    return table


def run_sweep(cfg: ExperimentConfig, out_dir: str | None = None):
    """Run the configured parameter sweep: one experiment per value in a
    point_<i>/ subdirectory plus a top-level sweep.csv and figure."""
    if not cfg.sweep_parameter:
        raise RangeError("sweep requires [sweep] parameter and values")
    out = out_dir or cfg.out_dir
    os.makedirs(out, exist_ok=True)
    attr = {"iota_max": "iota_max_w", "rho": "rho", "snr_db": "snr_db"}
    rows = []
    tables = []
    files = []
    for i, value in enumerate(cfg.sweep_values):
        sub = replace(cfg, sweep_parameter=None, sweep_values=())
        setattr(sub, attr[cfg.sweep_parameter], value)
        point_dir = os.path.join(out, f"point_{i}")
        table = run_experiment(sub, out_dir=point_dir)
        tables.append(table)
        mses = table.values("final_sum_mse")
        rows.append((cfg.sweep_parameter, _fmt(value), _fmt(mses.mean()),
                     _fmt(mses.std(ddof=1) / np.sqrt(len(mses))
                          if len(mses) > 1 else 0.0),
                     len(mses)))
        files.append(f"point_{i}/MANIFEST")
    _write_csv(os.path.join(out, "sweep.csv"),
               ["parameter", "value", "mean_sum_mse", "stderr_sum_mse",
                "runs"], rows)
    files.insert(0, "sweep.csv")
    if cfg.figures:
        from . import plots
        pts = [(float(v), float(m), float(s))
               for (_, v, m, s, _) in rows]
        fig = plots.plot_sweep(pts, cfg.sweep_parameter,
                               os.path.join(out, "sweep_mse.png"))
        files.append(fig)
    write_manifest(cfg, out, files)
    return rows, tables


def write_manifest(cfg: ExperimentConfig, out: str, files, notes=()) -> None:
    lines = ["# crbeam manifest v1", "# config"]
    for section, key, value in cfg.echo():
        lines.append(f"{section}.{key} = {value}")
    if notes:
        lines.append("# incomplete")
        lines.extend(str(n) for n in notes)
    lines.append("# files")
    for name in files:
        digest = _sha256(os.path.join(out, name))
        lines.append(f"{digest}  {name}")
    with open(os.path.join(out, "MANIFEST"), "w") as fh:
        fh.write("\n".join(lines) + "\n")


def verify_manifest(out: str) -> list:
    """Re-hash every file listed in a MANIFEST; returns mismatched names."""
    bad = []
    with open(os.path.join(out, "MANIFEST")) as fh:
        lines = fh.read().splitlines()
    in_files = False
    for line in lines:
        if line.strip() == "# files":
            in_files = True
            continue
        if not in_files or not line.strip():
            continue
        digest, name = line.split(None, 1)
        if _sha256(os.path.join(out, name)) != digest:
            bad.append(name)
    return bad


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()
