"""Command-line entry point.

    crbeam simulate --config cfg [--scenario c1] [--algo bca] [--runs N]
                    [--seed S] [--out DIR] [--threads T] [--no-figures]
    crbeam sweep    ... (same flags; requires a [sweep] section or
                    --parameter/--values)
    crbeam check    [--manifest DIR] [--trials N] [--seed S]

`simulate` runs the Monte Carlo experiment and writes the CSV outputs,
figures, and MANIFEST; `sweep` repeats it over a parameter grid; `check`
runs the solver-certificate, S-procedure, and simplex-projection invariant
suites on random fixtures (and verifies a MANIFEST when given one).
Defaults reproduce the shipped reference configuration (see
crbeam/data/reference.cfg).
"""

from __future__ import annotations

import argparse
import sys
from importlib import resources

from . import harness


def load_config(path: str | None) -> harness.ExperimentConfig:
    if path is None:
        return harness.ExperimentConfig()
    with open(path) as fh:
        return harness.parse_config(fh.read())


def reference_config_text() -> str:
    return resources.files("crbeam").joinpath("data/reference.cfg").read_text()


def _apply_overrides(cfg, args) -> None:
    if args.scenario:
        cfg.scenario = args.scenario
    if args.algo:
        cfg.algo = args.algo
    if args.runs is not None:
        if args.runs < 1:
            raise harness.RangeError("--runs must be >= 1")
        cfg.runs = args.runs
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out:
        cfg.out_dir = args.out
    if args.threads is not None:
        if args.threads < 1:
            raise harness.RangeError("--threads must be >= 1")
        cfg.threads = args.threads
    if args.no_figures:
        cfg.figures = False


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    _apply_overrides(cfg, args)
    table = harness.run_experiment(cfg)
    mses = table.values("final_sum_mse")
    feas = table.values("feasible")
    print(f"{cfg.algo} on {cfg.scenario}: {cfg.runs} runs -> {cfg.out_dir}")
    print(f"mean sum MSE {mses.mean():.6f}, feasible {int(feas.sum())}/{len(feas)}")
    return 0


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    _apply_overrides(cfg, args)
    if args.parameter:
        cfg.sweep_parameter = args.parameter
    if args.values:
        cfg.sweep_values = tuple(float(v) for v in args.values.split(","))
    rows, _ = harness.run_sweep(cfg)
    print(f"sweep {cfg.sweep_parameter} over {len(rows)} points -> {cfg.out_dir}")
    for (_, value, mean, se, runs) in rows:
        print(f"  {cfg.sweep_parameter} = {float(value):.6g}: "
              f"mean sum MSE {float(mean):.6f} (se {float(se):.2g}, n={runs})")
    return 0


def cmd_check(args) -> int:
    import numpy as np

    from .allocator import project_simplex
    from .lmi import s_procedure_feasible
    from .mse import worst_case_interference
    from .sdp import check_certificate, solve

    rng = np.random.default_rng(args.seed)
    failures = 0

    def report(name, ok, detail=""):
        nonlocal failures
        print(f"[{'PASS' if ok else 'FAIL'}] {name}{detail and ' ' + detail}")
        failures += 0 if ok else 1

    # solver certificates on random min-eigenvalue fixtures
    from .sdp import SDPBlock, SDPProblem
    worst_err = 0.0
    ok = True
    for _ in range(args.trials):
        m = int(rng.integers(2, 5))
        a = rng.standard_normal((m, m))
        cmat = 0.5 * (a + a.T)
        basis = []
        for i in range(m):
            e = np.zeros((m, m))
            e[i, i] = 1.0
            basis.append(e)
            for j in range(i + 1, m):
                e = np.zeros((m, m))
                e[i, j] = e[j, i] = 1.0
                basis.append(e)
        c = np.array([np.sum(cmat * e) for e in basis])
        blk = SDPBlock(size=m, var_idx=np.arange(len(basis)),
                       F0=np.zeros((m, m)), F=np.array(basis))
        tr = np.array([np.trace(e) for e in basis])
        prob = SDPProblem(n=len(basis), c=c, blocks=[blk],
                          lin_A=np.vstack([tr, -tr]),
                          lin_b=np.array([1.0, -1.0]))
        sol = solve(prob)
        if sol.status != "Optimal":
            ok = False
            break
        check_certificate(prob, sol)
        worst_err = max(worst_err,
                        abs(sol.primal_obj - np.linalg.eigvalsh(cmat)[0]))
    report("sdp solver certificates", ok and worst_err <= 1e-7,
           f"(max objective error {worst_err:.2e})")

    # S-procedure vs worst-case oracle
    bad = 0
    for _ in range(args.trials):
        L, m = int(rng.integers(1, 3)), int(rng.integers(1, 3))
        g = rng.standard_normal((L, m)) + 1j * rng.standard_normal((L, m))
        aa = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))
        q = aa @ aa.conj().T / m
        eps = float(rng.uniform(0, 1))
        wc, _ = worst_case_interference(g, eps, q)
        iota = wc * float(rng.uniform(0.5, 1.5))
        agree = s_procedure_feasible(g, eps, iota, q) == (wc <= iota)
        if not agree and abs(wc - iota) > 1e-7 * max(1.0, wc):
            bad += 1
    report("s-procedure equivalence", bad == 0, f"({bad} disagreements)")

    # simplex projection vs direct optimality conditions
    ok = True
    for _ in range(args.trials):
        n = int(rng.integers(1, 7))
        v = rng.uniform(-2, 2, size=n)
        cmax = float(rng.uniform(0.1, 3.0))
        x = project_simplex(v, cmax)
        ok &= bool(np.all(x >= -1e-12) and x.sum() <= cmax + 1e-12)
        # projection property: <v - x, y - x> <= 0 for random feasible y
        for _ in range(20):
            y = rng.uniform(0, 1, size=n)
            y = y / max(y.sum() / cmax, 1.0)
            ok &= float((v - x) @ (y - x)) <= 1e-9
    report("simplex projection optimality", ok)

    if args.manifest:
        bad_files = harness.verify_manifest(args.manifest)
        report(f"manifest {args.manifest}", not bad_files,
               f"({len(bad_files)} hash mismatches)" if bad_files else "")

    return 1 if failures else 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="crbeam",
        description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="Reference config (all defaults):\n\n" + reference_config_text())
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="experiment config file")
        p.add_argument("--scenario", choices=("c1", "c2"))
        p.add_argument("--algo", choices=harness.ALGOS)
        p.add_argument("--runs", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")
        p.add_argument("--threads", type=int)
        p.add_argument("--no-figures", action="store_true",
                       help="skip figure rendering")

    ps = sub.add_parser("simulate", help="run a Monte Carlo experiment")
    common(ps)
    ps.set_defaults(func=cmd_simulate)

    pw = sub.add_parser("sweep", help="run an experiment per grid point")
    common(pw)
    pw.add_argument("--parameter", choices=harness.SWEEP_PARAMETERS)
    pw.add_argument("--values", help="comma-separated grid values")
    pw.set_defaults(func=cmd_sweep)

    pc = sub.add_parser("check", help="run invariant suites on fixtures")
    pc.add_argument("--trials", type=int, default=100)
    pc.add_argument("--seed", type=int, default=0)
    pc.add_argument("--manifest", help="verify hashes of an output directory")
    pc.set_defaults(func=cmd_check)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (harness.ParseError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except harness.ExperimentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
