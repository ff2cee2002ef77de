"""Command line: latwave {analyze,profile,simulate,stability,green,selfcheck}.

Exit codes: 0 success, 2 validation failure (bad config, speed below c*,
violated hypotheses, output collision), 3 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import math
import platform
import shutil
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import scipy

from . import __version__, _backend, selfcheck
from .config import ConfigError, ExperimentConfig, load, loads
from .dispersion import (BelowMinimalSpeedError, DispersionError, analyze, delta_samples,
                         find_cstar)
from .greenlab import (GreenError, GreenProbe, delayed_exp, delayed_exp_series,
                       fourier_coefficients, heat_kernel_mass_and_bound, k2_bound)
from .kernels import KernelError
from .lattice import Grid, LatticeError, NumericalError, Observer, auto_dt, integrate
from .models import ModelError, validate_hypotheses
from .output import write_csv, write_json
from .stability import (StabilityError, energy_diagnostics, make_perturbation,
                        run_stability_experiment)
from .wavefront import ProfileError, relax_profile, tail_slopes

log = logging.getLogger("latwave")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3


class ValidationFailure(Exception):
    pass


# --------------------------------------------------------------------------
# helpers


def _prepare_out(path: Path, force: bool) -> Path:
    if path.exists() and any(path.iterdir()):
        if not force:
            raise ValidationFailure(f"output directory {path} exists and is not empty "
                                    "(use --force to overwrite)")
        shutil.rmtree(path)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _metadata(command: str, cfg: ExperimentConfig | None, timings: dict, extra: dict | None = None) -> dict:
    meta = {
        "command": command,
        "versions": {"latwave": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
        "backend": _backend.NAME,
        "timings_s": timings,
    }
    if cfg is not None:
        meta["config_source"] = cfg.source
        meta["config"] = cfg.effective()
    meta.update(extra or {})
    return meta


def _write_summary(path: Path, lines: list[str]) -> None:
    path.write_text("\n".join(lines) + "\n")


def _below(cs, c: float) -> None:
    if c < cs.c_star * (1 - 1e-9):
        raise BelowMinimalSpeedError(
            f"speed c={c:.10g} is below the minimal speed c*={cs.c_star:.10g}: "
            f"Delta(c, lambda) < 0 for every lambda > 0, so no monotone front exists")


def _profile_for(cfg: ExperimentConfig, problem, c: float):
    p = cfg["profile"]
    return relax_profile(problem, c, T_relax=p["T_relax"], tol=p["tol"], polish=p["polish"],
                         m=cfg["numerics"]["m"])


def _dt(cfg: ExperimentConfig, problem) -> float:
    dt = cfg["numerics"]["dt"]
    return auto_dt(problem) if dt is None else dt


# --------------------------------------------------------------------------
# subcommands


def cmd_analyze(cfg: ExperimentConfig, out: Path) -> tuple[list[str], dict]:
    problem = cfg.build_problem()
    a = cfg["analyze"]
    report = validate_hypotheses(problem.model, seed=cfg.seed)
    write_json(out / "validation.json", report.as_dict())
    if not report.passed:
        raise ValidationFailure("model violates the monostability hypotheses; see validation.json")
    rep = analyze(problem, speeds=a["c_list"], offsets=a["c_offsets"])
    write_json(out / "dispersion_report.json", rep.as_dict())
    lam_max = a["lambda_max"]
    if lam_max is None:
        top = max(rep.lam2) if rep.lam2 else 2 * rep.lam_star
        lam_max = min(1.25 * top, 0.999 * rep.lam_plus) if math.isfinite(rep.lam_plus) else 1.25 * top
    lams = np.linspace(0.0, lam_max, a["n_lambda"])
    speeds = [rep.c_star] + list(rep.speeds)
    vals = delta_samples(problem, speeds, lams)
    write_csv(out / "delta_samples.csv", ["c", "lambda", "Delta"],
              ((c, l, v) for c, row in zip(speeds, vals) for l, v in zip(lams, row)),
              {"c": "wave speed", "lambda": "trial tail rate",
               "Delta": "dispersion function Delta(c, lambda) of the linearization at 0"})
    rows = zip(rep.speeds, rep.lam1, rep.lam2, rep.upsilon,
               [math.nan if m is None else m for m in rep.mu],
               [math.nan if m is None else m for m in rep.mu_lam])
    write_csv(out / "rates.csv", ["c", "lambda1", "lambda2", "upsilon", "mu", "mu_lambda"], rows,
              {"c": "wave speed", "lambda1": "smaller positive root of Delta(c, .) (left tail rate)",
               "lambda2": "larger positive root of Delta(c, .)",
               "upsilon": "positive root of Delta~(c, .) (approach rate to K)",
               "mu": "guaranteed exponential decay rate of perturbations",
               "mu_lambda": "weight exponent attaining mu"})
    lines = [f"model {problem.model.name} {dict(problem.model.params)}  K={problem.K:.10g}",
             f"kernel {problem.kernel.describe()}  d={problem.d}  tau={problem.tau}",
             f"c* = {rep.c_star:.10f}   lambda* = {rep.lam_star:.10f}",
             f"{'c':>12} {'lambda1':>12} {'lambda2':>12} {'upsilon':>12} {'mu':>12}"]
    for c, l1, l2, u, m in zip(rep.speeds, rep.lam1, rep.lam2, rep.upsilon, rep.mu):
        lines.append(f"{c:12.6f} {l1:12.6f} {l2:12.6f} {u:12.6f} "
                     f"{'-' if m is None else format(m, '12.6f'):>12}")
    return lines, {"c_star": rep.c_star, "lambda_star": rep.lam_star}


def cmd_profile(cfg: ExperimentConfig, out: Path) -> tuple[list[str], dict]:
    problem = cfg.build_problem()
    cs = find_cstar(problem)
    c = cfg["profile"]["c"].resolve(cs.c_star)
    _below(cs, c)
    prof = _profile_for(cfg, problem, c)
    prof.write_csv(out / "profile.csv")
    ts = tail_slopes(prof, problem)
    diag = {**prof.diagnostics(), "tail_slopes": ts.__dict__, "c_star": cs.c_star}
    write_json(out / "profile_diagnostics.json", diag)
    lines = [f"front at c = {c:.10f} (c* = {cs.c_star:.10f})",
             f"residual sup = {prof.residual_sup:.3e}  (K = {problem.K:.6g})",
             f"monotonicity margin = {prof.monotonicity_margin:.3e}",
             f"left slope {ts.left_slope:.6f} vs lambda1 {prof.lam_left:.6f}; "
             f"right slope {ts.right_slope:.6f} vs upsilon {prof.upsilon:.6f}"]
    return lines, {"c": c}


def cmd_simulate(cfg: ExperimentConfig, out: Path) -> tuple[list[str], dict]:
    problem = cfg.build_problem()
    s, n = cfg["simulate"], cfg["numerics"]
    T, dt = n["T"], _dt(cfg, problem)
    K = problem.K
    if s["initial"] == "front":
        cs = find_cstar(problem)
        c = s["c"].resolve(cs.c_star)
        _below(cs, c)
        prof = _profile_for(cfg, problem, c)
        x_min = n["x_min"] if n["x_min"] is not None else math.floor(prof.xi[0] - c * T - 10)
        x_max = n["x_max"] if n["x_max"] is not None else math.ceil(prof.xi[-1] + 10)
        initial = lambda x, t: prof(x + c * t)
        reference = lambda t: prof(grid.x + c * t)
    else:
        c = None
        x_min = n["x_min"] if n["x_min"] is not None else -50.0 - 3.0 * T
        x_max = n["x_max"] if n["x_max"] is not None else 50.0
        step_at = s["step_at"]
        initial = lambda x, t: np.where(x >= step_at, K, 0.0)
        reference = None
    grid = Grid(float(x_min), float(x_max), n["m"])
    every = max(1, int(round(s["record_every"] / dt)))
    snap = max(1, int(round(s["snapshot_every"] / dt)))
    ob = Observer(reference=reference, every=every, snapshot_every=snap)
    backend = None if n["backend"] == "auto" else n["backend"]
    run = integrate(problem, grid, dt, T, initial, observers=[ob], backend=backend,
                    tail_tol=cfg["kernel"]["tail_tol"], boundary=s["boundary"])
    run.write_norms_csv(out / "norms.csv")
    run.write_snapshots_csv(out / "snapshots.csv")
    lines = [f"integrated to T = {T} with dt = {dt:.6g} on {grid.n_nodes} nodes ({run.backend})",
             f"solution range [{run.min_value:.6g}, {run.max_value:.6g}], K = {K:.6g}"]
    if c is not None:
        lines.append(f"sup |u - phi(x + c t)| at T: {ob.series()['sup'][-1]:.3e}")
    return lines, {"run": run.metadata()}


def _stability_job(cfg_text: str, source: str, tau: float | None, speed: str | None,
                   out: str) -> dict:
    """One stability experiment; writes into ``out`` only (picklable for the pool)."""
    from .config import parse_speed
    cfg = loads(cfg_text, source)
    st = cfg["stability"]
    problem = cfg.build_problem(tau)
    cs = find_cstar(problem)
    c = (parse_speed(speed) if speed is not None else st["c"]).resolve(cs.c_star)
    _below(cs, c)
    critical = c <= cs.c_star * (1 + 1e-9)
    if critical:
        c = cs.c_star
    prof = _profile_for(cfg, problem, c)
    rate = st["rate"]
    if st["shape"] == "left_decaying" and rate is None:
        rate = (cs.lam_star if critical else prof.lam_left) + 0.02
    pert = make_perturbation(prof, st["shape"], st["amplitude"], st["location"], rate=rate,
                             delta=st["delta"], width=st["width"])
    n = cfg["numerics"]
    res = run_stability_experiment(
        problem, prof, pert, n["T"], dt=n["dt"], fit_window=(st["fit_t0"], st["fit_t1"]),
        reference=st["reference"], squeeze=st["squeeze"], record_every=st["record_every"],
        backend=None if n["backend"] == "auto" else n["backend"])
    outp = Path(out)
    res.write_series_csv(outp / "series.csv")
    summ = res.summary()
    mu1 = 0.0 if critical else float(res.mu_pred)
    ed = energy_diagnostics(res.series, mu1)
    summ["energy"] = ed.__dict__
    summ["tau"] = problem.tau
    write_json(outp / "fit.json", summ)
    return summ


def cmd_stability(cfg: ExperimentConfig, out: Path, jobs: int = 1) -> tuple[list[str], dict]:
    st = cfg["stability"]
    text = cfg.dumps()
    taus = st["tau_list"] or [None]
    speeds = [str(s) for s in st["c_list"]] or [None]
    # validate every speed before launching work
    for tau in taus:
        problem = cfg.build_problem(tau)
        cs = find_cstar(problem)
        for sp in (st["c_list"] or [st["c"]]):
            _below(cs, sp.resolve(cs.c_star))
    tasks = [(tau, sp) for tau in taus for sp in speeds]
    if len(tasks) == 1:
        dirs = [out]
    else:
        dirs = []
        for i, (tau, sp) in enumerate(tasks):
            name = f"job{i:02d}" + ("" if tau is None else f"_tau{tau:g}") + ("" if sp is None else f"_c{i}")
            (out / name).mkdir()
            dirs.append(out / name)
    args = [(text, cfg.source, tau, sp, str(d)) for (tau, sp), d in zip(tasks, dirs)]
    if jobs > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(args))) as ex:
            results = list(ex.map(_stability_job, *zip(*args)))
    else:
        results = [_stability_job(*a) for a in args]
    if len(results) > 1:
        write_csv(out / "sweep.csv", ["tau", "c", "c_star", "mu_pred", "fit_rate", "r2", "floor"],
                  ((r["tau"], r["c"], r["c_star"], math.nan if r["mu_pred"] is None else r["mu_pred"],
                    r["fit"]["rate"], r["fit"]["r2"], r["floor"]) for r in results),
                  {"tau": "delay", "c": "wave speed", "c_star": "minimal speed",
                   "mu_pred": "guaranteed decay rate (nan at the critical speed)",
                   "fit_rate": "fitted decay rate of sup|u - phi| (log-log slope when critical)",
                   "r2": "coefficient of determination of the fit",
                   "floor": "max deviation of the unperturbed run from the exact translate"})
    lines = []
    for r, d in zip(results, dirs):
        f = r["fit"]
        head = f"[{d.name}] tau={r['tau']:g} c={r['c']:.6f} (c*={r['c_star']:.6f})"
        if r["critical"]:
            lines.append(f"{head}: critical, log-log slope {f['rate']:.4f} (R2 {f['r2']:.4f}), "
                         f"sup*sqrt(t) ratio {r['sqrt_t_ratio']:.3f}")
        else:
            lines.append(f"{head}: fitted rate {f['rate']:.4f} vs guaranteed {r['mu_pred']:.4f} "
                         f"(R2 {f['r2']:.5f}), squeeze violation {r['squeeze_violation']:.2e}")
    return lines, {"results": results}


def cmd_green(cfg: ExperimentConfig, out: Path) -> tuple[list[str], dict]:
    g = cfg["green"]
    b, tau = g["b"], g["tau"]
    t = np.linspace(-tau, g["t_max"], g["n_t"])
    E = delayed_exp(b, tau, t)
    Es = np.array([delayed_exp_series(b, tau, float(s)) for s in t])
    write_csv(out / "delayed_exp.csv", ["t", "E", "E_series"], zip(t, E, Es),
              {"t": "time", "E": "delayed exponential (method of steps polynomials)",
               "E_series": "delayed exponential (closed finite sum)"})
    problem = cfg.build_problem()
    cs = find_cstar(problem)
    rows = []
    for tt in g["times"]:
        r = heat_kernel_mass_and_bound(GreenProbe(problem.d, g["eps"], cs.lam_star, tt))
        rows.append((tt, r.mass, r.center, r.peak, r.bound))
    write_csv(out / "heat_kernel.csv", ["t", "mass", "center", "peak", "bound"], rows,
              {"t": "time", "mass": "sum over lattice sites of the weighted heat kernel",
               "center": "heat kernel value at site 0",
               "peak": "(1/2pi) int exp(t Re q) dw, bound on every site value",
               "bound": "sqrt(pi / (d t eps))"})
    w = np.linspace(-np.pi, np.pi, g["n_omega"])
    c1, c2 = fourier_coefficients(problem, cs.c_star, cs.lam_star, w)
    k2 = k2_bound(problem, cs.c_star, cs.lam_star)
    write_csv(out / "fourier.csv", ["omega", "re_c1", "im_c1", "abs_c2", "k2"],
              ((a, x.real, x.imag, abs(y), k2) for a, x, y in zip(w, c1, c2)),
              {"omega": "Fourier variable", "re_c1": "real part of c1(omega)",
               "im_c1": "imaginary part of c1(omega)", "abs_c2": "|c2(omega)|",
               "k2": "uniform bound on |c2|"})
    worst = max(r[3] / r[4] for r in rows)
    lines = [f"delayed exponential b={b} tau={tau}: max |E - series| = {np.max(np.abs(E - Es)):.2e}",
             f"heat kernel: max |mass - 1| = {max(abs(r[1] - 1) for r in rows):.2e}, "
             f"max peak/bound = {worst:.3e}",
             f"max |c2| / k2 = {np.max(np.abs(c2)) / k2:.12f}"]
    return lines, {"c_star": cs.c_star, "lambda_star": cs.lam_star}


# --------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="latwave", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"latwave {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, help_ in (("analyze", "minimal speed, tail rates and decay rates"),
                        ("profile", "compute a front profile"),
                        ("simulate", "integrate the lattice equation"),
                        ("stability", "perturbation decay experiment or sweep"),
                        ("green", "delayed exponential, heat kernel and Fourier bounds"),
                        ("selfcheck", "run the built-in identity checks")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", type=Path, required=name != "selfcheck", help="INI config file")
        p.add_argument("--out", type=Path, help="output directory (default: [output] dir/<command>)")
        p.add_argument("--jobs", type=int, default=1, help="concurrent sweep jobs")
        p.add_argument("--force", action="store_true", help="overwrite a non-empty output directory")
        p.add_argument("--verbose", "-v", action="store_true")
    return ap


COMMANDS = {"analyze": cmd_analyze, "profile": cmd_profile, "simulate": cmd_simulate,
            "stability": cmd_stability, "green": cmd_green}


def run(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.command == "selfcheck":
        results = selfcheck.run(verbose=args.verbose)
        for name, ok, detail in results:
            print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
        failed = sum(not ok for _, ok, _ in results)
        print(f"{len(results) - failed}/{len(results)} checks passed")
        return EXIT_OK if not failed else EXIT_NUMERICAL
    if args.jobs < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return EXIT_VALIDATION
    t0 = time.perf_counter()
    try:
        cfg = load(args.config)
        out = _prepare_out(args.out or Path(cfg["output"]["dir"]) / args.command, args.force)
        fn = COMMANDS[args.command]
        lines, extra = fn(cfg, out, args.jobs) if args.command == "stability" else fn(cfg, out)
    except (ConfigError, ModelError, KernelError, BelowMinimalSpeedError, ValidationFailure) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ProfileError, NumericalError, StabilityError, GreenError, DispersionError,
            LatticeError, FloatingPointError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    timings = {"total": time.perf_counter() - t0}
    write_json(out / "run_metadata.json", _metadata(args.command, cfg, timings, extra))
    _write_summary(out / "summary.txt", lines)
    print("\n".join(lines))
    log.info("outputs in %s", out)
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
