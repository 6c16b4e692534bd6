"""Verification suite: every release criterion, runnable at two scales.

Each criterion is a function returning a CriterionResult with one line per
check.  "full" runs the criteria at production scale (minutes); "quick"
shrinks ensembles and horizons for a smoke pass (about a minute) while
keeping every tolerance rule intact - statistical tolerances are phrased
in standard errors, so they adapt to the scale automatically.

Expensive ensemble runs are cached and shared between criteria that test
different properties of the same run.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .analytic import (
    Beta,
    bisect_alpha_minus,
    eval_poly,
    overlap_limit_stationary,
    solve_alpha,
)
from .ensemble import (
    EnsembleCurve,
    ModelParams,
    fit_convergence,
    run_ensemble,
)
from .moments import exact_en, exact_ez2
from .rng import DOMAIN_SDE_PATH, stream
from .sampler import EnvironmentGrid, estimate_partition
from .sde import PolymerState, NoiseIncrement, StepScheme, step, step_block

__all__ = ["CriterionResult", "CRITERIA", "run_criterion", "run_all", "format_table"]

_WORKERS = 4


@dataclass
class CriterionResult:
    cid: int
    name: str
    passed: bool
    seconds: float
    details: list[str] = field(default_factory=list)

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] criterion {self.cid}: {self.name} ({self.seconds:.1f} s)"


class _Check:
    """Collects per-check lines and the overall verdict."""

    def __init__(self) -> None:
        self.details: list[str] = []
        self.passed = True

    def add(self, ok: bool, line: str) -> None:
        self.passed &= bool(ok)
        self.details.append(f"  [{'ok' if ok else 'FAIL'}] {line}")

    def note(self, line: str) -> None:
        self.details.append(f"  [note] {line}")


_curve_cache: dict[tuple, EnsembleCurve] = {}


def _cached_run(params: ModelParams) -> EnsembleCurve:
    key = (
        params.beta.value, params.dt, params.horizon, params.n_paths,
        params.scheme.value, params.output_stride, params.master_seed,
    )
    if key not in _curve_cache:
        _curve_cache[key] = run_ensemble(params, workers=_WORKERS)
    return _curve_cache[key]


def _run_params(scale: str) -> dict[str, ModelParams]:
    """The shared ensemble runs, keyed by role."""
    if scale == "full":
        return {
            "beta1": ModelParams(Beta(1.0), dt=1e-3, horizon=10.0, n_paths=100_000,
                                 master_seed=101),
            "beta05": ModelParams(Beta(0.5), dt=1e-3, horizon=5.0, n_paths=100_000,
                                  master_seed=105),
            "beta2": ModelParams(Beta(2.0), dt=5e-4, horizon=10.0, n_paths=100_000,
                                 master_seed=102),
            "fe": ModelParams(Beta(1.0), dt=1e-3, horizon=20.0, n_paths=100_000,
                              master_seed=106),
        }
    return {
        "beta1": ModelParams(Beta(1.0), dt=2e-3, horizon=5.0, n_paths=8192,
                             master_seed=101),
        "beta05": ModelParams(Beta(0.5), dt=2e-3, horizon=5.0, n_paths=8192,
                              master_seed=105),
        "beta2": ModelParams(Beta(2.0), dt=1e-3, horizon=5.0, n_paths=8192,
                             master_seed=102),
        "fe": ModelParams(Beta(1.0), dt=2e-3, horizon=10.0, n_paths=8192,
                          master_seed=106),
    }


def _tail_se(curve: EnsembleCurve, tail_fraction: float = 0.2) -> float:
    """Conservative standard error for the tail-averaged overlap (upper
    bounds the SE of a mean of positively correlated estimates)."""
    tail = curve.times >= (1.0 - tail_fraction) * curve.horizon
    return float(curve.se_overlap[tail].mean())


# --------------------------------------------------------------------------
# criteria


def _c1_exact_identities(scale: str) -> _Check:
    c = _Check()
    betas = np.logspace(-3, 2, 50)
    worst_p1 = 0.0
    worst_vieta = 0.0
    lam_min = math.inf
    for b in betas:
        beta = Beta(float(b))
        worst_p1 = max(worst_p1, abs(eval_poly(beta, 1.0) + 2.0))
        sol = solve_alpha(beta)
        vieta_sum = abs((sol.alpha_minus + sol.alpha_plus) - 2.0 * sol.a) / (2.0 * sol.a)
        prod_ref = sol.a - 1.0 / 6.0
        vieta_prod = abs(sol.alpha_minus * sol.alpha_plus - prod_ref) / prod_ref
        worst_vieta = max(worst_vieta, vieta_sum, vieta_prod)
        lam_min = min(lam_min, sol.rate_lambda)
    c.add(worst_p1 <= 1e-10, f"P(1) = -2 on the grid: max |err| = {worst_p1:.2e} (tol 1e-10)")
    c.add(worst_vieta <= 1e-12, f"Vieta identities: max rel err = {worst_vieta:.2e} (tol 1e-12)")
    c.add(lam_min > 0.0, f"decay rate positive on the grid: min lambda = {lam_min:.6f}")
    small = abs(solve_alpha(Beta(1e-3)).alpha_minus - 0.5)
    c.add(small < 1e-3, f"|alpha_minus(1e-3) - 1/2| = {small:.2e} (tol 1e-3)")
    return c


def _c2_deterministic_reduction(scale: str) -> _Check:
    c = _Check()
    params = ModelParams(Beta(0.0), dt=1e-3, horizon=5.0, n_paths=4, master_seed=100)
    curve = _cached_run(params)
    ref = 0.5 * (1.0 + np.exp(-4.0 * curve.times))
    err = float(np.abs(curve.mean_overlap - ref).max())
    c.add(err <= 1e-6, f"b=0 overlap matches (1+exp(-4t))/2: max |err| = {err:.2e} (tol 1e-6)")
    return c


def _c3_martingale(scale: str) -> _Check:
    c = _Check()
    curve = _cached_run(_run_params(scale)["beta1"])
    dev = np.abs(curve.mean_z - 1.0)
    allowed = 3.0 * curve.se_z + 1e-12
    bad = int(np.count_nonzero(dev > allowed))
    worst = float((dev / np.maximum(allowed, 1e-300)).max())
    c.add(
        bad == 0,
        f"|E[Z_t] - 1| < 3 SE at all {len(curve.times)} output times "
        f"(worst ratio {worst:.2f}, violations {bad})",
    )
    return c


def _c4_moment_oracle(scale: str) -> _Check:
    c = _Check()
    runs = _run_params(scale)
    t_checks = (0.5, 1.0, 2.0, 5.0)
    for role in ("beta05", "beta1"):
        params = runs[role]
        curve = _cached_run(params)
        beta = params.beta
        for t in t_checks:
            if t > curve.horizon + 1e-12:
                continue
            j = int(np.argmin(np.abs(curve.times - t)))
            for label, mean, se, ref in (
                ("E[N]", curve.mean_n[j], curve.se_n[j], exact_en(beta, t)),
                ("E[Z^2]", curve.mean_z2[j], curve.se_z2[j], exact_ez2(beta, t)),
            ):
                dev = abs(float(mean) - ref)
                tol = 3.0 * float(se) + 1e-12
                c.add(
                    dev <= tol,
                    f"b={beta.value} t={t}: {label} dev {dev:.3e} <= 3 SE {tol:.3e}",
                )
    return c


def _c5_overlap_limit(scale: str) -> _Check:
    c = _Check()
    runs = _run_params(scale)
    agree = abs(solve_alpha(Beta(2.0)).alpha_minus - bisect_alpha_minus(Beta(2.0)))
    c.add(agree <= 1e-10, f"quadratic vs bisection alpha_minus(2): |diff| = {agree:.2e}")
    for role, b in (("beta1", 1.0), ("beta2", 2.0)):
        params = runs[role]
        curve = _cached_run(params)
        alpha_ref = bisect_alpha_minus(Beta(b))
        tail = curve.times >= 0.8 * curve.horizon
        limit_hat = float(curve.mean_overlap[tail].mean())
        tol = max(0.005, 3.0 * _tail_se(curve))
        err = abs(limit_hat - alpha_ref)
        c.add(
            err < tol,
            f"b={b}: |tail overlap {limit_hat:.6f} - alpha_minus {alpha_ref:.6f}| "
            f"= {err:.2e} (tol {tol:.2e})",
        )
        c.note(
            f"b={b}: stationary-law reference {overlap_limit_stationary(Beta(b)):.6f}"
        )
    return c


def _c6_free_energy(scale: str) -> _Check:
    c = _Check()
    params = _run_params(scale)["fe"]
    curve = _cached_run(params)
    sol = solve_alpha(params.beta)
    report = fit_convergence(curve, sol)
    err = abs(report.fe_hat_extrapolated - sol.free_energy)
    c.add(
        err < 0.01,
        f"extrapolated free energy {report.fe_hat_extrapolated:.6f} within 0.01 of "
        f"{sol.free_energy:.6f} (err {err:.2e})",
    )
    gap_tol = 3.0 * curve.fe_gap_se + 1e-12
    c.add(
        abs(curve.fe_gap_mean) <= gap_tol,
        f"direct vs overlap estimator gap {curve.fe_gap_mean:+.2e} within 3 SE "
        f"({gap_tol:.2e})",
    )
    c.note(
        f"raw direct {report.fe_hat_direct:.6f}, via overlap {report.fe_hat_overlap:.6f}, "
        f"stationary-law value {-0.5 * sol.beta**2 * report.stationary_ref:.6f}"
    )
    return c


def _c7_proven_inequalities(scale: str) -> _Check:
    c = _Check()
    runs = _run_params(scale)
    for role, b in (("beta05", 0.5), ("beta1", 1.0), ("beta2", 2.0)):
        params = runs[role]
        curve = _cached_run(params)
        report = fit_convergence(curve, solve_alpha(Beta(b)))
        c.add(
            report.lower_bound_ok,
            f"b={b}: overlap >= alpha_minus - 3 SE pointwise "
            f"(min margin {report.lower_bound_margin:+.2e})",
        )
        c.add(
            report.envelope_ok,
            f"b={b}: overlap excess <= (1 - alpha_minus) exp(-lambda t) + 3 SE "
            f"(min margin {report.envelope_margin:+.2e})",
        )
    return c


def _sde_under_environment(env: EnvironmentGrid, beta: Beta) -> tuple[float, float]:
    """Splitting integration driven by the environment's own increments."""
    state = PolymerState(t=0.0, x1=1.0, x2=0.0)
    h = env.dt_env
    for k in range(env.n_cells):
        noise = NoiseIncrement(
            db1=float(env.increments[0, k]), db2=float(env.increments[1, k])
        )
        state = step(state, h, noise, StepScheme.SPLITTING, beta)
    return state.x1, state.x2


def _cross_oracle_errors(
    seed: int, n_envs: int, dt_env: float, n_chains: int, beta: Beta, horizon: float
) -> np.ndarray:
    params = ModelParams(
        beta=beta, dt=dt_env, horizon=horizon, n_paths=2,
        output_stride=horizon / 10.0, master_seed=seed,
    )
    errs = np.empty(n_envs)
    for e in range(n_envs):
        env = EnvironmentGrid.generate(seed, e, dt_env, horizon)
        est = estimate_partition(params, n_chains, env)
        x1, x2 = _sde_under_environment(env, beta)
        errs[e] = max(abs(est.z_to[0] - x1) / x1, abs(est.z_to[1] - x2) / x2)
    return errs


def _c8_cross_oracle(scale: str) -> _Check:
    c = _Check()
    beta = Beta(0.5)
    if scale == "full":
        n_envs, dt_env, n_chains = 100, 1e-3, 100_000
    else:
        n_envs, dt_env, n_chains = 20, 2e-3, 20_000
    coarse = _cross_oracle_errors(108, n_envs, dt_env, n_chains, beta, horizon=2.0)
    frac_ok = float(np.mean(coarse < 0.05))
    c.add(
        frac_ok >= 0.95,
        f"chain sampler vs SDE on {n_envs} shared environments: "
        f"{100 * frac_ok:.0f}% within 5% (median {np.median(coarse):.4f}, "
        f"max {coarse.max():.4f})",
    )
    fine = _cross_oracle_errors(108, n_envs, dt_env / 2.0, 2 * n_chains, beta, horizon=2.0)
    c.add(
        float(np.median(fine)) < float(np.median(coarse)),
        f"halving dt_env and doubling chains shrinks the median error: "
        f"{np.median(fine):.4f} < {np.median(coarse):.4f}",
    )
    return c


def _c9_scheme_convergence(scale: str) -> _Check:
    """dt-halving study against the exact second moment at t = 1.

    All levels (and the fine reference) are driven by common Brownian
    paths: level increments aggregate the reference ones, so differences
    between levels isolate discretization error from sampling noise.  The
    reference itself is anchored to the closed-form E[N_1]; the per-level
    errors are measured against the same-scheme reference with a
    noise-gate (a level enters the order fit only when its error exceeds
    5x the standard error of the paired difference).
    """
    c = _Check()
    beta = Beta(1.0)
    t_end = 1.0
    n_ref = 2048
    levels = [128, 64, 32, 16]  # steps at each dt level; dt = t_end / level
    n_paths = 200_000 if scale == "full" else 20_000
    seed = 109
    dt_ref = t_end / n_ref
    schemes = (StepScheme.EULER, StepScheme.SPLITTING)

    sums = {s: np.zeros(len(levels)) for s in schemes}
    diff_sums = {s: np.zeros(len(levels)) for s in schemes}
    diff_sumsq = {s: np.zeros(len(levels)) for s in schemes}
    ref_sum = {s: 0.0 for s in schemes}
    ref_sumsq = {s: 0.0 for s in schemes}

    block = 4096
    for lo in range(0, n_paths, block):
        size = min(block, n_paths - lo)
        inc = np.empty((size, 2, n_ref))
        for lane in range(size):
            inc[lane] = stream(seed, DOMAIN_SDE_PATH, lo + lane).standard_normal((2, n_ref))
        inc *= math.sqrt(dt_ref)
        for scheme in schemes:
            n_ref_paths = _terminal_n(inc, dt_ref, beta, scheme)
            ref_sum[scheme] += float(n_ref_paths.sum())
            ref_sumsq[scheme] += float((n_ref_paths**2).sum())
            for li, n_steps in enumerate(levels):
                m = n_ref // n_steps
                inc_l = inc.reshape(size, 2, n_steps, m).sum(axis=3)
                n_l = _terminal_n(inc_l, t_end / n_steps, beta, scheme)
                d = n_l - n_ref_paths
                sums[scheme][li] += float(n_l.sum())
                diff_sums[scheme][li] += float(d.sum())
                diff_sumsq[scheme][li] += float((d * d).sum())

    exact = exact_en(beta, t_end)
    for scheme in schemes:
        ref_mean = ref_sum[scheme] / n_paths
        ref_var = max(ref_sumsq[scheme] / n_paths - ref_mean**2, 0.0)
        ref_se = math.sqrt(ref_var / n_paths)
        dev = abs(ref_mean - exact)
        c.add(
            dev <= 3.0 * ref_se,
            f"{scheme.value}: fine reference (dt={dt_ref:.1e}) matches exact E[N_1]: "
            f"dev {dev:.3e} <= 3 SE {3 * ref_se:.3e}",
        )
        errs = np.abs(diff_sums[scheme] / n_paths)
        diff_se = np.sqrt(
            np.maximum(diff_sumsq[scheme] / n_paths - (diff_sums[scheme] / n_paths) ** 2, 0.0)
            / n_paths
        )
        usable = errs > 5.0 * diff_se
        dts = t_end / np.array(levels, dtype=float)
        if usable.sum() >= 3:
            order = float(np.polyfit(np.log(dts[usable]), np.log(errs[usable]), 1)[0])
            mono = bool(np.all(np.diff(errs[usable][np.argsort(dts[usable])]) >= 0.0))
            c.add(
                order >= 0.8 and mono,
                f"{scheme.value}: error vs dt order {order:.2f} >= 0.8, "
                f"monotone over {int(usable.sum())} resolved levels "
                f"(errors {np.array2string(errs, precision=2)})",
            )
        else:
            c.add(
                False,
                f"{scheme.value}: only {int(usable.sum())} levels resolved above the "
                f"noise gate; cannot fit an order",
            )
    return c


def _terminal_n(inc: np.ndarray, dt: float, beta: Beta, scheme: StepScheme) -> np.ndarray:
    """N_T per path for a block driven by explicit increments (size, 2, steps)."""
    size, _, n_steps = inc.shape
    x1 = np.ones(size)
    x2 = np.zeros(size)
    for k in range(n_steps):
        x1, x2, _ = step_block(x1, x2, inc[:, 0, k], inc[:, 1, k], dt, beta, scheme)
    return x1 * x1 + x2 * x2


def _c10_determinism(scale: str) -> _Check:
    c = _Check()
    params = ModelParams(Beta(1.0), dt=1e-2, horizon=2.0, n_paths=5000,
                         output_stride=0.2, master_seed=110)
    curve_a = run_ensemble(params, workers=1)
    curve_b = run_ensemble(params, workers=3)
    same = all(
        np.array_equal(getattr(curve_a, name), getattr(curve_b, name))
        for name in (
            "times", "mean_overlap", "se_overlap", "mean_z", "se_z",
            "mean_log_z", "se_log_z", "mean_n", "se_n", "mean_z2", "se_z2",
        )
    ) and curve_a.fe_gap_mean == curve_b.fe_gap_mean and curve_a.fe_gap_se == curve_b.fe_gap_se
    c.add(same, "run_ensemble bit-identical for workers=1 vs workers=3")

    import tempfile
    from pathlib import Path

    from . import cli

    with tempfile.TemporaryDirectory() as tmp:
        outs = []
        for i, workers in enumerate((1, 2)):
            out = Path(tmp) / f"run{i}"
            out.mkdir()
            rc = cli.main([
                "simulate", "--beta", "1.0", "--dt", "0.01", "--horizon", "2.0",
                "--paths", "5000", "--stride", "0.2", "--seed", "110",
                "--workers", str(workers), "--out", str(out),
            ])
            if rc != 0:
                c.add(False, f"cli simulate exited {rc}")
                return c
            outs.append(out)
        for fname in ("curve.csv", "report.json"):
            same_bytes = (outs[0] / fname).read_bytes() == (outs[1] / fname).read_bytes()
            c.add(same_bytes, f"cli output {fname} byte-identical across worker counts")
    return c


CRITERIA: list[tuple[int, str]] = [
    (1, "exact identities of the overlap quadratic"),
    (2, "deterministic reduction at b = 0"),
    (3, "martingale property of E[Z_t]"),
    (4, "second moments vs closed-form flow"),
    (5, "overlap limit vs alpha_minus"),
    (6, "free energy estimators"),
    (7, "proven overlap inequalities"),
    (8, "chain sampler vs SDE cross-oracle"),
    (9, "scheme convergence order"),
    (10, "determinism across worker counts"),
]

_RUNNERS = {
    1: _c1_exact_identities,
    2: _c2_deterministic_reduction,
    3: _c3_martingale,
    4: _c4_moment_oracle,
    5: _c5_overlap_limit,
    6: _c6_free_energy,
    7: _c7_proven_inequalities,
    8: _c8_cross_oracle,
    9: _c9_scheme_convergence,
    10: _c10_determinism,
}


def run_criterion(cid: int, scale: str = "full") -> CriterionResult:
    if scale not in ("quick", "full"):
        raise ValueError(f"scale must be 'quick' or 'full', got {scale!r}")
    name = dict(CRITERIA)[cid]
    start = time.perf_counter()
    check = _RUNNERS[cid](scale)
    return CriterionResult(
        cid=cid,
        name=name,
        passed=check.passed,
        seconds=time.perf_counter() - start,
        details=check.details,
    )


def run_all(scale: str = "full") -> list[CriterionResult]:
    return [run_criterion(cid, scale) for cid, _ in CRITERIA]


def format_table(results: list[CriterionResult]) -> str:
    lines = []
    for res in results:
        lines.append(res.summary())
        lines.extend(res.details)
    n_fail = sum(not r.passed for r in results)
    lines.append(
        f"{len(results) - n_fail}/{len(results)} criteria passed"
        + (f", {n_fail} FAILED" if n_fail else "")
    )
    return "\n".join(lines)
