"""Scenario execution: build module objects from a validated config, run them,
and collect outputs and checks."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import aiyagari, fbsde, games, meeting, mfg
from .config import ScenarioConfig, canonical_json
from .errors import InvalidArgument, MfgLabError
from .measures import DistributionSpec, flow_distance, quantile_table_csv
from .mckean_vlasov import McKeanSpec, chaos_gap, kernel_library, simulate_interacting, solve_nonlinear

OUT_DIR_ENV = "MFGLAB_OUT_DIR"


@dataclass
class Check:
    name: str
    passed: bool
    value: float | None = None
    bound: float | None = None


@dataclass
class RunReport:
    scenario: str
    kind: str
    seed: int
    out_dir: str
    wall_time: float
    checks: list = field(default_factory=list)
    manifest: dict = field(default_factory=dict)  # file name -> sha256

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "kind": self.kind,
            "seed": self.seed,
            "out_dir": self.out_dir,
            "wall_time": self.wall_time,
            "passed": self.passed,
            "checks": [vars(c) for c in self.checks],
            "manifest": self.manifest,
        }


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _plain(obj):
    """Recursively convert numpy scalars and arrays for JSON."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else None
    return obj


def replicate_seed(seed: int, *keys: int) -> int:
    """Independent integer seed for replicate ``keys`` of a base seed."""
    return int(np.random.SeedSequence((seed, *keys)).generate_state(1, np.uint64)[0] >> 1)


def _pmap(fn, items, workers: int):
    items = list(items)
    if workers <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(workers) as ex:
        return list(ex.map(fn, items))


# --------------------------------------------------------------------------
# builders: raise InvalidArgument for violated module preconditions

def build_game(p: dict):
    name = p["game"]
    if name == "prisoners_dilemma":
        return games.prisoners_dilemma()
    if name == "matching_pennies":
        return games.matching_pennies()
    if name == "custom":
        return games.BimatrixGame(np.array(p["payoff1"], float), np.array(p["payoff2"], float))
    return None


def build_meeting(p: dict) -> meeting.MeetingSpec:
    return meeting.MeetingSpec(
        A=p["A"], B=p["B"], C=p["C"], t0=p["t0"],
        nu=DistributionSpec.from_dict(p["nu"]), rule_quantile=p["quantile"],
    )


def build_mckean(p: dict) -> McKeanSpec:
    k = dict(p["kernel"])
    kern = kernel_library(k.pop("name"), **k)
    return McKeanSpec(kern, p["sigma"], DistributionSpec.from_dict(p["mu0"]), p["T"], p["dt"])


def _affine(c):
    c0, c1, c2 = (float(v) for v in c)
    return lambda t, x, y, *_: c0 + c1 * np.asarray(x, float) + c2 * np.asarray(y, float)


def build_bsde(p: dict) -> fbsde.BsdeSpec:
    xd = tuple(p["x_domain"]) if p.get("x_domain") else None
    if p["instance"] == "black_scholes":
        return fbsde.black_scholes_instance(p["s0"], p["strike"], p["r"], p["mu"], p["sigma"], p["T"])
    if p["instance"] == "linear_coupled":
        return fbsde.linear_coupled_instance(p["x0"], p["T"], x_domain=xd)
    h0, hx, hy, hz = (float(v) for v in p["driver"])
    term = np.array(p["terminal"], float)
    vol = [float(v) for v in p["vol"]]
    return fbsde.BsdeSpec(
        b=_affine(p["drift"]),
        sigma=_affine(vol),
        h=lambda t, x, y, z: h0 + hx * np.asarray(x) + hy * np.asarray(y) + hz * np.asarray(z),
        g=lambda x: np.polynomial.polynomial.polyval(np.asarray(x, float), term),
        x0=p["x0"],
        T=p["T"],
        h_lipschitz=max(abs(hy), abs(hz)),
        x_domain=xd,
        sigma_bar=abs(vol[0]) + abs(vol[1]) * (abs(p["x0"]) + 1) + abs(vol[2]),
        name="custom",
    )


def build_mfg(p: dict) -> mfg.MfgProblem:
    xd = tuple(p["x_domain"]) if p.get("x_domain") else None
    common = dict(terminal_weight=p["terminal_weight"], target=p["target"], sigma=p["sigma"],
                  m0=p["m0"], s0=p["s0"], T=p["T"], a_max=p["a_max"])
    if p["preset"] == "lq_mean_field":
        return mfg.lq_mean_field(kappa=p["kappa"], x_domain=xd or (-4.0, 6.0), **common)
    if p["preset"] == "crowd_aversion":
        return mfg.crowd_aversion(kappa=p["kappa"], radius=p["radius"], x_domain=xd or (-3.5, 3.5), **common)
    r, q, xt, kappa = p["action_cost"], p["state_weight"], p["state_target"], p["kappa"]
    cT, s = p["terminal_weight"], p["target"]
    d0, d1, d2 = (float(v) for v in p["drift"])
    return mfg.MfgProblem(
        f=lambda t, x, m, a: 0.5 * r * a**2 + 0.5 * q * (x - xt) ** 2 + 0.5 * kappa * (x - m.mean()) ** 2,
        g=lambda x, m: 0.5 * cT * (x - s) ** 2,
        f_x=lambda t, x, m, a: q * (x - xt) + kappa * (x - m.mean()),
        f_a=lambda t, x, m, a: r * a,
        g_x=lambda x, m: cT * (x - s),
        b0=lambda t, m: d0,
        b1=lambda t: d1,
        b2=lambda t: d2,
        sigma=p["sigma"],
        action_interval=(-p["a_max"], p["a_max"]),
        mu0=DistributionSpec.normal(p["m0"], p["s0"]),
        T=p["T"],
        action_cost=r,
        lam=0.5 * r,
        c_L=max(1.0, q + kappa),
        c_B=max(abs(d1), abs(d2)),
        x_domain=xd,
        name="custom",
    )


def build_aiyagari(p: dict) -> aiyagari.AiyagariSpec:
    lab = {"kind": "ou", "vol": 0.2, "reversion": 1.0, **p["labor"]}
    keys = ("gamma", "alpha_share", "delta", "beta", "b_limit", "l_min", "l_max", "T", "K0",
            "foc_convention", "paper_exact_ode", "include_beta", "printed_aggregate")
    return aiyagari.AiyagariSpec(labor=aiyagari.LaborSpec(**lab), **{k: p[k] for k in keys})


BUILDERS = {
    "games": build_game,
    "meeting": build_meeting,
    "mkv": build_mckean,
    "fbsde": build_bsde,
    "mfg": build_mfg,
    "aiyagari": build_aiyagari,
}


def build(kind: str, params: dict):
    return BUILDERS[kind](params)


# --------------------------------------------------------------------------
# runners: (summary, files, checks)

def run_games(cfg: ScenarioConfig, workers: int):
    p = cfg.params
    if p["game"] == "cournot":
        q1, q2 = games.cournot(p["a"], p["c"])
        br = games.cournot_best_response(p["a"], p["c"], q2)
        summary = {"game": "cournot", "a": p["a"], "c": p["c"], "q1": q1, "q2": q2}
        rows = [(q, games.cournot_best_response(p["a"], p["c"], q)) for q in np.linspace(0, p["a"] - p["c"], 11)]
        files = {"best_response.csv": csv_text(["q_other", "best_response"], rows)}
        return summary, files, [Check("best_response_fixed_point", abs(br - q1) <= 1e-12, abs(br - q1), 1e-12)]

    g = build_game(p)
    rl = g.row_labels or tuple(range(g.rows))
    cl = g.col_labels or tuple(range(g.cols))
    pure = [[str(rl[i]), str(cl[j])] for i, j in games.pure_nash(g)]
    summary = {"game": p["game"], "pure_nash": pure, "mixed_nash": None}
    checks = []
    if g.rows == 2 and g.cols == 2:
        try:
            prof = games.mixed_nash_2x2(g)
        except MfgLabError as e:
            summary["mixed_nash_note"] = str(e)
        else:
            gain = games.deviation_gain(g, prof)
            summary["mixed_nash"] = {"p": list(prof.p), "q": list(prof.q), "deviation_gain": gain}
            checks.append(Check("mixed_deviation_gain", gain <= 1e-10, gain, 1e-10))
    rows = []
    for player, labels, n in ((1, cl, g.cols), (2, rl, g.rows)):
        for j in range(n):
            br = sorted(games.best_response(g, player, j))
            rows.append((player, labels[j], ";".join(str((rl if player == 1 else cl)[i]) for i in br)))
    files = {"best_responses.csv": csv_text(["player", "opponent_action", "best_responses"], rows)}
    return summary, files, checks


def run_meeting(cfg: ScenarioConfig, workers: int):
    p = cfg.params
    spec = build_meeting(p)
    eq = meeting.solve_equilibrium(spec, p["tol"], p["mode"])
    limit = meeting.limit_start_time(spec, eq.t_hat)

    def finite(n):
        starts = [meeting.simulate_finite(spec, eq.t_hat, n, replicate_seed(cfg.seed, r)) for r in range(p["replicates"])]
        return n, float(np.mean(starts)), float(np.std(starts, ddof=1)) if len(starts) > 1 else 0.0

    table = _pmap(finite, p["N_list"], workers)
    summary = {
        "t_star": eq.t_star,
        "t_hat": eq.t_hat,
        "residual": eq.residual,
        "iterations": eq.iterations,
        "contraction_estimate": eq.contraction_estimate,
        "empirical_contraction": eq.empirical_contraction,
        "limit_start_time": limit,
        "mode": eq.mode,
    }
    files = {
        "picard.csv": csv_text(["iteration", "T", "residual"], eq.trajectory),
        "finite_n.csv": csv_text(["N", "mean_start", "std_start"], table),
    }
    tol = cfg.tol("meeting_residual")
    checks = [
        Check("fixed_point_residual", eq.residual <= tol, eq.residual, tol),
        Check("contraction_below_one", eq.contraction_estimate < 1, eq.contraction_estimate, 1.0),
    ]
    return summary, files, checks


def run_mkv(cfg: ScenarioConfig, workers: int):
    p = cfg.params
    spec = build_mckean(p)
    every = max(1, spec.steps // 20)
    sol = solve_nonlinear(spec, p["M"], p["tol"], cfg.seed, p["max_iter"], flow_every=every)

    def gaps(n):
        g = [chaos_gap(simulate_interacting(spec, n, replicate_seed(cfg.seed, n, r)), sol, spec.T)
             for r in range(p["replicates"])]
        return n, float(np.median(g))

    table = _pmap(gaps, p["N"], workers)
    final = sol.flow.measures[-1]
    summary = {
        "kernel": spec.kernel.name,
        "picard_residuals": sol.picard_residuals,
        "iterations": sol.iterations,
        "terminal_mean": final.mean(),
        "terminal_variance": final.variance(),
        "chaos_gap_median": {str(n): g for n, g in table},
    }
    files = {
        "flow_quantiles.csv": quantile_table_csv(sol.flow),
        "chaos.csv": csv_text(["N", "gap_median"], table),
    }
    res = sol.picard_residuals[-1]
    return summary, files, [Check("picard_converged", res <= p["tol"], res, p["tol"])]


def _theta_slices(theta) -> str:
    v = theta.values
    rows = zip(theta.x_grid, v[0], v[v.shape[0] // 2], v[-1])
    return csv_text(["x", "theta_start", "theta_mid", "theta_end"], rows)


def run_fbsde(cfg: ScenarioConfig, workers: int):
    p = cfg.params
    spec = build_bsde(p)
    sol = fbsde.four_step_solve(spec, p["nt"], p["nx"], p["paths"], cfg.seed)
    summary = {
        "instance": p["instance"],
        "y0": sol.y0,
        "terminal_consistency": sol.terminal_consistency,
        "propagation_gap": sol.propagation_gap,
        "oracle_error": None,
    }
    checks = [Check("finite_solution", bool(np.all(np.isfinite(sol.theta.values))))]
    if p["instance"] == "black_scholes":
        oracle = fbsde.black_scholes_put(p["s0"], p["strike"], p["r"], p["sigma"], 0.0, p["T"])
        err = abs(sol.y0 - oracle) / oracle
        summary.update(oracle=oracle, oracle_error=err)
        tol = cfg.tol("oracle_rel_error")
        checks.append(Check("oracle_error", err <= tol, err, tol))
    elif p["instance"] == "linear_coupled":
        reg, history = fbsde.solve_coupled_regression(
            spec, p["regression_steps"], p["regression_paths"], p["basis_degree"], cfg.seed
        )
        gap = abs(reg.y0 - sol.y0) / max(abs(sol.y0), 1e-12)
        summary.update(regression_y0=reg.y0, regression_rounds=history, cross_method_error=gap)
        tol = cfg.tol("cross_method_rel")
        checks.append(Check("cross_method_agreement", gap <= tol, gap, tol))
    return summary, {"theta_slices.csv": _theta_slices(sol.theta)}, checks


def run_mfg(cfg: ScenarioConfig, workers: int):
    p = cfg.params
    prob = build_mfg(p)
    summary, files, checks = {"preset": p["preset"], "method": p["method"]}, {}, []
    eq = hj = None
    if p["method"] in ("smp", "both"):
        eq = mfg.mfg_picard(prob, p["damping"], p["tol"], p["max_iters"], cfg.seed, p["nt"], p["nx"], p["particles"])
        summary.update(
            iterations=eq.iterations,
            residuals=eq.residual_history,
            consistency_gap=eq.consistency_gap,
            flagged=eq.flagged,
            particle_floor=mfg.particle_floor(eq),
            bounds=eq.metadata,
        )
        files["flow_quantiles.csv"] = quantile_table_csv(eq.flow)
        if p["preset"] == "lq_mean_field":
            ref = mfg.lq_mean_path(p["kappa"], p["terminal_weight"], p["target"], p["m0"], p["T"], eq.flow.times)
            err = float(np.max(np.abs(eq.flow.means() - ref)))
            summary["mean_path_error"] = err
            tol = cfg.tol("mean_path_error")
            checks.append(Check("mean_path_error", err <= tol, err, tol))
    if p["method"] in ("hjb_fp", "both"):
        hj = mfg.hjb_fp_solve(prob, p["nt"], p["hjb_nx"], p["hjb_damping"], p["tol"], p["max_iters"])
        summary.update(hjb_iterations=len(hj.residual_history), hjb_residuals=hj.residual_history,
                       mass_drift=hj.mass_drift)
        files["hjb_flow_quantiles.csv"] = quantile_table_csv(hj.flow)
        tol = cfg.tol("mass_drift")
        checks.append(Check("fp_mass_conservation", hj.mass_drift <= tol, hj.mass_drift, tol))
    if eq is not None and hj is not None:
        summary["smp_hjb_w1"] = flow_distance(eq.flow, hj.flow)

    table = []
    if p["epsilon_N"]:
        def estimate(n):
            est = [mfg.epsilon_nash_estimate(prob, eq, n, p["deviation_budget"], replicate_seed(cfg.seed, n, r))
                   for r in range(p["epsilon_seeds"])]
            return n, float(np.median([e.epsilon for e in est])), float(np.median([e.std_error for e in est]))

        table = _pmap(estimate, p["epsilon_N"], workers)
        files["epsilon.csv"] = csv_text(["N", "epsilon_median", "std_error_median"], table)
    summary["epsilon_table"] = [{"N": n, "epsilon_median": e, "std_error_median": s} for n, e, s in table]
    return summary, files, checks


def run_aiyagari(cfg: ScenarioConfig, workers: int):
    p = cfg.params
    spec = build_aiyagari(p)
    eq = aiyagari.solve_macro_odes(spec, p["steps"], method=p["method"], damping=p["damping"])
    rows = zip(eq.t_grid, eq.K_bar, eq.Y_adj, eq.r, eq.w, eq.c_rule)
    files = {"paths.csv": csv_text(["t", "K_bar", "Y", "r", "w", "c_hat"], rows)}
    summary = {
        "method": eq.method,
        "iterations": eq.iterations,
        "residuals": eq.residuals,
        "phi": eq.phi,
        "steady_state_capital": _steady_state(spec),
        "Y_T": eq.Y_adj[-1],
        "flagged": eq.flagged,
        "panel": None,
    }
    tol = cfg.tol("ode_residual")
    checks = [
        Check(f"residual_{k}", v <= tol, v, tol) for k, v in sorted(eq.residuals.items()) if k in ("K", "logY", "terminal")
    ]
    if p["panel_N"]:
        panel = aiyagari.simulate_panel(spec, eq, p["panel_N"], cfg.seed)
        n = panel.k_paths.shape[0]
        marks = [eq.t_grid.size // 4, eq.t_grid.size // 2, eq.t_grid.size - 1]
        ck = []
        for i in marks:
            k = panel.k_paths[:, i]
            se = k.std(ddof=1) / np.sqrt(n)
            ck.append({"t": eq.t_grid[i], "mean": k.mean(), "K_bar": eq.K_bar[i], "z": (k.mean() - eq.K_bar[i]) / se})
        lab = panel.l_paths[:, -1]
        summary["panel"] = {
            "N": n,
            "checkpoints": ck,
            "labor_mean": lab.mean(),
            "labor_z": (lab.mean() - 1) / (lab.std(ddof=1) / np.sqrt(n)),
            "constraint_hits": panel.constraint_hits,
        }
    return summary, files, checks


def _steady_state(spec):
    try:
        return aiyagari.steady_state_capital(spec)
    except MfgLabError:
        return None


RUNNERS = {
    "games": run_games,
    "meeting": run_meeting,
    "mkv": run_mkv,
    "fbsde": run_fbsde,
    "mfg": run_mfg,
    "aiyagari": run_aiyagari,
}


def default_out_dir(cfg: ScenarioConfig, name: str) -> Path:
    if cfg.out_dir:
        return Path(cfg.out_dir)
    return Path(os.environ.get(OUT_DIR_ENV, "mfglab-out")) / name


def run_scenario(cfg: ScenarioConfig, out_dir=None, name: str = "scenario", workers: int = 1) -> RunReport:
    """Run ``cfg`` and write ``summary.json``, its CSV files and ``report.json``."""
    if workers < 1:
        raise InvalidArgument("workers must be at least 1")
    out = Path(out_dir) if out_dir is not None else default_out_dir(cfg, name)
    t0 = time.perf_counter()
    summary, files, checks = RUNNERS[cfg.kind](cfg, workers)
    summary = {"scenario": name, "kind": cfg.kind, "seed": cfg.seed, **summary}
    files = {"summary.json": canonical_json(_plain(summary)), **files}
    out.mkdir(parents=True, exist_ok=True)
    manifest = {}
    for fname in sorted(files):
        data = files[fname].encode("utf-8")
        (out / fname).write_bytes(data)
        manifest[fname] = hashlib.sha256(data).hexdigest()
    checks = [Check(c.name, bool(c.passed), _plain(c.value), _plain(c.bound)) for c in checks]
    report = RunReport(name, cfg.kind, cfg.seed, str(out), time.perf_counter() - t0, checks, manifest)
    (out / "report.json").write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return report


def verify_manifest(report: RunReport) -> bool:
    out = Path(report.out_dir)
    return all(hashlib.sha256((out / f).read_bytes()).hexdigest() == d for f, d in report.manifest.items())
