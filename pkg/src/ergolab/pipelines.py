"""Named experiment pipelines behind ``ergolab run``.

Each pipeline takes a scenario (or builds its own), a dict of knobs with
defaults, a seed and a thread count, and returns a PipelineResult: a summary
dict (written as summary.json), table rows (results.csv), two-column plot
series (plotdata/*.csv) and named boolean checks. Nothing that depends on
wall-clock time or the worker count goes into the summary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .ergodicity import (build_ladder, entropy_decay, radii_schedule, tv_decay,
                         uniform_ergodicity_trend, ultraboundedness_trend, variance_decay)
from .fenchel import logplus_power
from .generator import (NotCoerciveError, build_generator, gap_convergence,
                        gap_truncation_trend, spectral_gap)
from .hitting import (MomentQuery, ThresholdError, critical_theta, fk_moment, fk_residual,
                      mc_moment)
from .integrability import (constants_from_certificate, exponential_moment, moment_sequence,
                            phi_lyap_to_poincare_check, recursion_check)
from .lyapunov import (ExpPower, certify_drift, construct_entropic_lyapunov,
                       construct_fsobolev_lyapunov, construct_poincare_lyapunov)
from .scenario import Power, Quadratic, Scenario, build_scenario, measure_of_set


class ConfigError(ValueError):
    """Bad configuration (exit code 2)."""


@dataclass
class PipelineResult:
    summary: dict
    rows: list = field(default_factory=list)
    plots: dict = field(default_factory=dict)      # name -> (x, y, (xlabel, ylabel))
    checks: dict = field(default_factory=dict)     # name -> bool


@dataclass(frozen=True)
class Pipeline:
    tag: str
    description: str
    run: Callable
    defaults: dict
    default_scenario: dict | None
    statements: tuple


# ---------------------------------------------------------------------------
# helpers


def _grid(spec) -> np.ndarray:
    """[start, stop, num] -> linspace; an explicit list otherwise."""
    spec = list(spec)
    if len(spec) == 3 and float(spec[2]).is_integer() and spec[2] > 3 and spec[1] > spec[0]:
        return np.linspace(float(spec[0]), float(spec[1]), int(spec[2]))
    return np.asarray(spec, dtype=float)


def _affine_power(c0, c1, p):
    c0, c1, p = float(c0), float(c1), float(p)
    return lambda x: c0 + c1 * np.abs(np.asarray(x, dtype=float)) ** p


def _abs_power(p):
    p = float(p)
    return lambda x: np.abs(np.asarray(x, dtype=float)) ** p


def _gap_block(sc, gen, summary, checks):
    gap = spectral_gap(gen)
    summary["spectral_gap"] = gap.value
    summary["spectral_gap_refined"] = gap.refined
    checks["has_gap"] = bool(gap.has_gap)
    if not gap.has_gap:
        summary["gap_message"] = gap.message
    return gap


# ---------------------------------------------------------------------------
# poincare-chain


def run_poincare_chain(sc: Scenario, kn: dict, seed: int, threads: int) -> PipelineResult:
    gen = build_generator(sc, kn["N"])
    A = tuple(kn["A"])
    S, checks = {}, {}
    gap = _gap_block(sc, gen, S, checks)
    plots = {}
    if not gap.has_gap:
        radii = [sc.radius * f for f in (1.0, 2.0, 4.0)]
        tr = gap_truncation_trend(sc.potential, radii, kn["N"])
        S["gap_truncation_trend"] = tr
        S["chain_verdict"] = "no spectral gap"
        return PipelineResult(S, [], plots, checks)
    vals, orders = gap_convergence(sc, tuple(kn["convergence_N"]))
    S["gap_convergence"] = {"N": list(kn["convergence_N"]), "values": list(vals),
                            "orders": list(orders)}
    ly = construct_poincare_lyapunov(sc, gen, A, C_P=1.0 / gap.value)
    ts = critical_theta(gen, A)
    ratio = gen.apply(ly.v) / ly.v
    S.update({"A": list(A), "mu_A": ly.details["mu_A"], "C_P": ly.details["C_P"], "c": ly.c,
              "min_v": ly.min_v, "worst_margin": ly.margin,
              "ratio_norm": ly.details["ratio_norm"],
              "resolvent_backward_error": ly.residual["backward"],
              "resolvent_relative_residual": ly.residual["relative"],
              "theta_star": ts, "certificate": ly.certificate.to_dict()})
    checks["v_positive"] = bool(ly.min_v > 0)
    checks["drift_margin"] = bool(ly.margin <= 1e-6 * ly.details["ratio_norm"])
    checks["certificate_valid"] = bool(ly.certificate.valid)
    checks["theta_star_positive"] = bool(ts > 0)
    checks["c_below_theta_star"] = bool(ly.c < ts)
    S["chain_verdict"] = "consistent" if all(checks.values()) else "inconsistent"
    rows = [{"x": float(x), "v": float(v), "Lv_over_v": float(r)}
            for x, v, r in zip(gen.x, ly.v, ratio)]
    plots["v"] = (gen.x, ly.v, ("x", "v"))
    plots["Lv_over_v"] = (gen.x, ratio, ("x", "Lv/v"))
    return PipelineResult(S, rows, plots, checks)


# ---------------------------------------------------------------------------
# lsi-chain


def run_lsi_chain(sc: Scenario, kn: dict, seed: int, threads: int) -> PipelineResult:
    gen = build_generator(sc, kn["N"])
    S, checks = {}, {}
    s = float(kn["shift"])
    g0 = np.exp(s * gen.x - 0.5 * s * s)
    t = _grid(kn["t_grid"])
    cur = entropy_decay(gen, g0, t)
    C_LS = float(kn["C_LS"])
    S["entropy_decay"] = cur.summary(sc.tag)
    target = 2.0 / C_LS
    checks["entropy_rate"] = bool(cur.fitted_rate is not None
                                  and cur.fitted_rate >= 0.95 * target)
    hc = float(kn["h_coef"])
    h = _abs_power(2.0)
    ent = construct_entropic_lyapunov(sc, gen, lambda x: hc * h(x), C_LS, eps=kn["eps"])
    cert = ent.certificate
    S["entropic_lyapunov"] = {"b": ent.b, "rho": ent.rho, "min_v": ent.min_v,
                              "margin": ent.margin, "certificate": cert.to_dict()}
    checks["certificate_valid"] = bool(cert.valid)
    U = tuple(cert.U) if cert.U is not None else (-1.0, 1.0)
    ts = critical_theta(gen, U, h=h)
    S["theta_star_h"] = {"U": list(U), "h": "x^2", "value": ts}
    checks["theta_star_h_positive"] = bool(ts > 0)
    S["chain_verdict"] = "consistent" if all(checks.values()) else "inconsistent"
    plots = {"entropy": (cur.times, cur.values, ("t", "Ent(P_t g)")),
             "v": (gen.x, ent.v, ("x", "v"))}
    rows = [{"t": float(a), "entropy": float(b)} for a, b in zip(cur.times, cur.values)]
    return PipelineResult(S, rows, plots, checks)


# ---------------------------------------------------------------------------
# fsobolev-chain


def _fsob_attempt(sc, gen, alpha, bexp, kn):
    fs = logplus_power(bexp, C_F=kn["C_F"], D_F=kn["D_F"])
    h = float(kn["a"]) * np.abs(sc.potential.V(gen.x)) ** bexp
    try:
        r = construct_fsobolev_lyapunov(sc, gen, fs, h, eps=kn["eps"])
    except (NotCoerciveError, ValueError, ArithmeticError) as exc:
        return {"alpha": alpha, "beta": bexp, "valid": False, "reason": str(exc)}
    return {"alpha": alpha, "beta": bexp, "valid": bool(r.certificate.valid),
            "b": r.b, "min_v": r.min_v, "margin": r.margin, "reason": ""}


def run_fsobolev_chain(sc: Scenario | None, kn: dict, seed: int, threads: int) -> PipelineResult:
    alphas = [float(a) for a in kn["alphas"]]
    if sc is not None:
        if not isinstance(sc.potential, Power):
            raise ConfigError("fsobolev-chain needs a power-family scenario")
        alphas = [sc.potential.alpha]
    rows, checks = [], {}
    for al in alphas:
        s = sc if sc is not None else build_scenario(Power(al))
        gen = build_generator(s, kn["N"])
        beta = 2.0 * (1.0 - 1.0 / al)
        ok = _fsob_attempt(s, gen, al, beta, kn)
        strong = _fsob_attempt(s, gen, al, kn["beta_factor"] * beta, kn)
        ok["kind"], strong["kind"] = "matched", "strengthened"
        rows += [ok, strong]
        checks[f"alpha={al:g}:matched_valid"] = ok["valid"]
    S = {"alphas": alphas, "a": kn["a"], "C_F": kn["C_F"], "D_F": kn["D_F"],
         "beta_factor": kn["beta_factor"], "attempts": rows}
    return PipelineResult(S, rows, {}, checks)


# ---------------------------------------------------------------------------
# hitting-xcheck


def run_hitting_xcheck(sc: Scenario, kn: dict, seed: int, threads: int) -> PipelineResult:
    U = tuple(kn["U"])
    gen = build_generator(sc, kn["N"])
    gen2 = build_generator(sc, 2 * kn["N"])
    ts1 = critical_theta(gen, U)
    ts2 = critical_theta(gen2, U)
    theta = float(kn["theta_factor"]) * ts1
    q = MomentQuery(U, theta, x0=float(kn["x0"]))
    checks = {"theta_star_grid_agreement": bool(abs(ts2 - ts1) <= 0.01 * ts2)}
    S = {"U": list(U), "theta_star_N": ts1, "theta_star_2N": ts2, "theta": theta,
         "x0": q.x0, "N": kn["N"]}
    try:
        w = fk_moment(gen, q)
    except ThresholdError as exc:
        S["fk_error"] = str(exc)
        checks["fk_solved"] = False
        return PipelineResult(S, [], {}, checks)
    fk = float(np.interp(q.x0, gen.x, w))
    S["fk_moment"] = fk
    S["fk_backward_error"] = fk_residual(gen, q, w)["backward"]
    mc = mc_moment(sc, q, n_paths=kn["n_paths"], dt=kn["dt"], seed=seed, threads=threads,
                   bridge=kn["bridge"], theta_star=ts1)
    z = (mc.estimate - fk) / mc.stderr if mc.stderr > 0 else math.inf
    S["mc"] = {"estimate": mc.estimate, "stderr": mc.stderr, "n_paths": mc.n_paths,
               "dt": mc.dt, "seed": mc.seed, "truncation_hits": mc.truncation_hits,
               "capped": mc.capped, "tail_index": mc.tail_index,
               "flagged_divergent": mc.flagged_divergent, "bridge": mc.bridge,
               "notes": mc.notes}
    S["z_score"] = z
    S["discretisation_allowance"] = kn["bias_C"] * math.sqrt(kn["dt"])
    checks["mc_within_3se"] = bool(abs(z) <= 3.0)
    plots = {"fk_moment": (gen.x, w, ("x", "E_x exp(theta T_U)"))}
    return PipelineResult(S, [mc.csv_row()], plots, checks)


# ---------------------------------------------------------------------------
# ladder


def run_ladder(sc: Scenario, kn: dict, seed: int, threads: int) -> PipelineResult:
    lr = radii_schedule(kn["schedule"], kn["k_start"], kn["k_stop"], kn["power"],
                        kn["r0"], kn["ratio"])
    cand = ExpPower(*kn["candidate"])
    kidx = np.arange(kn["k_start"], kn["k_stop"] + 1, dtype=float)
    rep = build_ladder(sc, lr, cand, envelope=kn["envelope"], k_index=kidx)
    K = int(kn["cauchy_K"])
    S = {"verdict": rep.verdict, "tail_slope": rep.tail_slope, "tail_ratio": rep.tail_ratio,
         "candidate": rep.candidate, "envelope": rep.envelope, "deltas": list(rep.deltas),
         "ladder_length": int(rep.terms.size), "truncated": rep.truncated,
         "cauchy_K": K, "cauchy_increment": rep.cauchy_increment(K),
         "tail_sum": rep.tail_sum(K), "S_last": float(rep.partial_sums[-1])}
    checks = {"terms_finite": bool(np.all(np.isfinite(rep.terms)) or rep.verdict == "divergent")}
    if kn["ultra_t"] is not None:
        S["ultraboundedness"] = ultraboundedness_trend(sc, float(kn["ultra_t"]),
                                                       tuple(kn["ultra_factors"]), kn["ultra_N"])
    rows = [{k: (float(v) if k != "k" else int(v) + kn["k_start"]) for k, v in r.items()}
            for r in rep.to_rows()]
    k = kidx[: rep.terms.size]
    plots = {"terms": (k, rep.terms, ("k", "ln w_k / lambda_k")),
             "partial_sums": (k, rep.partial_sums, ("k", "S_k"))}
    return PipelineResult(S, rows, plots, checks)


# ---------------------------------------------------------------------------
# integrability


def run_integrability(sc: Scenario, kn: dict, seed: int, threads: int) -> PipelineResult:
    phi2 = _affine_power(*kn["phi2"])
    psi2 = _abs_power(kn["psi2_power"])
    W = ExpPower(*kn["W"])
    base = build_scenario(sc.potential) if kn["certificate_default_radius"] else sc
    gen = build_generator(base, kn["N"])
    cert = certify_drift(base, gen, W, phi2, tuple(kn["C"]))
    S = {"certificate": cert.to_dict(), "b_bar": cert.b_bar}
    checks = {"certificate_valid": bool(cert.valid)}
    if not cert.valid:
        return PipelineResult(S, [], {}, checks)
    cc = constants_from_certificate(sc, cert, phi2, psi2, K=kn["K"], ramp=kn["ramp"])
    S["constants"] = {"alpha": cc.alpha, "beta": cc.beta, "gamma": cc.gamma,
                      "delta": cc.delta, "a": cc.a, "a_prime_max": cc.a_prime_max,
                      "K_radius": cc.K_radius}
    checks["constants_valid"] = bool(cc.valid)
    if not cc.valid:
        S["constants"]["message"] = cc.message
        return PipelineResult(S, [], {}, checks)
    ms = moment_sequence(sc, cc.psi2, kn["n_max"])
    rep = recursion_check(ms, cc)
    S["recursion"] = {"max_n": rep.max_n, "worst_slack": rep.worst_slack, "n0": rep.n0,
                      "a_observed": rep.a_observed, "c": rep.c}
    checks["recursion"] = True
    checks["log_convex"] = bool(ms.log_convex)
    em = exponential_moment(sc, cc.psi2, float(kn["a_prime"]), moments=ms, constants=cc,
                            report=rep)
    S["exp_moment"] = {"a_prime": em.a_prime, "direct": em.direct, "series": em.series,
                       "gap": em.gap, "tail_bound": em.tail_bound, "bound": em.bound}
    checks["series_consistent"] = bool(em.consistent)
    checks["within_bound"] = bool(em.within_bound)
    cr = phi_lyap_to_poincare_check(base, gen, cert, n_random=kn["n_random"], seed=seed)
    S["weighted_inequality"] = cr.to_dict()
    checks["weighted_inequality"] = True
    n = np.arange(ms.n_max + 1)
    rows = [{"n": int(i), "ln_beta": float(l)} for i, l in zip(n, ms.log_values)]
    plots = {"ln_beta": (n, ms.log_values, ("n", "ln beta_n"))}
    return PipelineResult(S, rows, plots, checks)


# ---------------------------------------------------------------------------
# decay-suite


def run_decay_suite(sc: Scenario, kn: dict, seed: int, threads: int) -> PipelineResult:
    gen = build_generator(sc, kn["N"])
    S, checks, plots, rows = {}, {}, {}, []
    gap = _gap_block(sc, gen, S, checks)
    t = _grid(kn["t_grid"])
    f0 = np.polynomial.polynomial.polyval(gen.x, kn["f0_poly"])
    curves = {
        "variance": variance_decay(gen, f0, t, gap=gap.value),
        "entropy": entropy_decay(gen, np.exp(kn["shift"] * gen.x - 0.5 * kn["shift"] ** 2), t),
        "tv": tv_decay(gen, kn["tv_x0"], t),
    }
    for name, c in curves.items():
        S[name] = c.summary(sc.tag)
        S[name]["warnings"] = list(c.warnings)
        plots[name] = (c.times, c.values, ("t", name))
        rows += [{"metric": name, "t": float(a), "value": float(b)}
                 for a, b in zip(c.times, c.values)]
    vr = curves["variance"].fitted_rate
    checks["variance_rate"] = bool(vr is not None and gap.has_gap and vr >= 0.95 * 2 * gap.value)
    if kn["uniform_t"] is not None:
        S["uniform_ergodicity"] = uniform_ergodicity_trend(sc, float(kn["uniform_t"]),
                                                           tuple(kn["factors"]), kn["trend_N"])
    return PipelineResult(S, rows, plots, checks)


# ---------------------------------------------------------------------------
# registry


OU = {"family": "quadratic", "params": {"k": 1.0}}

PIPELINES = {
    p.tag: p for p in [
        Pipeline("poincare-chain",
                 "spectral gap, resolvent Lyapunov function off A and hitting threshold",
                 run_poincare_chain,
                 {"N": 4096, "A": [-1.0, 1.0], "convergence_N": [1024, 2048, 4096]},
                 OU, ("poincare inequality implies a drift condition",
                      "drift condition implies exponential hitting moments")),
        Pipeline("lsi-chain",
                 "entropy decay, entropic Lyapunov function and weighted hitting threshold",
                 run_lsi_chain,
                 {"N": 4096, "C_LS": 2.0, "h_coef": 0.25, "eps": 0.1, "shift": 0.5,
                  "t_grid": [0.0, 8.0, 161]},
                 OU, ("log-Sobolev inequality implies a drift condition with rate |x|^2",
                      "entropy decays exponentially under log-Sobolev")),
        Pipeline("fsobolev-chain",
                 "F-Sobolev Lyapunov functions for the power family, matched and strengthened",
                 run_fsobolev_chain,
                 {"N": 4096, "alphas": [1.5, 2.0, 3.0], "a": 0.25, "C_F": 0.25, "D_F": 0.0,
                  "eps": 0.1, "beta_factor": 1.5},
                 None, ("F-Sobolev inequality implies a drift condition with rate F(h)",)),
        Pipeline("hitting-xcheck",
                 "Feynman-Kac hitting moment against Euler-Maruyama Monte Carlo",
                 run_hitting_xcheck,
                 {"N": 4096, "U": [-1.0, 1.0], "x0": 2.0, "theta_factor": 0.8,
                  "n_paths": 100_000, "dt": 1e-3, "bridge": False, "bias_C": 0.05},
                 OU, ("exponential hitting moments are finite below the Dirichlet threshold",
                      "Feynman-Kac representation of hitting moments")),
        Pipeline("ladder",
                 "super-Lyapunov ladder, partial sums and ultraboundedness probe",
                 run_ladder,
                 {"schedule": "exp-power", "k_start": 1, "k_stop": 60, "power": 1.0,
                  "r0": 1.0, "ratio": 2.0, "candidate": [0.5, 2.0], "envelope": "annulus",
                  "cauchy_K": 40, "ultra_t": 0.5, "ultra_factors": [1.0, 1.5, 2.0],
                  "ultra_N": 2048},
                 {"family": "logpower", "params": {"beta": 2.0}},
                 ("super-Lyapunov ladder gives uniform bounds (coming down from infinity)",
                  "ultraboundedness requires beta > 1 in the log-power family")),
        Pipeline("integrability",
                 "condition constants, moment recursion and exponential integrability of psi^2",
                 run_integrability,
                 {"N": 4096, "phi2": [0.5, 0.125, 2.0], "psi2_power": 2.0, "W": [0.25, 2.0],
                  "C": [-3.0, 3.0], "K": None, "ramp": None, "n_max": 30, "a_prime": 0.25,
                  "n_random": 100, "certificate_default_radius": True},
                 {"family": "quadratic", "params": {"k": 1.0}, "radius": 16.0},
                 ("phi-Lyapunov condition implies a weighted Poincare inequality",
                  "moment recursion implies exponential integrability of psi^2")),
        Pipeline("decay-suite",
                 "variance, entropy and total-variation decay with a uniform-ergodicity trend",
                 run_decay_suite,
                 {"N": 4096, "t_grid": [0.0, 8.0, 161], "f0_poly": [0.0, 1.0, 1.0],
                  "shift": 0.5, "tv_x0": 1.0, "uniform_t": 1.0, "factors": [1.0, 1.5, 2.0],
                  "trend_N": 2048},
                 OU, ("spectral gap gives exponential variance decay",
                      "drift conditions give geometric ergodicity in total variation")),
    ]
}

TAGS = tuple(PIPELINES)
