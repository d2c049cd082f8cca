"""Composable certifier suite: module invariants plus the theory probes.

Each entry produces a ProbeReport; the suite passes when every verdict
is "pass" or "n/a".  Randomized probes draw from counter-based streams
keyed by the seed recorded in the report parameters, so reruns are
reproducible.
"""

from __future__ import annotations

import math
from dataclasses import replace

import numpy as np

from . import guidance as gd
from . import mixture as mx
from . import samplers as sp
from . import theory
from .config import ExperimentConfig
from .guidance import ApgParams
from .mixture import GaussianMixture
from .theory import ProbeReport

__all__ = ["run_suite", "random_mixture_cases"]


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=np.uint64(seed)))


def random_mixture_cases(n_cases: int, seed: int, max_dim: int = 8, max_components: int = 6):
    """Random (gmm, x, alpha_bar) draws with bounded norms.

    Means live in the radius-5 ball, probe points in the radius-10 ball,
    alpha_bar in (0.02, 0.99).
    """
    rng = _rng(seed)
    for _ in range(n_cases):
        dim = int(rng.integers(1, max_dim + 1))
        n_comp = int(rng.integers(1, max_components + 1))
        means = rng.standard_normal((n_comp, dim))
        means *= (rng.uniform(0.0, 5.0, n_comp) / np.maximum(
            np.linalg.norm(means, axis=1), 1e-12))[:, None]
        weights = rng.dirichlet(np.ones(n_comp))
        weights = weights / weights.sum()
        gmm = GaussianMixture(dim=dim, means=means, weights=weights)
        x = rng.standard_normal(dim)
        x *= rng.uniform(0.0, 10.0) / max(np.linalg.norm(x), 1e-12)
        alpha_bar = float(rng.uniform(0.02, 0.99))
        condition = int(rng.integers(0, n_comp))
        yield gmm, x, alpha_bar, condition


# ---------------------------------------------------------------------------
# Individual probes
# ---------------------------------------------------------------------------

def probe_score_oracle(cases: int, seed: int, tolerance: float = 1e-5, h: float = 1e-4) -> ProbeReport:
    """Closed-form scores against the central-difference oracle."""
    worst = 0.0
    for gmm, x, alpha_bar, condition in random_mixture_cases(cases, seed):
        for cond in (condition, None):
            if cond is None:
                closed = mx.score_unconditional(gmm, x, alpha_bar)
            else:
                closed = mx.score_conditional(gmm, x, alpha_bar, cond)
            numeric = mx.finite_diff_score(gmm, x, alpha_bar, cond, h=h)
            worst = max(worst, float(np.max(np.abs(closed - numeric))))
    return ProbeReport(
        name="score_finite_difference",
        parameters={"cases": cases, "seed": seed, "h": h},
        verdict="pass" if worst < tolerance else "fail",
        measured={"max_abs_error": worst},
        tolerance=tolerance,
    )


def probe_score_identity(cases: int, seed: int, tolerance: float = 1e-10) -> ProbeReport:
    """(sqrt(ab) * posterior_mean - x) / beta_bar must equal the score."""
    worst = 0.0
    for gmm, x, alpha_bar, condition in random_mixture_cases(cases, seed):
        beta_bar = 1.0 - alpha_bar
        root = math.sqrt(alpha_bar)
        for cond in (condition, None):
            x0_hat = mx.posterior_mean_x0(gmm, x, alpha_bar, cond)
            if cond is None:
                score = mx.score_unconditional(gmm, x, alpha_bar)
            else:
                score = mx.score_conditional(gmm, x, alpha_bar, cond)
            implied = (root * x0_hat - x) / beta_bar
            worst = max(worst, float(np.max(np.abs(implied - score))))
    return ProbeReport(
        name="posterior_mean_score_identity",
        parameters={"cases": cases, "seed": seed},
        verdict="pass" if worst < tolerance else "fail",
        measured={"max_abs_error": worst},
        tolerance=tolerance,
    )


def probe_posterior_simplex(cases: int, seed: int, tolerance: float = 1e-12) -> ProbeReport:
    """Responsibilities are a probability vector at every draw."""
    worst_sum = 0.0
    worst_neg = 0.0
    for gmm, x, alpha_bar, _ in random_mixture_cases(cases, seed):
        resp = mx.posterior_weights(gmm, x, alpha_bar)
        worst_sum = max(worst_sum, abs(float(resp.sum()) - 1.0))
        worst_neg = max(worst_neg, float(-resp.min()))
    verdict = "pass" if worst_sum <= tolerance and worst_neg <= 0.0 else "fail"
    return ProbeReport(
        name="responsibility_simplex",
        parameters={"cases": cases, "seed": seed},
        verdict=verdict,
        measured={"max_sum_deviation": worst_sum, "max_negative_entry": worst_neg},
        tolerance=tolerance,
    )


def probe_surface_invariants(gmm: GaussianMixture, tolerance: float = 1e-9) -> ProbeReport:
    """Certificate geometry checks across all components of the mixture."""
    if gmm.n_components < 2:
        return ProbeReport(
            name="surface_certificates",
            parameters={"components": gmm.n_components},
            verdict="n/a",
            measured={"note": "single-component mixture has no hull geometry"},
            tolerance=tolerance,
        )
    worst_touch = 0.0
    worst_unit = 0.0
    n_surface = 0
    ok = True
    for c in range(gmm.n_components):
        decision = mx.classify_component(gmm, c)
        if decision.certificate is None:
            continue
        n_surface += 1
        cert = decision.certificate
        worst_touch = max(worst_touch, abs(float(cert.normal @ gmm.means[c] + cert.offset)))
        worst_unit = max(worst_unit, abs(float(np.linalg.norm(cert.normal)) - 1.0))
        margins = [
            -(float(cert.normal @ gmm.means[o]) + cert.offset)
            for o in range(gmm.n_components)
            if o != c
        ]
        if min(margins) < cert.min_margin - 1e-12 or cert.min_margin <= 0.0:
            ok = False
    if worst_touch > tolerance or worst_unit > 1e-12:
        ok = False
    return ProbeReport(
        name="surface_certificates",
        parameters={"components": gmm.n_components},
        verdict="pass" if ok else "fail",
        measured={
            "surface_components": n_surface,
            "max_touch_residual": worst_touch,
            "max_unit_norm_residual": worst_unit,
        },
        tolerance=tolerance,
    )


def probe_c1_monotone(
    gmm: GaussianMixture,
    condition: int,
    alpha_bar: float,
    omegas,
    k_max: float,
    bisection_tol: float,
) -> ProbeReport:
    """Positive, strictly growing anomalous interval with a sharp boundary."""
    params = {
        "condition": condition,
        "alpha_bar": alpha_bar,
        "omegas": list(omegas),
        "k_max": k_max,
        "bisection_tol": bisection_tol,
    }
    cert = mx.surface_certificate(gmm, condition)
    if cert is None:
        return ProbeReport(
            name="anomalous_interval",
            parameters=params,
            verdict="n/a",
            measured={"note": f"component {condition} is not a surface class"},
            tolerance=bisection_tol,
        )
    values = [
        theory.estimate_c1(gmm, cert, alpha_bar, w, k_max=k_max, bisection_tol=bisection_tol)
        for w in omegas
    ]
    ok = all(v > 0.0 for v in values)
    gaps = [b - a for a, b in zip(values, values[1:])]
    ok = ok and all(g > bisection_tol for g in gaps)
    boundary_exits = []
    base_point = math.sqrt(alpha_bar) * gmm.means[condition]
    for w, v in zip(omegas, values):
        if 0.0 < v < k_max:
            member, _ = theory.mt_membership(
                gmm, cert, base_point + 1.01 * v * cert.normal, alpha_bar, w
            )
            boundary_exits.append(not member)
    ok = ok and all(boundary_exits)
    return ProbeReport(
        name="anomalous_interval",
        parameters=params,
        verdict="pass" if ok else "fail",
        measured={
            "c1_values": values,
            "gaps": gaps,
            "boundary_exit_confirmed": boundary_exits,
        },
        tolerance=bisection_tol,
        details=[{"omega": w, "c1": v} for w, v in zip(omegas, values)],
    )


def probe_cfgpp_equivalence(steps: int, seed: int, tolerance: float = 1e-8) -> ProbeReport:
    """Split denoise/renoise update vs the equivalent-weight linear step.

    The expected residual is zero by direct algebra; each sampled step is
    still measured and reported.
    """
    rng = _rng(seed)
    residuals = []
    details = []
    for i in range(steps):
        dim = int(rng.integers(1, 9))
        ab_prev = float(rng.uniform(0.05, 0.999))
        ab_t = float(rng.uniform(0.001, ab_prev * 0.98))
        lam = float(rng.uniform(0.05, 1.0))
        x_t = rng.standard_normal(dim) * float(rng.uniform(0.5, 5.0))
        eps_c = rng.standard_normal(dim)
        eps_u = rng.standard_normal(dim)
        denoised, renoise = gd.cfgpp_predictions(eps_c, eps_u, lam, x_t, ab_t)
        split = math.sqrt(ab_prev) * denoised + math.sqrt(1.0 - ab_prev) * renoise
        omega_t = sp.cfgpp_equivalent_weight(lam, ab_t, ab_prev)
        pair = gd.PredictionPair(
            x0_cond=gd.x0_from_eps(x_t, eps_c, ab_t),
            x0_uncond=gd.x0_from_eps(x_t, eps_u, ab_t),
            x_t=x_t,
            alpha_bar_t=ab_t,
        )
        linear = sp.ddim_step(x_t, gd.cfg_combine(pair, omega_t), ab_t, ab_prev)
        residual = float(np.linalg.norm(split - linear))
        residuals.append(residual)
        details.append(
            {"step": i, "alpha_bar_t": ab_t, "alpha_bar_prev": ab_prev,
             "lambda": lam, "omega_t": omega_t, "residual": residual}
        )
    worst = max(residuals)
    return ProbeReport(
        name="split_update_equivalence",
        parameters={"steps": steps, "seed": seed},
        verdict="pass" if worst < tolerance else "fail",
        measured={"max_residual": worst, "mean_residual": float(np.mean(residuals))},
        tolerance=tolerance,
        details=details,
    )


def probe_guidance_off(
    config: ExperimentConfig, seed_count: int, tolerance: float = 1e-12
) -> ProbeReport:
    """All strategies collapse to the conditional trajectory at omega = 1."""
    gmm = config.gmm()
    schedule = config.noise_schedule()
    grid = config.time_grid()
    condition = config.condition()
    base = config.guidance(strategy="cfg", omega=1.0)
    reduction = replace(
        base, strategy="apg", apg_params=ApgParams(eta=1.0, beta=0.0, r=math.inf)
    )
    variants = [
        replace(base, strategy="adg"),
        replace(base, strategy="adg_simplified"),
        reduction,
    ]
    worst = 0.0
    for seed in range(seed_count):
        ref = sp.sample_trajectory(gmm, schedule, grid, base, condition, seed)
        for variant in variants:
            rec = sp.sample_trajectory(gmm, schedule, grid, variant, condition, seed)
            worst = max(worst, float(np.max(np.abs(rec.x_t - ref.x_t))))
            worst = max(worst, float(np.max(np.abs(rec.final_x0 - ref.final_x0))))
    return ProbeReport(
        name="guidance_off_equivalence",
        parameters={
            "seed_count": seed_count,
            "strategies": ["adg", "adg_simplified", "apg(eta=1,beta=0,r=inf)"],
            "grid_steps": grid.steps,
        },
        verdict="pass" if worst <= tolerance else "fail",
        measured={"max_step_deviation": worst},
        tolerance=tolerance,
    )


def probe_determinism(config: ExperimentConfig) -> ProbeReport:
    """Identical (config, seed) twice must be bit-identical."""
    gmm = config.gmm()
    schedule = config.noise_schedule()
    grid = config.time_grid()
    guidance_cfg = config.guidance()
    condition = config.condition()
    seed = config.seeds()[0]
    a = sp.sample_trajectory(gmm, schedule, grid, guidance_cfg, condition, seed)
    b = sp.sample_trajectory(gmm, schedule, grid, guidance_cfg, condition, seed)
    identical = (
        np.array_equal(a.final_x0, b.final_x0)
        and np.array_equal(a.x_t, b.x_t)
        and np.array_equal(a.x0_guided, b.x0_guided)
    )
    return ProbeReport(
        name="trajectory_determinism",
        parameters={"seed": seed, "strategy": guidance_cfg.strategy},
        verdict="pass" if identical else "fail",
        measured={"bit_identical": bool(identical)},
        tolerance=0.0,
    )


# ---------------------------------------------------------------------------
# Suite
# ---------------------------------------------------------------------------

def run_suite(config: ExperimentConfig) -> list[ProbeReport]:
    """Full certifier suite for one configuration document."""
    probes_cfg = config.data["probes"]
    gmm = config.gmm()
    schedule = config.noise_schedule()
    grid = config.time_grid()
    condition = config.condition()

    reports = []
    sc = probes_cfg["score_oracle"]
    reports.append(probe_score_oracle(int(sc["cases"]), int(sc["seed"]), float(sc["tolerance"])))
    lm = probes_cfg["score_identity"]
    reports.append(probe_score_identity(int(lm["cases"]), int(lm["seed"]), float(lm["tolerance"])))
    reports.append(probe_posterior_simplex(100, int(sc["seed"]) + 1))
    reports.append(probe_surface_invariants(gmm))

    p1 = probes_cfg["prop1"]
    reports.append(
        theory.prop1_stress(trials=int(p1["trials"]), dims=tuple(p1["dims"]), seed=int(p1["seed"]))
    )

    c1 = probes_cfg["c1"]
    reports.append(
        probe_c1_monotone(
            gmm, condition, float(c1["alpha_bar"]), [float(w) for w in c1["omegas"]],
            float(c1["k_max"]), float(c1["bisection_tol"]),
        )
    )

    nm = probes_cfg["norm"]
    cert = mx.surface_certificate(gmm, condition)
    if cert is None:
        reports.append(
            ProbeReport(
                name="norm_amplification",
                parameters={"condition": condition},
                verdict="n/a",
                measured={"note": f"component {condition} is not a surface class"},
                tolerance=float(nm["margin_floor"]),
            )
        )
    else:
        reports.append(
            theory.norm_amplification_check(
                gmm, cert, schedule, grid, float(nm["omega"]),
                range(int(nm["seed_count"])), float(nm["margin_floor"]),
            )
        )

    cp = probes_cfg["cfgpp"]
    reports.append(probe_cfgpp_equivalence(int(cp["steps"]), int(cp["seed"]), float(cp["tolerance"])))
    go = probes_cfg["guidance_off"]
    reports.append(probe_guidance_off(config, int(go["seed_count"]), float(go["tolerance"])))
    reports.append(probe_determinism(config))
    return reports
