"""First-order reverse-time samplers driven by exact mixture predictions.

The deterministic (DDIM-style) and ancestral (DDPM-style) steps below
consume a clean-sample prediction or score; the trajectory drivers plug
in the exact Gaussian-mixture posterior means in place of a learned
network, so every run is an oracle for the guidance strategies.

Noise discipline: each trajectory owns counter-based Philox streams
keyed by ``(seed, step)``; stream 0 draws the initial state and stream
``i + 1`` serves transition ``i``.  Results are therefore reproducible
independently of execution order or parallelism.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import guidance as gd
from . import mixture as mx
from .guidance import ApgState, GuidanceConfig, PredictionPair
from .mixture import GaussianMixture
from .schedule import FlowPath, NoiseSchedule, TimeGrid

__all__ = [
    "EquivalenceUndefined",
    "TrajectoryRecord",
    "TrajectoryBatch",
    "step_rng",
    "ddim_step",
    "ddpm_beta",
    "ddpm_step",
    "sample_trajectory",
    "ddim_population",
    "ddpm_population",
    "ddpm_trajectory",
    "pcg_sample",
    "cfgpp_equivalent_weight",
    "flow_euler_step",
    "flow_posterior_mean_x1",
    "flow_sample_adg",
]

FLOW_STD_FLOOR = 1e-9


class EquivalenceUndefined(ValueError):
    """The time-varying-weight mapping has no finite value at this step."""


def step_rng(seed: int, step: int) -> np.random.Generator:
    """Counter-based generator for one (trajectory, step) cell."""
    key = np.array([np.uint64(seed), np.uint64(step)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


# ---------------------------------------------------------------------------
# Single steps
# ---------------------------------------------------------------------------

def _check_ordering(alpha_bar_t: float, alpha_bar_prev: float) -> tuple[float, float]:
    alpha_bar_t = float(alpha_bar_t)
    alpha_bar_prev = float(alpha_bar_prev)
    if not 0.0 < alpha_bar_t < alpha_bar_prev <= 1.0:
        raise ValueError(
            f"need 0 < alpha_bar_t < alpha_bar_prev <= 1, got ({alpha_bar_t}, {alpha_bar_prev})"
        )
    return alpha_bar_t, alpha_bar_prev


def ddim_step(
    x_t: np.ndarray,
    x0_hat: np.ndarray,
    alpha_bar_t: float,
    alpha_bar_prev: float,
    literal_renoise: bool = False,
) -> np.ndarray:
    """Deterministic reverse step toward alpha_bar_prev.

    Renoises with ``(x_t - sqrt(alpha_bar_t) * x0_hat) / sqrt(beta_bar_t)``.
    ``literal_renoise`` swaps the square root for a bare ``alpha_bar_t``
    factor, kept only for discrepancy studies; the square-root form is
    the one consistent with the epsilon parameterization.
    """
    alpha_bar_t, alpha_bar_prev = _check_ordering(alpha_bar_t, alpha_bar_prev)
    x_t = np.asarray(x_t, dtype=float)
    x0_hat = np.asarray(x0_hat, dtype=float)
    factor = alpha_bar_t if literal_renoise else math.sqrt(alpha_bar_t)
    eps = (x_t - factor * x0_hat) / math.sqrt(1.0 - alpha_bar_t)
    return math.sqrt(alpha_bar_prev) * x0_hat + math.sqrt(1.0 - alpha_bar_prev) * eps


def ddpm_beta(alpha_bar_t: float, alpha_bar_prev: float) -> float:
    """Effective per-step noise fraction 1 - alpha_bar_t / alpha_bar_prev."""
    alpha_bar_t, alpha_bar_prev = _check_ordering(alpha_bar_t, alpha_bar_prev)
    return 1.0 - alpha_bar_t / alpha_bar_prev


def ddpm_step(
    x_t: np.ndarray,
    score: np.ndarray,
    beta_step: float,
    noise: np.ndarray,
) -> np.ndarray:
    """Ancestral reverse step: drift by the score, inject fresh noise.

    ``beta_step`` is the per-step noise fraction (see :func:`ddpm_beta`);
    the update is ``x / sqrt(1 - beta) + beta * score + sqrt(beta) * noise``.
    """
    beta_step = float(beta_step)
    if not 0.0 <= beta_step < 1.0:
        raise ValueError(f"beta_step must lie in [0, 1), got {beta_step}")
    x_t = np.asarray(x_t, dtype=float)
    return (
        x_t / math.sqrt(1.0 - beta_step)
        + beta_step * np.asarray(score, dtype=float)
        + math.sqrt(beta_step) * np.asarray(noise, dtype=float)
    )


def cfgpp_equivalent_weight(lam: float, alpha_bar_t: float, alpha_bar_prev: float) -> float:
    """Guidance weight making a plain linear step match the split update.

    ``omega_t = lam * sqrt(bb_t * ab_prev) / (sqrt(bb_t * ab_prev) -
    sqrt(bb_prev * ab_t))``.  Raises :class:`EquivalenceUndefined` when
    the denominator vanishes.
    """
    alpha_bar_t, alpha_bar_prev = _check_ordering(alpha_bar_t, alpha_bar_prev)
    lead = math.sqrt((1.0 - alpha_bar_t) * alpha_bar_prev)
    denom = lead - math.sqrt((1.0 - alpha_bar_prev) * alpha_bar_t)
    if abs(denom) < 1e-14:
        raise EquivalenceUndefined("equivalence undefined at this step")
    return lam * lead / denom


# ---------------------------------------------------------------------------
# Trajectory records
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrajectoryRecord:
    """Per-step log of one reverse trajectory.

    Arrays are indexed by transition: ``times[i]`` is where the i-th
    predictions were evaluated, ``x_t[i]`` the state there.  ``gamma``
    and ``gamma_omega`` are NaN for strategies without a rotation angle.
    """

    seed: int
    strategy: str
    omega: float
    times: np.ndarray          # (N,)
    x_t: np.ndarray            # (N, dim)
    x0_cond: np.ndarray        # (N, dim)
    x0_uncond: np.ndarray      # (N, dim)
    x0_guided: np.ndarray      # (N, dim)
    gamma: np.ndarray          # (N,)
    gamma_omega: np.ndarray    # (N,)
    guided_norm: np.ndarray    # (N,)
    final_x0: np.ndarray       # (dim,)
    cfgpp_residual: np.ndarray | None = None  # (N,) when strategy == "cfgpp"

    @property
    def steps(self) -> int:
        return self.times.shape[0]


@dataclass(frozen=True)
class TrajectoryBatch:
    """Trajectories sharing mixture, schedule, grid and guidance settings."""

    records: list[TrajectoryRecord]
    gmm: GaussianMixture
    schedule: NoiseSchedule | None
    config: GuidanceConfig
    condition: int

    def __post_init__(self):
        seeds = [r.seed for r in self.records]
        if len(set(seeds)) != len(seeds):
            raise ValueError("trajectory seeds must be distinct")
        steps = {r.steps for r in self.records}
        if len(steps) > 1:
            raise ValueError("all records must share the grid")

    def final_states(self) -> np.ndarray:
        return np.stack([r.final_x0 for r in self.records])


class _StepLog:
    """Accumulates per-step diagnostics while a trajectory runs."""

    def __init__(self):
        self.times, self.x_t = [], []
        self.x0_cond, self.x0_uncond, self.x0_guided = [], [], []
        self.gamma, self.gamma_omega, self.residual = [], [], []

    def add(self, t, x_t, x0_cond, x0_uncond, x0_guided, gamma=math.nan,
            gamma_omega=math.nan, residual=math.nan):
        self.times.append(float(t))
        self.x_t.append(np.array(x_t))
        self.x0_cond.append(np.array(x0_cond))
        self.x0_uncond.append(np.array(x0_uncond))
        self.x0_guided.append(np.array(x0_guided))
        self.gamma.append(float(gamma))
        self.gamma_omega.append(float(gamma_omega))
        self.residual.append(float(residual))

    def freeze(self, seed, strategy, omega, final_x0, with_residual=False) -> TrajectoryRecord:
        guided = np.array(self.x0_guided)
        return TrajectoryRecord(
            seed=int(seed),
            strategy=strategy,
            omega=float(omega),
            times=np.array(self.times),
            x_t=np.array(self.x_t),
            x0_cond=np.array(self.x0_cond),
            x0_uncond=np.array(self.x0_uncond),
            x0_guided=guided,
            gamma=np.array(self.gamma),
            gamma_omega=np.array(self.gamma_omega),
            guided_norm=np.linalg.norm(guided, axis=-1),
            final_x0=np.array(final_x0),
            cfgpp_residual=np.array(self.residual) if with_residual else None,
        )


def _pair_angle(x0_cond, x0_uncond) -> float:
    try:
        return gd.angle_between(x0_cond, x0_uncond)
    except gd.DegenerateGeometryError:
        return math.nan


# ---------------------------------------------------------------------------
# Trajectory drivers
# ---------------------------------------------------------------------------

def sample_trajectory(
    gmm: GaussianMixture,
    schedule: NoiseSchedule | None,
    grid: TimeGrid,
    config: GuidanceConfig,
    condition: int,
    seed: int,
    literal_renoise: bool = False,
) -> TrajectoryRecord:
    """Run one guided reverse trajectory on the grid.

    The conditional and unconditional clean predictions come from the
    exact mixture posterior means; the configured strategy combines them
    and a deterministic step advances the state.  The "pcg" strategy is
    routed to :func:`pcg_sample`.
    """
    if config.strategy == "pcg":
        return pcg_sample(
            gmm, schedule, grid, config.omega, config.pcg_inner_steps, condition, seed,
            langevin_mode=config.pcg_langevin_mode,
        )
    x = step_rng(seed, 0).standard_normal(gmm.dim)
    log = _StepLog()
    apg_state = ApgState.zero(gmm.dim)
    is_cfgpp = config.strategy == "cfgpp"
    for i in range(grid.steps):
        t, ab_t = float(grid.times[i]), float(grid.alpha_bars[i])
        ab_prev = float(grid.alpha_bars[i + 1])
        try:
            x_next, info, apg_state = _guided_step(
                gmm, x, t, ab_t, ab_prev, config, condition, apg_state, literal_renoise
            )
        except ValueError as exc:
            raise RuntimeError(f"trajectory aborted at step {i} (t={t}): {exc}") from exc
        log.add(t, x, *info)
        x = x_next
    return log.freeze(seed, config.strategy, config.omega, x, with_residual=is_cfgpp)


def _guided_step(gmm, x, t, ab_t, ab_prev, config, condition, apg_state, literal_renoise):
    """One strategy step; returns (next state, log tuple, APG state)."""
    x0_cond = mx.posterior_mean_x0(gmm, x, ab_t, condition)
    x0_uncond = mx.posterior_mean_x0(gmm, x, ab_t, None)
    pair = PredictionPair(x0_cond=x0_cond, x0_uncond=x0_uncond, x_t=x, alpha_bar_t=ab_t)
    gamma = _pair_angle(x0_cond, x0_uncond)
    gamma_omega = math.nan
    residual = math.nan
    strategy = config.strategy

    if strategy == "cfg":
        guided = gd.cfg_combine(pair, config.omega)
    elif strategy == "adg":
        guided = gd.adg_rotate(pair, config.omega, config.angle_cap)
        if math.isfinite(gamma):
            gamma_omega = gd.cap_angle((config.omega - 1.0) * gamma, config.angle_cap)
    elif strategy == "adg_no_cap":
        guided = gd.adg_no_cap(pair, config.omega)
        if math.isfinite(gamma):
            gamma_omega = (config.omega - 1.0) * gamma
    elif strategy == "adg_normalized":
        guided = gd.adg_normalized(pair, config.omega, config.angle_cap)
        if math.isfinite(gamma):
            gamma_omega = gd.cap_angle((config.omega - 1.0) * gamma, config.angle_cap)
    elif strategy == "adg_simplified":
        guided = gd.adg_simplified(pair, config.omega)
    elif strategy == "apg":
        guided, apg_state = gd.apg_update(pair, config.omega, config.apg_params, apg_state)
    elif strategy == "recfg":
        eps_c = gd.eps_from_x0(x, x0_cond, ab_t)
        eps_u = gd.eps_from_x0(x, x0_uncond, ab_t)
        lam = config.recfg_lambda_for(condition)
        eps_guided = gd.recfg_combine(eps_c, eps_u, config.omega, lam)
        guided = gd.x0_from_eps(x, eps_guided, ab_t)
    elif strategy == "cfgpp":
        eps_c = gd.eps_from_x0(x, x0_cond, ab_t)
        eps_u = gd.eps_from_x0(x, x0_uncond, ab_t)
        denoised, renoise = gd.cfgpp_predictions(eps_c, eps_u, config.cfgpp_lambda, x, ab_t)
        x_next = math.sqrt(ab_prev) * denoised + math.sqrt(1.0 - ab_prev) * renoise
        residual = _cfgpp_residual(pair, config.cfgpp_lambda, ab_t, ab_prev, x_next)
        info = (x0_cond, x0_uncond, denoised, gamma, gamma_omega, residual)
        return x_next, info, apg_state
    else:  # pragma: no cover - config validation precludes this
        raise ValueError(f"unknown strategy {strategy!r}")

    x_next = ddim_step(x, guided, ab_t, ab_prev, literal_renoise=literal_renoise)
    info = (x0_cond, x0_uncond, guided, gamma, gamma_omega, residual)
    return x_next, info, apg_state


def _cfgpp_residual(pair, lam, ab_t, ab_prev, x_next) -> float:
    """Distance between the split update and its equivalent-weight linear step."""
    try:
        omega_t = cfgpp_equivalent_weight(lam, ab_t, ab_prev)
    except EquivalenceUndefined:
        return math.nan
    guided = gd.cfg_combine(pair, omega_t)
    reference = ddim_step(pair.x_t, guided, ab_t, ab_prev)
    return float(np.linalg.norm(x_next - reference))


def ddim_population(
    gmm: GaussianMixture,
    grid: TimeGrid,
    condition: int,
    n_samples: int,
    seed: int,
) -> np.ndarray:
    """Deterministic conditional chains for a whole sample population.

    Vectorized Monte-Carlo driver: one (seed, 0) stream draws every
    initial state, the per-step math runs on the (n, dim) batch.
    Returns the final states, shape (n_samples, dim).
    """
    x = step_rng(seed, 0).standard_normal((n_samples, gmm.dim))
    for i in range(grid.steps):
        ab_t = float(grid.alpha_bars[i])
        ab_prev = float(grid.alpha_bars[i + 1])
        x = ddim_step(x, mx.posterior_mean_x0(gmm, x, ab_t, condition), ab_t, ab_prev)
    return x


def ddpm_population(
    gmm: GaussianMixture,
    grid: TimeGrid,
    condition: int,
    n_samples: int,
    seed: int,
) -> np.ndarray:
    """Ancestral conditional chains for a whole sample population.

    Noise for transition i comes from the (seed, i + 1) stream covering
    the batch, so results are reproducible for a fixed sample count.
    """
    x = step_rng(seed, 0).standard_normal((n_samples, gmm.dim))
    for i in range(grid.steps):
        ab_t = float(grid.alpha_bars[i])
        ab_prev = float(grid.alpha_bars[i + 1])
        score = mx.score_conditional(gmm, x, ab_t, condition)
        noise = step_rng(seed, i + 1).standard_normal((n_samples, gmm.dim))
        x = ddpm_step(x, score, ddpm_beta(ab_t, ab_prev), noise)
    return x


def ddpm_trajectory(
    gmm: GaussianMixture,
    grid: TimeGrid,
    condition: int,
    seed: int,
) -> TrajectoryRecord:
    """Ancestral conditional trajectory with exact scores and seeded noise."""
    x = step_rng(seed, 0).standard_normal(gmm.dim)
    log = _StepLog()
    for i in range(grid.steps):
        t, ab_t = float(grid.times[i]), float(grid.alpha_bars[i])
        ab_prev = float(grid.alpha_bars[i + 1])
        score = mx.score_conditional(gmm, x, ab_t, condition)
        x0_cond = mx.posterior_mean_x0(gmm, x, ab_t, condition)
        noise = step_rng(seed, i + 1).standard_normal(gmm.dim)
        x_next = ddpm_step(x, score, ddpm_beta(ab_t, ab_prev), noise)
        log.add(t, x, x0_cond, x0_cond, x0_cond)
        x = x_next
    return log.freeze(seed, "ddpm", 1.0, x)


def pcg_sample(
    gmm: GaussianMixture,
    schedule: NoiseSchedule | None,
    grid: TimeGrid,
    omega: float,
    inner_steps: int,
    condition: int,
    seed: int,
    langevin_mode: str = "paper-literal",
) -> TrajectoryRecord:
    """Predictor-corrector loop: conditional deterministic step, then
    ``inner_steps`` stochastic sharpening updates per outer iteration.

    The corrector moves against the guided noise combination at the new
    level with step ``kappa = 1 - ab_t / ab_prev``:
    ``x <- x - kappa/2 * eps_guided / divisor + sqrt(kappa) * noise``.
    The divisor is ``beta_bar`` in "paper-literal" mode and
    ``sqrt(beta_bar)`` in "score-consistent" mode (the form under which
    the update is plain Langevin dynamics on the guided density).
    """
    if inner_steps < 0:
        raise ValueError("inner_steps must be >= 0")
    if langevin_mode not in ("paper-literal", "score-consistent"):
        raise ValueError("langevin_mode must be 'paper-literal' or 'score-consistent'")
    if not omega >= 1.0:
        raise ValueError("omega must be >= 1")
    x = step_rng(seed, 0).standard_normal(gmm.dim)
    log = _StepLog()
    for i in range(grid.steps):
        t, ab_t = float(grid.times[i]), float(grid.alpha_bars[i])
        ab_prev = float(grid.alpha_bars[i + 1])
        x0_cond = mx.posterior_mean_x0(gmm, x, ab_t, condition)
        x0_uncond = mx.posterior_mean_x0(gmm, x, ab_t, None)
        log.add(t, x, x0_cond, x0_uncond, x0_cond)
        x = ddim_step(x, x0_cond, ab_t, ab_prev)
        if inner_steps == 0 or ab_prev >= 1.0:
            # no corrector at the terminal point (beta_bar would be 0)
            continue
        kappa = ddpm_beta(ab_t, ab_prev)
        beta_bar_prev = 1.0 - ab_prev
        divisor = beta_bar_prev if langevin_mode == "paper-literal" else math.sqrt(beta_bar_prev)
        rng = step_rng(seed, i + 1)
        for _ in range(inner_steps):
            eps_c = gd.eps_from_x0(x, mx.posterior_mean_x0(gmm, x, ab_prev, condition), ab_prev)
            eps_u = gd.eps_from_x0(x, mx.posterior_mean_x0(gmm, x, ab_prev, None), ab_prev)
            eps_guided = (1.0 - omega) * eps_u + omega * eps_c
            noise = rng.standard_normal(gmm.dim)
            x = x - 0.5 * kappa * eps_guided / divisor + math.sqrt(kappa) * noise
    return log.freeze(seed, "pcg", omega, x)


# ---------------------------------------------------------------------------
# Flow-matching sampler
# ---------------------------------------------------------------------------

def flow_euler_step(
    x_t: np.ndarray,
    x1_hat: np.ndarray,
    t: float,
    dt: float,
    sigma_min: float,
) -> np.ndarray:
    """Explicit Euler update along the linear-path velocity field.

    ``v = (x1_hat - (1 - sigma_min) * x_t) / (1 - (1 - sigma_min) * t)``.
    """
    shrink = 1.0 - sigma_min
    std = 1.0 - shrink * t
    if std <= FLOW_STD_FLOOR:
        raise ValueError(f"path std underflow at t={t} (sigma_min={sigma_min})")
    x_t = np.asarray(x_t, dtype=float)
    v = (np.asarray(x1_hat, dtype=float) - shrink * x_t) / std
    return x_t + v * dt


def flow_posterior_mean_x1(
    gmm: GaussianMixture,
    x_t: np.ndarray,
    t: float,
    sigma_min: float,
    condition: int | None = None,
) -> np.ndarray:
    """Exact E[x1 | x_t] under the linear path with a mixture target.

    Per component the posterior is Gaussian with precision
    ``1 + t^2 / sigma_t^2`` and mean ``(mu + (t / sigma_t^2) x) / precision``;
    the mixture case weighs components by their marginal responsibilities
    (observation variance ``sigma_t^2 + t^2`` per component).
    """
    x_t = np.asarray(x_t, dtype=float)
    if x_t.shape[-1:] != (gmm.dim,):
        raise ValueError(f"point dimension {x_t.shape} incompatible with mixture dim {gmm.dim}")
    sigma = 1.0 - (1.0 - sigma_min) * t
    if sigma <= FLOW_STD_FLOOR:
        raise ValueError(f"path std underflow at t={t}")
    var = sigma * sigma
    precision = 1.0 + t * t / var
    if condition is not None:
        mu = gmm.means[int(condition)]
        return (mu + (t / var) * x_t) / precision
    # responsibilities under x_t | c ~ N(t * mu_c, (var + t^2) I)
    obs_var = var + t * t
    diff = x_t[..., None, :] - t * gmm.means
    logits = -0.5 * np.sum(diff * diff, axis=-1) / obs_var + np.log(gmm.weights)
    logits -= logsumexp(logits, axis=-1, keepdims=True)
    resp = np.exp(logits)
    comp_means = (gmm.means + (t / var) * x_t[..., None, :]) / precision
    return np.sum(resp[..., None] * comp_means, axis=-2)


def flow_sample_adg(
    gmm: GaussianMixture,
    sigma_min: float,
    steps: int,
    omega: float,
    angle_cap: float,
    condition: int,
    seed: int,
) -> TrajectoryRecord:
    """Integrate the guided flow from noise (t=0) to data (t=1).

    Per step the exact conditional/unconditional clean-target posteriors
    are rotated by the capped-angle rule before re-deriving the velocity.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    path = FlowPath(sigma_min=sigma_min)
    dt = 1.0 / steps
    x = step_rng(seed, 0).standard_normal(gmm.dim)
    log = _StepLog()
    for i in range(steps):
        t = i * dt
        x1_cond = flow_posterior_mean_x1(gmm, x, t, path.sigma_min, condition)
        x1_uncond = flow_posterior_mean_x1(gmm, x, t, path.sigma_min, None)
        gamma = _pair_angle(x1_cond, x1_uncond)
        gamma_omega = math.nan
        if math.isfinite(gamma):
            gamma_omega = gd.cap_angle((omega - 1.0) * gamma, angle_cap)
        guided = gd.rotate_raw(x1_cond, x1_uncond, omega, angle_cap)
        log.add(t, x, x1_cond, x1_uncond, guided, gamma, gamma_omega)
        x = flow_euler_step(x, guided, t, dt, path.sigma_min)
    return log.freeze(seed, "flow_adg", omega, x)
