"""Two-timescale stochastic compositional optimizers.

Each step samples one inner index j and one outer index i uniformly with
replacement, advances the inner tracker

    SCGD:  y <- (1 - beta) * y + beta * g_j(x)
    SCSC:  y <- (1 - beta) * (y + g_j(x) - g_j(x_prev)) + beta * g_j(x)

and then takes the projected chain-rule step

    x <- project_ball(x - eta * jac_j(x) @ grad f_i(y), radius).

Step sizes are constant over a run.  Outputs can be the last iterate,
the uniform average of all iterates, a geometrically weighted average
suited to strongly convex objectives, or a uniformly drawn iterate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .core import Rng, as_vector, mat_vec, project_ball
from .problems import Dataset

__all__ = [
    "Variant",
    "OptimizerConfig",
    "Trajectory",
    "tracking_step",
    "param_step",
    "run",
    "select_output",
    "schedule_preset",
]

OUTPUT_MODES = ("last", "uniform_average", "sigma_weighted", "uniform_random")

MAX_STORED_ITERATES = 4096

_ONE_BELOW = float(np.nextafter(1.0, 0.0))


class Variant(Enum):
    SCGD = "scgd"
    SCSC = "scsc"


def tracking_step(variant: Variant, y, g_cur, g_prev, beta: float) -> np.ndarray:
    """One inner-tracker update; ``g_prev`` is ignored for SCGD."""
    if not 0.0 < beta <= 1.0:
        raise ValueError("beta must lie in (0, 1]")
    yv = as_vector(y)
    gc = as_vector(g_cur, dim=yv.shape[0])
    if variant is Variant.SCGD:
        return (1.0 - beta) * yv + beta * gc
    gp = as_vector(g_prev, dim=yv.shape[0])
    return (1.0 - beta) * (yv + gc - gp) + beta * gc


def param_step(x, jac, outer_g, eta: float, radius: float) -> np.ndarray:
    """Projected gradient step through the inner Jacobian."""
    if not eta > 0:
        raise ValueError("eta must be positive")
    xv = as_vector(x)
    step = xv - eta * mat_vec(jac, outer_g)
    return project_ball(step, radius)


@dataclass(frozen=True)
class OptimizerConfig:
    """Run parameters for :func:`run`.

    ``x0`` and ``y0`` default to the origin.  ``eta = 0`` is allowed as a
    degenerate no-movement run (the parameter vector never leaves ``x0``),
    which is occasionally useful as a zero-iteration stand-in.
    """

    variant: Variant
    steps: int
    eta: float
    beta: float
    domain_radius: float = 10.0
    x0: np.ndarray | None = None
    y0: np.ndarray | None = None
    output_mode: str = "last"
    sigma: float | None = None
    record_tracking: bool = False
    record_indices: bool = False

    def __post_init__(self) -> None:
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if not (np.isfinite(self.eta) and self.eta >= 0):
            raise ValueError("eta must be a finite nonnegative real")
        if not 0.0 < self.beta <= 1.0:
            raise ValueError("beta must lie in (0, 1]")
        if not (np.isfinite(self.domain_radius) and self.domain_radius > 0):
            raise ValueError("invalid domain")
        if self.output_mode not in OUTPUT_MODES:
            raise ValueError(f"unknown output mode {self.output_mode!r}")
        if self.output_mode == "sigma_weighted":
            if self.sigma is None or not self.sigma > 0:
                raise ValueError("sigma_weighted output needs sigma > 0")
            if self.sigma * self.eta >= 2.0:
                raise ValueError("unstable weights")
        if self.x0 is not None:
            x0 = as_vector(self.x0)
            if float(np.linalg.norm(x0)) > self.domain_radius * (1 + 1e-12):
                raise ValueError("x0 lies outside the domain")
            object.__setattr__(self, "x0", x0)
        if self.y0 is not None:
            object.__setattr__(self, "y0", as_vector(self.y0))


@dataclass(frozen=True)
class Trajectory:
    """Recorded history of a run.

    ``stored_steps`` lists which iterates (1-based step numbers) are kept
    in ``iterates``; long runs are thinned to a uniform stride of at most
    4096 stored points, but the running averages are exact regardless.
    ``tracking_sq_errors[t]`` is the squared gap between the tracker and
    the empirical inner mean at the pre-step point, for t = 0 .. T-1.
    """

    variant: Variant
    steps: int
    eta: float
    beta: float
    output_mode: str
    stored_steps: np.ndarray
    iterates: np.ndarray
    last: np.ndarray
    uniform_avg: np.ndarray
    sigma_avg: np.ndarray | None
    sigma: float | None
    random_iterate: np.ndarray | None
    final_output: np.ndarray
    tracking_sq_errors: np.ndarray | None
    index_log: np.ndarray | None

    @property
    def is_full(self) -> bool:
        return self.stored_steps.shape[0] == self.steps

    @property
    def initial_tracking_gap_sq(self) -> float:
        """Measured squared gap of the first tracker value, ||y_1 - g_bar(x_0)||^2."""
        if self.tracking_sq_errors is None:
            raise ValueError("run was not recorded with record_tracking")
        return float(self.tracking_sq_errors[0])


def _storage_stride(steps: int) -> int:
    stride = -(-steps // MAX_STORED_ITERATES)  # ceil division
    return max(stride, 1)


def run(dataset: Dataset, cfg: OptimizerConfig, rng: Rng) -> Trajectory:
    """Execute a full optimization run; deterministic given ``rng``.

    The inner and outer index sequences are drawn up front as two blocks
    from the stream (inner first), followed by the uniform output draw
    when that mode is requested, so coupled executions can share the
    realized randomness exactly.
    """
    gen = rng.generator()
    j_idx = gen.integers(0, dataset.m, size=cfg.steps, dtype=np.int64)
    i_idx = gen.integers(0, dataset.n, size=cfg.steps, dtype=np.int64)
    tau = None
    if cfg.output_mode == "uniform_random":
        tau = int(gen.integers(1, cfg.steps + 1))
    return _run_with_indices(dataset, cfg, j_idx, i_idx, tau)


def _run_with_indices(
    dataset: Dataset,
    cfg: OptimizerConfig,
    j_idx: np.ndarray,
    i_idx: np.ndarray,
    tau: int | None,
) -> Trajectory:
    steps = cfg.steps
    p, d = dataset.p, dataset.d
    inner_a = dataset.inner_a
    inner_b = dataset.inner_b
    outer_c = dataset.outer_c
    a_bar = dataset.a_bar
    b_bar = dataset.b_bar

    x = np.zeros(p) if cfg.x0 is None else cfg.x0.copy()
    y = np.zeros(d) if cfg.y0 is None else cfg.y0.copy()
    x_prev = x
    eta = cfg.eta
    beta = cfg.beta
    one_minus_beta = 1.0 - beta
    radius = cfg.domain_radius
    radius_sq = radius * radius
    scsc = cfg.variant is Variant.SCSC and beta != 1.0

    track = np.empty(steps) if cfg.record_tracking else None
    stride = _storage_stride(steps)
    stored_steps = []
    stored_iterates = []
    usum = np.zeros(p)
    sigma_mode = cfg.output_mode == "sigma_weighted"
    if sigma_mode:
        rho = 1.0 - cfg.sigma * eta / 2.0
        wacc = np.zeros(p)
        wsum = 0.0
    random_iterate = None

    for t in range(steps):
        j = j_idx[t]
        a_j = inner_a[j]
        g_cur = a_j @ x + inner_b[j]
        if scsc:
            g_prev = a_j @ x_prev + inner_b[j]
            y = one_minus_beta * (y + g_cur - g_prev) + beta * g_cur
        else:
            y = one_minus_beta * y + beta * g_cur
        if track is not None:
            gap = y - (a_bar @ x + b_bar)
            track[t] = gap @ gap
        outer_g = y - outer_c[i_idx[t]]
        x_new = x - eta * (outer_g @ a_j)
        nrm_sq = x_new @ x_new
        if nrm_sq > radius_sq:
            x_new *= radius / math.sqrt(nrm_sq)
            # Match project_ball exactly: force strict shrinkage when the
            # boundary ratio rounds to 1.0 so the loop always terminates.
            while x_new @ x_new > radius_sq:
                scale = radius / math.sqrt(x_new @ x_new)
                if scale >= 1.0:
                    scale = _ONE_BELOW
                x_new *= scale
        x_prev = x
        x = x_new
        usum += x
        if sigma_mode:
            wacc *= rho
            wacc += x
            wsum = rho * wsum + 1.0
        step_no = t + 1
        if step_no % stride == 0 or step_no == steps:
            if not stored_steps or stored_steps[-1] != step_no:
                stored_steps.append(step_no)
                stored_iterates.append(x)
        if tau is not None and step_no == tau:
            random_iterate = x

    uniform_avg = usum / steps
    sigma_avg = wacc / wsum if sigma_mode else None

    if cfg.output_mode == "last":
        final = x
    elif cfg.output_mode == "uniform_average":
        final = uniform_avg
    elif cfg.output_mode == "sigma_weighted":
        final = sigma_avg
    else:
        final = random_iterate

    index_log = None
    if cfg.record_indices:
        index_log = np.stack([j_idx, i_idx], axis=1)

    return Trajectory(
        variant=cfg.variant,
        steps=steps,
        eta=eta,
        beta=beta,
        output_mode=cfg.output_mode,
        stored_steps=np.asarray(stored_steps, dtype=np.int64),
        iterates=np.stack(stored_iterates),
        last=x,
        uniform_avg=uniform_avg,
        sigma_avg=sigma_avg,
        sigma=cfg.sigma if sigma_mode else None,
        random_iterate=random_iterate,
        final_output=final,
        tracking_sq_errors=track,
        index_log=index_log,
    )


def select_output(
    traj: Trajectory,
    mode: str,
    sigma: float | None = None,
    eta: float | None = None,
) -> np.ndarray:
    """Pick the run output for the requested mode.

    The uniform and last-iterate outputs are always available.  The
    geometrically weighted output is returned from the run's streaming
    accumulator when it was configured, and otherwise recomputed in a
    single pass over the iterates, which requires full recording.
    """
    if mode not in OUTPUT_MODES:
        raise ValueError(f"unknown output mode {mode!r}")
    if mode == "last":
        return traj.last
    if mode == "uniform_average":
        return traj.uniform_avg
    if mode == "uniform_random":
        if traj.random_iterate is None:
            raise ValueError("run did not record a uniformly drawn iterate")
        return traj.random_iterate
    if sigma is None:
        sigma = traj.sigma
    if eta is None:
        eta = traj.eta
    if sigma is None or not sigma > 0:
        raise ValueError("sigma_weighted output needs sigma > 0")
    if sigma * eta >= 2.0:
        raise ValueError("unstable weights")
    if traj.sigma_avg is not None and traj.sigma == sigma and traj.eta == eta:
        return traj.sigma_avg
    if not traj.is_full:
        raise ValueError("sigma_weighted recomputation needs a fully recorded trajectory")
    rho = 1.0 - sigma * eta / 2.0
    acc = np.zeros(traj.iterates.shape[1])
    wsum = 0.0
    for point in traj.iterates:
        acc = rho * acc + point
        wsum = rho * wsum + 1.0
    return acc / wsum


# (iteration exponent, eta exponent, beta exponent) per variant and regime
_PRESETS = {
    (Variant.SCGD, "convex"): (3.5, 6.0 / 7.0, 4.0 / 7.0),
    (Variant.SCSC, "convex"): (2.5, 4.0 / 5.0, 4.0 / 5.0),
    (Variant.SCGD, "strongly_convex"): (5.0 / 3.0, 9.0 / 10.0, 3.0 / 5.0),
    (Variant.SCSC, "strongly_convex"): (7.0 / 6.0, 6.0 / 7.0, 6.0 / 7.0),
}


def schedule_preset(
    variant: Variant,
    convexity: str,
    n: int,
    m: int,
    t_max: int | None = None,
) -> tuple[int, float, float]:
    """Published (T, eta, beta) rule for the requested regime.

    T = ceil(max(n, m) ** exponent) with eta = T^-a and beta = T^-b; the
    optional ``t_max`` caps T (the step sizes then follow the capped T).
    """
    if convexity not in ("convex", "strongly_convex"):
        raise ValueError(f"unknown convexity {convexity!r}")
    if n < 1 or m < 1:
        raise ValueError("n and m must be >= 1")
    exponent, a, b = _PRESETS[(variant, convexity)]
    # Guard against pow() landing an ulp above an exact integer.
    steps = int(math.ceil(float(max(n, m)) ** exponent - 1e-9))
    steps = max(steps, 1)
    if t_max is not None:
        steps = min(steps, int(t_max))
    return steps, float(steps) ** -a, float(steps) ** -b
