"""Synthetic compositional problems with exact oracles.

The inner family maps parameters ``x`` in R^p to R^d through an affine
map ``g(x) = A x + b``, one ``(A, b)`` per inner sample; the outer family
scores a d-vector ``y`` through the quadratic loss
``f(y) = 0.5 * ||y - c||^2``, one target ``c`` per outer sample.
Averaging the inner family over a dataset and composing gives the nested
empirical objective

    F_S(x) = (1/n) sum_i f_i( (1/m) sum_j g_j(x) ),

and averaging over the sampling law gives the population objective.  For
the bounded-uniform noise model used here every population moment is
available in closed form, which is what makes the rest of the lab's
bound checks exact.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .core import Rng, as_matrix, as_vector

__all__ = [
    "InnerSample",
    "OuterSample",
    "Dataset",
    "PopulationLaw",
    "BoundParams",
    "inner_eval",
    "inner_jac",
    "outer_eval",
    "outer_grad",
    "sample_dataset",
    "empirical_inner",
    "empirical_risk",
    "empirical_risk_grad",
    "population_risk",
    "compute_constants",
    "benchmark_law",
    "save_dataset",
    "load_dataset",
]


@dataclass(frozen=True)
class InnerSample:
    """One inner map ``g(x) = a @ x + b`` with ``a`` of shape (d, p)."""

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self) -> None:
        a = as_matrix(self.a)
        b = as_vector(self.b, dim=a.shape[0])
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise ValueError("non-finite inner sample")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, InnerSample)
            and np.array_equal(self.a, other.a)
            and np.array_equal(self.b, other.b)
        )


@dataclass(frozen=True)
class OuterSample:
    """One outer loss ``f(y) = 0.5 * ||y - c||^2``."""

    c: np.ndarray

    def __post_init__(self) -> None:
        c = as_vector(self.c)
        if not np.all(np.isfinite(c)):
            raise ValueError("non-finite outer sample")
        object.__setattr__(self, "c", c)

    def __eq__(self, other) -> bool:
        return isinstance(other, OuterSample) and np.array_equal(self.c, other.c)


def inner_eval(sample: InnerSample, x) -> np.ndarray:
    """Value of the inner map at ``x``."""
    return sample.a @ as_vector(x, dim=sample.a.shape[1]) + sample.b


def inner_jac(sample: InnerSample, x) -> np.ndarray:
    """Jacobian of the inner map, returned as the (p, d) matrix ``a.T``.

    The orientation is chosen so that ``mat_vec(inner_jac(s, x), outer_grad)``
    is the chain-rule gradient in parameter space.
    """
    as_vector(x, dim=sample.a.shape[1])
    return np.ascontiguousarray(sample.a.T)


def outer_eval(sample: OuterSample, y) -> float:
    """Quadratic loss value at ``y``."""
    diff = as_vector(y, dim=sample.c.shape[0]) - sample.c
    return 0.5 * float(diff @ diff)


def outer_grad(sample: OuterSample, y) -> np.ndarray:
    """Gradient ``y - c`` of the quadratic loss."""
    return as_vector(y, dim=sample.c.shape[0]) - sample.c


@dataclass(frozen=True, eq=False)
class Dataset:
    """Stacked training data: m inner samples and n outer samples.

    ``inner_a`` has shape (m, d, p), ``inner_b`` shape (m, d) and
    ``outer_c`` shape (n, d).  Instances are immutable; the per-dataset
    means and spreads that the optimizers and oracles need repeatedly
    are cached on first use.
    """

    inner_a: np.ndarray
    inner_b: np.ndarray
    outer_c: np.ndarray

    def __post_init__(self) -> None:
        a = np.asarray(self.inner_a, dtype=float)
        b = np.asarray(self.inner_b, dtype=float)
        c = np.asarray(self.outer_c, dtype=float)
        if a.ndim != 3 or b.ndim != 2 or c.ndim != 2:
            raise ValueError("inner_a must be (m, d, p); inner_b (m, d); outer_c (n, d)")
        if a.shape[0] == 0 or c.shape[0] == 0:
            raise ValueError("empty dataset")
        if b.shape != a.shape[:2]:
            raise ValueError("inner_b shape does not match inner_a")
        if c.shape[1] != a.shape[1]:
            raise ValueError("outer_c dimension does not match the inner range")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b)) and np.all(np.isfinite(c))):
            raise ValueError("non-finite dataset entries")
        object.__setattr__(self, "inner_a", a)
        object.__setattr__(self, "inner_b", b)
        object.__setattr__(self, "outer_c", c)

    @classmethod
    def from_samples(cls, outer: list[OuterSample], inner: list[InnerSample]) -> "Dataset":
        if not outer or not inner:
            raise ValueError("empty dataset")
        return cls(
            inner_a=np.stack([s.a for s in inner]),
            inner_b=np.stack([s.b for s in inner]),
            outer_c=np.stack([s.c for s in outer]),
        )

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Dataset)
            and np.array_equal(self.inner_a, other.inner_a)
            and np.array_equal(self.inner_b, other.inner_b)
            and np.array_equal(self.outer_c, other.outer_c)
        )

    @property
    def n(self) -> int:
        return self.outer_c.shape[0]

    @property
    def m(self) -> int:
        return self.inner_a.shape[0]

    @property
    def d(self) -> int:
        return self.inner_a.shape[1]

    @property
    def p(self) -> int:
        return self.inner_a.shape[2]

    def inner_sample(self, j: int) -> InnerSample:
        return InnerSample(self.inner_a[j], self.inner_b[j])

    def outer_sample(self, i: int) -> OuterSample:
        return OuterSample(self.outer_c[i])

    @cached_property
    def a_bar(self) -> np.ndarray:
        return self.inner_a.mean(axis=0)

    @cached_property
    def b_bar(self) -> np.ndarray:
        return self.inner_b.mean(axis=0)

    @cached_property
    def c_bar(self) -> np.ndarray:
        return self.outer_c.mean(axis=0)

    @cached_property
    def outer_spread(self) -> float:
        """Mean squared distance of the outer targets from their mean."""
        diff = self.outer_c - self.c_bar
        return float(np.mean(np.sum(diff * diff, axis=1)))


@dataclass(frozen=True)
class PopulationLaw:
    """Sampling law for the affine-quadratic family.

    Inner samples are ``(a0 + U, b0 + u)`` and outer samples ``c0 + w``
    where every noise entry is independent uniform on ``[-tau, tau]``
    with the matching half-width.  Bounded noise keeps all the Lipschitz
    and variance constants finite on any bounded domain.
    """

    a0: np.ndarray
    b0: np.ndarray
    c0: np.ndarray
    tau_a: float = 0.0
    tau_b: float = 0.0
    tau_c: float = 0.0
    noise: str = "uniform"

    def __post_init__(self) -> None:
        a0 = as_matrix(self.a0)
        b0 = as_vector(self.b0, dim=a0.shape[0])
        c0 = as_vector(self.c0, dim=a0.shape[0])
        if not (np.all(np.isfinite(a0)) and np.all(np.isfinite(b0)) and np.all(np.isfinite(c0))):
            raise ValueError("non-finite law parameters")
        for name in ("tau_a", "tau_b", "tau_c"):
            tau = getattr(self, name)
            if not (np.isfinite(tau) and tau >= 0):
                raise ValueError(f"{name} must be a finite nonnegative real")
        object.__setattr__(self, "a0", a0)
        object.__setattr__(self, "b0", b0)
        object.__setattr__(self, "c0", c0)

    @property
    def d(self) -> int:
        return self.a0.shape[0]

    @property
    def p(self) -> int:
        return self.a0.shape[1]

    def _require_uniform(self) -> None:
        if self.noise != "uniform":
            raise ValueError("no analytic population risk for noise law " + repr(self.noise))

    def inner_mean(self, x) -> np.ndarray:
        """Population mean of the inner map at ``x``."""
        return self.a0 @ as_vector(x, dim=self.p) + self.b0

    def inner_variance_at(self, x) -> float:
        """Population variance E ||g(x) - E g(x)||^2 at a fixed ``x``.

        For entrywise uniform noise each entry has variance tau^2 / 3, so
        the total is d * (tau_a^2 ||x||^2 + tau_b^2) / 3.
        """
        self._require_uniform()
        v = as_vector(x, dim=self.p)
        return self.d * (self.tau_a**2 * float(v @ v) + self.tau_b**2) / 3.0

    @property
    def outer_variance(self) -> float:
        """Population variance E ||c - c0||^2 of the outer targets."""
        self._require_uniform()
        return self.d * self.tau_c**2 / 3.0


def sample_dataset(law: PopulationLaw, n: int, m: int, rng: Rng) -> Dataset:
    """Draw n outer and m inner samples i.i.d. from the law.

    Deterministic given ``rng``: noise blocks are drawn in the fixed
    order inner matrices, inner offsets, outer targets.
    """
    if n < 1 or m < 1:
        raise ValueError("empty dataset")
    if law.noise != "uniform":
        raise ValueError("unsupported noise law " + repr(law.noise))
    gen = rng.generator()
    d, p = law.d, law.p
    inner_a = law.a0 + gen.uniform(-law.tau_a, law.tau_a, size=(m, d, p))
    inner_b = law.b0 + gen.uniform(-law.tau_b, law.tau_b, size=(m, d))
    outer_c = law.c0 + gen.uniform(-law.tau_c, law.tau_c, size=(n, d))
    return Dataset(inner_a=inner_a, inner_b=inner_b, outer_c=outer_c)


def empirical_inner(dataset: Dataset, x) -> np.ndarray:
    """Mean of the inner maps over the dataset: ``a_bar @ x + b_bar``."""
    return dataset.a_bar @ as_vector(x, dim=dataset.p) + dataset.b_bar


def empirical_risk(dataset: Dataset, x) -> float:
    """Nested empirical objective at ``x``.

    Expands to 0.5 * ||g_bar(x) - c_bar||^2 plus half the spread of the
    outer targets around their mean (an x-free constant).
    """
    diff = empirical_inner(dataset, x) - dataset.c_bar
    return 0.5 * float(diff @ diff) + 0.5 * dataset.outer_spread


def empirical_risk_grad(dataset: Dataset, x) -> np.ndarray:
    """Exact chain-rule gradient of :func:`empirical_risk`."""
    diff = empirical_inner(dataset, x) - dataset.c_bar
    return dataset.a_bar.T @ diff


def population_risk(law: PopulationLaw, x) -> float:
    """Population objective at ``x`` in closed form.

    Equals 0.5 * ||a0 x + b0 - c0||^2 plus the irreducible constant
    0.5 * E||c - c0||^2 contributed by outer-target noise.
    """
    diff = law.inner_mean(x) - law.c0
    return 0.5 * float(diff @ diff) + 0.5 * law.outer_variance


@dataclass(frozen=True)
class BoundParams:
    """Problem constants consumed by the reference bound formulas.

    lip_f        Lipschitz constant of the outer losses on the reachable set
    lip_g        Lipschitz constant of the inner maps (max operator norm)
    grad_lip_f   Lipschitz constant of the outer gradients (1 for quadratics)
    smooth_l     smoothness of the composed empirical objective
    sigma        strong-convexity modulus of the composed empirical objective
    var_g        sup over the domain of the inner-value empirical variance
    var_grad_g   empirical variance of the inner Jacobians (x-free here)
    d_x          bound on the squared iterate-to-optimum distance
    d_y          bound on the squared initial tracking gap
    free_c       free exponent in the tracking decay term
    """

    lip_f: float
    lip_g: float
    grad_lip_f: float
    smooth_l: float
    sigma: float
    var_g: float
    var_grad_g: float
    d_x: float
    d_y: float
    free_c: float = 2.0

    def __post_init__(self) -> None:
        for name in (
            "lip_f",
            "lip_g",
            "grad_lip_f",
            "smooth_l",
            "sigma",
            "var_g",
            "var_grad_g",
            "d_x",
            "d_y",
        ):
            value = getattr(self, name)
            if not (np.isfinite(value) and value >= 0):
                raise ValueError(f"{name} must be a finite nonnegative real")
        if not (np.isfinite(self.free_c) and self.free_c > 0):
            raise ValueError("free_c must be positive")
        if self.sigma > self.smooth_l + 1e-12 * max(1.0, self.smooth_l):
            raise ValueError("sigma cannot exceed the smoothness constant")


_BOUNDARY_SEED = Rng(0x5C0_1AB)


def _sphere_directions(dim: int, count: int) -> np.ndarray:
    """Deterministic well-spread unit directions used by the boundary sampler."""
    gen = _BOUNDARY_SEED.split(f"sphere-{dim}-{count}").generator()
    raw = gen.standard_normal(size=(count, dim))
    norms = np.linalg.norm(raw, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return raw / norms


def _refine_on_sphere(mat: np.ndarray, vec: np.ndarray, radius: float,
                      xs: np.ndarray, iters: int = 80) -> np.ndarray:
    """Ascend ``x' mat x + 2 vec' x`` on the sphere from each row of ``xs``.

    The fixed point x <- radius * unit(mat @ x + vec) is the conditional
    gradient step for maximizing a convex quadratic over the ball, which
    is monotone, so every row only improves.
    """
    pts = xs.copy()
    for _ in range(iters):
        grad = pts @ mat + vec
        norms = np.linalg.norm(grad, axis=1, keepdims=True)
        mask = norms[:, 0] > 0.0
        pts[mask] = radius * grad[mask] / norms[mask]
    return pts


def _max_quadratic_on_ball(mat: np.ndarray, vec: np.ndarray, const: float,
                           radius: float, dirs: np.ndarray) -> float:
    """sup over ||x|| <= radius of the convex quadratic x'mat x + 2 vec'x + const."""
    xs = radius * dirs
    # Eigen-directions of the quadratic part are strong candidates.
    _, eigvecs = np.linalg.eigh(mat)
    top = eigvecs[:, -1]
    extra = [top, -top]
    if np.linalg.norm(vec) > 0:
        extra.append(vec / np.linalg.norm(vec))
    xs = np.vstack([xs, radius * np.stack(extra)])
    xs = _refine_on_sphere(mat, vec, radius, xs)
    vals = np.einsum("kp,pq,kq->k", xs, mat, xs) + 2.0 * xs @ vec + const
    return max(float(np.max(vals)), const)


def _max_affine_norm_sq(b_mat: np.ndarray, u_vec: np.ndarray, radius: float,
                        dirs: np.ndarray) -> float:
    """sup over ||x|| <= radius of ||b_mat @ x + u_vec||^2 (attained on the sphere)."""
    return _max_quadratic_on_ball(
        b_mat.T @ b_mat, b_mat.T @ u_vec, float(u_vec @ u_vec), radius, dirs
    )


def compute_constants(dataset: Dataset, domain_radius: float, grid: int = 512) -> BoundParams:
    """Compute every bound constant for the affine-quadratic family.

    Closed forms are used wherever they exist (operator norms, Frobenius
    deviations, extreme eigenvalues of the mean Gram matrix).  The two
    genuine suprema over the ball, the inner-value variance ``var_g`` and
    the reachable-set radius behind ``lip_f``, are maximized on the
    boundary by ``grid`` sampled directions refined with a monotone
    fixed-point ascent; the maxima of convex quadratics over a ball sit
    on the sphere, so boundary search is exact up to the refinement.
    """
    if not (np.isfinite(domain_radius) and domain_radius > 0):
        raise ValueError("invalid domain")
    if grid < 1:
        raise ValueError("grid must be >= 1")
    a = dataset.inner_a
    a_bar = dataset.a_bar
    b_bar = dataset.b_bar
    m, d, p = a.shape

    lip_g = max(float(np.linalg.norm(a[j], 2)) for j in range(m))
    diffs_a = a - a_bar
    diffs_b = dataset.inner_b - b_bar
    var_grad_g = float(np.mean(np.sum(diffs_a * diffs_a, axis=(1, 2))))

    gram = a_bar.T @ a_bar
    eigs = np.linalg.eigvalsh(gram)
    sigma = max(float(eigs[0]), 0.0)
    smooth_l = max(float(eigs[-1]), 0.0)

    dirs = _sphere_directions(p, grid)

    # var_g: (1/m) sum_j ||(a_j - a_bar) x + (b_j - b_bar)||^2 is one convex
    # quadratic in x; assemble its moment form and maximize on the sphere.
    mom_mat = np.einsum("jdp,jdq->pq", diffs_a, diffs_a) / m
    mom_vec = np.einsum("jdp,jd->p", diffs_a, diffs_b) / m
    mom_const = float(np.mean(np.sum(diffs_b * diffs_b, axis=1)))
    var_g = max(
        _max_quadratic_on_ball(mom_mat, mom_vec, mom_const, domain_radius, dirs), 0.0
    )

    # A-priori tracker deviation: with y0 = 0 the first tracker value is a
    # convex combination of 0 and one inner value, so the gap to the inner
    # mean never exceeds max(sup ||g_j - g_bar||, sup ||g_bar||).
    sup_mean = np.sqrt(_max_affine_norm_sq(a_bar, b_bar, domain_radius, dirs))
    sup_dev = 0.0
    for j in range(m):
        sup_dev = max(
            sup_dev,
            _max_affine_norm_sq(diffs_a[j], diffs_b[j], domain_radius, dirs),
        )
    d_y = max(sup_mean, np.sqrt(sup_dev)) ** 2

    # lip_f: largest gradient norm of an outer loss over the reachable set
    # {g_bar(x) : ||x|| <= R} inflated by the tracker deviation sqrt(d_y).
    # All outer losses share the quadratic part, so candidate boundary
    # points are scored against every target at once and only the best
    # few (point, target) pairs are refined.
    xs0 = domain_radius * dirs
    u = xs0 @ a_bar.T + b_bar  # (k, d)
    c = dataset.outer_c
    dist_sq = (
        np.sum(u * u, axis=1)[:, None]
        - 2.0 * u @ c.T
        + np.sum(c * c, axis=1)[None, :]
    )
    per_target = dist_sq.max(axis=0)
    shortlist = np.argsort(per_target)[::-1][: min(8, c.shape[0])]
    best = 0.0
    for i in shortlist:
        best = max(best, _max_affine_norm_sq(a_bar, b_bar - c[i], domain_radius, dirs))
    lip_f = float(np.sqrt(best) + np.sqrt(d_y))

    return BoundParams(
        lip_f=lip_f,
        lip_g=lip_g,
        grad_lip_f=1.0,
        smooth_l=smooth_l,
        sigma=sigma,
        var_g=var_g,
        var_grad_g=var_grad_g,
        d_x=(2.0 * domain_radius) ** 2,
        d_y=float(d_y),
    )


_BENCHMARKS = {
    # kind: (p, d, singular value range, tau_a, tau_b, tau_c, target norm of c0)
    "convex": (5, 4, (0.6, 1.2), 0.10, 0.10, 0.5, 2.0),
    "strongly_convex": (4, 5, (1.25, 1.60), 0.05, 0.05, 0.5, 2.0),
}


def benchmark_law(kind: str = "convex") -> PopulationLaw:
    """Deterministic benchmark laws used across the experiment suite.

    ``convex`` uses a wide mean matrix (d < p), so the composed objective
    has a flat direction and is convex but not strongly convex.
    ``strongly_convex`` uses a tall mean matrix with singular values
    bounded away from zero, giving a strong-convexity modulus well above
    one half for any realistically sampled dataset.
    """
    try:
        p, d, sv_range, tau_a, tau_b, tau_c, c_norm = _BENCHMARKS[kind]
    except KeyError:
        raise ValueError(f"unknown benchmark {kind!r}") from None
    gen = Rng(0xBE9C).split(f"benchmark-{kind}").generator()
    raw = gen.standard_normal(size=(d, p))
    u, _, vt = np.linalg.svd(raw, full_matrices=False)
    svals = np.linspace(sv_range[0], sv_range[1], min(d, p))
    a0 = (u * svals) @ vt
    c0 = gen.standard_normal(size=d)
    c0 *= c_norm / np.linalg.norm(c0)
    return PopulationLaw(
        a0=a0,
        b0=np.zeros(d),
        c0=c0,
        tau_a=tau_a,
        tau_b=tau_b,
        tau_c=tau_c,
    )


def save_dataset(dataset: Dataset, inner_path, outer_path) -> None:
    """Write the dataset as a CSV pair for reproducibility audits.

    inner.csv carries one row per inner sample with the matrix flattened
    row-major ahead of the offset; outer.csv one row per outer sample.
    Column names carry the index structure, hence the dimensions.
    """
    from .reporting import emit_csv

    d, p = dataset.d, dataset.p
    inner_header = [f"a_{r}_{s}" for r in range(d) for s in range(p)] + [
        f"b_{r}" for r in range(d)
    ]
    inner_rows = [
        list(dataset.inner_a[j].reshape(-1)) + list(dataset.inner_b[j])
        for j in range(dataset.m)
    ]
    emit_csv(inner_path, inner_header, inner_rows)
    outer_header = [f"c_{r}" for r in range(d)]
    emit_csv(outer_path, outer_header, [list(row) for row in dataset.outer_c])


def load_dataset(inner_path, outer_path) -> Dataset:
    """Inverse of :func:`save_dataset`."""
    from .reporting import read_csv

    inner_header, inner_rows = read_csv(inner_path)
    outer_header, outer_rows = read_csv(outer_path)
    d = sum(1 for name in inner_header if name.startswith("b_"))
    p = (len(inner_header) - d) // d
    inner = np.asarray(inner_rows, dtype=float)
    outer = np.asarray(outer_rows, dtype=float)
    if outer.ndim != 2 or outer.shape[1] != len(outer_header):
        raise ValueError("malformed outer csv")
    return Dataset(
        inner_a=inner[:, : d * p].reshape(-1, d, p),
        inner_b=inner[:, d * p :],
        outer_c=outer,
    )
