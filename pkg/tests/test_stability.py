import dataclasses

import numpy as np
import pytest

from scolab.core import Rng
from scolab.optimizer import OptimizerConfig, Variant, run
from scolab.problems import (
    InnerSample,
    OuterSample,
    PopulationLaw,
    benchmark_law,
    sample_dataset,
    save_dataset,
)
from scolab.stability import (
    NeighborSpec,
    check_generalization_inequality,
    coupled_run,
    estimate_stability,
    make_neighbor,
)

RNG = Rng(404)


def small_cfg(variant=Variant.SCGD, steps=200, eta=1e-2, beta=0.2, **kw):
    return OptimizerConfig(variant=variant, steps=steps, eta=eta, beta=beta, **kw)


class TestMakeNeighbor:
    def test_identical_replacement_gives_equal_dataset(self):
        data = sample_dataset(benchmark_law("convex"), 6, 6, RNG.split("eq"))
        spec = NeighborSpec("nu", 2, OuterSample(data.outer_c[2]))
        assert make_neighbor(data, spec) == data

    def test_nu_neighbor_keeps_inner_samples(self):
        data = sample_dataset(benchmark_law("convex"), 6, 6, RNG.split("nu"))
        swap = OuterSample(np.zeros(data.d))
        neighbor = make_neighbor(data, NeighborSpec("nu", 1, swap))
        assert np.array_equal(neighbor.inner_a, data.inner_a)
        assert np.array_equal(neighbor.inner_b, data.inner_b)
        assert not np.array_equal(neighbor.outer_c[1], data.outer_c[1])
        # the original is untouched
        assert not np.array_equal(data.outer_c[1], np.zeros(data.d))

    def test_serialized_difference_is_one_record(self, tmp_path):
        data = sample_dataset(benchmark_law("convex"), 6, 6, RNG.split("ser"))
        swap = InnerSample(np.zeros((data.d, data.p)), np.ones(data.d))
        neighbor = make_neighbor(data, NeighborSpec("omega", 4, swap))
        save_dataset(data, tmp_path / "ia.csv", tmp_path / "oa.csv")
        save_dataset(neighbor, tmp_path / "ib.csv", tmp_path / "ob.csv")
        inner_a = (tmp_path / "ia.csv").read_text().splitlines()
        inner_b = (tmp_path / "ib.csv").read_text().splitlines()
        assert sum(1 for a, b in zip(inner_a, inner_b) if a != b) == 1
        assert (tmp_path / "oa.csv").read_text() == (tmp_path / "ob.csv").read_text()

    def test_index_out_of_range(self):
        data = sample_dataset(benchmark_law("convex"), 3, 3, RNG.split("rng"))
        with pytest.raises(IndexError):
            make_neighbor(data, NeighborSpec("nu", 3, OuterSample(np.zeros(data.d))))
        with pytest.raises(IndexError):
            make_neighbor(
                data,
                NeighborSpec("omega", -1, InnerSample(np.zeros((data.d, data.p)), np.zeros(data.d))),
            )

    def test_kind_and_payload_validated(self):
        with pytest.raises(ValueError, match="unknown neighbor kind"):
            NeighborSpec("mu", 0, OuterSample(np.zeros(2)))
        with pytest.raises(ValueError, match="outer sample"):
            NeighborSpec("nu", 0, InnerSample(np.zeros((2, 2)), np.zeros(2)))


class TestCoupledRun:
    @pytest.mark.parametrize("variant", [Variant.SCGD, Variant.SCSC])
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_identical_datasets_give_zero_distance(self, variant, seed):
        data = sample_dataset(benchmark_law("convex"), 8, 8, RNG.split(f"z{seed}"))
        result = coupled_run(data, data, small_cfg(variant), RNG.split(f"zr{seed}"))
        assert result.distance == 0.0

    def test_unsampled_inner_replacement_is_invisible(self):
        data = sample_dataset(benchmark_law("convex"), 5, 64, RNG.split("uns"))
        cfg = small_cfg(steps=30, record_indices=True)
        probe = coupled_run(data, data, cfg, RNG.split("unsrun"))
        seen = set(probe.trajectory.index_log[:, 0].tolist())
        unseen = next(j for j in range(data.m) if j not in seen)
        swap = InnerSample(np.zeros((data.d, data.p)), np.ones(data.d))
        neighbor = make_neighbor(data, NeighborSpec("omega", unseen, swap))
        result = coupled_run(data, neighbor, cfg, RNG.split("unsrun"))
        assert result.distance == 0.0

    def test_distance_bounded_by_diameter(self):
        data = sample_dataset(benchmark_law("convex"), 5, 5, RNG.split("diam"))
        swap = OuterSample(np.full(data.d, 50.0))
        neighbor = make_neighbor(data, NeighborSpec("nu", 0, swap))
        cfg = small_cfg(eta=0.9, steps=300, domain_radius=2.0)
        result = coupled_run(data, neighbor, cfg, RNG.split("diamrun"))
        assert result.distance <= 2 * 2.0

    def test_mismatched_sizes_rejected(self):
        a = sample_dataset(benchmark_law("convex"), 4, 4, RNG.split("mma"))
        b = sample_dataset(benchmark_law("convex"), 5, 4, RNG.split("mmb"))
        with pytest.raises(ValueError, match="non-neighboring datasets"):
            coupled_run(a, b, small_cfg(), RNG.split("mm"))

    def test_uncoupled_mode_redraws_indices(self):
        data = sample_dataset(benchmark_law("convex"), 8, 8, RNG.split("unc"))
        coupled = coupled_run(data, data, small_cfg(), RNG.split("uncrun"), coupled=True)
        uncoupled = coupled_run(data, data, small_cfg(), RNG.split("uncrun"), coupled=False)
        assert coupled.distance == 0.0
        assert uncoupled.distance > 0.0


class TestEstimateStability:
    def test_zero_noise_law_is_perfectly_stable(self):
        law = PopulationLaw(a0=np.eye(3), b0=np.zeros(3), c0=np.ones(3))
        est = estimate_stability(law, 5, 5, small_cfg(), 4, RNG.split("zn"))
        assert est.eps_nu == 0.0 and est.eps_nu_se == 0.0
        assert est.eps_omega == 0.0 and est.eps_omega_se == 0.0

    def test_zero_step_size_is_perfectly_stable(self):
        law = benchmark_law("convex")
        cfg = OptimizerConfig(variant=Variant.SCGD, steps=1, eta=0.0, beta=0.5)
        est = estimate_stability(law, 5, 5, cfg, 4, RNG.split("eta0"))
        assert est.eps_nu == 0.0
        assert est.eps_omega == 0.0

    def test_degenerate_inner_family_has_zero_omega_sensitivity(self):
        law = dataclasses.replace(benchmark_law("convex"), tau_a=0.0, tau_b=0.0)
        est = estimate_stability(law, 10, 10, small_cfg(), 20, RNG.split("dg"))
        assert est.eps_omega == 0.0
        assert est.eps_nu > 0.0

    def test_estimates_finite_and_nonnegative(self):
        est = estimate_stability(
            benchmark_law("convex"), 8, 8, small_cfg(), 10, RNG.split("fin")
        )
        for value in (est.eps_nu, est.eps_nu_se, est.eps_omega, est.eps_omega_se):
            assert np.isfinite(value) and value >= 0.0

    def test_thread_count_does_not_change_results(self):
        law = benchmark_law("convex")
        a = estimate_stability(law, 6, 6, small_cfg(), 8, RNG.split("thr"), threads=1)
        b = estimate_stability(law, 6, 6, small_cfg(), 8, RNG.split("thr"), threads=4)
        assert a == b

    def test_requested_kinds_only(self):
        est = estimate_stability(
            benchmark_law("convex"), 6, 6, small_cfg(steps=50), 4,
            RNG.split("kind"), kinds=("nu",),
        )
        assert est.eps_nu >= 0.0
        assert np.isnan(est.eps_omega)

    def test_replicates_validated(self):
        with pytest.raises(ValueError, match="replicates"):
            estimate_stability(benchmark_law("convex"), 4, 4, small_cfg(), 1, RNG)

    def test_convex_sensitivity_grows_with_horizon(self):
        # without strong convexity the coupled displacement accumulates,
        # so longer runs are no less sensitive (up to 2 standard errors)
        law = benchmark_law("convex")
        readings = []
        for steps in (256, 1024, 4096):
            cfg = OptimizerConfig(variant=Variant.SCGD, steps=steps, eta=5e-4, beta=0.1)
            est = estimate_stability(
                law, 25, 25, cfg, 60, RNG.split(f"growth-{steps}"), kinds=("nu",)
            )
            readings.append((est.eps_nu, est.eps_nu_se))
        for (lo, lo_se), (hi, hi_se) in zip(readings, readings[1:]):
            assert hi >= lo - 2.0 * np.hypot(lo_se, hi_se)


class TestGeneralizationInequality:
    def test_zero_noise_law_has_null_report(self):
        law = PopulationLaw(a0=np.eye(3), b0=np.zeros(3), c0=np.ones(3))
        report = check_generalization_inequality(
            law, 4, 4, small_cfg(steps=50), 4, RNG.split("zn")
        )
        assert abs(report.gap_mean) < 1e-12
        assert report.rhs < 1e-12
        assert report.holds

    def test_identity_inner_single_sample_reduces_to_plain_form(self):
        law = PopulationLaw(a0=np.eye(3), b0=np.zeros(3), c0=np.ones(3), tau_c=0.5)
        report = check_generalization_inequality(
            law, 10, 1, small_cfg(steps=100), 10, RNG.split("id")
        )
        assert report.variance_term == 0.0
        assert report.eps_omega == 0.0
        assert report.rhs == pytest.approx(report.lip_f * report.lip_g * report.eps_nu)

    def test_default_benchmark_smoke(self):
        report = check_generalization_inequality(
            benchmark_law("convex"), 10, 10, small_cfg(steps=100), 10, RNG.split("bm")
        )
        assert report.holds
        assert report.combined_se >= 0.0
