import numpy as np
import pytest

from expleak import zoo, attack as atk
from expleak.data import make_synthetic, split, SplitSpec
from expleak.explain import AttributionMap, Explainer
from expleak.explain.params import ParamSpec
from expleak.hardening import (
    HardeningProblem,
    TransformParams,
    TrialRecord,
    all_orders,
    apply_transform_values,
    apply_transforms,
    default_transform_space,
    mutate_params,
    optimize,
    optimize_nonparameterized,
    optimize_parameterized,
    ordering_ablation,
    pareto_front,
    sample_params,
    select_best,
)


class TestTransforms:
    def test_clip(self):
        out = apply_transform_values(np.array([-5.0, 0.2, 3.0]), TransformParams(c_min=-1, c_max=1, order=("C",)))
        np.testing.assert_array_equal(out, [-1.0, 0.2, 1.0])

    def test_signed_mask(self):
        out = apply_transform_values(np.array([-1.0, 0.2, 1.0]), TransformParams(tau=0.5, order=("M",)))
        np.testing.assert_array_equal(out, [0.0, 0.0, 1.0])

    def test_magnitude_mask(self):
        out = apply_transform_values(
            np.array([-1.0, 0.2, 1.0]), TransformParams(tau=0.5, order=("M",), mask_mode="magnitude")
        )
        np.testing.assert_array_equal(out, [-1.0, 0.0, 1.0])

    def test_identity(self):
        v = np.array([-3.0, 0.0, 7.5])
        out = apply_transform_values(v, TransformParams())
        np.testing.assert_array_equal(out, v)

    def test_noise_deterministic(self):
        v = np.zeros(5)
        p = TransformParams(sigma=1.0, order=("N",), seed=3)
        a = apply_transform_values(v, p)
        b = apply_transform_values(v, p)
        assert a.tobytes() == b.tobytes()
        assert not np.array_equal(a, v)

    def test_clip_mask_idempotent(self):
        v = np.array([-2.0, 0.1, 5.0])
        clip = TransformParams(c_min=-1, c_max=1, order=("C",))
        once = apply_transform_values(v, clip)
        np.testing.assert_array_equal(apply_transform_values(once, clip), once)
        mask = TransformParams(tau=0.5, order=("M",))
        masked = apply_transform_values(v, mask)
        np.testing.assert_array_equal(apply_transform_values(masked, mask), masked)

    def test_order_sensitivity_witness(self):
        phi = np.array([2.0])
        cm = apply_transform_values(phi, TransformParams(c_max=1.0, tau=1.5, order=("C", "M")))
        mc = apply_transform_values(phi, TransformParams(c_max=1.0, tau=1.5, order=("M", "C")))
        np.testing.assert_array_equal(cm, [0.0])
        np.testing.assert_array_equal(mc, [1.0])

    def test_attribution_wrapper(self):
        att = AttributionMap(np.array([-5.0, 5.0]), "saliency")
        out = apply_transforms(att, TransformParams(c_min=-1, c_max=1))
        np.testing.assert_array_equal(out.values, [-1.0, 1.0])
        assert out.method == "saliency"
        assert "transform" in out.params

    def test_validation(self):
        with pytest.raises(ValueError):
            TransformParams(sigma=-1)
        with pytest.raises(ValueError):
            TransformParams(c_min=2, c_max=1)
        with pytest.raises(ValueError):
            TransformParams(order=())
        with pytest.raises(ValueError):
            TransformParams(order=("C", "C"))
        with pytest.raises(ValueError):
            TransformParams(mask_mode="other")

    def test_all_orders_is_fifteen(self):
        orders = all_orders()
        assert len(orders) == 15
        assert len(set(orders)) == 15
        assert ("C", "M", "N") in orders


def record(i, mls, loss, utility=None):
    return TrialRecord(
        index=i, theta={}, mls=mls, utility=loss if utility is None else utility,
        delta_s_percent=loss, wall_time_seconds=0.0, seed=0,
    )


class TestPareto:
    def test_three_nondominated(self):
        trials = [record(0, 0.1, 5.0), record(1, 0.2, 1.0), record(2, 0.05, 9.0)]
        front = pareto_front(trials)
        # brute-force dominance check
        for t in trials:
            dominated = any(
                o.mls <= t.mls and o.delta_s_percent <= t.delta_s_percent
                and (o.mls < t.mls or o.delta_s_percent < t.delta_s_percent)
                for o in trials if o is not t
            )
            assert (t in front.members) == (not dominated)
        assert len(front.members) == 3
        assert front.ideal_point == (0.0, 0.0)

    def test_dominated_point_excluded(self):
        trials = [record(0, 0.1, 1.0), record(1, 0.2, 2.0)]
        front = pareto_front(trials)
        assert [t.index for t in front.members] == [0]

    def test_duplicate_keeps_first(self):
        trials = [record(0, 0.1, 1.0), record(1, 0.1, 1.0)]
        front = pareto_front(trials)
        assert [t.index for t in front.members] == [0]

    def test_single_trial(self):
        front = pareto_front([record(0, 0.5, 0.0)])
        assert len(front.members) == 1

    def test_matches_exhaustive_on_random_sets(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            trials = [record(i, float(rng.integers(0, 5)) / 10, float(rng.integers(0, 5))) for i in range(12)]
            front = pareto_front(trials)
            for t in trials:
                dominated = any(
                    o.mls <= t.mls and o.delta_s_percent <= t.delta_s_percent
                    and (o.mls < t.mls or o.delta_s_percent < t.delta_s_percent)
                    for o in trials if o.index != t.index
                )
                duplicate_of_earlier = any(
                    o.index < t.index and o.mls == t.mls and o.delta_s_percent == t.delta_s_percent
                    for o in trials
                )
                assert (t in front.members) == (not dominated and not duplicate_of_earlier)


class TestSelectBest:
    def test_unique_minimum(self):
        trials = [record(0, 0.3, 1.0), record(1, 0.1, 5.0), record(2, 0.2, 0.0)]
        assert select_best(trials).index == 1

    def test_tie_broken_by_utility(self):
        trials = [record(0, 0.1, 0.0, utility=5.0), record(1, 0.1, 0.0, utility=2.0)]
        assert select_best(trials).index == 1

    def test_winner_is_on_front(self):
        rng = np.random.default_rng(1)
        for _ in range(30):
            trials = [
                TrialRecord(
                    index=i,
                    theta={},
                    mls=float(rng.integers(0, 4)) / 1000,  # exercise the slack window
                    utility=float(rng.integers(0, 4)),
                    delta_s_percent=0.0,
                    wall_time_seconds=0.0,
                    seed=0,
                )
                for i in range(10)
            ]
            for t in trials:
                t.delta_s_percent = t.utility  # loss proportional to sensitivity
            best = select_best(trials)
            assert best in pareto_front(trials).members

    def test_exhaustive_scan_agreement(self):
        trials = [record(0, 0.05, 3.0, utility=3.0), record(1, 0.0504, 1.0, utility=1.0), record(2, 0.2, 0.0, utility=0.0)]
        # slack window 0.001 admits trials 0 and 1; utility prefers 1
        assert select_best(trials).index == 1


class TestSearch:
    def space(self):
        return {
            "a": ParamSpec("a", "continuous", 0.5, low=0.0, high=1.0),
            "b": ParamSpec("b", "integer", 2, low=1, high=4),
            "c": ParamSpec("c", "categorical", "x", choices=("x", "y")),
            "d": ParamSpec("d", "boolean", False),
        }

    def test_sampling_respects_domains(self):
        rng = np.random.default_rng(2)
        space = self.space()
        for _ in range(100):
            theta = sample_params(space, rng)
            for name, spec in space.items():
                assert spec.contains(theta[name])

    def test_mutation_respects_domains(self):
        rng = np.random.default_rng(3)
        space = self.space()
        theta = sample_params(space, rng)
        for _ in range(100):
            theta = mutate_params(space, theta, rng)
            for name, spec in space.items():
                assert spec.contains(theta[name])

    def test_optimize_log_and_determinism(self):
        space = self.space()

        def evaluate(i, theta):
            return TrialRecord(
                index=i, theta=theta, mls=theta["a"] / 2, utility=theta["b"],
                delta_s_percent=float(theta["b"]), wall_time_seconds=0.0, seed=0,
            )

        best1, log1 = optimize(evaluate, space, trials=12, n_explore=4, seed=9)
        best2, log2 = optimize(evaluate, space, trials=12, n_explore=4, seed=9)
        assert len(log1) == 12
        assert [t.theta for t in log1] == [t.theta for t in log2]
        assert best1.index == best2.index
        assert best1 in pareto_front(log1).members

    def test_pure_random_when_t_equals_explore(self):
        space = self.space()
        seen = []

        def evaluate(i, theta):
            seen.append(theta)
            return record(i, 0.5, 0.0)

        optimize(evaluate, space, trials=5, n_explore=5, seed=1)
        assert len(seen) == 5

    def test_single_point_space(self):
        space = {"a": ParamSpec("a", "categorical", "only", choices=("only",))}

        def evaluate(i, theta):
            return TrialRecord(index=i, theta=theta, mls=0.1, utility=1.0,
                               delta_s_percent=0.0, wall_time_seconds=0.0, seed=0)

        best, log = optimize(evaluate, space, trials=3, n_explore=1, seed=0)
        assert best.theta == {"a": "only"}

    def test_empty_space_rejected(self):
        with pytest.raises(ValueError):
            optimize(lambda i, t: record(i, 0, 0), {}, trials=3, n_explore=1)


@pytest.fixture(scope="module")
def problem():
    data = make_synthetic(8, 10, 520, 1.5, seed=21)
    bundle = split(data, SplitSpec(150, 150, 100, 100, seed=2))
    cfg = zoo.TrainConfig(epochs=120, learning_rate=0.05, weight_decay=0.0, schedule="constant", batch_size=16, seed=0)
    arch = zoo.build_architecture("mlp_a", (10,), 8)
    target = zoo.train(arch, bundle.train_target, bundle.test_target, cfg, arch_name="mlp_a")
    shadow = zoo.train(arch, bundle.train_shadow, bundle.test_shadow, zoo.replace_seed(cfg, 1), arch_name="mlp_a")
    return HardeningProblem(
        target=target,
        shadow=shadow,
        bundle=bundle,
        explainer=Explainer("saliency", use_probabilities=True),
        protocol=atk.AttackProtocol(k_seeds=2, epsilon=0.01),
        sensitivity_samples=4,
        master_seed=5,
    )


class TestObjective:
    def test_identity_reproduces_baseline(self, problem):
        mls0, u0 = problem.baseline()
        rec = problem.evaluate_transform(0, {"sigma": 0.0, "c_min": -np.inf, "c_max": np.inf, "tau": -np.inf})
        assert rec.mls == mls0
        assert rec.utility == u0
        assert rec.delta_s_percent == 0.0

    def test_all_mask_kills_attack(self, problem):
        # Magnitude mask with a huge threshold zeroes every attribution;
        # constant features leave the attack at chance (MLS near epsilon).
        rec = problem.evaluate_transform(
            1,
            {"sigma": 0.0, "c_min": -np.inf, "c_max": np.inf, "tau": np.inf,
             "_mask_mode": "magnitude", "_order": ("M",)},
        )
        assert rec.mls <= 5 * problem.protocol.epsilon

    def test_wall_time_positive(self, problem):
        rec = problem.evaluate_transform(2, {"sigma": 0.1, "c_min": -1.0, "c_max": 1.0, "tau": 0.0})
        assert rec.wall_time_seconds > 0

    def test_transform_search_runs(self, problem):
        best, log = optimize_nonparameterized(problem, trials=4, n_explore=2)
        assert len(log) == 4
        assert best in pareto_front(log).members
        space = default_transform_space(problem.raw_rows()["member"])
        for rec in log:
            for name in ("sigma", "c_min", "c_max", "tau"):
                assert space[name].low - 1e-9 <= rec.theta[name] <= space[name].high + 1e-9

    def test_zero_width_space_reproduces_baseline(self, problem):
        mls0, _ = problem.baseline()
        space = {
            "sigma": ParamSpec("sigma", "continuous", 0.0, low=0.0, high=0.0),
            "c_min": ParamSpec("c_min", "continuous", -np.inf, low=-np.inf, high=-np.inf),
            "c_max": ParamSpec("c_max", "continuous", np.inf, low=np.inf, high=np.inf),
            "tau": ParamSpec("tau", "continuous", -np.inf, low=-np.inf, high=-np.inf),
        }
        best, log = optimize_nonparameterized(problem, space=space, trials=2, n_explore=1)
        assert best.mls == mls0

    def test_parameterized_search_on_smoothgrad(self, problem):
        sg_problem = HardeningProblem(
            target=problem.target,
            shadow=problem.shadow,
            bundle=problem.bundle,
            explainer=Explainer("smoothgrad", params={"n_samples": 4}, use_probabilities=True),
            protocol=atk.AttackProtocol(k_seeds=1, epsilon=0.01),
            sensitivity_samples=2,
            sensitivity_estimator=__import__("expleak.sensitivity", fromlist=["EstimatorSpec"]).EstimatorSpec(draws=4),
            master_seed=6,
        )
        space = {
            "stdevs": ParamSpec("stdevs", "continuous", 1.0, low=0.1, high=2.0),
            "n_samples": ParamSpec("n_samples", "integer", 4, low=2, high=6),
        }
        best, log = optimize_parameterized(sg_problem, space=space, trials=3, n_explore=2)
        assert len(log) == 3
        assert all(0.1 <= r.theta["stdevs"] <= 2.0 for r in log)

    def test_parameterized_rejects_nonparam(self, problem):
        with pytest.raises(ValueError):
            optimize_parameterized(problem, trials=2, n_explore=1)

    def test_ordering_ablation_rows(self, problem):
        rows = ordering_ablation(problem, theta_grid=[{"sigma": 0.05, "c_min": -0.5, "c_max": 0.5, "tau": 0.01}])
        assert len(rows) == 15
        assert sum(r.recommended for r in rows) == 1
        rec_row = next(r for r in rows if r.recommended)
        assert rec_row.order == ("C", "M", "N")
        single = [r for r in rows if len(r.order) == 1]
        assert len(single) == 3
