"""Harden a leaky explainer with clip/mask/noise transforms and plot the front.

The search retrains the attack for every candidate configuration (the
adversary is assumed to know the defense) and trades leakage against the
change in explanation sensitivity.  Run with:

    python3 demos/05_hardening_pareto.py
"""

import pathlib

from expleak import attack as atk
from expleak import zoo
from expleak.data import SplitSpec, make_synthetic, split
from expleak.explain import Explainer
from expleak.hardening import HardeningProblem, optimize_nonparameterized, pareto_front
from expleak.reporting import pareto_scatter_svg

print("=== scenario: overfit MLP, probability-score saliency maps ===")
data = make_synthetic(16, 16, 960, 2.0, seed=11)
bundle = split(data, SplitSpec(256, 256, 192, 192, seed=3))
overfit = zoo.TrainConfig(epochs=300, learning_rate=0.05, weight_decay=0.0, schedule="constant", batch_size=16, seed=5)
arch = zoo.build_architecture("mlp_a", (16,), 16)
target = zoo.train(arch, bundle.train_target, bundle.test_target, overfit, arch_name="mlp_a")
shadow = zoo.train(arch, bundle.train_shadow, bundle.test_shadow, zoo.replace_seed(overfit, 6), arch_name="mlp_a")

problem = HardeningProblem(
    target=target,
    shadow=shadow,
    bundle=bundle,
    explainer=Explainer("saliency", use_probabilities=True),
    protocol=atk.AttackProtocol(k_seeds=5, epsilon=0.01),  # 5 seeds keeps the demo quick
    master_seed=7,
)
mls0, u0 = problem.baseline()
print(f"pre-hardening leakage {mls0:.4f}, sensitivity {u0:.4f}")

print("\n=== transform search: 12 trials, first 4 uniform, then mutations ===")
best, log = optimize_nonparameterized(problem, trials=12, n_explore=4)
for t in log:
    tag = " <- selected" if t.index == best.index else ""
    print(
        f"  trial {t.index:>2}: sigma={t.theta['sigma']:.3f} clip=[{t.theta['c_min']:.2f},{t.theta['c_max']:.2f}] "
        f"tau={t.theta['tau']:.3f} -> MLS {t.mls:.4f}, dS {t.delta_s_percent:+.1f}%{tag}"
    )

front = pareto_front(log)
print(f"\nPareto front: {sorted(t.index for t in front.members)} (ideal point 0,0)")
print(f"selected: post-MLS {best.mls:.4f} (was {mls0:.4f}), sensitivity change {best.delta_s_percent:+.1f}%")

out = pathlib.Path("demo_pareto.svg")
pareto_scatter_svg(
    out,
    [{"index": t.index, "x": t.mls, "y": t.delta_s_percent} for t in log],
    {t.index for t in front.members},
    title="Transform hardening of saliency",
)
print(f"scatter written to {out} (green = front, red star = ideal)")
