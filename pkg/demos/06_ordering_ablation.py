"""Why the transform order matters: all 15 Clip/Mask/Noise sequences.

Clipping then masking can zero a value that masking alone would keep:
with phi=[2], c_max=1, tau=1.5 the order C->M gives [0] but M->C gives [1].
This script shows the micro-example and then measures each ordering's
leakage/utility on a trained scenario.  Run with:

    python3 demos/06_ordering_ablation.py
"""

import numpy as np

from expleak import attack as atk
from expleak import zoo
from expleak.data import SplitSpec, make_synthetic, split
from expleak.explain import Explainer
from expleak.hardening import HardeningProblem, TransformParams, apply_transform_values, ordering_ablation

print("=== the order-sensitivity witness ===")
phi = np.array([2.0])
cm = apply_transform_values(phi, TransformParams(c_max=1.0, tau=1.5, order=("C", "M")))
mc = apply_transform_values(phi, TransformParams(c_max=1.0, tau=1.5, order=("M", "C")))
print(f"phi=[2], clip to max 1, mask below 1.5:  C->M = {cm},  M->C = {mc}")

print("\n=== scenario ===")
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
    protocol=atk.AttackProtocol(k_seeds=3, epsilon=0.01),  # small K keeps the demo quick
    master_seed=7,
)

print("running all 15 orderings with one mid-range transform config...")
rows = ordering_ablation(problem)
print(f"\n{'order':<12}{'pre-MLS':>9}{'post-MLS':>10}{'dS %':>9}")
for r in rows:
    marker = "  <- recommended default" if r.recommended else ""
    print(f"{'->'.join(r.order):<12}{r.pre_mls:>9.4f}{r.post_mls:>10.4f}{r.delta_s_percent:>+9.1f}{marker}")
