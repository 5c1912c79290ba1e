"""Deterministic derivation of per-stage RNG seeds.

Every stochastic stage of a run (training shuffles, explainer noise, attack
seeds, transform noise, ...) gets its own stream derived from a master seed
and a label path, so reruns reproduce bit-identical results and stages cannot
perturb each other by consuming draws.
"""

import hashlib


def derive_seed(master: int, *labels) -> int:
    """Return a 64-bit seed derived from ``master`` and a label path.

    Stable across platforms and processes (sha256 based, no ``hash()``).
    """
    text = str(int(master)) + "/" + "/".join(str(label) for label in labels)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")
