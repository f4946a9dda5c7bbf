"""What each bridge mode hands to the LM.

The encoder emits K rows; the bridge forwards the sequence, a single
pooled summary, or the summary stacked on top of the sequence, with an
optional learned sigmoid gate.
"""

import numpy as np

from valet.bridge import BridgeConfig, apply_bridge, init_bridge_params
from valet.tensor import Tensor

rng = np.random.default_rng(1)
k, z = 6, 8
h = Tensor(rng.standard_normal((k, z)).astype(np.float32))

for mode in ("sequence_only", "pooled_only", "pooled_plus_sequence"):
    cfg = BridgeConfig(mode=mode)
    out = apply_bridge(h, cfg, {})
    print(f"{mode:<24} K={k} -> {out.shape[0]} rows")

cfg = BridgeConfig(mode="pooled_plus_sequence", gating=True)
params = init_bridge_params(z, cfg)
gated = apply_bridge(h, cfg, params)
plain = apply_bridge(h, BridgeConfig(mode="pooled_plus_sequence"), {})
ratio = gated.data / plain.data
print(f"\nfresh gate multiplies features by sigma(4) ~ {ratio.mean():.4f} (near pass-through)")

params["bridge.gate.bias"].data[:] = -4.0
damped = apply_bridge(h, cfg, params)
print(f"bias -4 damps them to sigma(-4) ~ {(damped.data / plain.data).mean():.4f}")
