"""Shared test helpers: the finite-difference oracle and tiny model builders."""

import numpy as np
import pytest

from valet.model import Model, ModelConfig
from valet.audio import MelConfig
from valet.bridge import BridgeConfig
from valet.encoder import EncoderConfig
from valet.lm import LMConfig
from valet.seeding import rng_for


def finite_difference(f, x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of scalar f() w.r.t. the array x.

    f re-evaluates the forward pass from scratch; x is perturbed in place,
    so f must read it on every call. Independent of the tape entirely.
    """
    assert x.dtype == np.float64, "finite differences need 64-bit"
    grad = np.zeros_like(x)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = f()
        flat[i] = orig - eps
        fm = f()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * eps)
    return grad


def rel_error(a: np.ndarray, b: np.ndarray) -> float:
    """Scale-free gradient mismatch: ||a - b|| / max(||a||, ||b||, eps)."""
    num = np.linalg.norm((a - b).ravel())
    den = max(np.linalg.norm(a.ravel()), np.linalg.norm(b.ravel()), 1e-12)
    return float(num / den)


def tiny_model_config(mode="pooled_plus_sequence", gating=False, d=32, heads=2):
    return ModelConfig(
        encoder=EncoderConfig(n_layers=1, d_model=d, n_heads=heads, n_mels=8, max_frames=128),
        lm=LMConfig(n_layers=1, d_model=d, n_heads=heads, context_len=256),
        bridge=BridgeConfig(mode=mode, gating=gating),
        mel=MelConfig(n_mels=8),
    )


@pytest.fixture
def tiny_model():
    return Model.build(tiny_model_config(), rng_for(7, "init"))
