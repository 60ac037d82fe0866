"""Utility helpers."""

import numpy as np

# Offsets added to the user seed so every random role draws an independent stream.
SEED_OFFSETS = {
    "fit": 0,
    "noise": 1,
    "synthetic": 2,
    "kernel": 3,
}

_SEED_MASK = (1 << 64) - 1


def derive_seed(seed: int, role: str, trial: int = 0) -> int:
    """Fan a single user seed out to a role: ``seed + offset + 16 * trial`` mod 2**64."""
    if role not in SEED_OFFSETS:
        raise KeyError(f"Unknown seed role: {role}")
    return (int(seed) + SEED_OFFSETS[role] + 16 * int(trial)) & _SEED_MASK


def frozen(array) -> np.ndarray:
    """Return a read-only float or int array that owns its data."""
    out = np.array(array, copy=True)
    out.setflags(write=False)
    return out


def parse_float_list(text: str) -> list[float]:
    """Parse ``"0.1,0.5,1"`` into floats."""
    return [float(part) for part in text.split(",") if part.strip()]


def parse_int_list(text: str) -> list[int]:
    """Parse ``"0,1,2"`` into ints."""
    return [int(part) for part in text.split(",") if part.strip()]
