"""Pure-Python restricted Dempster fold, used when the extension is absent."""

from __future__ import annotations

from typing import Sequence


def restricted_fold(hyps: Sequence[int], masses: Sequence[float], n_labels: int):
    """Fold restricted BPAs ``m({h_i}) = masses[i]`` left to right.

    Returns ``(singletons, theta, z_prod)``: fused singleton masses, fused
    mass on the whole frame, and the product of per-step normalizers.
    A negative index or non-positive mass is a vacuous BPA and is skipped.
    """
    if len(masses) != len(hyps):
        raise ValueError("hyps and masses differ in length")
    if n_labels < 1:
        raise ValueError("n_labels must be positive")
    s = [0.0] * n_labels
    theta = 1.0
    z_prod = 1.0
    for h, m in zip(hyps, masses):
        if h < 0 or m <= 0.0:
            continue
        if h >= n_labels:
            raise IndexError(f"hypothesis index {h} outside frame of size {n_labels}")
        keep = 1.0 - m
        z = 0.0
        for j in range(n_labels):
            if j != h:
                s[j] *= keep
                z += s[j]
        # {h} survives against {h} and against the frame; the frame's mass flows into {h}
        s[h] += theta * m
        theta *= keep
        z += s[h] + theta
        for j in range(n_labels):
            s[j] /= z
        theta /= z
        z_prod *= z
    return s, theta, z_prod
