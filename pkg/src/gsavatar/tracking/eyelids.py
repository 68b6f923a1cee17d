"""Eyelid coefficient post-processing from eyelid landmark distances.

Refines per-frame eyelid coefficients so blinks close fully: frames whose
normalized closing signal exceeds the threshold snap to fully closed.
"""

from __future__ import annotations

import numpy as np


def normalize_signed(row: np.ndarray) -> np.ndarray:
    """Min-max normalize positives into [0, 1] and negatives into [-1, 0].

    A side whose values are all equal maps to 0 (its range is undefined).
    """
    out = np.zeros_like(row)
    pos = row > 0
    neg = row < 0
    if pos.any():
        lo, hi = row[pos].min(), row[pos].max()
        if hi > lo:
            out[pos] = (row[pos] - lo) / (hi - lo)
    if neg.any():
        lo, hi = row[neg].min(), row[neg].max()
        if hi > lo:
            out[neg] = (row[neg] - hi) / (hi - lo)
    return out


def eyelid_postprocess(
    eyelids: np.ndarray, eye_landmark_diffs: np.ndarray, zeta: float = 0.75, omega: float = 0.25
) -> np.ndarray:
    """Refine eyelid coefficients from upper/lower eyelid distances.

    eyelids: (N_f, 2) per-frame coefficients (left, right), typically in
    [0, 1] with 1 = fully closed. eye_landmark_diffs: (2, N_f) eyelid
    opening distances per eye per frame.

    The distances are centered per eye and negated (larger-than-average
    openings become negative), each sign normalized separately, values
    above `zeta` snapped to 1, and the residual closing applied as
    delta = (1 - eyelid) * signal, with opening (negative) deltas scaled
    by `omega`. Output is clamped to [per-eye input minimum, 1].
    """
    eyelids = np.asarray(eyelids, dtype=np.float64)
    diffs = np.asarray(eye_landmark_diffs, dtype=np.float64)
    if eyelids.ndim != 2 or eyelids.shape[1] != 2:
        raise ValueError("eyelids must be (N_f, 2)")
    n_f = len(eyelids)
    if diffs.shape != (2, n_f):
        raise ValueError(f"eye_landmark_diffs must be (2, {n_f})")
    if n_f < 2:
        raise ValueError("need at least 2 frames")
    if not np.isfinite(diffs).all():
        raise ValueError("eye landmark differences must be finite")
    if not 0.0 < zeta <= 1.0:
        raise ValueError("zeta must be in (0, 1]")

    centered = -(diffs - diffs.mean(axis=1, keepdims=True))
    norm = np.stack([normalize_signed(centered[0]), normalize_signed(centered[1])])
    norm[norm > zeta] = 1.0

    delta = (1.0 - eyelids) * norm.T  # (N_f, 2)
    delta[delta < 0.0] *= omega
    out = eyelids + delta
    floor = eyelids.min(axis=0)
    return np.clip(out, floor, 1.0)


def eyelid_diffs_from_observations(frames, pairs, convention: str = "dense105") -> np.ndarray:
    """Mean eyelid opening distance per eye per frame from 2D landmarks.

    pairs: ((upper_left, lower_left), (upper_right, lower_right)) indices
    into the given convention. Frames without a usable camera reuse the
    previous frame's value.
    """
    out = np.zeros((2, len(frames)))
    last = np.zeros(2)
    for t, frame in enumerate(frames):
        dists = []
        for obs in frame.cameras.values():
            if obs.convention != convention:
                continue
            per_eye = []
            for upper, lower in pairs:
                per_eye.append(np.linalg.norm(obs.points[upper] - obs.points[lower]))
            dists.append(per_eye)
        if dists:
            last = np.mean(np.asarray(dists), axis=0)
        out[:, t] = last
    return out
