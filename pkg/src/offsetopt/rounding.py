"""Randomized rounding of the factored SDP solution and offset extraction."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .completion import FactoredCompletion
from .netmodel import HermitianObjective, check_unit_modulus

TWO_PI = 2.0 * math.pi
BATCH = 32


def trial_normals(seed: int, trial: int, n: int) -> np.ndarray:
    """Complex Gaussian draw for one trial from its own Philox stream."""
    gen = np.random.Generator(np.random.Philox(key=int(seed)).jumped(int(trial)))
    r = gen.standard_normal(2 * n)
    return r[:n] + 1j * r[n:]


def _draws(seed: int, trials: range, n: int) -> np.ndarray:
    return np.stack([trial_normals(seed, t, n) for t in trials]) if len(trials) else np.zeros((0, n), complex)


def round_batch(fc: FactoredCompletion, r: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Map Gaussian draws (trials x n) to unit-modulus vectors in natural order.

    Returns (z, zero_mask) where zero_mask flags entries with s_j == 0 that
    were set to 1.
    """
    y = np.sqrt(fc.D)[None, :] * r
    s = kernels.backsolve(fc.colptr, fc.rows, fc.vals, np.ascontiguousarray(y))
    mag = np.abs(s)
    zero = mag == 0
    zp = np.where(zero, 1.0 + 0j, s / np.where(zero, 1.0, mag))
    z = np.empty_like(zp)
    z[:, fc.perm] = zp
    zmask = np.zeros_like(zero)
    zmask[:, fc.perm] = zero
    return z, zmask


def sample_rounding(fc: FactoredCompletion, rng_seed: int, trial: int = 0) -> np.ndarray:
    """One rounding: solve ``F^H s = D^{1/2} r`` and normalize each entry."""
    z, _ = round_batch(fc, trial_normals(rng_seed, trial, fc.n)[None, :])
    return z[0]


def extract_offsets(z: np.ndarray) -> np.ndarray:
    """Offsets in cycle units relative to the last (dummy) node, in [0, 1)."""
    z = check_unit_modulus(z)
    theta = np.mod((np.angle(z[:-1]) - np.angle(z[-1])) / TWO_PI, 1.0)
    theta[theta >= 1.0] -= 1.0
    return theta


@dataclass
class OffsetSolution:
    z: np.ndarray
    offsets: np.ndarray
    rounded_value: float
    sdp_bound: float
    ratio: float
    queue_total: float
    queue_lower_bound: float
    trials: int
    seed: int
    best_trial: int = 0
    values: np.ndarray = field(default=None, repr=False)
    zero_entries: int = 0

    def to_dict(self) -> dict:
        return {
            "offsets": [float(t) for t in self.offsets],
            "rounded_value": float(self.rounded_value),
            "sdp_bound": float(self.sdp_bound),
            "ratio": float(self.ratio),
            "queue_total": float(self.queue_total),
            "queue_lower_bound": float(self.queue_lower_bound),
            "trials": int(self.trials),
            "seed": int(self.seed),
            # Table-style aliases: bounds on the total squared queue
            "lower": float(self.queue_lower_bound),
            "upper": float(self.queue_total),
        }


def quadratic_values(W, Z: np.ndarray) -> np.ndarray:
    """``Re(z^H W z)`` for each row of Z."""
    M = W.matrix if isinstance(W, HermitianObjective) else W
    WZ = (M @ Z.T).T
    return np.real(np.sum(np.conj(Z) * WZ, axis=1))


def best_of_k(
    fc: FactoredCompletion,
    W: HermitianObjective,
    k: int = 200,
    seed: int = 0,
    sdp_bound: float | None = None,
    certified_bound: float | None = None,
) -> OffsetSolution:
    """Keep the best of k roundings (ties go to the lowest trial index).

    ``sdp_bound`` is the relaxation value used for the ratio;
    ``certified_bound`` (defaults to it) is the upper bound on the maximum of
    ``z^H W z`` used for the queue lower bound, e.g. a dual objective value.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    best_val, best_z, best_t = -math.inf, None, -1
    values = np.empty(k)
    zeros = 0
    for lo in range(0, k, BATCH):
        trials = range(lo, min(k, lo + BATCH))
        Z, zmask = round_batch(fc, _draws(seed, trials, fc.n))
        vals = quadratic_values(W, Z)
        values[lo : lo + len(trials)] = vals
        zeros += int(zmask.any(axis=1).sum())
        i = int(np.argmax(vals))
        if vals[i] > best_val:
            best_val, best_z, best_t = float(vals[i]), Z[i].copy(), lo + i
    bound = float(sdp_bound) if sdp_bound is not None else float("nan")
    if bound > 0:
        ratio = best_val / bound
    else:
        ratio = 1.0 if abs(best_val) <= 1e-12 else float("nan")
    constant = W.constant
    cert = bound if certified_bound is None else max(bound, float(certified_bound))
    # the bounds hold to solver tolerance only; never report lower > upper
    cert = max(cert, best_val)
    return OffsetSolution(
        z=best_z,
        offsets=extract_offsets(best_z),
        rounded_value=best_val,
        sdp_bound=bound,
        ratio=ratio,
        queue_total=constant - best_val / TWO_PI**2,
        queue_lower_bound=max(0.0, constant - cert / TWO_PI**2),
        trials=k,
        seed=seed,
        best_trial=best_t,
        values=values,
        zero_entries=zeros,
    )
