"""Synthetic ground truth and noisy recordings for closed-loop studies.

The generator shares the mismatch model of the inference side: true gauge
strain at instant k is rho_true * P u_k plus a draw of the load-scaled
mismatch field, and recordings add iid gauge noise. Draw streams are keyed
as (seed, 0, instant) for the mismatch and (seed, 1, instant) for noise,
so the two sources never alias and any instant can be regenerated alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fem import chol_psd
from .loading import select_window
from .model import Element, GrillageModel, SectionSpec
from .statfem import ObservationSet, SensorLayout


@dataclass(frozen=True)
class DiscrepancySpec:
    """True data-generating parameters: scaling, mismatch amplitude (strain),
    mismatch length (m) and the master seed."""

    rho: float
    sigma: float
    length_scale: float
    seed: int = 0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.rho) and self.rho > 0.0):
            raise ValueError(f"true rho must be positive, got {self.rho}")
        if not (math.isfinite(self.sigma) and self.sigma >= 0.0):
            raise ValueError(f"mismatch amplitude must be nonnegative, got {self.sigma}")
        if not (math.isfinite(self.length_scale) and self.length_scale > 0.0):
            raise ValueError(f"mismatch length must be positive, got {self.length_scale}")


def draw_discrepancy(layout: SensorLayout, spec: DiscrepancySpec, gamma: np.ndarray) -> np.ndarray:
    """Sample the mismatch field at every instant, scaled by gamma_k.

    One Cholesky factor of the unit-amplitude kernel serves all instants;
    the per-instant amplitude gamma_k * sigma multiplies the draw, so
    quiescent instants get exactly zero.
    """
    gamma = np.asarray(gamma, dtype=float)
    n_y = len(layout)
    out = np.zeros((n_y, gamma.shape[0]))
    if spec.sigma == 0.0:
        return out
    unit = np.exp(-layout.squared_distances() / (2.0 * spec.length_scale**2))
    lower, _ = chol_psd(unit)
    for k, g in enumerate(gamma):
        if g == 0.0:
            continue
        rng = np.random.default_rng([spec.seed, 0, k])
        out[:, k] = (g * spec.sigma) * (lower @ rng.standard_normal(n_y))
    return out


def generate_truth(
    prior_strain_means: np.ndarray,
    gamma: np.ndarray,
    layout: SensorLayout,
    spec: DiscrepancySpec,
) -> np.ndarray:
    """True gauge strains: rho_true * (P u_k) plus the mismatch draw.

    ``prior_strain_means`` is the deterministic model strain P u_k per
    instant, shape (n_sensors, n_instants).
    """
    means = np.asarray(prior_strain_means, dtype=float)
    if means.shape[0] != len(layout):
        raise ValueError(f"{means.shape[0]} strain rows but {len(layout)} sensors")
    if means.shape[1] != np.asarray(gamma).shape[0]:
        raise ValueError("gamma must have one entry per instant")
    return spec.rho * means + draw_discrepancy(layout, spec, gamma)


def generate_observations(
    truth: np.ndarray,
    timestamps: np.ndarray,
    gamma: np.ndarray,
    layout: SensorLayout,
    sigma_e: float,
    seed: int,
) -> ObservationSet:
    """Add iid gauge noise to true strains; sigma_e = 0 returns the truth."""
    truth = np.asarray(truth, dtype=float)
    if sigma_e < 0.0:
        raise ValueError(f"noise level must be nonnegative, got {sigma_e}")
    noisy = truth.copy()
    if sigma_e > 0.0:
        for k in range(truth.shape[1]):
            rng = np.random.default_rng([seed, 1, k])
            noisy[:, k] += sigma_e * rng.standard_normal(truth.shape[0])
    return ObservationSet(noisy, timestamps, sigma_e, gamma, layout)


def estimate_noise_std(obs: ObservationSet, quiet_window: tuple[float, float]) -> float:
    """Gauge noise level from a quiescent stretch of the recording.

    Takes the unbiased per-sensor variance over the window's instants and
    returns the square root of their mean, pooling all sensors equally.
    """
    idx = select_window(obs.timestamps, quiet_window[0], quiet_window[1])
    if idx.size < 2:
        raise ValueError(f"quiet window {quiet_window} holds fewer than two instants")
    block = obs.strains[:, idx]
    return float(np.sqrt(np.mean(np.var(block, axis=1, ddof=1))))


def perturb_sections(model: GrillageModel, bending_scale: float) -> GrillageModel:
    """A stiffness-perturbed copy of a model, for misspecified-truth studies.

    Scales every element's bending stiffness; supports, lines and sections'
    other constants are untouched.
    """
    if bending_scale <= 0.0:
        raise ValueError(f"bending scale must be positive, got {bending_scale}")
    elements = [
        Element(
            e.node_i, e.node_j,
            SectionSpec(
                e.section.bending_stiffness * bending_scale,
                e.section.torsion_stiffness,
                e.section.fiber_distance,
            ),
        )
        for e in model.elements
    ]
    return GrillageModel(
        model.nodes.copy(), elements, list(model.supports), dict(model.lines), model.deck_spacing
    )
