"""Statistical fusion of gauge recordings with the grillage prior.

A recording is explained as scaled model strain plus a structured model
mismatch plus white gauge noise: each instant's data y_k is read against
rho * P u_k + d_k + e_k, where P maps free dofs to gauge strains, d_k is a
zero-mean Gaussian field over the gauge plan positions with a squared
exponential kernel whose amplitude follows the instantaneous load level
gamma_k, and e_k is iid gauge noise. Everything stays linear Gaussian, so
conditioning and evidence evaluation are exact given the hyperparameters
(rho, sigma_d, ell_d).

Strains are dimensionless here; file formats convert to microstrain at the
I/O boundary only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .fem import GaussianBelief, PriorEnsemble, StrainOperator, chol_psd
from .loading import select_window
from .model import ConfigError, GrillageModel

LOG_2PI = math.log(2.0 * math.pi)

# instants whose load level falls below this fraction of the peak carry no
# usable signal and are dropped from inference by default
DEFAULT_GAMMA_MIN = 0.05


@dataclass(frozen=True)
class Hyperparameters:
    """Mismatch model parameters: scaling rho, amplitude sigma_d (strain),
    correlation length ell_d (m)."""

    rho: float
    sigma_d: float
    ell_d: float

    def __post_init__(self) -> None:
        for name, v in (("rho", self.rho), ("sigma_d", self.sigma_d), ("ell_d", self.ell_d)):
            if not (math.isfinite(v) and v > 0.0):
                raise ValueError(f"{name} must be positive and finite, got {v}")

    def as_array(self) -> np.ndarray:
        return np.array([self.rho, self.sigma_d, self.ell_d])

    @classmethod
    def from_array(cls, values) -> "Hyperparameters":
        rho, sigma_d, ell_d = (float(v) for v in values)
        return cls(rho, sigma_d, ell_d)


@dataclass(frozen=True)
class Sensor:
    """One resolved strain gauge: plan position, fiber face and the element
    carrying it at local coordinate t."""

    id: str
    x: float
    y: float
    fiber: str
    element: int
    t: float
    line: str | None = None


@dataclass
class SensorLayout:
    """An ordered set of gauges; row order fixes the data row order.

    Gauges may share plan coordinates (top and bottom fibers of one
    station); the mismatch field then treats them as perfectly correlated,
    which is intended, and the gauge noise keeps observation covariances
    invertible.
    """

    sensors: tuple[Sensor, ...]
    _d2: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        self.sensors = tuple(self.sensors)
        if not self.sensors:
            raise ConfigError("sensor layout is empty")
        ids = [s.id for s in self.sensors]
        if len(set(ids)) != len(ids):
            raise ConfigError("sensor ids must be unique")
        for s in self.sensors:
            if s.fiber not in ("top", "bottom"):
                raise ConfigError(f"sensor {s.id!r} has unknown fiber {s.fiber!r}")

    def __len__(self) -> int:
        return len(self.sensors)

    @property
    def ids(self) -> list[str]:
        return [s.id for s in self.sensors]

    @property
    def points(self) -> np.ndarray:
        return np.array([[s.x, s.y] for s in self.sensors])

    def squared_distances(self) -> np.ndarray:
        if self._d2 is None:
            p = self.points
            diff = p[:, None, :] - p[None, :, :]
            self._d2 = np.sum(diff * diff, axis=-1)
        return self._d2

    def subset(self, ids) -> "SensorLayout":
        wanted = list(ids)
        by_id = {s.id: s for s in self.sensors}
        missing = [i for i in wanted if i not in by_id]
        if missing:
            raise ConfigError(f"layout has no sensors named {missing}")
        return SensorLayout(tuple(by_id[i] for i in wanted))

    @classmethod
    def resolve(cls, model: GrillageModel, entries, tol: float = 1e-6) -> "SensorLayout":
        """Bind gauge descriptions (id, x, y, fiber[, line]) to elements.

        When a line is named the search is restricted to its members, which
        disambiguates stations at girder/crossbeam junctions.
        """
        sensors = []
        for entry in entries:
            sid = str(entry["id"])
            x, y = float(entry["x"]), float(entry["y"])
            fiber = str(entry["fiber"])
            line = entry.get("line")
            if line:
                element, t = _locate_on_named_line(model, str(line), x, y, tol)
            else:
                element, t = model.locate_point(x, y, tol)
            sensors.append(Sensor(sid, x, y, fiber, element, t, None if line is None else str(line)))
        return cls(tuple(sensors))


def _locate_on_named_line(model: GrillageModel, line: str, x: float, y: float, tol: float):
    p = np.array([x, y])
    best = None
    for k in model.line_elements(line):
        e = model.elements[k]
        a = model.nodes[e.node_i]
        d = model.nodes[e.node_j] - a
        l2 = float(d @ d)
        t = float(np.clip((p - a) @ d / l2, 0.0, 1.0))
        gap = float(np.hypot(*(p - (a + t * d))))
        if best is None or gap < best[0]:
            best = (gap, k, t)
    if best is None or best[0] > tol:
        raise ConfigError(f"point ({x}, {y}) does not lie on line {line!r} (tol {tol})")
    return best[1], best[2]


def _points_of(layout_or_points) -> np.ndarray:
    if hasattr(layout_or_points, "points"):
        return layout_or_points.points
    return np.asarray(layout_or_points, dtype=float)


def sq_exp_covariance(points, sigma: float, ell: float) -> np.ndarray:
    """Squared exponential kernel matrix over plan positions.

    k(x, x') = sigma^2 exp(-|x - x'|^2 / (2 ell^2)); symmetric with exact
    sigma^2 diagonal, and zero distance gives full correlation.
    """
    if not (math.isfinite(sigma) and sigma > 0.0):
        raise ValueError(f"kernel amplitude must be positive, got {sigma}")
    if not (math.isfinite(ell) and ell > 0.0):
        raise ValueError(f"kernel length scale must be positive, got {ell}")
    p = _points_of(points)
    diff = p[:, None, :] - p[None, :, :]
    d2 = np.sum(diff * diff, axis=-1)
    return sigma * sigma * np.exp(-d2 / (2.0 * ell * ell))


def mismatch_covariance(layout_or_points, w: Hyperparameters, gamma_k: float) -> np.ndarray:
    """Mismatch covariance at one instant: amplitude gamma_k * sigma_d.

    gamma_k = 0 (quiescent instant) gives the zero matrix.
    """
    if not 0.0 <= gamma_k <= 1.0:
        raise ValueError(f"gamma must lie in [0, 1], got {gamma_k}")
    p = _points_of(layout_or_points)
    if gamma_k == 0.0:
        return np.zeros((p.shape[0], p.shape[0]))
    return sq_exp_covariance(p, gamma_k * w.sigma_d, w.ell_d)


def noise_covariance(n_sensors: int, sigma_e: float) -> np.ndarray:
    """White gauge noise covariance sigma_e^2 I; never load-scaled."""
    if sigma_e < 0.0:
        raise ValueError(f"noise level must be nonnegative, got {sigma_e}")
    return sigma_e * sigma_e * np.eye(n_sensors)


@dataclass
class ObservationSet:
    """Gauge strain recordings over a set of instants.

    ``strains`` is (n_sensors, n_instants) in dimensionless strain, rows
    ordered like the layout; ``gamma`` carries the per-instant relative
    load level used to scale the mismatch amplitude.
    """

    strains: np.ndarray
    timestamps: np.ndarray
    sigma_e: float
    gamma: np.ndarray
    layout: SensorLayout

    def __post_init__(self) -> None:
        self.strains = np.asarray(self.strains, dtype=float)
        self.timestamps = np.asarray(self.timestamps, dtype=float)
        self.gamma = np.asarray(self.gamma, dtype=float)
        if self.strains.ndim != 2:
            raise ValueError("strains must be (n_sensors, n_instants)")
        n_y, n_o = self.strains.shape
        if len(self.layout) != n_y:
            raise ValueError(f"{n_y} data rows but {len(self.layout)} sensors in the layout")
        if self.timestamps.shape != (n_o,) or self.gamma.shape != (n_o,):
            raise ValueError("timestamps and gamma must have one entry per instant")
        if not np.all(np.isfinite(self.strains)):
            raise ValueError("strains contain non-finite values")
        if not (math.isfinite(self.sigma_e) and self.sigma_e >= 0.0):
            raise ValueError(f"sigma_e must be nonnegative, got {self.sigma_e}")
        if np.any(self.gamma < 0.0) or np.any(self.gamma > 1.0):
            raise ValueError("gamma values must lie in [0, 1]")

    @property
    def n_sensors(self) -> int:
        return self.strains.shape[0]

    @property
    def n_instants(self) -> int:
        return self.strains.shape[1]

    def select(self, indices) -> "ObservationSet":
        indices = np.asarray(indices)
        return ObservationSet(
            self.strains[:, indices], self.timestamps[indices], self.sigma_e,
            self.gamma[indices], self.layout,
        )

    def window(
        self,
        t0: float | None = None,
        t1: float | None = None,
        stride: int = 1,
        gamma_min: float | None = DEFAULT_GAMMA_MIN,
    ) -> "ObservationSet":
        """Restrict to [t0, t1], thin by stride, drop quiescent instants."""
        idx = select_window(self.timestamps, t0, t1, stride)
        if gamma_min is not None:
            idx = idx[self.gamma[idx] >= gamma_min]
        if idx.size == 0:
            raise ValueError("empty effective observation window")
        return self.select(idx)


def _operator_matrix(strain_op) -> np.ndarray:
    if isinstance(strain_op, StrainOperator):
        return strain_op.matrix
    return np.asarray(strain_op, dtype=float)


def displacement_posterior(
    y: np.ndarray,
    w: Hyperparameters,
    prior: GaussianBelief,
    strain_op,
    mismatch_cov: np.ndarray,
    noise_cov: np.ndarray,
) -> GaussianBelief:
    """Condition the dof prior on one instant of gauge data.

    Uses the residual form

        mean = u_bar + rho C_u P^T S^-1 (y - rho P u_bar)
        cov  = C_u - rho^2 C_u P^T S^-1 P C_u,   S = rho^2 P C_u P^T + C_d + C_e

    which is algebraically the standard linear-Gaussian update but never
    inverts C_u, so it accepts the singular dof covariances produced by
    loads that excite only part of the structure. S is factored with the
    jitter policy; any jitter used is recorded on the returned belief.
    """
    p = _operator_matrix(strain_op)
    y = np.asarray(y, dtype=float).reshape(-1)
    n_y, n_u = p.shape
    if y.shape[0] != n_y:
        raise ValueError(f"data has {y.shape[0]} rows, operator has {n_y}")
    if prior.dim != n_u:
        raise ValueError(f"prior dimension {prior.dim} does not match operator columns {n_u}")

    rho = w.rho
    gain = prior.cov @ p.T  # C_u P^T
    s = rho * rho * (p @ gain) + mismatch_cov + noise_cov
    s = 0.5 * (s + s.T)
    lower, jitter = chol_psd(s)

    resid = y - rho * (p @ prior.mean)
    mean = prior.mean + rho * gain @ cho_solve((lower, True), resid)
    cov = prior.cov - rho * rho * gain @ cho_solve((lower, True), gain.T)
    cov = 0.5 * (cov + cov.T)
    return GaussianBelief(mean, cov, jitter=jitter)


def true_strain_posterior(
    posterior: GaussianBelief, w: Hyperparameters, strain_op, mismatch_cov: np.ndarray
) -> GaussianBelief:
    """Belief over the latent true gauge strains rho P u + d given data."""
    p = _operator_matrix(strain_op)
    mean = w.rho * (p @ posterior.mean)
    cov = w.rho * w.rho * (p @ posterior.cov @ p.T) + mismatch_cov
    return GaussianBelief(mean, 0.5 * (cov + cov.T), jitter=posterior.jitter)


def strain_predictive(
    posterior: GaussianBelief, w: Hyperparameters, strain_op, mismatch_cov: np.ndarray,
    noise_cov: np.ndarray,
) -> GaussianBelief:
    """Predictive belief over noisy gauge readings, possibly at new gauges.

    Identical to the true-strain belief plus the gauge noise covariance,
    evaluated through whatever operator and kernel matrices are supplied,
    so held-out locations just need their own operator rows.
    """
    z = true_strain_posterior(posterior, w, strain_op, mismatch_cov)
    cov = z.cov + noise_cov
    return GaussianBelief(z.mean, 0.5 * (cov + cov.T), jitter=z.jitter)


def _logpdf(resid: np.ndarray, lower: np.ndarray) -> float:
    half = solve_triangular(lower, resid, lower=True)
    logdet = 2.0 * float(np.sum(np.log(np.diagonal(lower))))
    return -0.5 * (resid.shape[0] * LOG_2PI + logdet + float(half @ half))


def log_marginal_instant(
    y_k: np.ndarray,
    w: Hyperparameters,
    prior: GaussianBelief,
    strain_op,
    points,
    sigma_e: float,
    gamma_k: float,
) -> float:
    """Log evidence of one instant: y_k against N(rho P u_bar, S).

    S = rho^2 P C_u P^T + C_d(gamma_k) + sigma_e^2 I, with the mismatch
    kernel evaluated over the gauge plan positions.
    """
    p = _operator_matrix(strain_op)
    y_k = np.asarray(y_k, dtype=float).reshape(-1)
    c_d = mismatch_covariance(points, w, gamma_k)
    s = w.rho**2 * (p @ prior.cov @ p.T) + c_d + noise_covariance(p.shape[0], sigma_e)
    lower, _ = chol_psd(0.5 * (s + s.T))
    resid = y_k - w.rho * (p @ prior.mean)
    return _logpdf(resid, lower)


def log_marginal(obs: ObservationSet, w: Hyperparameters, priors, strain_op) -> float:
    """Log evidence of a whole recording under instant independence.

    The instants share one dof covariance when ``priors`` is a
    :class:`PriorEnsemble`, enabling a batched evaluation; a sequence of
    per-instant beliefs falls back to an instant-by-instant loop. Sums with
    compensated summation so the result is independent of instant order.
    """
    if isinstance(priors, PriorEnsemble):
        try:
            return _log_marginal_batched(obs, w, priors, strain_op)
        except np.linalg.LinAlgError:
            priors = [priors.instant(k) for k in range(len(priors))]
    beliefs = list(priors)
    if len(beliefs) != obs.n_instants:
        raise ValueError(f"{obs.n_instants} instants but {len(beliefs)} priors")
    points = obs.layout.points
    terms = [
        log_marginal_instant(
            obs.strains[:, k], w, beliefs[k], strain_op, points, obs.sigma_e, float(obs.gamma[k])
        )
        for k in range(obs.n_instants)
    ]
    return math.fsum(terms)


def _log_marginal_batched(
    obs: ObservationSet, w: Hyperparameters, priors: PriorEnsemble, strain_op
) -> float:
    means_s, strain_cov = priors.projected(strain_op)
    if means_s.shape[1] != obs.n_instants:
        raise ValueError(f"{obs.n_instants} instants but ensemble holds {means_s.shape[1]}")
    n_y = obs.n_sensors
    d2 = obs.layout.squared_distances()
    kernel = np.exp(-d2 / (2.0 * w.ell_d * w.ell_d))
    amp2 = (obs.gamma * w.sigma_d) ** 2
    s = (
        amp2[:, None, None] * kernel[None, :, :]
        + (w.rho * w.rho) * strain_cov[None, :, :]
        + (obs.sigma_e * obs.sigma_e) * np.eye(n_y)[None, :, :]
    )
    lower = np.linalg.cholesky(s)
    resid = (obs.strains - w.rho * means_s).T[:, :, None]
    half = np.linalg.solve(lower, resid)
    quad = np.sum(half * half, axis=(1, 2))
    logdet = 2.0 * np.sum(np.log(np.diagonal(lower, axis1=1, axis2=2)), axis=1)
    terms = -0.5 * (n_y * LOG_2PI + logdet + quad)
    return math.fsum(terms.tolist())
