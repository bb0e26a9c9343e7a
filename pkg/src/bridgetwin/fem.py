"""Assembly and solution of the grillage system.

Each member contributes Hermite beam bending in its deflection/slope dofs
and a two-node St-Venant torsion bar in its twist dofs. Local element dofs
are ordered (w1, theta1, phi1, w2, theta2, phi2) with theta the bending
slope dw/ds along the member axis and phi the twist about it; the per-node
map to global (w, rx, ry) for a member with direction cosines (c, s) is

    theta =  s * rx - c * ry
    phi   =  c * rx + s * ry

so a member along x has theta = -ry, phi = rx. Besides the deterministic
solve, this module carries the strain extraction operator, the jitter
policy for nearly singular covariances, Gaussian beliefs over the free
dofs, and the push of a load covariance through the inverse stiffness.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .model import DOF_NAMES, GrillageModel, SectionSpec

log = logging.getLogger(__name__)

DOF_W, DOF_RX, DOF_RY = 0, 1, 2

# relative jitter ladder: eps * mean(diag) added to the diagonal, escalating
JITTER_LADDER = (1e-12, 1e-11, 1e-10, 1e-9, 1e-8)


class FactorizationError(RuntimeError):
    """A matrix that must be positive definite failed to factor."""


def hermite_shape(t: float, length: float) -> np.ndarray:
    """Cubic Hermite shape functions on (w1, theta1, w2, theta2), t in [0, 1]."""
    t2, t3 = t * t, t * t * t
    return np.array([
        1.0 - 3.0 * t2 + 2.0 * t3,
        length * (t - 2.0 * t2 + t3),
        3.0 * t2 - 2.0 * t3,
        length * (t3 - t2),
    ])


def hermite_curvature(t: float, length: float) -> np.ndarray:
    """Second arc-length derivatives of the Hermite shapes at t in [0, 1]."""
    l2 = length * length
    return np.array([
        (12.0 * t - 6.0) / l2,
        (6.0 * t - 4.0) / length,
        (6.0 - 12.0 * t) / l2,
        (6.0 * t - 2.0) / length,
    ])


def element_stiffness(section: SectionSpec, length: float) -> np.ndarray:
    """Local 6x6 stiffness on (w1, theta1, phi1, w2, theta2, phi2)."""
    if length <= 0.0:
        raise ValueError(f"element length must be positive, got {length}")
    ei, gj, l = section.bending_stiffness, section.torsion_stiffness, length
    k = np.zeros((6, 6))
    b = ei / l**3 * np.array([
        [12.0, 6.0 * l, -12.0, 6.0 * l],
        [6.0 * l, 4.0 * l * l, -6.0 * l, 2.0 * l * l],
        [-12.0, -6.0 * l, 12.0, -6.0 * l],
        [6.0 * l, 2.0 * l * l, -6.0 * l, 4.0 * l * l],
    ])
    idx = np.array([0, 1, 3, 4])
    k[np.ix_(idx, idx)] = b
    t = gj / l * np.array([[1.0, -1.0], [-1.0, 1.0]])
    k[np.ix_([2, 5], [2, 5])] = t
    return k


def element_transform(c: float, s: float) -> np.ndarray:
    """6x6 map from global (w, rx, ry) pairs to local element dofs."""
    n = np.array([
        [1.0, 0.0, 0.0],
        [0.0, s, -c],
        [0.0, c, s],
    ])
    out = np.zeros((6, 6))
    out[:3, :3] = n
    out[3:, 3:] = n
    return out


@dataclass(frozen=True)
class DofMap:
    """Numbering of free dofs; constrained entries hold -1.

    ``index`` has shape (n_nodes, 3) in DOF_NAMES order; ``free`` lists the
    (node, dof) pair of every free equation in numbering order.
    """

    index: np.ndarray
    free: tuple[tuple[int, int], ...]
    constrained: tuple[tuple[int, int], ...]

    @property
    def n_free(self) -> int:
        return len(self.free)

    def expand(self, values: np.ndarray) -> np.ndarray:
        """Scatter free-dof values into the full (3 n_nodes, ...) vector."""
        values = np.asarray(values, dtype=float)
        full = np.zeros((self.index.size,) + values.shape[1:])
        for pos, (node, dof) in enumerate(self.free):
            full[3 * node + dof] = values[pos]
        return full


def build_dof_map(model: GrillageModel) -> DofMap:
    fixed = np.zeros((model.n_nodes, 3), dtype=bool)
    for sup in model.supports:
        for name in sup.dofs:
            fixed[sup.node, DOF_NAMES.index(name)] = True
    index = np.full((model.n_nodes, 3), -1, dtype=int)
    free, constrained = [], []
    for node in range(model.n_nodes):
        for dof in range(3):
            if fixed[node, dof]:
                constrained.append((node, dof))
            else:
                index[node, dof] = len(free)
                free.append((node, dof))
    return DofMap(index, tuple(free), tuple(constrained))


@dataclass
class StiffnessMatrix:
    """Constrained SPD system plus the unreduced matrix for reactions."""

    matrix: np.ndarray
    full_matrix: np.ndarray
    _factor: tuple = field(default=None, repr=False, compare=False)

    def factor(self):
        if self._factor is None:
            try:
                self._factor = cho_factor(self.matrix, lower=True)
            except np.linalg.LinAlgError as exc:
                raise FactorizationError(
                    "stiffness matrix is not positive definite: unconstrained rigid body modes"
                ) from exc
        return self._factor


def _element_global_slots(e) -> list[int]:
    return [3 * e.node_i + d for d in range(3)] + [3 * e.node_j + d for d in range(3)]


def assemble(model: GrillageModel) -> tuple[StiffnessMatrix, DofMap]:
    """Assemble the global stiffness and prove it positive definite.

    Raises :class:`FactorizationError` when the supports leave rigid body
    modes, detected by a trial Cholesky factorization.
    """
    dof_map = build_dof_map(model)
    n_full = 3 * model.n_nodes
    k_full = np.zeros((n_full, n_full))
    for e in model.elements:
        length = model.element_length(e)
        c, s = model.element_vector(e) / length
        t = element_transform(c, s)
        k_g = t.T @ element_stiffness(e.section, length) @ t
        slots = _element_global_slots(e)
        k_full[np.ix_(slots, slots)] += k_g
    k_full = 0.5 * (k_full + k_full.T)

    keep = [3 * node + dof for node, dof in dof_map.free]
    k_free = k_full[np.ix_(keep, keep)]
    stiffness = StiffnessMatrix(k_free, k_full)
    stiffness.factor()
    return stiffness, dof_map


def solve(stiffness: StiffnessMatrix, forces: np.ndarray) -> np.ndarray:
    """Solve K u = f for one or many right-hand sides on the free dofs."""
    forces = np.asarray(forces, dtype=float)
    n = stiffness.matrix.shape[0]
    if forces.shape[0] != n:
        raise ValueError(f"force vector has {forces.shape[0]} rows, system has {n}")
    return cho_solve(stiffness.factor(), forces)


def support_reactions(
    stiffness: StiffnessMatrix, dof_map: DofMap, u_free: np.ndarray, f_free: np.ndarray
) -> dict[tuple[int, str], float]:
    """Reactions at constrained dofs for a solved displacement field."""
    u_full = dof_map.expand(u_free)
    f_full = dof_map.expand(f_free)
    r = stiffness.full_matrix @ u_full - f_full
    return {(node, DOF_NAMES[dof]): float(r[3 * node + dof]) for node, dof in dof_map.constrained}


@dataclass(frozen=True)
class StrainRow:
    """Provenance of one strain operator row."""

    sensor_id: str
    element: int
    t: float
    fiber: str


@dataclass
class StrainOperator:
    """Linear map from free dofs to axial strains at gauge locations."""

    matrix: np.ndarray
    rows: tuple[StrainRow, ...]

    @property
    def n_sensors(self) -> int:
        return self.matrix.shape[0]


def build_strain_operator(model: GrillageModel, dof_map: DofMap, sensors) -> StrainOperator:
    """Assemble the gauge strain operator.

    ``sensors`` is an iterable of resolved gauge descriptions carrying
    ``id``, ``element``, ``t`` and ``fiber`` attributes (see the sensor
    layout type). Axial strain at a fiber offset z from the neutral axis is
    -z * w'' along the member, so each row is the fiber-signed curvature
    row of the carrying element mapped to global dofs; rows at mirrored
    fibers differ only in sign.
    """
    rows = []
    meta = []
    for sensor in sensors:
        e = model.elements[sensor.element]
        length = model.element_length(e)
        c, s = model.element_vector(e) / length
        if sensor.fiber not in ("top", "bottom"):
            raise ValueError(f"sensor {sensor.id!r} has unknown fiber {sensor.fiber!r}")
        z = e.section.fiber_distance if sensor.fiber == "top" else -e.section.fiber_distance
        curv = hermite_curvature(sensor.t, length)
        local = np.zeros(6)
        local[[0, 1, 3, 4]] = -z * curv
        row_global = local @ element_transform(c, s)
        row = np.zeros(dof_map.n_free)
        for slot, value in zip(_element_global_slots(e), row_global):
            pos = dof_map.index[slot // 3, slot % 3]
            if pos >= 0:
                row[pos] += value
        rows.append(row)
        meta.append(StrainRow(str(sensor.id), sensor.element, float(sensor.t), sensor.fiber))
    if not rows:
        raise ValueError("strain operator needs at least one sensor")
    return StrainOperator(np.array(rows), tuple(meta))


def chol_psd(cov: np.ndarray) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of a (possibly semidefinite) covariance.

    Escalates diagonal jitter eps * mean(diag) through JITTER_LADDER and
    returns the factor together with the jitter actually added. A matrix of
    exact zeros factors to zeros. Raises :class:`FactorizationError` when
    the ladder is exhausted.
    """
    cov = np.asarray(cov, dtype=float)
    scale = float(np.mean(np.diagonal(cov)))
    if scale == 0.0 and not np.any(cov):
        return np.zeros_like(cov), 0.0
    try:
        return np.linalg.cholesky(cov), 0.0
    except np.linalg.LinAlgError:
        pass
    eye = np.eye(cov.shape[0])
    for eps in JITTER_LADDER:
        jitter = eps * scale
        try:
            factor = np.linalg.cholesky(cov + jitter * eye)
        except np.linalg.LinAlgError:
            continue
        log.debug("covariance factored with jitter %.3e", jitter)
        return factor, jitter
    raise FactorizationError(
        f"covariance cannot be factored even with jitter up to {JITTER_LADDER[-1]:.0e} * mean diagonal"
    )


def _check_symmetric(cov: np.ndarray, what: str) -> None:
    scale = np.max(np.abs(cov)) if cov.size else 0.0
    if not np.allclose(cov, cov.T, atol=1e-10 * scale + 1e-300, rtol=0.0):
        raise ValueError(f"{what} must be symmetric")


@dataclass
class GaussianBelief:
    """Multivariate normal over a vector of physical quantities.

    ``jitter`` records any diagonal inflation applied while factoring the
    covariance, either upstream or lazily by :meth:`chol`.
    """

    mean: np.ndarray
    cov: np.ndarray
    jitter: float = 0.0
    _chol: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        self.mean = np.asarray(self.mean, dtype=float).reshape(-1)
        self.cov = np.asarray(self.cov, dtype=float)
        n = self.mean.shape[0]
        if self.cov.shape != (n, n):
            raise ValueError(f"covariance shape {self.cov.shape} does not match mean length {n}")
        _check_symmetric(self.cov, "covariance")

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def chol(self) -> np.ndarray:
        if self._chol is None:
            self._chol, added = chol_psd(self.cov)
            self.jitter += added
        return self._chol

    def std(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diagonal(self.cov), 0.0, None))

    def sample(self, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
        """Draw samples; shape (dim,) for size None, else (size, dim)."""
        k = 1 if size is None else size
        draws = self.mean + (self.chol() @ rng.standard_normal((self.dim, k))).T
        return draws[0] if size is None else draws


def propagate_prior(
    stiffness: StiffnessMatrix, mean_force: np.ndarray, force_cov: np.ndarray
) -> GaussianBelief:
    """Push a Gaussian load through the linear system.

    For f ~ N(mean, C_f) the displacement is u ~ N(K^-1 mean, K^-1 C_f K^-T),
    computed with the cached Cholesky factor and never an explicit inverse.
    The load covariance is proven PSD by the jitter policy first; any jitter
    used is recorded on the returned belief.
    """
    force_cov = np.asarray(force_cov, dtype=float)
    _check_symmetric(force_cov, "load covariance")
    _, jitter = chol_psd(force_cov)
    if jitter > 0.0:
        force_cov = force_cov + jitter * np.eye(force_cov.shape[0])
    mean = solve(stiffness, np.asarray(mean_force, dtype=float))
    half = solve(stiffness, force_cov)
    cov = solve(stiffness, half.T)
    cov = 0.5 * (cov + cov.T)
    return GaussianBelief(mean, cov, jitter=jitter)


@dataclass
class PriorEnsemble:
    """Per-instant prior means sharing one displacement covariance.

    The load covariance of a passing train model is time invariant, so the
    solved covariance is computed once; only the means vary with time.
    ``projected`` caches the strain-space projection for a given operator,
    which the marginal likelihood evaluates thousands of times per chain.
    """

    means: np.ndarray  # (n_free, n_instants)
    cov: np.ndarray
    jitter: float = 0.0
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __len__(self) -> int:
        return self.means.shape[1]

    def instant(self, k: int) -> GaussianBelief:
        return GaussianBelief(self.means[:, k], self.cov, jitter=self.jitter)

    def projected(self, strain_op) -> tuple[np.ndarray, np.ndarray]:
        """(strain means (n_y, n_instants), strain covariance (n_y, n_y))."""
        p = strain_op.matrix if hasattr(strain_op, "matrix") else np.asarray(strain_op)
        key = id(p)
        if key not in self._cache:
            strain_cov = p @ self.cov @ p.T
            self._cache[key] = (p @ self.means, 0.5 * (strain_cov + strain_cov.T))
        return self._cache[key]


def propagate_prior_series(
    stiffness: StiffnessMatrix, mean_forces: np.ndarray, force_cov: np.ndarray
) -> PriorEnsemble:
    """Vectorized :func:`propagate_prior` over the columns of ``mean_forces``."""
    mean_forces = np.asarray(mean_forces, dtype=float)
    if mean_forces.ndim != 2:
        raise ValueError("mean_forces must be (n_free, n_instants)")
    force_cov = np.asarray(force_cov, dtype=float)
    _check_symmetric(force_cov, "load covariance")
    _, jitter = chol_psd(force_cov)
    if jitter > 0.0:
        force_cov = force_cov + jitter * np.eye(force_cov.shape[0])
    means = solve(stiffness, mean_forces)
    half = solve(stiffness, force_cov)
    cov = solve(stiffness, half.T)
    cov = 0.5 * (cov + cov.T)
    return PriorEnsemble(means, cov, jitter=jitter)
