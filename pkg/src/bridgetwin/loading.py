"""Traffic loading: a deterministic axle train plus a random deck load.

A crossing train is idealized as point loads that enter the named track
line at ``arrival_time`` and travel at constant speed; wheels of one axle
straddle the rail seats but land on the same girder line, so an axle
contributes its full load at one arc position. On top of the train, slowly
varying deck traffic is modelled as a zero-mean Gaussian random field with
a squared exponential kernel, discretized onto the grillage through the
beam shape functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import yaml

from .fem import DOF_W, DofMap, _element_global_slots, element_transform, hermite_shape
from .model import ConfigError, GrillageModel

_TIME_EPS = 1e-9


@dataclass(frozen=True)
class TrainScenario:
    """A train crossing plus the recording cadence.

    ``axle_offsets`` are distances of each axle behind the leading axle
    (first entry normally 0); ``axle_load`` is the full per-axle force in N
    (both wheels). ``length`` is the overall vehicle length used for the
    crossing time; it defaults to the last axle offset. ``lateral_offsets``
    records the wheel seat positions about the track line and is carried as
    metadata only.
    """

    axle_offsets: tuple[float, ...]
    axle_load: float
    speed: float
    track_line: str
    time_step: float
    time_window: tuple[float, float]
    arrival_time: float = 0.0
    length: float | None = None
    lateral_offsets: tuple[float, ...] = (-0.7175, 0.7175)

    def __post_init__(self) -> None:
        object.__setattr__(self, "axle_offsets", tuple(float(a) for a in self.axle_offsets))
        if not self.axle_offsets:
            raise ConfigError("a train needs at least one axle")
        if any(a < 0.0 or not math.isfinite(a) for a in self.axle_offsets):
            raise ConfigError("axle offsets must be finite and nonnegative")
        if not (math.isfinite(self.axle_load) and self.axle_load > 0.0):
            raise ConfigError(f"axle load must be positive, got {self.axle_load}")
        if not (math.isfinite(self.speed) and self.speed > 0.0):
            raise ConfigError(f"speed must be positive, got {self.speed}")
        if self.time_step <= 0.0:
            raise ConfigError(f"time step must be positive, got {self.time_step}")
        t0, t1 = self.time_window
        if not t1 > t0:
            raise ConfigError(f"time window must be increasing, got {self.time_window}")
        if self.length is not None and self.length < max(self.axle_offsets):
            raise ConfigError("train length cannot be shorter than the axle layout")

    @property
    def overall_length(self) -> float:
        return max(self.axle_offsets) if self.length is None else self.length

    def crossing_time(self, span: float) -> float:
        """Time from the first axle entering to the last axle leaving."""
        return (span + self.overall_length) / self.speed

    def timestamps(self) -> np.ndarray:
        t0, t1 = self.time_window
        n = int(round((t1 - t0) / self.time_step)) + 1
        return t0 + np.arange(n) * self.time_step


def axle_positions(scenario: TrainScenario, t: float, span: float) -> np.ndarray:
    """Arc positions of the axles on the span at time t; off-span axles drop."""
    head = scenario.speed * (t - scenario.arrival_time)
    pos = head - np.asarray(scenario.axle_offsets)
    return pos[(pos >= 0.0) & (pos <= span)]


class _LineGeometry:
    """Arc-length lookup along a model line."""

    def __init__(self, model: GrillageModel, name: str) -> None:
        self.path = model.line_nodes(name)
        self.elements = model.line_elements(name)
        lengths = [model.element_length(model.elements[k]) for k in self.elements]
        self.cum = np.concatenate([[0.0], np.cumsum(lengths)])
        self.model = model

    @property
    def length(self) -> float:
        return float(self.cum[-1])

    def locate(self, s: float) -> tuple[int, float]:
        if s < -_TIME_EPS or s > self.length + _TIME_EPS:
            raise ValueError(f"arc length {s} outside line of length {self.length}")
        k = int(np.clip(np.searchsorted(self.cum, s, side="right") - 1, 0, len(self.elements) - 1))
        t = (s - self.cum[k]) / (self.cum[k + 1] - self.cum[k])
        t = min(max(t, 0.0), 1.0)
        e = self.model.elements[self.elements[k]]
        if e.node_i != self.path[k]:
            t = 1.0 - t
        return self.elements[k], t


def _scatter_point_load(
    model: GrillageModel, dof_map: DofMap, out: np.ndarray, element: int, t: float, load: float
) -> None:
    e = model.elements[element]
    length = model.element_length(e)
    c, s = model.element_vector(e) / length
    shape = hermite_shape(t, length)
    local = np.zeros(6)
    local[[0, 1, 3, 4]] = load * shape
    f_global = element_transform(c, s).T @ local
    for slot, value in zip(_element_global_slots(e), f_global):
        pos = dof_map.index[slot // 3, slot % 3]
        if pos >= 0:
            out[pos] += value


def nodal_loads(model: GrillageModel, dof_map: DofMap, scenario: TrainScenario, t: float) -> np.ndarray:
    """Consistent free-dof force vector for the train at time t."""
    geom = _LineGeometry(model, scenario.track_line)
    f = np.zeros(dof_map.n_free)
    for s in axle_positions(scenario, t, geom.length):
        element, local_t = geom.locate(float(s))
        _scatter_point_load(model, dof_map, f, element, local_t, scenario.axle_load)
    return f


@dataclass
class LoadSeries:
    """Force vectors over the recording window with relative intensities.

    ``gamma`` is the per-instant force norm scaled by the series maximum;
    quiescent instants have gamma 0 and the loudest instant has gamma 1.
    """

    timestamps: np.ndarray
    forces: np.ndarray  # (n_free, n_instants)
    gamma: np.ndarray
    scenario: TrainScenario | None = None

    def __len__(self) -> int:
        return self.timestamps.shape[0]

    def select(self, indices: np.ndarray) -> "LoadSeries":
        return LoadSeries(
            self.timestamps[indices], self.forces[:, indices], self.gamma[indices], self.scenario
        )

    def filtered(self, gamma_min: float) -> "LoadSeries":
        return self.select(np.nonzero(self.gamma >= gamma_min)[0])


def load_series(model: GrillageModel, dof_map: DofMap, scenario: TrainScenario) -> LoadSeries:
    """Evaluate the train forcing at every recording instant.

    Raises :class:`ValueError` when the train never touches the span inside
    the window, which would leave an empty effective observation window.
    """
    geom = _LineGeometry(model, scenario.track_line)
    times = scenario.timestamps()
    forces = np.zeros((dof_map.n_free, len(times)))
    for k, t in enumerate(times):
        for s in axle_positions(scenario, float(t), geom.length):
            element, local_t = geom.locate(float(s))
            _scatter_point_load(model, dof_map, forces[:, k], element, local_t, scenario.axle_load)
    norms = np.linalg.norm(forces, axis=0)
    peak = norms.max()
    if peak == 0.0:
        raise ValueError("empty effective observation window: train never loads the span")
    return LoadSeries(times, forces, norms / peak, scenario)


def select_window(
    timestamps: np.ndarray, t0: float | None = None, t1: float | None = None, stride: int = 1
) -> np.ndarray:
    """Indices of the instants inside [t0, t1], thinned by ``stride``."""
    timestamps = np.asarray(timestamps)
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    mask = np.ones(timestamps.shape[0], dtype=bool)
    if t0 is not None:
        mask &= timestamps >= t0 - _TIME_EPS
    if t1 is not None:
        mask &= timestamps <= t1 + _TIME_EPS
    return np.nonzero(mask)[0][::stride]


@dataclass(frozen=True)
class RandomLoadSpec:
    """Zero-mean squared exponential random deck load.

    ``sigma`` is the pressure amplitude in Pa, ``length_scale`` the kernel
    length in m, and ``tributary_width`` the deck strip width carried per
    unit member length; when None the model's deck spacing is used.
    """

    sigma: float
    length_scale: float
    tributary_width: float | None = None

    def __post_init__(self) -> None:
        if not (math.isfinite(self.sigma) and self.sigma > 0.0):
            raise ConfigError(f"random load amplitude must be positive, got {self.sigma}")
        if not (math.isfinite(self.length_scale) and self.length_scale > 0.0):
            raise ConfigError(f"random load length scale must be positive, got {self.length_scale}")


def force_covariance(
    model: GrillageModel, dof_map: DofMap, spec: RandomLoadSpec, quad_order: int = 4
) -> np.ndarray:
    """Free-dof covariance of the random deck load.

    Every member carries a tributary deck strip; the pressure field with
    kernel sigma^2 exp(-|x - x'|^2 / (2 l^2)) over plan distance is pushed
    through Gauss-Legendre line integrals of the translational beam shapes
    (deflection terms only, rotational loads are not excited). The result
    is B K B^T and therefore positive semidefinite by construction; it is
    supported on the deflection dofs alone.
    """
    width = spec.tributary_width if spec.tributary_width is not None else model.deck_spacing
    if width is None or width <= 0.0:
        raise ConfigError("random load needs a positive tributary width or model deck spacing")
    xi, wq = np.polynomial.legendre.leggauss(quad_order)
    xi = 0.5 * (xi + 1.0)
    wq = 0.5 * wq

    points = []
    cols = []  # (free dof position, weight) pairs per gauss point
    for e in model.elements:
        length = model.element_length(e)
        a = model.nodes[e.node_i]
        d = model.nodes[e.node_j] - a
        pos_i = dof_map.index[e.node_i, DOF_W]
        pos_j = dof_map.index[e.node_j, DOF_W]
        for t, w in zip(xi, wq):
            points.append(a + t * d)
            shape = hermite_shape(float(t), length)
            weight = w * length * width
            entries = []
            if pos_i >= 0:
                entries.append((pos_i, weight * shape[0]))
            if pos_j >= 0:
                entries.append((pos_j, weight * shape[2]))
            cols.append(entries)

    points = np.array(points)
    basis = np.zeros((dof_map.n_free, len(cols)))
    for q, entries in enumerate(cols):
        for pos, value in entries:
            basis[pos, q] += value
    diff = points[:, None, :] - points[None, :, :]
    kernel = spec.sigma**2 * np.exp(-np.sum(diff * diff, axis=-1) / (2.0 * spec.length_scale**2))
    cov = basis @ kernel @ basis.T
    return 0.5 * (cov + cov.T)


def load_scenario_config(path: str) -> tuple[TrainScenario, RandomLoadSpec | None]:
    """Read a YAML crossing scenario: train, recording cadence, random load."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            cfg = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("scenario configuration must be a mapping")
    version = cfg.get("schema_version")
    if version != 1:
        raise ConfigError(f"unsupported schema_version {version!r}, expected 1")

    train = cfg.get("train")
    if not isinstance(train, dict):
        raise ConfigError("scenario is missing the train section")
    recording = cfg.get("recording")
    if not isinstance(recording, dict):
        raise ConfigError("scenario is missing the recording section")

    if "speed" in train:
        speed = float(train["speed"])
    elif "speed_kmh" in train:
        speed = float(train["speed_kmh"]) / 3.6
    else:
        raise ConfigError("train needs speed (m/s) or speed_kmh")

    window = recording.get("time_window")
    if not (isinstance(window, (list, tuple)) and len(window) == 2):
        raise ConfigError("recording.time_window must be [start, end]")

    try:
        scenario = TrainScenario(
            axle_offsets=tuple(train["axle_offsets"]),
            axle_load=float(train["axle_load"]),
            speed=speed,
            track_line=str(train["track_line"]),
            time_step=float(recording["time_step"]),
            time_window=(float(window[0]), float(window[1])),
            arrival_time=float(train.get("arrival_time", 0.0)),
            length=None if train.get("length") is None else float(train["length"]),
            lateral_offsets=tuple(train.get("lateral_offsets", (-0.7175, 0.7175))),
        )
    except KeyError as exc:
        raise ConfigError(f"scenario is missing required key {exc.args[0]!r}") from exc

    random_load = None
    if "random_load" in cfg:
        rl = cfg["random_load"]
        if not isinstance(rl, dict):
            raise ConfigError("random_load must be a mapping")
        try:
            random_load = RandomLoadSpec(
                sigma=float(rl["sigma"]),
                length_scale=float(rl["length_scale"]),
                tributary_width=None if rl.get("tributary_width") is None else float(rl["tributary_width"]),
            )
        except KeyError as exc:
            raise ConfigError(f"random_load is missing required key {exc.args[0]!r}") from exc
    return scenario, random_load
