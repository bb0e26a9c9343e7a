"""Grillage idealization of a bridge deck.

The deck is modelled as a plan grid of beams: two longitudinal girders tied
by transverse crossbeams, or any user-supplied node/element table. Members
carry Euler-Bernoulli bending and St-Venant torsion; every node has three
degrees of freedom, vertical deflection ``w`` and the rotations ``rx``,
``ry`` about the plan axes. Units are strict SI throughout (m, N, Pa, rad).

This module owns materials, section constants, geometry and the ingestion
of YAML/dict configuration documents into a validated :class:`GrillageModel`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import yaml

SCHEMA_VERSION = 1

# storage order of the per-node degrees of freedom
DOF_NAMES = ("w", "rx", "ry")

_GEOM_TOL = 1e-9


class ConfigError(ValueError):
    """A configuration document cannot be turned into a usable model."""


def equivalent_modulus(q: float, e_steel: float, e_concrete: float) -> float:
    """Rule-of-mixtures Young's modulus of steel-reinforced concrete.

    ``q`` is the steel volume fraction; the homogenized modulus is the
    volume-weighted average ``q * e_steel + (1 - q) * e_concrete``.
    """
    if not 0.0 <= q <= 1.0:
        raise ConfigError(f"reinforcement fraction must lie in [0, 1], got {q}")
    if e_steel <= 0.0 or e_concrete <= 0.0:
        raise ConfigError("constituent moduli must be positive")
    return q * e_steel + (1.0 - q) * e_concrete


@dataclass(frozen=True)
class MaterialSpec:
    """Linear elastic isotropic material.

    Parameters
    ----------
    youngs_modulus:
        Young's modulus in Pa, strictly positive.
    poisson_ratio:
        Poisson's ratio, in [0, 0.5).
    """

    youngs_modulus: float
    poisson_ratio: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.youngs_modulus) and self.youngs_modulus > 0.0):
            raise ConfigError(f"Young's modulus must be positive, got {self.youngs_modulus}")
        if not 0.0 <= self.poisson_ratio < 0.5:
            raise ConfigError(f"Poisson ratio must lie in [0, 0.5), got {self.poisson_ratio}")

    @property
    def shear_modulus(self) -> float:
        return self.youngs_modulus / (2.0 * (1.0 + self.poisson_ratio))


@dataclass(frozen=True)
class SectionSpec:
    """Beam section constants.

    ``bending_stiffness`` is EI in N m^2, ``torsion_stiffness`` is GJ in
    N m^2 and ``fiber_distance`` is the distance from the neutral axis to
    the instrumented extreme fiber in m. Construction does not validate;
    :func:`validate_model` reports non-physical values.
    """

    bending_stiffness: float
    torsion_stiffness: float
    fiber_distance: float


def i_beam_section(
    material: MaterialSpec,
    web_depth: float,
    web_thickness: float,
    flange_width: float,
    flange_thickness: float,
    deck_width: float = 0.0,
    deck_thickness: float = 0.0,
    deck_material: MaterialSpec | None = None,
) -> SectionSpec:
    """Section constants of a doubly symmetric thin-walled I-beam.

    With ``deck_width > 0`` a concrete slab of the given width and thickness
    is fused on top of the upper flange and the constants are derived from
    the transformed (steel-equivalent) section: the slab area is scaled by
    the modular ratio, the neutral axis shifts accordingly, and the open
    thin-walled torsion constant gains the slab strip's own ``b t^3 / 3``
    term. ``fiber_distance`` is the larger distance from the neutral axis
    to the two steel flange faces, where strain gauges sit.
    """
    for name, v in (
        ("web_depth", web_depth),
        ("web_thickness", web_thickness),
        ("flange_width", flange_width),
        ("flange_thickness", flange_thickness),
    ):
        if not (math.isfinite(v) and v > 0.0):
            raise ConfigError(f"{name} must be positive, got {v}")
    if deck_width < 0.0 or deck_thickness < 0.0:
        raise ConfigError("deck dimensions must be nonnegative")

    e_s = material.youngs_modulus
    g_s = material.shear_modulus

    area_steel = web_depth * web_thickness + 2.0 * flange_width * flange_thickness
    # second moment about the mid-height centroid of the bare I-beam
    half = 0.5 * (web_depth + flange_thickness)
    inertia_steel = (
        web_thickness * web_depth**3 / 12.0
        + 2.0 * (flange_width * flange_thickness**3 / 12.0 + flange_width * flange_thickness * half**2)
    )
    torsion = (web_depth * web_thickness**3 + 2.0 * flange_width * flange_thickness**3) / 3.0

    top_face = 0.5 * web_depth + flange_thickness

    if deck_width > 0.0 and deck_thickness > 0.0:
        if deck_material is None:
            raise ConfigError("composite sections need a deck material")
        ratio = deck_material.youngs_modulus / e_s
        area_deck = ratio * deck_width * deck_thickness
        y_deck = top_face + 0.5 * deck_thickness
        shift = area_deck * y_deck / (area_steel + area_deck)
        inertia = (
            inertia_steel
            + area_steel * shift**2
            + ratio * deck_width * deck_thickness**3 / 12.0
            + area_deck * (y_deck - shift) ** 2
        )
        torsion_gj = g_s * torsion + deck_material.shear_modulus * deck_width * deck_thickness**3 / 3.0
        fiber = max(top_face - shift, top_face + shift)
        return SectionSpec(e_s * inertia, torsion_gj, fiber)

    return SectionSpec(e_s * inertia_steel, g_s * torsion, top_face)


@dataclass(frozen=True)
class Element:
    """A grillage member joining two node indices with a section."""

    node_i: int
    node_j: int
    section: SectionSpec


@dataclass(frozen=True)
class Support:
    """Constrained degrees of freedom at one node (subset of DOF_NAMES)."""

    node: int
    dofs: frozenset[str]


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __str__(self) -> str:
        return "ok" if self.ok else "; ".join(self.violations)


@dataclass
class GrillageModel:
    """Plan-grid beam model.

    ``nodes`` is an (n, 2) array of plan coordinates. ``lines`` maps a
    member-line name (e.g. a girder) to the ordered node path along it;
    load tracks and sensor stations are resolved against these lines.
    ``deck_spacing`` is the tributary width per unit length used when a
    distributed random load is lumped onto a line, defaulting to the
    crossbeam spacing of the templates.
    """

    nodes: np.ndarray
    elements: list[Element]
    supports: list[Support]
    lines: dict[str, list[int]] = field(default_factory=dict)
    deck_spacing: float | None = None

    def __post_init__(self) -> None:
        self.nodes = np.asarray(self.nodes, dtype=float)
        if self.nodes.ndim != 2 or self.nodes.shape[1] != 2:
            raise ConfigError(f"nodes must be an (n, 2) array, got shape {self.nodes.shape}")

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    def element_vector(self, e: Element) -> np.ndarray:
        return self.nodes[e.node_j] - self.nodes[e.node_i]

    def element_length(self, e: Element) -> float:
        return float(np.hypot(*self.element_vector(e)))

    def span(self) -> float:
        xs = self.nodes[:, 0]
        return float(xs.max() - xs.min())

    def line_nodes(self, name: str) -> list[int]:
        try:
            return self.lines[name]
        except KeyError:
            raise ConfigError(f"model has no line named {name!r}") from None

    def line_elements(self, name: str) -> list[int]:
        """Indices of the elements that chain the named line, in path order."""
        path = self.line_nodes(name)
        pairs = {(e.node_i, e.node_j): k for k, e in enumerate(self.elements)}
        out = []
        for a, b in zip(path[:-1], path[1:]):
            k = pairs.get((a, b))
            if k is None:
                k = pairs.get((b, a))
            if k is None:
                raise ConfigError(f"line {name!r} is not chained by elements between nodes {a} and {b}")
            out.append(k)
        return out

    def locate_on_line(self, name: str, s: float) -> tuple[int, float]:
        """Map arc length ``s`` along a line to (element index, local coordinate).

        The local coordinate runs 0..1 from the element's first node.
        """
        path = self.line_nodes(name)
        elems = self.line_elements(name)
        if s < -_GEOM_TOL:
            raise ConfigError(f"arc length {s} is negative")
        acc = 0.0
        for k, (a, elem_idx) in enumerate(zip(path[:-1], elems)):
            e = self.elements[elem_idx]
            length = self.element_length(e)
            if s <= acc + length + _GEOM_TOL:
                t = (s - acc) / length
                t = min(max(t, 0.0), 1.0)
                if e.node_i != a:
                    t = 1.0 - t
                return elem_idx, t
            acc += length
        raise ConfigError(f"arc length {s} exceeds line {name!r} length {acc}")

    def locate_point(self, x: float, y: float, tol: float = 1e-6) -> tuple[int, float]:
        """Find the element carrying plan point (x, y) and its local coordinate.

        Raises :class:`ConfigError` when the point is farther than ``tol``
        from every member axis.
        """
        p = np.array([x, y], dtype=float)
        best: tuple[float, int, float] | None = None
        for k, e in enumerate(self.elements):
            a = self.nodes[e.node_i]
            d = self.nodes[e.node_j] - a
            l2 = float(d @ d)
            if l2 <= _GEOM_TOL:
                continue
            t = float(np.clip((p - a) @ d / l2, 0.0, 1.0))
            gap = float(np.hypot(*(p - (a + t * d))))
            if best is None or gap < best[0]:
                best = (gap, k, t)
        if best is None or best[0] > tol:
            raise ConfigError(f"point ({x}, {y}) does not lie on any member (tol {tol})")
        return best[1], best[2]


def validate_model(model: GrillageModel) -> ValidationReport:
    """Check a model for non-physical data and unconstrained rigid modes.

    Always returns a report; never raises. The rigid-body check attempts a
    Cholesky factorization of the constrained stiffness matrix and is
    skipped when earlier violations make assembly meaningless.
    """
    report = ValidationReport()
    v = report.violations

    if not np.all(np.isfinite(model.nodes)):
        v.append("node coordinates contain non-finite values")

    n = model.n_nodes
    for k, e in enumerate(model.elements):
        if not (0 <= e.node_i < n and 0 <= e.node_j < n):
            v.append(f"element {k} references undefined node")
            continue
        if e.node_i == e.node_j:
            v.append(f"element {k} joins a node to itself")
            continue
        if model.element_length(e) <= _GEOM_TOL:
            v.append(f"element {k} has zero length")
        s = e.section
        if not (math.isfinite(s.bending_stiffness) and s.bending_stiffness > 0.0):
            v.append(f"non-physical section on element {k}: bending stiffness {s.bending_stiffness}")
        if not (math.isfinite(s.torsion_stiffness) and s.torsion_stiffness >= 0.0):
            v.append(f"non-physical section on element {k}: torsion stiffness {s.torsion_stiffness}")
        if not (math.isfinite(s.fiber_distance) and s.fiber_distance > 0.0):
            v.append(f"non-physical section on element {k}: fiber distance {s.fiber_distance}")

    for sup in model.supports:
        if not 0 <= sup.node < n:
            v.append(f"support references undefined node {sup.node}")
        bad = set(sup.dofs) - set(DOF_NAMES)
        if bad:
            v.append(f"support on node {sup.node} names unknown dofs {sorted(bad)}")

    for name, path in model.lines.items():
        if len(path) < 2:
            v.append(f"line {name!r} has fewer than two nodes")
        if any(not 0 <= i < n for i in path):
            v.append(f"line {name!r} references undefined node")

    if not v:
        from . import fem

        try:
            fem.assemble(model)
        except fem.FactorizationError:
            v.append("supports leave rigid body modes unconstrained")
    return report


# -- configuration ingestion -------------------------------------------------


def _require(mapping: dict, key: str, where: str):
    if key not in mapping:
        raise ConfigError(f"{where} is missing required key {key!r}")
    return mapping[key]


def _number(value, where: str) -> float:
    # YAML 1.1 reads exponent forms like 210.0e9 as strings; accept them
    if isinstance(value, str):
        try:
            return float(value)
        except ValueError:
            raise ConfigError(f"{where} must be a number, got {value!r}") from None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where} must be a number, got {value!r}")
    return float(value)


def _build_materials(cfg: dict) -> dict[str, MaterialSpec]:
    out: dict[str, MaterialSpec] = {}
    for name, body in cfg.items():
        if not isinstance(body, dict):
            raise ConfigError(f"material {name!r} must be a mapping")
        if "rule_of_mixtures" in body:
            mix = body["rule_of_mixtures"]
            e = equivalent_modulus(
                _number(_require(mix, "fraction", f"material {name!r}"), "fraction"),
                _number(_require(mix, "e_steel", f"material {name!r}"), "e_steel"),
                _number(_require(mix, "e_matrix", f"material {name!r}"), "e_matrix"),
            )
        else:
            e = _number(_require(body, "youngs_modulus", f"material {name!r}"), "youngs_modulus")
        nu = _number(_require(body, "poisson_ratio", f"material {name!r}"), "poisson_ratio")
        out[name] = MaterialSpec(e, nu)
    return out


def _build_sections(cfg: dict, materials: dict[str, MaterialSpec]) -> dict[str, SectionSpec]:
    out: dict[str, SectionSpec] = {}
    for name, body in cfg.items():
        if not isinstance(body, dict):
            raise ConfigError(f"section {name!r} must be a mapping")
        kind = body.get("type", "constants")
        if kind == "constants":
            out[name] = SectionSpec(
                _number(_require(body, "bending_stiffness", f"section {name!r}"), "bending_stiffness"),
                _number(_require(body, "torsion_stiffness", f"section {name!r}"), "torsion_stiffness"),
                _number(_require(body, "fiber_distance", f"section {name!r}"), "fiber_distance"),
            )
        elif kind == "i_beam":
            mat_name = _require(body, "material", f"section {name!r}")
            if mat_name not in materials:
                raise ConfigError(f"section {name!r} references undefined material {mat_name!r}")
            deck_mat = None
            if "deck_material" in body:
                dm = body["deck_material"]
                if dm not in materials:
                    raise ConfigError(f"section {name!r} references undefined material {dm!r}")
                deck_mat = materials[dm]
            out[name] = i_beam_section(
                materials[mat_name],
                web_depth=_number(_require(body, "web_depth", f"section {name!r}"), "web_depth"),
                web_thickness=_number(_require(body, "web_thickness", f"section {name!r}"), "web_thickness"),
                flange_width=_number(_require(body, "flange_width", f"section {name!r}"), "flange_width"),
                flange_thickness=_number(
                    _require(body, "flange_thickness", f"section {name!r}"), "flange_thickness"
                ),
                deck_width=_number(body.get("deck_width", 0.0), "deck_width"),
                deck_thickness=_number(body.get("deck_thickness", 0.0), "deck_thickness"),
                deck_material=deck_mat,
            )
        else:
            raise ConfigError(f"section {name!r} has unknown type {kind!r}")
    return out


def two_girder_template(
    span: float,
    girder_spacing: float,
    n_crossbeams: int,
    girder_section: SectionSpec,
    crossbeam_section: SectionSpec,
    girder_subdivision: int = 1,
    line_names: tuple[str, str] = ("east", "west"),
) -> GrillageModel:
    """Twin simply supported girders tied by evenly spaced crossbeams.

    Crossbeam stations subdivide each girder into ``n_crossbeams - 1`` bays;
    ``girder_subdivision`` splits every bay into that many equal elements.
    The four corner nodes are vertically supported.
    """
    if span <= 0.0 or girder_spacing <= 0.0:
        raise ConfigError("span and girder spacing must be positive")
    if n_crossbeams < 2:
        raise ConfigError("need at least two crossbeam stations")
    if girder_subdivision < 1:
        raise ConfigError("girder subdivision must be >= 1")

    m = (n_crossbeams - 1) * girder_subdivision + 1
    xs = np.linspace(0.0, span, m)
    nodes = np.empty((2 * m, 2))
    nodes[:m, 0] = xs
    nodes[:m, 1] = 0.0
    nodes[m:, 0] = xs
    nodes[m:, 1] = girder_spacing

    elements: list[Element] = []
    for g in (0, m):
        for k in range(m - 1):
            elements.append(Element(g + k, g + k + 1, girder_section))
    for k in range(n_crossbeams):
        i = k * girder_subdivision
        elements.append(Element(i, m + i, crossbeam_section))

    supports = [Support(i, frozenset({"w"})) for i in (0, m - 1, m, 2 * m - 1)]
    lines = {line_names[0]: list(range(m)), line_names[1]: list(range(m, 2 * m))}
    return GrillageModel(nodes, elements, supports, lines, deck_spacing=span / (n_crossbeams - 1))


def simply_supported_beam_template(
    length: float, n_elements: int, section: SectionSpec, line_name: str = "main"
) -> GrillageModel:
    """A single pin-roller beam along x; twist is suppressed at every node."""
    if length <= 0.0 or n_elements < 1:
        raise ConfigError("need positive length and at least one element")
    n = n_elements + 1
    nodes = np.column_stack([np.linspace(0.0, length, n), np.zeros(n)])
    elements = [Element(k, k + 1, section) for k in range(n_elements)]
    supports = [
        Support(k, frozenset({"w", "rx"} if k in (0, n - 1) else {"rx"})) for k in range(n)
    ]
    return GrillageModel(nodes, elements, supports, {line_name: list(range(n))}, deck_spacing=length / n_elements)


def cantilever_template(
    length: float, n_elements: int, section: SectionSpec, line_name: str = "main"
) -> GrillageModel:
    """A beam along x fully fixed at node 0."""
    if length <= 0.0 or n_elements < 1:
        raise ConfigError("need positive length and at least one element")
    n = n_elements + 1
    nodes = np.column_stack([np.linspace(0.0, length, n), np.zeros(n)])
    elements = [Element(k, k + 1, section) for k in range(n_elements)]
    supports = [Support(0, frozenset(DOF_NAMES))]
    return GrillageModel(nodes, elements, supports, {line_name: list(range(n))}, deck_spacing=length / n_elements)


def _build_template(cfg: dict, sections: dict[str, SectionSpec]) -> GrillageModel:
    kind = _require(cfg, "type", "template")

    def section_of(key: str) -> SectionSpec:
        name = _require(cfg, key, "template")
        if name not in sections:
            raise ConfigError(f"template references undefined section {name!r}")
        return sections[name]

    if kind == "two_girder":
        return two_girder_template(
            span=_number(_require(cfg, "span", "template"), "span"),
            girder_spacing=_number(_require(cfg, "girder_spacing", "template"), "girder_spacing"),
            n_crossbeams=int(_require(cfg, "n_crossbeams", "template")),
            girder_section=section_of("girder_section"),
            crossbeam_section=section_of("crossbeam_section"),
            girder_subdivision=int(cfg.get("girder_subdivision", 1)),
        )
    if kind == "simply_supported_beam":
        return simply_supported_beam_template(
            length=_number(_require(cfg, "length", "template"), "length"),
            n_elements=int(_require(cfg, "n_elements", "template")),
            section=section_of("section"),
        )
    if kind == "cantilever":
        return cantilever_template(
            length=_number(_require(cfg, "length", "template"), "length"),
            n_elements=int(_require(cfg, "n_elements", "template")),
            section=section_of("section"),
        )
    raise ConfigError(f"unknown template type {kind!r}")


def _build_tables(cfg: dict, sections: dict[str, SectionSpec]) -> GrillageModel:
    raw_nodes = _require(cfg, "nodes", "geometry")
    ids: dict[int, int] = {}
    coords = []
    for row in raw_nodes:
        if not (isinstance(row, (list, tuple)) and len(row) == 3):
            raise ConfigError(f"node rows must be [id, x, y], got {row!r}")
        nid = int(row[0])
        if nid in ids:
            raise ConfigError(f"duplicate node id {nid}")
        ids[nid] = len(coords)
        coords.append((_number(row[1], "node x"), _number(row[2], "node y")))

    def node_index(nid, where: str) -> int:
        try:
            return ids[int(nid)]
        except (KeyError, TypeError, ValueError):
            raise ConfigError(f"{where} references undefined node {nid!r}") from None

    elements = []
    for row in _require(cfg, "elements", "geometry"):
        if not (isinstance(row, (list, tuple)) and len(row) == 3):
            raise ConfigError(f"element rows must be [i, j, section], got {row!r}")
        sec = row[2]
        if sec not in sections:
            raise ConfigError(f"element references undefined section {sec!r}")
        elements.append(Element(node_index(row[0], "element"), node_index(row[1], "element"), sections[sec]))

    supports = []
    for row in _require(cfg, "supports", "geometry"):
        if not (isinstance(row, (list, tuple)) and len(row) == 2):
            raise ConfigError(f"support rows must be [node, [dofs]], got {row!r}")
        supports.append(Support(node_index(row[0], "support"), frozenset(str(d) for d in row[1])))

    lines = {
        str(name): [node_index(i, f"line {name!r}") for i in path]
        for name, path in cfg.get("lines", {}).items()
    }
    spacing = cfg.get("deck_spacing")
    return GrillageModel(
        np.array(coords), elements, supports, lines,
        deck_spacing=None if spacing is None else _number(spacing, "deck_spacing"),
    )


def build_model(config: dict) -> GrillageModel:
    """Construct and validate a model from a configuration mapping.

    Deterministic: equal documents give equal models. Raises
    :class:`ConfigError` on schema, reference or validation failures.
    """
    if not isinstance(config, dict):
        raise ConfigError("model configuration must be a mapping")
    version = _require(config, "schema_version", "model configuration")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version!r}, expected {SCHEMA_VERSION}")

    materials = _build_materials(config.get("materials", {}))
    sections = _build_sections(config.get("sections", {}), materials)
    geometry = _require(config, "geometry", "model configuration")
    if not isinstance(geometry, dict):
        raise ConfigError("geometry must be a mapping")

    if "template" in geometry:
        model = _build_template(geometry["template"], sections)
    else:
        model = _build_tables(geometry, sections)

    report = validate_model(model)
    if not report.ok:
        raise ConfigError(str(report))
    return model


def load_model_config(path: str) -> GrillageModel:
    """Read a YAML model document from disk and build it."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            config = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return build_model(config)
