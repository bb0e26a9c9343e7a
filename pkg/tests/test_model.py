import numpy as np
import pytest
import yaml

from bridgetwin.model import (
    ConfigError,
    GrillageModel,
    MaterialSpec,
    SectionSpec,
    Support,
    build_model,
    cantilever_template,
    equivalent_modulus,
    i_beam_section,
    load_model_config,
    simply_supported_beam_template,
    two_girder_template,
    validate_model,
)

from conftest import BRIDGE_YAML


class TestEquivalentModulus:
    def test_endpoints(self):
        assert equivalent_modulus(0.0, 210e9, 35e9) == 35e9
        assert equivalent_modulus(1.0, 210e9, 35e9) == 210e9

    def test_mixture_value(self):
        assert equivalent_modulus(0.03, 210e9, 35e9) == pytest.approx(40.25e9)

    def test_rejects_bad_fraction(self):
        with pytest.raises(ConfigError):
            equivalent_modulus(-0.1, 210e9, 35e9)
        with pytest.raises(ConfigError):
            equivalent_modulus(1.5, 210e9, 35e9)

    def test_rejects_nonpositive_modulus(self):
        with pytest.raises(ConfigError):
            equivalent_modulus(0.5, 0.0, 35e9)


class TestMaterialSpec:
    def test_shear_modulus(self, steel):
        assert steel.shear_modulus == pytest.approx(210e9 / 2.6)

    def test_validation(self):
        with pytest.raises(ConfigError):
            MaterialSpec(youngs_modulus=-1.0, poisson_ratio=0.3)
        with pytest.raises(ConfigError):
            MaterialSpec(youngs_modulus=210e9, poisson_ratio=0.5)


class TestIBeamSection:
    def test_bare_section_against_hand_integration(self, steel):
        """Second moment of a doubly symmetric I section, integrated directly."""
        d, tw, bf, tf = 0.6, 0.012, 0.3, 0.02
        sec = i_beam_section(steel, web_depth=d, web_thickness=tw,
                             flange_width=bf, flange_thickness=tf)
        i_web = tw * d**3 / 12.0
        i_fl = 2.0 * (bf * tf**3 / 12.0 + bf * tf * ((d + tf) / 2.0) ** 2)
        assert sec.bending_stiffness == pytest.approx(steel.youngs_modulus * (i_web + i_fl), rel=1e-12)
        assert sec.fiber_distance == pytest.approx(d / 2.0 + tf)
        j = (d * tw**3 + 2.0 * bf * tf**3) / 3.0
        assert sec.torsion_stiffness == pytest.approx(steel.shear_modulus * j, rel=1e-12)

    def test_composite_matches_transformed_section(self, steel):
        """Deck contribution must equal a brute parallel-axis computation with
        the concrete transformed by the modular ratio."""
        deck_mat = MaterialSpec(youngs_modulus=35e9, poisson_ratio=0.2)
        d, tw, bf, tf = 2.04, 0.025, 0.7, 0.12
        bd, td = 3.65, 0.25
        sec = i_beam_section(steel, web_depth=d, web_thickness=tw,
                             flange_width=bf, flange_thickness=tf,
                             deck_width=bd, deck_thickness=td, deck_material=deck_mat)

        n = deck_mat.youngs_modulus / steel.youngs_modulus
        # steel parts about the steel-section mid-height, then shift everything
        # to the composite centroid
        parts = [
            (tw * d, 0.0, tw * d**3 / 12.0),
            (bf * tf, (d + tf) / 2.0, bf * tf**3 / 12.0),
            (bf * tf, -(d + tf) / 2.0, bf * tf**3 / 12.0),
            (n * bd * td, d / 2.0 + tf + td / 2.0, n * bd * td**3 / 12.0),
        ]
        area = sum(a for a, _, _ in parts)
        ybar = sum(a * y for a, y, _ in parts) / area
        i_total = sum(i + a * (y - ybar) ** 2 for a, y, i in parts)
        assert sec.bending_stiffness == pytest.approx(steel.youngs_modulus * i_total, rel=1e-12)
        # strain fiber stays on the steel: distance to the farther flange face
        assert sec.fiber_distance == pytest.approx(max(abs(ybar + d / 2 + tf), abs(ybar - d / 2 - tf)))

    def test_deck_requires_material(self, steel):
        with pytest.raises(ConfigError):
            i_beam_section(steel, 0.6, 0.012, 0.3, 0.02, deck_width=1.0, deck_thickness=0.2)


class TestTemplates:
    def test_simply_supported_counts(self, ss_beam):
        assert ss_beam.nodes.shape == (5, 2)
        assert len(ss_beam.elements) == 4
        assert Support(0, frozenset({"w", "rx"})) in ss_beam.supports
        assert Support(4, frozenset({"w", "rx"})) in ss_beam.supports
        # interior nodes keep only the torsion constraint
        assert Support(2, frozenset({"rx"})) in ss_beam.supports

    def test_cantilever_root_fixed(self, cantilever):
        assert Support(0, frozenset({"w", "rx", "ry"})) in cantilever.supports
        assert len(cantilever.supports) == 1

    def test_two_girder_layout(self, plain_section):
        m = two_girder_template(span=20.0, girder_spacing=6.0, n_crossbeams=5,
                                girder_section=plain_section, crossbeam_section=plain_section)
        assert m.nodes.shape == (10, 2)
        assert m.span() == pytest.approx(20.0)
        assert m.deck_spacing == pytest.approx(5.0)
        assert len(m.line_nodes("east")) == 5
        assert len(m.line_nodes("west")) == 5
        # 4 + 4 girder elements plus 5 crossbeams
        assert len(m.elements) == 13
        ys = m.nodes[m.line_nodes("west"), 1]
        np.testing.assert_allclose(ys, 6.0)

    def test_two_girder_subdivision(self, plain_section):
        m = two_girder_template(span=20.0, girder_spacing=6.0, n_crossbeams=5,
                                girder_section=plain_section, crossbeam_section=plain_section,
                                girder_subdivision=2)
        assert len(m.line_nodes("east")) == 9
        assert len(m.elements) == 2 * 8 + 5

    def test_corner_supports_only(self, plain_section):
        m = two_girder_template(span=20.0, girder_spacing=6.0, n_crossbeams=5,
                                girder_section=plain_section, crossbeam_section=plain_section)
        assert len(m.supports) == 4
        for s in m.supports:
            assert s.dofs == frozenset({"w"})
            x = m.nodes[s.node, 0]
            assert x == pytest.approx(0.0) or x == pytest.approx(20.0)


class TestGeometryQueries:
    def test_locate_point(self, ss_beam):
        elem, t = ss_beam.locate_point(2.5, 0.0)
        xi = ss_beam.nodes[ss_beam.elements[elem].node_i, 0]
        xj = ss_beam.nodes[ss_beam.elements[elem].node_j, 0]
        assert xi + t * (xj - xi) == pytest.approx(2.5)
        with pytest.raises(ConfigError):
            ss_beam.locate_point(2.5, 1.0)

    def test_locate_on_line(self, plain_section):
        m = two_girder_template(span=20.0, girder_spacing=6.0, n_crossbeams=5,
                                girder_section=plain_section, crossbeam_section=plain_section)
        elem, t = m.locate_on_line("east", 7.5)
        xi = m.nodes[m.elements[elem].node_i, 0]
        xj = m.nodes[m.elements[elem].node_j, 0]
        assert xi + t * (xj - xi) == pytest.approx(7.5)
        with pytest.raises(ConfigError):
            m.locate_on_line("north", 1.0)

    def test_element_length(self, ss_beam):
        assert ss_beam.element_length(ss_beam.elements[0]) == pytest.approx(1.0)


class TestValidation:
    def test_bundled_model_is_clean(self, bundled_ctx):
        report = validate_model(bundled_ctx.model)
        assert report.ok, str(report)

    def test_flags_nonpositive_stiffness(self, plain_section):
        bad = SectionSpec(bending_stiffness=-1.0, torsion_stiffness=1.0, fiber_distance=0.1)
        m = simply_supported_beam_template(4.0, 2, bad)
        report = validate_model(m)
        assert not report.ok

    def test_flags_rigid_body_modes(self, plain_section):
        m = simply_supported_beam_template(4.0, 2, plain_section)
        floating = GrillageModel(nodes=m.nodes, elements=m.elements, supports=(),
                                 lines=m.lines, deck_spacing=m.deck_spacing)
        report = validate_model(floating)
        assert not report.ok
        assert any("rigid" in msg for msg in report.violations)


class TestConfigLoading:
    def test_bundled_config_builds(self):
        model = load_model_config(BRIDGE_YAML)
        assert model.span() == pytest.approx(26.84)
        assert model.nodes.shape[0] == 82

    def test_build_is_deterministic(self):
        a = load_model_config(BRIDGE_YAML)
        b = load_model_config(BRIDGE_YAML)
        np.testing.assert_array_equal(a.nodes, b.nodes)
        assert a.elements == b.elements
        assert a.supports == b.supports

    def test_numeric_strings_accepted(self):
        # YAML 1.1 reads "210.0e9" as a string; the loader must coerce it
        cfg = yaml.safe_load(open(BRIDGE_YAML))
        assert isinstance(cfg["materials"]["steel"]["youngs_modulus"], str)
        build_model(cfg)

    def test_rejects_unknown_schema(self):
        cfg = yaml.safe_load(open(BRIDGE_YAML))
        cfg["schema_version"] = 99
        with pytest.raises(ConfigError):
            build_model(cfg)

    def test_rejects_dangling_section_reference(self):
        cfg = yaml.safe_load(open(BRIDGE_YAML))
        cfg["geometry"]["template"]["girder_section"] = "nope"
        with pytest.raises(ConfigError, match="nope"):
            build_model(cfg)

    def test_rejects_bad_material_reference(self):
        cfg = yaml.safe_load(open(BRIDGE_YAML))
        cfg["sections"]["girder"]["material"] = "unobtainium"
        with pytest.raises(ConfigError):
            build_model(cfg)
