import json

import numpy as np
import pytest

from needle_mpc.errors import InvalidInputError, SchemaError
from needle_mpc.references import (
    FixedTarget,
    Helix,
    SharpTurn,
    Sinusoidal,
    WaypointPath,
    sample,
)
from needle_mpc.scenario import (
    load_preset,
    load_scenario,
    preset_names,
    replay_command_names,
    replay_commands_path,
    scenario_from_dict,
    scenario_to_dict,
    with_seed,
)

EXPECTED_PRESETS = {
    "helix",
    "planar_fast",
    "planar_slow",
    "replay_clean",
    "replay_mismatch",
    "sharp_turn",
    "sinusoidal",
    "target1",
    "target2",
    "target3",
}


def make_doc(**overrides):
    doc = {
        "schema_version": 1,
        "mpc": {"T_s_s": 0.05, "horizon": 5},
        "geometry": {},
        "plant": {},
        "reference": {"kind": "fixed_target", "target_mm": [5.0, -15.0, 150.0]},
        "run": {"steps": 10},
    }
    doc.update(overrides)
    return doc


class TestPresets:
    def test_all_presets_listed_and_parse(self):
        names = preset_names()
        assert set(names) == EXPECTED_PRESETS
        for name in names:
            scenario = load_preset(name)
            assert scenario.run.steps >= 1

    def test_unknown_preset(self):
        with pytest.raises(InvalidInputError, match="target1"):
            load_preset("nope")

    def test_bundled_command_files(self):
        assert replay_command_names() == ["replay1", "replay2", "replay3"]
        assert replay_commands_path("replay1").is_file()
        with pytest.raises(InvalidInputError):
            replay_commands_path("replay9")


class TestSchemaValidation:
    def test_minimal_document_parses(self):
        scenario = scenario_from_dict(make_doc())
        assert scenario.mpc.horizon == 5
        assert isinstance(scenario.reference, FixedTarget)

    def test_non_object_document(self):
        with pytest.raises(SchemaError):
            scenario_from_dict([1, 2, 3])

    def test_schema_version_required_and_checked(self):
        doc = make_doc()
        del doc["schema_version"]
        with pytest.raises(SchemaError, match="schema_version"):
            scenario_from_dict(doc)
        with pytest.raises(SchemaError, match="schema_version"):
            scenario_from_dict(make_doc(schema_version=2))

    def test_missing_sections_named(self):
        doc = make_doc()
        del doc["plant"]
        with pytest.raises(SchemaError, match="plant"):
            scenario_from_dict(doc)

    def test_unknown_top_level_key_named(self):
        with pytest.raises(SchemaError, match="extra_section"):
            scenario_from_dict(make_doc(extra_section={}))

    def test_unknown_section_key_named(self):
        doc = make_doc(mpc={"T_s_s": 0.05, "horizon": 5, "fooSetting": 1})
        with pytest.raises(SchemaError, match="fooSetting"):
            scenario_from_dict(doc)

    def test_section_value_errors_name_the_section(self):
        doc = make_doc(mpc={"horizon": 0})
        with pytest.raises(SchemaError, match="mpc"):
            scenario_from_dict(doc)
        doc = make_doc(geometry={"tau_max_N": -1.0})
        with pytest.raises(SchemaError, match="geometry"):
            scenario_from_dict(doc)

    def test_load_scenario_rejects_invalid_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{]")
        with pytest.raises(SchemaError, match="not valid JSON"):
            load_scenario(path)

    def test_load_scenario_file(self, tmp_path):
        path = tmp_path / "ok.json"
        path.write_text(json.dumps(make_doc()))
        scenario = load_scenario(path)
        assert scenario.run.steps == 10


class TestReferenceKinds:
    def test_each_kind_builds(self):
        kinds = {
            "helix": ({"kind": "helix", "radius_mm": 10.0, "pitch_mm": 40.0,
                       "rate_rad_s": 1.2}, Helix),
            "sharp_turn": ({"kind": "sharp_turn",
                            "waypoints_mm": [[0, 0, 0], [0, 0, 60]],
                            "speed_mm_s": 12.0}, SharpTurn),
            "sinusoidal": ({"kind": "sinusoidal", "axial_speed_mm_s": 18.0,
                            "amplitude_mm": [10.0, 6.0],
                            "frequency_hz": [0.15, 0.1]}, Sinusoidal),
            "waypoint_path": ({"kind": "waypoint_path",
                               "points_mm": [[0, 0, 0], [0, 0, 50]],
                               "times_s": [0.0, 5.0]}, WaypointPath),
        }
        for section, expected_type in kinds.values():
            scenario = scenario_from_dict(make_doc(reference=section))
            assert isinstance(scenario.reference, expected_type)

    def test_unknown_kind_rejected(self):
        with pytest.raises(SchemaError, match="kind"):
            scenario_from_dict(make_doc(reference={"kind": "spiral"}))

    def test_reference_key_typo_named(self):
        ref = {"kind": "fixed_target", "target": [0, 0, 10]}
        with pytest.raises(SchemaError, match="target"):
            scenario_from_dict(make_doc(reference=ref))

    def test_replay_loads_and_echoes_self_contained(self, tmp_path):
        csv = tmp_path / "tip.csv"
        csv.write_text("t_s,x_mm,y_mm,z_mm\n0,0,0,0\n1,0,0,20\n2,1,-1,40\n")
        doc = make_doc(reference={"kind": "replay", "csv_path": str(csv)})
        scenario = scenario_from_dict(doc)

        echoed = scenario_to_dict(scenario)["reference"]
        assert echoed["kind"] == "waypoint_path"
        assert "csv_path" not in echoed

        rebuilt = scenario_from_dict(scenario_to_dict(scenario))
        for t in (0.0, 0.5, 1.7, 3.0):
            np.testing.assert_array_equal(
                sample(rebuilt.reference, t), sample(scenario.reference, t)
            )

    def test_replay_missing_file(self, tmp_path):
        doc = make_doc(reference={"kind": "replay", "csv_path": str(tmp_path / "no.csv")})
        with pytest.raises(SchemaError):
            scenario_from_dict(doc)


class TestRoundTrip:
    @pytest.mark.parametrize("name", sorted(EXPECTED_PRESETS))
    def test_to_dict_from_dict_fixed_point(self, name):
        scenario = load_preset(name)
        doc = scenario_to_dict(scenario)
        assert scenario_to_dict(scenario_from_dict(doc)) == doc

    def test_defaults_materialized(self):
        doc = scenario_to_dict(scenario_from_dict(make_doc()))
        assert doc["mpc"]["q_weights"] == [100.0, 100.0, 200.0]
        assert doc["plant"]["integrator"] == "exact"
        assert doc["run"]["fault_budget"] == 10

    def test_with_seed_changes_only_the_plant_seed(self):
        scenario = load_preset("planar_slow")
        reseeded = with_seed(scenario, 123)
        assert reseeded.plant.seed == 123
        a = scenario_to_dict(scenario)
        b = scenario_to_dict(reseeded)
        a["plant"].pop("seed")
        b["plant"].pop("seed")
        assert a == b
