import copy
import json
import sys
from fractions import Fraction
from typing import get_args, get_origin, get_type_hints

import pytest

from fbin_link.config import (
    AnalysisSettings,
    RunManifest,
    ScenarioDocument,
    apply_overrides,
    build_config,
    config_digest,
    demo_document,
    fill_defaults,
    load_config,
)
from fbin_link.exceptions import ConfigError, UsageError
from fbin_link.qstate import EnvelopeMode
from fbin_link.schemas import load_schema
from fbin_link.receiver import Basis, required_path_difference


def _demo():
    return copy.deepcopy(dict(demo_document()))


def _reversed(doc):
    if isinstance(doc, dict):
        return {k: _reversed(doc[k]) for k in reversed(list(doc))}
    if isinstance(doc, list):
        return [_reversed(x) for x in doc]
    return doc


def test_demo_document_builds():
    cfg = build_config(_demo())
    sc = cfg.scenario
    assert sc.receiver.basis is Basis.Z
    assert sc.tagger.resolution_ps == Fraction(625, 8)
    assert sc.v_z_eps_bins == (0.889, 0.821)
    assert sc.detectors[0].jitter_fwhm == pytest.approx(50e-12)
    assert sc.digest == cfg.digest
    assert cfg.analysis == AnalysisSettings(min_events=1000)


def test_defaults_are_made_explicit():
    filled = fill_defaults(_demo())
    assert filled["receiver"]["delta_l_m"] == pytest.approx(
        required_path_difference(filled["source"]["delta_omega_rad_per_s"])
    )
    assert filled["detectors"][0]["efficiency"] == 1.0
    assert filled["channel"]["trajectory"]["velocity_m_per_s"] == 0.0


def test_digest_ignores_key_order():
    doc = _demo()
    assert config_digest(doc) == config_digest(_reversed(doc))
    assert build_config(doc).digest == build_config(_reversed(doc)).digest
    assert build_config(doc).digest != build_config(doc, ["seed=1"]).digest


def test_overrides():
    doc = apply_overrides(
        _demo(), ["detectors.0.jitter_fwhm_ps=350", "receiver.basis=X", "analysis.state=null"]
    )
    assert doc["detectors"][0]["jitter_fwhm_ps"] == 350
    assert doc["receiver"]["basis"] == "X"
    assert doc["analysis"] == {"state": None}
    assert _demo()["detectors"][0]["jitter_fwhm_ps"] == 50.0

    for bad in ["seed", "=3", "detectors.5.efficiency=1", "seed.x=1"]:
        with pytest.raises(UsageError):
            apply_overrides(_demo(), [bad])


def test_every_schema_problem_is_reported():
    doc = _demo()
    doc["detectors"][0]["efficiency"] = 2
    doc["tagger"]["resolution_ps"] = -1
    doc["dark_count"] = 5
    with pytest.raises(ConfigError) as e:
        build_config(doc)
    paths = [d.split(":")[0] for d in e.value.diagnostics]
    assert "detectors.0.efficiency" in paths
    assert "tagger.resolution_ps" in paths
    assert "<root>" in paths


def test_cross_field_problems_are_reported_together():
    doc = _demo()
    doc["source"]["delta_omega_rad_per_s"] = 1.634e9
    doc["tagger"]["marker_channel"] = 1
    doc["detectors"] = doc["detectors"][:1]
    with pytest.raises(ConfigError) as e:
        build_config(doc)
    keys = {d.split(":")[0] for d in e.value.diagnostics}
    assert keys == {"tagger.marker_period_ps", "tagger.marker_channel", "detectors"}


def test_single_detector_is_enough_for_the_x_basis():
    doc = _demo()
    doc["detectors"] = doc["detectors"][:1]
    assert build_config(doc, ["receiver.basis=X"]).scenario.receiver.basis is Basis.X


def test_schema_versions():
    with pytest.raises(ConfigError, match="not supported"):
        build_config(_demo(), ['schema_version="2.0"'])
    with pytest.warns(UserWarning, match="newer"):
        build_config(_demo(), ['schema_version="1.1"'])


def test_load_config_with_sampled_trajectory(tmp_path):
    (tmp_path / "pass.csv").write_text("t_s,range_m\n0,500000\n10,560000\n")
    doc = _demo()
    doc["channel"]["trajectory"] = {"mode": "sampled", "file": "pass.csv"}
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(doc))
    traj = load_config(path).scenario.channel.trajectory
    assert traj.span == (0.0, 10.0)

    doc["channel"]["trajectory"]["file"] = "missing.csv"
    path.write_text(json.dumps(doc))
    with pytest.raises(ConfigError, match="channel.trajectory"):
        load_config(path)


def test_unreadable_documents(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{\n  "seed": 1,\n  oops\n}\n')
    with pytest.raises(ConfigError, match="line 3"):
        load_config(path)
    path.write_text("[1, 2]")
    with pytest.raises(ConfigError, match="JSON object"):
        load_config(path)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.json")


def test_analysis_settings():
    settings = AnalysisSettings.from_json({"bin_width_ps": 78.125, "state": "X+"})
    assert settings.bin_width_ps == Fraction(625, 8)
    assert settings.state == "X+"
    with pytest.raises(ConfigError, match="analysis.min_events"):
        AnalysisSettings.from_json({"min_events": 0})


def test_manifest(tmp_path):
    manifest = RunManifest(command="simulate", seed=3)
    manifest.outputs.extend(["tags.meta.json", "tags.csv"])
    manifest.write(tmp_path / "manifest.json")
    doc = json.loads((tmp_path / "manifest.json").read_text())
    assert doc["outputs"] == ["tags.csv", "tags.meta.json"]
    assert doc["seed"] == 3
    assert doc["finished"] is not None
    assert set(doc) == {
        "command",
        "config_digest",
        "seed",
        "tool_version",
        "started",
        "finished",
        "outputs",
        "warnings",
        "config",
    }


def _definition(schema, node):
    ref = node.get("$ref")
    return schema["definitions"][ref.rsplit("/", 1)[-1]] if ref else node


def _assert_document_matches(typed, node, schema, where):
    hints = get_type_hints(typed)
    assert set(hints) == set(node["properties"]), where
    assert typed.__required_keys__ == frozenset(node.get("required", ())), where
    for key, hint in hints.items():
        child = _definition(schema, node["properties"][key])
        if child.get("type") == "array" and get_origin(hint) is list:
            hint = get_args(hint)[0]
            child = _definition(schema, child["items"])
        if child.get("type") == "object":
            _assert_document_matches(hint, child, schema, f"{where}.{key}")


@pytest.mark.skipif(sys.version_info < (3, 9), reason="needs __required_keys__")
def test_document_types_follow_the_schema():
    schema = load_schema("scenario.json")
    _assert_document_matches(ScenarioDocument, schema, schema, "<root>")


def test_envelope_mode():
    assert build_config(_demo()).scenario.envelope_mode is EnvelopeMode.AS_PRINTED
    cfg = build_config(_demo(), ["envelope_mode=oracle"])
    assert cfg.scenario.envelope_mode is EnvelopeMode.ORACLE
    with pytest.raises(ConfigError, match="envelope_mode"):
        build_config(_demo(), ["envelope_mode=printed"])
