import dataclasses

import numpy as np
import pytest
import yaml

from exobench.errors import ModelConfigError, ModelValidationError, UnknownCoordinateError
from exobench.model import (GeneralizedState, ExternalLoads, SegmentInertia, coordinate_index,
                            coordinate_names, default_model_text, dependent_candidates, dump_model,
                            load_model, validate_chain)


def _doc():
    return yaml.safe_load(default_model_text())


def _load(doc, **kw):
    return load_model(yaml.safe_dump(doc), **kw)


def test_default_model_shape(chain):
    assert len(chain.segments) == 7
    assert chain.n_coords == 23
    assert len(chain.loop_cuts) == 1 and chain.loop_cuts[0].n_constraints == 3
    assert validate_chain(chain) == []


def test_dump_load_round_trip(chain):
    again = load_model(dump_model(chain))
    assert again == chain
    assert dump_model(again) == dump_model(chain)


def test_coordinate_lookup(chain):
    assert coordinate_index(chain, "RU.pronation_supination") == 19
    names = coordinate_names(chain)
    assert len(names) == 23 and names[18] == "RU.pronation_supination"
    assert all(coordinate_index(chain, n) == i + 1 for i, n in enumerate(names))
    with pytest.raises(UnknownCoordinateError):
        coordinate_index(chain, "RU.nope")


def test_dependent_candidates_are_three_subsets(chain):
    cands = dependent_candidates(chain)
    assert cands and all(len(c) == 3 for c in cands)
    assert (18, 20, 21) in cands


def test_rotational_mask(chain):
    mask = chain.rotational_mask()
    assert mask.sum() == 19
    assert not mask[[0, 1, 2, 16]].any()


def test_negative_mass_rejected():
    doc = _doc()
    doc["segments"][3]["mass"] = -1.0
    with pytest.raises(ModelValidationError) as exc:
        _load(doc)
    assert any("mass" in v.message for v in exc.value.violations)


def test_inertia_triangle_inequality_reported():
    doc = _doc()
    doc["segments"][2]["inertia"] = [[1.0, 0, 0], [0, 0.1, 0], [0, 0, 0.1]]
    with pytest.raises(ModelValidationError, match="triangle"):
        _load(doc)


def test_duplicate_coordinate_rejected():
    doc = _doc()
    doc["joints"][1]["dofs"][0]["q"] = 1
    with pytest.raises(ModelValidationError, match="duplicate coordinate"):
        _load(doc)


def test_unknown_parent_rejected():
    doc = _doc()
    doc["joints"][2]["parent"] = "nowhere"
    with pytest.raises(ModelValidationError, match="unknown parent"):
        _load(doc)


def test_topology_check_can_be_relaxed():
    doc = _doc()
    doc["loop_cuts"] = []
    with pytest.raises(ModelValidationError, match="loop cut"):
        _load(doc)
    assert _load(doc, expect_reference_topology=False).loop_cuts == ()


@pytest.mark.parametrize("text", ["[1, 2", "- just a list", "name: x"])
def test_malformed_documents(text):
    with pytest.raises(ModelConfigError):
        load_model(text)


def test_scaled_masses(chain):
    heavy = chain.with_scaled_masses(2.0)
    assert [s.mass for s in heavy.segments] == [2.0 * s.mass for s in chain.segments]
    assert heavy.segments[0].inertia_matrix[0, 0] == 2.0 * chain.segments[0].inertia_matrix[0, 0]


def test_state_is_immutable_and_checked():
    s = GeneralizedState(0.0, [0.1, 0.2])
    assert s.qd.tolist() == [0.0, 0.0]
    with pytest.raises(ValueError):
        s.q[0] = 1.0
    with pytest.raises(dataclasses.FrozenInstanceError):
        s.t = 1.0
    with pytest.raises(ValueError):
        GeneralizedState(0.0, [0.1, np.nan])
    with pytest.raises(ValueError):
        GeneralizedState(0.0, [0.1, 0.2], [1.0])


def test_loads_validated():
    ExternalLoads({"radius": (0, 0, 1)})
    with pytest.raises(ValueError):
        ExternalLoads({"radius": (0, 1)})


def test_segment_inertia_matrix():
    s = SegmentInertia("x", 1.0, (0, 0, 0), ((1, 0, 0), (0, 2, 0), (0, 0, 2.5)), "assumed")
    assert np.allclose(np.diag(s.inertia_matrix), [1, 2, 2.5])
