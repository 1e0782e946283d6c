import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from extrude3d.classify import (
    PredictedLabels,
    Source,
    ViewVotes,
    aggregate_majority_vote,
    collect_votes,
    load_external_predictions,
    write_predictions,
)
from extrude3d.errors import (
    DuplicatePointId,
    GeometryMismatch,
    MalformedPredictionLine,
    OutOfRangePointId,
    UnknownClassId,
)
from extrude3d.extrusion import reduce_point_subspace
from extrude3d.labels import LabelMap
from extrude3d.mapping import PointPixelMap
from extrude3d.taxonomy import NUM_CLASSES, VOID

import oracles
from conftest import indexes_for as _indexes, scene_with_maps as _scene_with_maps


def _three_view_map(labels):
    """Point 0 seen at pixel (0, 0) of views 0, 1, 2 with the given labels."""
    m = PointPixelMap([0, 1, 2], [0, 0, 0], [0, 0, 0], [0, 0, 0], [1.0, 1.0, 1.0])
    maps = {v: LabelMap([[lab]]) for v, lab in enumerate(labels)}
    return m, maps


class TestCollectVotes:
    def test_three_views(self):
        m, maps = _three_view_map([2, 2, 5])
        assert collect_votes(m, maps).as_dict() == {0: {2: 2, 5: 1}}

    def test_void_pixel_gives_no_vote(self):
        m = PointPixelMap([0], [3], [0], [0], [1.0])
        assert collect_votes(m, {0: LabelMap([[VOID]])}).as_dict() == {}

    def test_missing_label_map(self):
        m = PointPixelMap([0], [3], [0], [0], [1.0])
        with pytest.raises(GeometryMismatch):
            collect_votes(m, {})

    def test_pixel_outside_label_map(self):
        m = PointPixelMap([0], [3], [5], [0], [1.0])
        with pytest.raises(GeometryMismatch):
            collect_votes(m, {0: LabelMap([[1]])})

    def test_shape_checked_against_views(self, simple_view):
        with pytest.raises(GeometryMismatch):
            collect_votes(PointPixelMap.empty(), {0: LabelMap([[1]])}, [simple_view])

    @pytest.mark.parametrize("seed", range(3))
    def test_tally_oracle(self, seed):
        cloud, views, m, maps = _scene_with_maps(seed, noise=0.4)
        votes = collect_votes(m, maps)
        values = {v: lm.values.tolist() for v, lm in maps.items()}
        assert votes.as_dict() == oracles.votes(m.entries(), values)
        per_point = {}
        for p, c in zip(votes.point_ids.tolist(), votes.counts.tolist()):
            per_point[p] = per_point.get(p, 0) + c
        assert max(per_point.values()) <= len(views)

    def test_threads(self):
        cloud, views, m, maps = _scene_with_maps(8, noise=0.4)
        a = collect_votes(m, maps, threads=1).as_dict()
        b = collect_votes(m, maps, threads=4).as_dict()
        assert a == b


class TestMajority:
    def test_clear_winner(self):
        p = aggregate_majority_vote(ViewVotes.from_dict({0: {2: 3, 5: 1}}))
        assert p.as_dict() == {0: 2}
        assert p.source is Source.VOTE

    def test_tie_lowest_id(self):
        assert aggregate_majority_vote(ViewVotes.from_dict({0: {1: 2, 3: 2}})).as_dict() == {0: 1}

    def test_empty(self):
        assert len(aggregate_majority_vote(ViewVotes.from_dict({}))) == 0

    @settings(max_examples=100, deadline=None)
    @given(
        st.dictionaries(
            st.integers(0, 500),
            st.dictionaries(st.integers(0, NUM_CLASSES - 1), st.integers(1, 6), min_size=1),
            max_size=40,
        ),
        st.integers(1, 5),
    )
    def test_argmax_oracle_and_scale_invariance(self, counts, k):
        pred = aggregate_majority_vote(ViewVotes.from_dict(counts)).as_dict()
        assert pred == {p: oracles.argmax_lowest(c) for p, c in counts.items()}
        scaled = {p: {c: n * k for c, n in per.items()} for p, per in counts.items()}
        assert aggregate_majority_vote(ViewVotes.from_dict(scaled)).as_dict() == pred

    def test_noiseless_fidelity(self):
        cloud, views, m, maps = _scene_with_maps(9)
        pred = aggregate_majority_vote(collect_votes(m, maps))
        assert np.array_equal(pred.classes, cloud.labels[pred.point_ids].astype(np.int64))
        assert set(pred.point_ids.tolist()) == set(m.point_ids.tolist())

    def test_reduced_votes_stay_in_targets(self):
        cloud, views, m, maps = _scene_with_maps(10, noise=0.3)
        targets = {0, 4, 12}
        r = reduce_point_subspace(m, _indexes(views, maps), targets)
        votes = collect_votes(r.reduced_map, maps).as_dict()
        assert set(votes) == set(r.retained_point_ids.tolist())
        for per in votes.values():
            assert per and set(per) <= targets

    def test_distributions_normalised(self):
        votes = ViewVotes.from_dict({3: {1: 1, 2: 3}, 7: {0: 2}})
        pts, probs = votes.distributions()
        assert pts.tolist() == [3, 7]
        np.testing.assert_allclose(probs.sum(axis=1), 1.0)
        assert probs[0, 2] == 0.75


class TestExternal:
    def test_parse(self, tmp_path):
        (tmp_path / "p.txt").write_text("0 11\n3 0")
        p = load_external_predictions(tmp_path / "p.txt", 5)
        assert p.as_dict() == {0: 11, 3: 0}
        assert p.source is Source.EXTERNAL

    @pytest.mark.parametrize(
        "text, error",
        [
            ("9 0\n", OutOfRangePointId),
            ("-1 0\n", OutOfRangePointId),
            ("1 15\n", UnknownClassId),
            ("1 2\n1 3\n", DuplicatePointId),
            ("1 two\n", MalformedPredictionLine),
            ("1 2 3\n", MalformedPredictionLine),
        ],
    )
    def test_errors(self, tmp_path, text, error):
        (tmp_path / "p.txt").write_text(text)
        with pytest.raises(error):
            load_external_predictions(tmp_path / "p.txt", 5)

    def test_round_trip(self, tmp_path, rng):
        ids = rng.choice(1000, size=300, replace=False)
        pred = PredictedLabels(ids, rng.integers(0, NUM_CLASSES, size=300), Source.EXTERNAL)
        write_predictions(tmp_path / "p.txt", pred)
        assert load_external_predictions(tmp_path / "p.txt", 1000) == pred
        lines = (tmp_path / "p.txt").read_text().splitlines()
        assert [int(l.split()[0]) for l in lines] == sorted(ids.tolist())
