import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from covillm.classify import (AmbiguousDescriptorError, AssociationResult,
                              Category, ClassificationParseError,
                              ComponentLabel, Size,
                              SpatialDescriptor, associate,
                              parse_classification, parse_statement)
from covillm.localize import Candidate, Rect

REGION = Rect(0, 0, 599, 449)  # 600 x 450 working region


def cand(cid, x, y):
    return Candidate(id=cid, c_x=float(x), c_y=float(y), z=380,
                     area=500, bbox=(int(x) - 5, int(y) - 5, 10, 10))


class TestGrammar:
    def test_basic_statement(self):
        s = parse_statement("small gear: top-left")
        assert s.label == ComponentLabel(Category.GEAR, Size.SMALL)
        assert s.where == SpatialDescriptor(kind="grid", row=1, col=1)

    def test_space_and_underscore_category_forms(self):
        a = parse_statement("big circular pin: leftmost")
        b = parse_statement("BIG CIRCULAR_PIN: leftmost")
        assert a == b
        assert a.label.category is Category.CIRCULAR_PIN

    def test_ordinal_descriptor(self):
        s = parse_statement("medium rectangular pin: 2nd from left")
        assert s.where == SpatialDescriptor(kind="ordinal", axis="x", rank=2)

    def test_ordinal_from_top(self):
        s = parse_statement("small gear: 3rd from top")
        assert s.where == SpatialDescriptor(kind="ordinal", axis="y", rank=3)

    def test_all_grid_cells_parse(self):
        for row in ("top", "middle", "bottom"):
            for col in ("left", "center", "right"):
                d = SpatialDescriptor.parse(f"{row}-{col}")
                assert d.kind == "grid"

    def test_extrema_parse(self):
        for word in ("leftmost", "rightmost", "topmost", "bottommost", "center"):
            assert SpatialDescriptor.parse(word).kind == "extremum"

    def test_statement_text_round_trip(self):
        lines = ["small gear: top-left",
                 "medium circular pin: 2nd from left",
                 "big rectangular pin: bottommost",
                 "small circular pin: 11th from top",
                 "medium gear: center"]
        for line in lines:
            s = parse_statement(line)
            assert parse_statement(s.text()) == s

    def test_missing_colon_rejected(self):
        with pytest.raises(ClassificationParseError):
            parse_statement("small gear leftmost")

    def test_unknown_size_rejected(self):
        with pytest.raises(ClassificationParseError):
            parse_statement("huge gear: leftmost")

    def test_unknown_descriptor_rejected(self):
        with pytest.raises(ClassificationParseError):
            parse_statement("small gear: behind the robot")

    def test_zeroth_ordinal_rejected(self):
        with pytest.raises(ClassificationParseError):
            parse_statement("small gear: 0th from left")


class TestParseClassification:
    def test_multi_line_with_blanks(self):
        text = "small gear: leftmost\n\nbig gear: rightmost\n"
        stmts = parse_classification(text)
        assert len(stmts) == 2

    def test_error_carries_line_number_and_text(self):
        text = "small gear: leftmost\n\nsmol gear: rightmost\n"
        with pytest.raises(ClassificationParseError) as exc_info:
            parse_classification(text)
        assert exc_info.value.line_no == 3
        assert exc_info.value.line == "smol gear: rightmost"

    def test_empty_input_yields_no_statements(self):
        assert parse_classification("\n  \n") == []


class TestAssociation:
    def test_left_right_extrema(self):
        cands = [cand(1, 100, 200), cand(2, 500, 200)]
        stmts = parse_classification(
            "small gear: leftmost\nbig gear: rightmost")
        res = associate(stmts, cands, REGION)
        assert res.bindings == [(stmts[0], 1), (stmts[1], 2)]
        assert res.unmatched == [] and res.unclaimed == []

    def test_ordinal_sequence_over_full_scene(self):
        cands = [cand(1, 100, 200), cand(2, 300, 200), cand(3, 500, 200)]
        stmts = parse_classification(
            "small gear: 1st from left\n"
            "medium gear: 2nd from left\n"
            "big gear: 3rd from left")
        res = associate(stmts, cands, REGION)
        assert [cid for _, cid in res.bindings] == [1, 2, 3]

    def test_grid_cells(self):
        # region 600x450 -> cells are 200x150
        cands = [cand(1, 100, 75), cand(2, 300, 225), cand(3, 500, 400)]
        stmts = parse_classification(
            "small gear: top-left\n"
            "medium gear: middle-center\n"
            "big gear: bottom-right")
        res = associate(stmts, cands, REGION)
        assert [cid for _, cid in res.bindings] == [1, 2, 3]

    def test_descriptor_with_no_candidate_is_unmatched(self):
        cands = [cand(1, 100, 75)]
        stmts = parse_classification("small gear: bottom-right")
        res = associate(stmts, cands, REGION)
        assert res.bindings == []
        assert res.unmatched == stmts
        assert res.unclaimed == [1]

    def test_repeated_extremum_goes_unmatched(self):
        cands = [cand(1, 100, 200), cand(2, 500, 200)]
        stmts = parse_classification(
            "small gear: leftmost\nmedium gear: leftmost")
        res = associate(stmts, cands, REGION)
        assert res.bindings == [(stmts[0], 1)]
        assert res.unmatched == [stmts[1]]
        assert res.unclaimed == [2]

    def test_ordinal_past_end_is_unmatched(self):
        cands = [cand(1, 100, 200)]
        stmts = parse_classification("small gear: 2nd from left")
        res = associate(stmts, cands, REGION)
        assert res.unmatched == stmts

    def test_grid_ambiguity_raises_with_candidate_ids(self):
        cands = [cand(1, 90, 70), cand(2, 110, 80)]
        stmts = parse_classification("small gear: top-left")
        with pytest.raises(AmbiguousDescriptorError) as exc_info:
            associate(stmts, cands, REGION)
        assert sorted(exc_info.value.candidate_ids) == [1, 2]

    def test_extremum_tie_is_ambiguous(self):
        cands = [cand(1, 100, 100), cand(2, 100, 300)]
        stmts = parse_classification("small gear: leftmost")
        with pytest.raises(AmbiguousDescriptorError):
            associate(stmts, cands, REGION)

    def test_grid_disambiguated_by_earlier_binding(self):
        # two candidates share a cell; binding one via an extremum first
        # leaves the cell descriptor a unique target
        cands = [cand(1, 60, 70), cand(2, 140, 80)]
        stmts = parse_classification(
            "small gear: leftmost\nmedium gear: top-left")
        res = associate(stmts, cands, REGION)
        assert res.bindings == [(stmts[0], 1), (stmts[1], 2)]

    def test_empty_scene_all_unmatched(self):
        stmts = parse_classification("small gear: center")
        res = associate(stmts, [], REGION)
        assert res.unmatched == stmts and res.bindings == []

    def test_dict_round_trip(self):
        cands = [cand(1, 100, 200), cand(2, 500, 200), cand(3, 300, 100)]
        stmts = parse_classification(
            "small gear: leftmost\nbig gear: rightmost")
        res = associate(stmts, cands, REGION)
        again = AssociationResult.from_dict(res.to_dict())
        assert again.to_dict() == res.to_dict()

    @given(st.integers(min_value=0, max_value=10_000))
    @settings(max_examples=100, deadline=None)
    def test_bindings_injective_and_counts_balance(self, seed):
        import numpy as np
        rng = np.random.default_rng(seed)
        n = int(rng.integers(0, 7))
        cands = []
        used = set()
        for i in range(n):
            while True:
                x, y = int(rng.integers(20, 580)), int(rng.integers(20, 430))
                if (x, y) not in used:
                    used.add((x, y))
                    break
            cands.append(cand(i + 1, x, y))
        pool = ["leftmost", "rightmost", "topmost", "bottommost", "center",
                "top-left", "middle-center", "bottom-right",
                "1st from left", "2nd from left", "3rd from top"]
        k = int(rng.integers(0, 6))
        lines = [f"small gear: {pool[int(rng.integers(len(pool)))]}"
                 for _ in range(k)]
        stmts = parse_classification("\n".join(lines))
        try:
            res = associate(stmts, cands, REGION)
        except AmbiguousDescriptorError:
            return
        bound_ids = [cid for _, cid in res.bindings]
        assert len(bound_ids) == len(set(bound_ids))
        assert len(res.bindings) + len(res.unmatched) == len(stmts)
        assert len(res.bindings) + len(res.unclaimed) == len(cands)

    def test_translation_invariance(self):
        cands = [cand(1, 100, 200), cand(2, 300, 250), cand(3, 500, 120)]
        stmts = parse_classification(
            "small gear: 1st from left\n"
            "medium gear: topmost\n"
            "big gear: rightmost")
        res_a = associate(stmts, cands, REGION)
        dx, dy = 30, 40
        shifted = [cand(c.id, c.c_x + dx, c.c_y + dy) for c in cands]
        region_b = Rect(REGION.x0 + dx, REGION.y0 + dy,
                        REGION.x1 + dx, REGION.y1 + dy)
        res_b = associate(stmts, shifted, region_b)
        assert [cid for _, cid in res_a.bindings] == \
            [cid for _, cid in res_b.bindings]
