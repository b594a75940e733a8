import pytest

import rbt
from rbt.errors import (
    BoundNotOnBandEdge,
    DuplicatePhrase,
    EmptyRange,
    MalformedFile,
    OverlappingBands,
    UnknownGroupMember,
)
from rbt.formula import Atom, Or
from rbt.glossary import (
    Band,
    Glossary,
    GlossaryTerm,
    TermGroup,
    expand_range,
    glossary_from_dict,
    load_glossary,
    lookup_phrase,
)


def band_group(gid, prefix, edges, unit="meters"):
    members = [f"{prefix}{i}" for i in range(len(edges) - 1)]
    terms = [GlossaryTerm(id=m, phrase=f"{prefix} band {i}", group=gid)
             for i, m in enumerate(members)]
    bands = [Band(edges[i], edges[i + 1], unit) for i in range(len(edges) - 1)]
    return terms, TermGroup(gid, "disjoint-ordered-bands", tuple(members), tuple(bands))


class TestLoad:
    def test_mnist_fixture_loads_with_three_band_groups(self, mnist_glossary):
        g = mnist_glossary
        ordered = g.ordered_band_groups()
        assert {grp.id for grp in ordered} == {"mnist.thick", "mnist.slant", "mnist.height"}
        digit_terms = [t for t in g.terms.values() if t.id.startswith("mnist.digit.")]
        assert len(digit_terms) == 10

    def test_empty_glossary_is_valid(self):
        g = Glossary([])
        assert g.terms == {} and g.lookup_phrase("anything") is None

    def test_duplicate_phrase_rejected(self):
        with pytest.raises(DuplicatePhrase):
            Glossary([
                GlossaryTerm("a", "very thick"),
                GlossaryTerm("b", "Very  Thick"),
            ])

    def test_alias_colliding_with_phrase_rejected(self):
        with pytest.raises(DuplicatePhrase):
            Glossary([
                GlossaryTerm("a", "thick"),
                GlossaryTerm("b", "thin", aliases=("thick",)),
            ])

    def test_unknown_group_member_rejected(self):
        with pytest.raises(UnknownGroupMember):
            Glossary([], groups=[TermGroup("g", "disjoint-unordered", ("ghost",))])

    def test_term_in_two_groups_rejected(self):
        terms = [GlossaryTerm("a", "pa"), GlossaryTerm("b", "pb")]
        g1 = TermGroup("g1", "disjoint-unordered", ("a", "b"))
        g2 = TermGroup("g2", "disjoint-unordered", ("b",))
        with pytest.raises(UnknownGroupMember):
            Glossary(terms, groups=[g1, g2])

    def test_overlapping_bands_rejected(self):
        terms, grp = band_group("g", "t", [0, 4, 7])
        bad = TermGroup("g", grp.kind, grp.members,
                        (Band(0, 5, "m"), Band(4, 7, "m")))
        with pytest.raises(OverlappingBands):
            Glossary(terms, groups=[bad])

    def test_gap_between_bands_rejected(self):
        terms, grp = band_group("g", "t", [0, 4, 7])
        bad = TermGroup("g", grp.kind, grp.members,
                        (Band(0, 3, "m"), Band(4, 7, "m")))
        with pytest.raises(OverlappingBands):
            Glossary(terms, groups=[bad])

    def test_malformed_file(self, tmp_path):
        p = tmp_path / "broken.json"
        p.write_text("{not json", encoding="utf-8")
        with pytest.raises(MalformedFile):
            load_glossary(p)

    def test_unknown_keys_tolerated(self):
        doc = {
            "terms": [{"id": "a", "phrase": "pa", "future_field": 1}],
            "groups": [],
            "output_predicates": [],
            "whole_new_section": {"x": 1},
        }
        g = glossary_from_dict(doc)
        assert "a" in g.terms


class TestLookup:
    def test_lookup_canonical(self, mnist_glossary):
        assert lookup_phrase(mnist_glossary, "is very thick").id == "mnist.thick.vthick"

    def test_lookup_alias_case_and_whitespace(self, mnist_glossary):
        assert lookup_phrase(mnist_glossary, "  Very   THICK ").id == "mnist.thick.vthick"

    def test_lookup_unregistered_absent(self, mnist_glossary):
        assert lookup_phrase(mnist_glossary, "purple hair") is None

    def test_alias_maps_to_same_term_as_phrase(self, celeba_glossary):
        via_alias = lookup_phrase(celeba_glossary, "is wearing glasses")
        via_phrase = lookup_phrase(celeba_glossary, "wearing eyeglasses")
        assert via_alias is via_phrase is celeba_glossary.terms["celeba.eyeglasses"]

    def test_every_registered_surface_resolves_to_its_owner(self, all_glossaries):
        for g in all_glossaries.values():
            for term in g.terms.values():
                for surface in term.surfaces():
                    assert lookup_phrase(g, surface) is term


class TestExpandRange:
    def test_within_10_gives_three_band_disjunction(self, sgsm_glossary):
        grp = sgsm_glossary.groups["sgsm.dist"]
        f = expand_range(sgsm_glossary, grp, "within", [10])
        assert f == Or((Atom("sgsm.dist.d0_4"), Atom("sgsm.dist.d4_7"), Atom("sgsm.dist.d7_10")))

    def test_within_first_edge_degenerates_to_single_atom(self, sgsm_glossary):
        grp = sgsm_glossary.groups["sgsm.dist"]
        assert expand_range(sgsm_glossary, grp, "within", [4]) == Atom("sgsm.dist.d0_4")

    def test_bound_off_edge_rejected(self, sgsm_glossary):
        grp = sgsm_glossary.groups["sgsm.dist"]
        with pytest.raises(BoundNotOnBandEdge):
            expand_range(sgsm_glossary, grp, "within", [5])

    def test_empty_range_rejected(self, sgsm_glossary):
        grp = sgsm_glossary.groups["sgsm.dist"]
        with pytest.raises(EmptyRange):
            expand_range(sgsm_glossary, grp, "within", [0])
        with pytest.raises(EmptyRange):
            expand_range(sgsm_glossary, grp, "beyond", [25])

    def test_between_selects_interior_run(self, sgsm_glossary):
        grp = sgsm_glossary.groups["sgsm.dist"]
        f = expand_range(sgsm_glossary, grp, "between", [4, 16])
        assert f == Or((Atom("sgsm.dist.d4_7"), Atom("sgsm.dist.d7_10"), Atom("sgsm.dist.d10_16")))

    def test_within_beyond_partition_all_interior_edges(self, sgsm_glossary):
        grp = sgsm_glossary.groups["sgsm.dist"]
        members = list(grp.members)

        def atoms(f):
            if isinstance(f, Atom):
                return [f.ref]
            return [a.ref for a in f.children]

        for k in range(1, len(members)):
            edge = grp.bands[k].lower
            inside = atoms(expand_range(sgsm_glossary, grp, "within", [edge]))
            outside = atoms(expand_range(sgsm_glossary, grp, "beyond", [edge]))
            assert inside == members[:k]
            assert outside == members[k:]
            assert set(inside) | set(outside) == set(members)
            assert set(inside) & set(outside) == set()
