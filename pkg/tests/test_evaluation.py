import pytest

from frakturdict.entries import DictionaryEntry
from frakturdict.errors import SchemaMismatch
from frakturdict.evaluation import (
    MethodResult,
    aggregate,
    compare_methods,
    content_sequence,
    methods_csv,
    report_csv,
    report_html,
    score_page,
    structure_sequence,
)
from frakturdict.tei import Sense, TeiDocument, TeiEntry
from conftest import make_entries


def swap(items, i, j):
    out = list(items)
    out[i], out[j] = out[j], out[i]
    return tuple(out)


class TestScorePage:
    def test_identical_pages_are_perfect(self, gt_page_doc):
        report = score_page(gt_page_doc, gt_page_doc, page_id="p149")
        assert all(value == 0.0 for value in report.cer_by_field.values())
        assert report.structural_similarity == 1.0
        assert report.textual_similarity == 1.0
        assert report.perfect_rate == 1.0
        assert report.total_entries == 86

    def test_41_of_100_exact_yields_perfect_rate_0_41(self):
        from dataclasses import replace

        reference = make_entries(100)
        # corrupt the last 59 headwords deterministically
        corrupted = tuple(
            entry if index < 41 else replace(entry, headword_et=entry.headword_et + "x")
            for index, entry in enumerate(reference)
        )
        report = score_page(corrupted, reference)
        assert report.perfect_entries == 41
        assert report.total_entries == 100
        assert report.perfect_rate == pytest.approx(0.41)
        assert report.cer_by_field["headword_et"] > 0

    def test_swapped_pair_dents_structure_but_not_content_alphabet(self):
        entries = make_entries(10)
        swapped = swap(entries, 2, 3)
        report = score_page(swapped, entries)
        assert report.structural_similarity <= 1.0
        assert report.textual_similarity < 1.0
        assert report.cer_by_field["headword_et"] > 0
        assert report.perfect_entries == 8

    def test_missing_hypothesis_entries_count_against_totals(self):
        reference = make_entries(10)
        report = score_page(reference[:6], reference)
        assert report.total_entries == 10
        assert report.perfect_entries == 6

    def test_schema_mismatch_raises(self, gt_page_doc):
        with pytest.raises(SchemaMismatch):
            score_page(make_entries(3), gt_page_doc)

    def test_tei_pages_score_on_tei_fields(self, gt_page_doc):
        mutated_first = TeiEntry(
            entry_id="e1",
            orth=gt_page_doc.entries[0].orth + "x",
            pos=gt_page_doc.entries[0].pos,
            gram=gt_page_doc.entries[0].gram,
            senses=gt_page_doc.entries[0].senses,
        )
        hypothesis = TeiDocument((mutated_first,) + gt_page_doc.entries[1:])
        report = score_page(hypothesis, gt_page_doc)
        assert report.perfect_entries == 85
        assert report.cer_by_field["orth"] > 0
        assert report.cer_by_field["quote"] == 0.0


class TestSequences:
    def test_structure_sequence_for_entries(self):
        entries = (
            DictionaryEntry(headword_et="maja", equivalent_de="Haus"),
            DictionaryEntry(headword_et="oun", synonyms_et=("aun",)),
        )
        assert structure_sequence(entries) == (
            "entries",
            "entry", "headword_et", "equivalent_de",
            "entry", "headword_et", "synonyms_et",
        )

    def test_content_sequence_for_entries(self):
        entries = (DictionaryEntry(headword_et="aus", equivalent_de="ehrbar"),)
        assert "".join(content_sequence(entries)) == "ausehrbar"


class TestMethodComparison:
    def test_table_of_three_preprocessing_methods(self):
        rows = compare_methods(
            [
                MethodResult("whole page", 0.495, 0.507, 0.370, 7184),
                MethodResult("two columns", 0.572, 0.687, 0.536, 13988),
                MethodResult("8 segments", 0.647, 0.710, 1.050, 57186),
            ]
        )
        assert rows[0].structural_delta == ""
        assert rows[1].structural_delta == "+15.6%"
        assert rows[1].textual_delta == "+35.5%"
        assert rows[1].cost_delta == "+45%"
        assert rows[1].tokens_delta == "+95%"
        assert rows[2].structural_delta == "+30.7%"
        assert rows[2].textual_delta == "+40.0%"
        assert rows[2].cost_delta == "+184%"
        assert rows[2].tokens_delta == "+696%"

    def test_negative_delta_rendering(self):
        rows = compare_methods(
            [MethodResult("base", 0.5, 0.5, 1.0, 1000), MethodResult("worse", 0.4, 0.5, 0.5, 900)]
        )
        assert rows[1].structural_delta == "-20.0%"
        assert rows[1].cost_delta == "-50%"
        assert rows[1].tokens_delta == "-10%"


class TestAggregate:
    def test_means_and_perfect_rate(self):
        entries = make_entries(10)
        perfect = score_page(entries, entries, page_id="p001")
        dented = score_page(swap(entries, 0, 1), entries, page_id="p002")
        corpus = aggregate([perfect, dented])
        assert corpus.total_entries == 20
        assert corpus.perfect_entries == 18
        assert 0 < corpus.mean_cer_by_field["headword_et"]
        assert len(corpus.pages) == 2

    def test_report_renderings_contain_the_series(self):
        entries = make_entries(6)
        corpus = aggregate(
            [score_page(entries, entries, page_id="p001")],
            methods=[
                MethodResult("whole page", 0.495, 0.507, 0.370, 7184),
                MethodResult("two columns", 0.572, 0.687, 0.536, 13988),
            ],
        )
        csv_text = report_csv(corpus)
        assert "cer_headword_et" in csv_text.splitlines()[0]
        assert "p001" in csv_text
        html_text = report_html(corpus)
        assert "<svg" in html_text and "polyline" in html_text
        assert "+15.6%" in html_text
        methods_text = methods_csv(corpus)
        assert "+95%" in methods_text
