import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dysarthric_dann.report import (
    ReportError,
    Row,
    WrrReport,
    aggregate,
    best_in_row,
    count_tolerable,
    emit_report,
    fmt2,
    from_csv,
    from_json,
    mean_sd,
    round2,
    to_csv,
    to_json,
    to_text,
    usability_flags,
    wrr,
)

# Published SI column (labelled dysarthric + control training), speaker order as printed
SI_VALUES = {
    "F05": ("mild", 86.67), "M08": ("mild", 95.24), "M10": ("mild", 100.00), "M14": ("mild", 100.00),
    "M09": ("mild", 53.57), "M11": ("moderate", 50.00), "F04": ("moderate", 67.14), "M05": ("moderate", 70.48),
    "M16": ("high", 65.56), "F02": ("high", 53.33), "M07": ("high", 45.24), "M01": ("high", 41.82),
    "M12": ("high", 30.56), "F03": ("high", 50.48), "M04": ("high", 30.87),
}  # fmt: skip


def si_report():
    return WrrReport(["SI"], [Row(s, tier, {"SI": v}) for s, (tier, v) in SI_VALUES.items()])


# -- wrr ----------------------------------------------------------------------------


def test_wrr_examples():
    assert wrr(10, 14) == pytest.approx(71.4286, abs=5e-5)
    assert wrr(140, 140) == 100.0
    assert wrr(0, 70) == 0.0


@pytest.mark.parametrize("correct,attempted", [(0, 0), (5, 4), (-1, 3)])
def test_wrr_errors(correct, attempted):
    with pytest.raises(ReportError):
        wrr(correct, attempted)


# -- rounding and aggregation ------------------------------------------------------------


def test_round_half_away_from_zero():
    assert round2(0.125) == 0.13
    assert round2(2.675) == 2.68  # the float sits just below the half; repr keeps the decimal
    assert round2(-0.125) == -0.13
    assert fmt2(62.7) == "62.70"


def test_published_overall_mean_and_sd():
    mean, sd = aggregate(si_report().rows, ["SI"])["all"]["SI"]
    assert (fmt2(mean), fmt2(sd)) == ("62.73", "23.56")


def test_population_sd_does_not_match():
    values = [v for _, v in SI_VALUES.values()]
    assert fmt2(mean_sd(values, ddof=0)[1]) != "23.56"


def test_published_tier_aggregates():
    agg = aggregate(si_report().rows, ["SI"])
    printed = {t: f"{fmt2(m)} ({fmt2(s)})" for t, d in agg.items() for m, s in d.values()}
    # the printed mild SD (23.11) is not recoverable from the printed mild values
    # under either divisor; its mean is
    assert printed["mild"].startswith("87.10 (")
    del printed["mild"]
    assert printed == {
        "moderate": "62.54 (10.99)",
        "high": "45.41 (12.51)",
        "all": "62.73 (23.56)",
    }


def test_single_row_has_zero_sd():
    assert mean_sd([71.5]) == (71.5, 0.0)


def test_identical_rows():
    mean, sd = mean_sd([40.0] * 6)
    assert (mean, sd) == (40.0, 0.0)


def test_empty_and_unknown_tiers():
    with pytest.raises(ReportError):
        aggregate([], ["SI"])
    with pytest.raises(ReportError):
        aggregate([Row("X", "severe", {"SI": 1.0})], ["SI"])


@given(st.lists(st.floats(0, 100), min_size=1, max_size=20), st.randoms(use_true_random=False))
@settings(max_examples=60, deadline=None)
def test_aggregate_is_permutation_invariant(values, rnd):
    tiers = ["mild", "moderate", "high"]
    rows = [Row(f"S{i}", tiers[i % 3], {"A": v}) for i, v in enumerate(values)]
    shuffled = rows[:]
    rnd.shuffle(shuffled)
    a, b = aggregate(rows, ["A"]), aggregate(shuffled, ["A"])
    assert a.keys() == b.keys()
    for tier in a:
        assert a[tier]["A"][0] == pytest.approx(b[tier]["A"][0], abs=1e-9)
        assert a[tier]["A"][1] == pytest.approx(b[tier]["A"][1], abs=1e-9)


# -- flags and counts ------------------------------------------------------------------------


def test_flag_examples():
    f = usability_flags(92.86)
    assert f.healthy_satisfactory and f.impaired_tolerable
    f = usability_flags(64.99)
    assert not f.healthy_satisfactory and not f.impaired_tolerable
    f = usability_flags(65.0)
    assert f.impaired_tolerable and not f.healthy_satisfactory


@pytest.mark.parametrize("value", [-0.1, 100.01, math.inf])
def test_flag_range(value):
    with pytest.raises(ReportError):
        usability_flags(value)


def test_tolerable_hand_count():
    report = WrrReport(["A"], [Row(f"S{i}", "high", {"A": v}) for i, v in enumerate([90, 64.9, 65, 30])])
    assert count_tolerable(report) == 2


def test_count_uses_best_allowed_scenario():
    report = WrrReport(["A", "B"], [Row("S1", "mild", {"A": 50.0, "B": 70.0}), Row("S2", "mild", {"A": 66.0, "B": 10.0})])
    assert count_tolerable(report) == 2
    assert count_tolerable(report, ["A"]) == 1
    assert count_tolerable(report, ["B"]) == 1


@given(st.lists(st.lists(st.floats(0, 100), min_size=2, max_size=2), min_size=0, max_size=15))
@settings(max_examples=60, deadline=None)
def test_count_matches_independent_recount(rows):
    report = WrrReport(["A", "B"], [Row(f"S{i}", "high", {"A": a, "B": b}) for i, (a, b) in enumerate(rows)])
    assert count_tolerable(report) == len([r for r in rows if max(r) >= 65])


@given(st.dictionaries(st.sampled_from("ABCDE"), st.integers(0, 10000).map(lambda v: v / 100), min_size=1))
@settings(max_examples=80, deadline=None)
def test_best_in_row_agrees_with_max(values):
    top = max(values.values())
    assert best_in_row(values, list(values)) == {k for k, v in values.items() if v == top}


def test_best_in_row_marks_ties():
    assert best_in_row({"SI": 100.0, "SA": 100.0, "DANN": 98.58}, ["SI", "SA", "DANN"]) == {"SI", "SA"}


# -- emission --------------------------------------------------------------------------------------


def _report(n=15, scenarios=("SI", "DANN", "MTL")):
    rnd = random.Random(4)
    tiers = ["mild"] * 5 + ["moderate"] * 3 + ["high"] * 7
    rows = [Row(f"S{i:02d}", tiers[i % 15], {s: rnd.uniform(0, 100) for s in scenarios}) for i in range(n)]
    return WrrReport(list(scenarios), rows)


def test_text_table_shape():
    lines = to_text(_report()).splitlines()
    body = [l for l in lines if not set(l) <= {"-"}]
    # header + 15 speakers + 4 aggregate rows
    assert len(body) == 1 + 15 + 4
    assert body[-1].split()[0] == "All"
    assert "Mean (SD)" in body[-4]


def test_text_table_stars_row_maximum():
    text = to_text(WrrReport(["SI", "SA"], [Row("F05", "mild", {"SI": 86.67, "SA": 92.86})]))
    row = next(l for l in text.splitlines() if "F05" in l)
    assert "92.86*" in row and "86.67*" not in row


def test_empty_report_is_header_only():
    lines = to_text(WrrReport(["SI", "DANN"])).splitlines()
    assert lines[0].split() == ["Severity", "Speaker", "SI", "DANN"]
    assert len(lines) == 2
    assert to_csv(WrrReport(["SI"])) == "speaker_id,severity,SI\n"


def test_csv_round_trip_byte_identical():
    text = to_csv(_report())
    assert to_csv(from_csv(text)) == text


def test_json_round_trip():
    report = _report()
    back = from_json(to_json(report))
    assert to_csv(back) == to_csv(report)


@given(st.lists(st.floats(0, 100), min_size=1, max_size=8))
@settings(max_examples=40, deadline=None)
def test_csv_preserves_values_exactly(values):
    report = WrrReport(["A"], [Row(f"S{i}", "mild", {"A": v}) for i, v in enumerate(values)])
    assert [r.values["A"] for r in from_csv(to_csv(report)).rows] == values


def test_bad_csv_header():
    with pytest.raises(ReportError):
        from_csv("name,SI\nx,1\n")


def test_emit_formats(tmp_path):
    report = si_report()
    for fmt in ("text", "csv", "json"):
        path = emit_report(report, tmp_path / f"r.{fmt}", fmt)
        assert path.read_text().strip()
    assert "62.73 (23.56)" in (tmp_path / "r.text").read_text()
    with pytest.raises(ReportError):
        emit_report(report, tmp_path / "r.xml", "xml")
