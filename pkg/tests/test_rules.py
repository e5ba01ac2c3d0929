import datetime as dt

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deidflow.dicom import DataSet, Element, Rect, Tag
from deidflow.rules import (
    DuplicateKey,
    MissingParam,
    RuleError,
    ScriptParams,
    ScriptSyntaxError,
    ScrubVerdict,
    UnknownAttributeAlias,
    apply_anon,
    evaluate_filter,
    hash_uid,
    lookup_scrub,
    parse_anon_script,
    parse_filter_script,
    parse_scrub_script,
    render_scrub_script,
    shift_date,
)


def ds(**attrs):
    els = []
    for name, value in attrs.items():
        vr = {"Rows": "US", "Columns": "US", "ImageType": "CS", "SOPClassUID": "UI", "StudyDate": "DA",
              "PatientBirthDate": "DA", "SOPInstanceUID": "UI", "AcquisitionDateTime": "DT"}.get(name, "LO")
        if name in ("Modality", "BurnedInAnnotation", "ConversionType"):
            vr = "CS"
        if vr == "US":
            els.append(Element.int_element(name, vr, value))
        else:
            els.append(Element.text_element(name, vr, value))
    return DataSet(els)


class TestFilter:
    def test_first_match_wins(self):
        script = parse_filter_script(
            'accept Modality equals "US" reason "first"\n'
            'reject Modality equals "US" reason "second"\n'
            "default reject\n")
        d = evaluate_filter(script, ds(Modality="US"))
        assert d.accepted and d.reason == "first" and d.line == 1
        d = evaluate_filter(script, ds(Modality="CT"))
        assert not d.accepted and d.reason == "default reject"

    def test_operators(self):
        script = parse_filter_script(
            'reject Manufacturer contains "vidar" reason "c"\n'
            'reject SOPClassUID matches_regex "^1\\.2\\.840\\.10008\\.5\\.1\\.4\\.1\\.1\\.88\\." reason "r"\n'
            'reject ConversionType is_empty reason "e"\n'
            'reject (0042,0011) is_present reason "p"\n'
            'reject StationName is_absent and Modality equals "XA" reason "a"\n')
        assert evaluate_filter(script, ds(Manufacturer="VIDAR Corp")).reason == "c"
        assert evaluate_filter(script, ds(SOPClassUID="1.2.840.10008.5.1.4.1.1.88.11")).reason == "r"
        assert evaluate_filter(script, ds(ConversionType="")).reason == "e"
        assert evaluate_filter(script, ds(Modality="XA")).reason == "a"
        assert evaluate_filter(script, ds(Modality="XA", StationName="S1")).accepted
        assert evaluate_filter(script, ds(Modality="CT")).accepted

    def test_equals_is_case_insensitive_on_whole_value(self):
        script = parse_filter_script('reject Modality equals "us"\n')
        assert not evaluate_filter(script, ds(Modality="US")).accepted
        assert evaluate_filter(script, ds(Modality="USX")).accepted

    def test_contains_checks_each_component(self):
        script = parse_filter_script('reject ImageType contains "DERIVED"\n')
        assert not evaluate_filter(script, ds(ImageType=["ORIGINAL", "DERIVED"])).accepted

    @pytest.mark.parametrize("text,line", [
        ('reject Modality equals "CT"\nfrobnicate\n', 2),
        ('\n\nreject Modality bogus "x"\n', 3),
        ('reject Modality equals\n', 1),
        ('reject Modality equals "CT" reason\n', 1),
        ('default accept\ndefault reject\n', 2),
        ('reject Modality matches_regex "("\n', 1),
        ('reject Modality equals "unterminated\n', 1),
    ])
    def test_syntax_error_line(self, text, line):
        with pytest.raises(ScriptSyntaxError) as err:
            parse_filter_script(text, "f.filter")
        assert err.value.line == line
        assert f"f.filter:{line}" in str(err.value)

    def test_unknown_alias(self):
        with pytest.raises(UnknownAttributeAlias) as err:
            parse_filter_script('# c\nreject PatientsFavouriteColour equals "x"\n')
        assert err.value.line == 2

    def test_comments_and_blank_lines(self):
        script = parse_filter_script('# only comments\n\nreject Modality equals "SR"  # trailing\n')
        assert len(script.rules) == 1


class TestScrub:
    TEXT = ('policy whitelist US\n'
            '[modality=US make="GE" model="LOGIQE9" rows=480 cols=640]\n'
            'rect 0,0,640,40\n'
            '[modality=CT make="GE" model="X" rows=10 cols=10]\n'
            'rect 1,1,2,2\nrect 5,5,5,5\n')

    def test_lookup(self):
        script = parse_scrub_script(self.TEXT)
        hit = lookup_scrub(script, ds(Modality="us", Manufacturer="ge", ManufacturerModelName="logiqe9",
                                      Rows=480, Columns=640))
        assert hit.verdict is ScrubVerdict.RECTS and hit.rects == (Rect(0, 0, 640, 40),)
        miss = lookup_scrub(script, ds(Modality="US", Manufacturer="GE", ManufacturerModelName="LOGIQE9",
                                       Rows=482, Columns=640))
        assert miss.verdict is ScrubVerdict.WHITELIST_REJECT
        ct = lookup_scrub(script, ds(Modality="CT", Manufacturer="GE", ManufacturerModelName="Y",
                                     Rows=10, Columns=10))
        assert ct.verdict is ScrubVerdict.NO_RULE

    def test_missing_attribute_under_whitelist_rejects(self):
        script = parse_scrub_script(self.TEXT)
        assert lookup_scrub(script, ds(Modality="US")).verdict is ScrubVerdict.WHITELIST_REJECT

    def test_duplicate_key(self):
        text = self.TEXT + '[modality=us make="ge" model="logiqe9" rows=480 cols=640]\nrect 0,0,1,1\n'
        with pytest.raises(DuplicateKey) as err:
            parse_scrub_script(text)
        assert err.value.line == 7

    @pytest.mark.parametrize("text,line", [
        ("rect 0,0,1,1\n", 1),
        ('[modality=CT make="a" model="b" rows=4]\n', 1),
        ('[modality=CT make="a" model="b" rows=4 cols=4]\nrect 0,0,5,1\n', 2),
        ('[modality=CT make="a" model="b" rows=4 cols=4]\nrect 0,0\n', 2),
        ("policy blacklist US\n", 1),
    ])
    def test_syntax_errors(self, text, line):
        with pytest.raises(ScriptSyntaxError) as err:
            parse_scrub_script(text)
        assert err.value.line == line

    def test_render_round_trip(self):
        script = parse_scrub_script(self.TEXT)
        again = parse_scrub_script(render_scrub_script(script.entries, script.whitelist_only_modalities))
        assert [e.key for e in again.entries] == [e.key for e in script.entries]
        assert [e.rects for e in again.entries] == [e.rects for e in script.entries]


class TestAnon:
    def test_actions(self, params):
        script = parse_anon_script(
            "default := remove\n"
            "AccessionNumber := param(accession)\n"
            "PatientID := param(mrn)\n"
            'PatientName := replace("ANON")\n'
            "StationName := empty\n"
            "Modality := keep\n"
            "SOPInstanceUID := hashuid\n"
            "StudyDate := jitterdate\n")
        src = ds(AccessionNumber="PHI-ACC", PatientID="PHI-MRN", PatientName="Doe^Jane", StationName="ROOM1",
                 Modality="CT", SOPInstanceUID="1.2.3", StudyDate="20200110", InstitutionName="General")
        out, records = apply_anon(script, src, params)
        assert out.text("AccessionNumber") == "ACN123"
        assert out.text("PatientID") == "MRN123"
        assert out.text("PatientName") == "ANON"
        assert out["StationName"].is_empty
        assert out.text("Modality") == "CT"
        assert out.text("SOPInstanceUID") == hash_uid("1.2.3", "salt")
        assert out.text("StudyDate") == "20200104"
        assert "InstitutionName" not in out
        assert {r.action for r in records} >= {"remove", "hashuid", "jitterdate", "empty"}

    def test_private_tags_follow_private_action(self, params):
        script = parse_anon_script("default := keep\nprivate := remove\n")
        src = DataSet([Element.text_element(Tag(0x0009, 0x0010), "LO", "VENDOR"),
                       Element.text_element("Modality", "CS", "CT")])
        out, _ = apply_anon(script, src, params)
        assert Tag(0x0009, 0x0010) not in out and "Modality" in out

    def test_param_inserts_absent_element(self, params):
        script = parse_anon_script("AccessionNumber := param(accession)\n")
        out, _ = apply_anon(script, ds(Modality="CT"), params)
        assert out.text("AccessionNumber") == "ACN123"

    def test_invalid_date_is_removed(self, params):
        script = parse_anon_script("StudyDate := jitterdate\n")
        out, records = apply_anon(script, ds(StudyDate="2020-01"), params)
        assert "StudyDate" not in out
        assert records[0].action == "remove/invalid-date"

    def test_datetime_keeps_time(self, params):
        script = parse_anon_script("AcquisitionDateTime := jitterdate\n")
        out, _ = apply_anon(script, ds(AcquisitionDateTime="20200101120000.5"), params)
        assert out.text("AcquisitionDateTime") == "20191226120000.5"

    def test_missing_param(self, params):
        script = parse_anon_script("PatientName := param(site)\n")
        with pytest.raises(MissingParam):
            apply_anon(script, ds(PatientName="x"), params)

    def test_type_mismatch_is_rule_error(self, params):
        script = parse_anon_script("Rows := hashuid\n")
        with pytest.raises(RuleError):
            apply_anon(script, ds(Rows=4), params)

    def test_duplicate(self):
        with pytest.raises(DuplicateKey) as err:
            parse_anon_script("(0010,0010) := remove\nPatientName := keep\n")
        assert err.value.line == 2

    @pytest.mark.parametrize("text", ["default := hashuid\n", "PatientName = remove\n",
                                      "PatientName := frob\n"])
    def test_syntax(self, text):
        with pytest.raises(ScriptSyntaxError):
            parse_anon_script(text)

    def test_params_validation(self):
        with pytest.raises(ValueError):
            ScriptParams("A", "M", 0)
        with pytest.raises(ValueError):
            ScriptParams("", "M", 3)
        with pytest.raises(MissingParam):
            ScriptParams.from_mapping({"accession": "A", "mrn": "M"})
        p = ScriptParams.from_mapping({"accession": "A", "mrn": "M", "jitter": "-6", "site": "X"})
        assert p.jitter == -6 and p.lookup("site") == "X"


uids = st.lists(st.integers(0, 10 ** 9), min_size=2, max_size=8).map(lambda xs: ".".join(map(str, xs)))
dates = st.dates(dt.date(1900, 2, 1), dt.date(2099, 11, 30))
jitters = st.integers(-31, 31).filter(bool)


class TestProperties:
    @given(uids, st.text(max_size=20))
    def test_hash_uid_valid(self, uid, salt):
        h = hash_uid(uid, salt)
        assert h == hash_uid(uid, salt)
        assert len(h) <= 64 and h.startswith("2.25.")
        assert all(c.isdigit() or c == "." for c in h)

    @given(uids, uids)
    def test_hash_uid_injective_in_practice(self, a, b):
        if a != b:
            assert hash_uid(a, "s") != hash_uid(b, "s")

    @given(dates, dates, jitters)
    def test_shift_preserves_intervals(self, a, b, days):
        fa, fb = a.strftime("%Y%m%d"), b.strftime("%Y%m%d")
        sa = dt.datetime.strptime(shift_date(fa, days), "%Y%m%d").date()
        sb = dt.datetime.strptime(shift_date(fb, days), "%Y%m%d").date()
        assert (sb - sa) == (b - a)
        assert (sa - a).days == days

    @settings(max_examples=50)
    @given(st.text(alphabet="0123456789-/ ", max_size=10))
    def test_shift_rejects_non_dates(self, value):
        try:
            dt.datetime.strptime(value, "%Y%m%d")
            valid = len(value) == 8 and value.isdigit()
        except ValueError:
            valid = False
        if not valid:
            with pytest.raises(ValueError):
                shift_date(value, 3)


def test_default_scripts_parse(rules):
    assert rules.filter.rules and rules.scrub.entries
    assert "us" in rules.scrub.whitelist_only_modalities
    assert rules.anon.resolve(Tag(0x0010, 0x0010)).kind == "param"
    assert len({(e.make, e.model, e.rows, e.cols) for e in rules.scrub.entries if e.modality == "US"}) >= 30
    assert rules.anon.resolve(Tag(0x0008, 0x0016)).kind == "keep"
