import dataclasses
import random
import shutil

import pytest
from conftest import DATA
from pipeline import suite_tree

from deidflow import regression
from deidflow.dicom import Rect, parse_file, write_file
from deidflow.dicom.pixels import decode_pixels, encode_pixels
from deidflow.regression import (
    FixtureMissing,
    MissingBackground,
    MustAnonymize,
    MustFilter,
    MustJitterBy,
    SuiteSyntaxError,
    load_suite,
    parse_suite,
    run_suite,
)

FEATURE = DATA / "pet_ct.feature"

BACKGROUND = """Feature: f
Background:
Given the pipeline uses the anonymizer script, "a.script"
Given the pipeline uses the pixel script, "p.script"
Given the pipeline uses the filter script, "f.script"
And script parameter "accession" is "ACN123"
And script parameter "mrn" is "MRN123"
And script parameter "jitter" is "-6"
"""


@pytest.fixture
def tree(tmp_path):
    return suite_tree(tmp_path, FEATURE)


def test_parse_transcribed_suite():
    suite = parse_suite(FEATURE.read_text())
    assert suite.background.params == {"accession": "ACN123", "mrn": "MRN123", "jitter": "-6"}
    assert suite.background.scripts == {"anonymizer": "stanford-anonymizer.script",
                                        "pixel": "stanford-scrubber.script",
                                        "filter": "stanford-filter.script"}
    assert [len(s.assertions) for s in suite.scenarios] == [1, 3, 1]
    assert isinstance(suite.scenarios[0].assertions[0], MustAnonymize)
    assert [a.rect for a in suite.scenarios[1].assertions] == [
        Rect(256, 0, 256, 22), Rect(300, 22, 212, 80), Rect(10, 478, 100, 10)]
    assert isinstance(suite.scenarios[2].assertions[0], MustFilter)
    assert suite.scenarios[1].directory == "dicom-phi/PT/Scrub/GE/Discovery/512x512"


def test_transcribed_suite_passes(tree):
    report = run_suite(load_suite(tree))
    assert report.passed, "\n".join(report.lines())
    assert [s.files for s in report.scenarios] == [2, 2, 6]


def test_empty_suite_is_valid():
    suite = parse_suite("Feature: nothing yet\n")
    assert suite.scenarios == [] and run_suite(suite).passed


def test_misspelled_step_names_line():
    text = BACKGROUND + 'Scenario: s\n  Given the DICOM directory "d"\n  Wen ran through the deid pipeline\n'
    with pytest.raises(SuiteSyntaxError) as err:
        parse_suite(text)
    assert err.value.lineno == 11


@pytest.mark.parametrize("body", [
    'Scenario: s\n  Given the DICOM directory "d"\n  When ran through the deid pipeline\n',
    'Scenario: s\n  When ran through the deid pipeline\n  Then the images SHOULD be anonymized\n',
    'Scenario: s\n  Given the DICOM directory "d"\n  Then the images SHOULD be anonymized\n',
])
def test_incomplete_scenarios_rejected(body):
    with pytest.raises(SuiteSyntaxError):
        parse_suite(BACKGROUND + body)


def test_missing_background():
    body = ('Scenario: s\n  Given the DICOM directory "d"\n  When ran through the deid pipeline\n'
            "  Then the images SHOULD NOT pass the filter\n")
    with pytest.raises(MissingBackground):
        parse_suite("Feature: f\n" + body)
    partial = "\n".join(ln for ln in BACKGROUND.splitlines() if "mrn" not in ln) + "\n"
    with pytest.raises(MissingBackground, match="mrn"):
        parse_suite(partial + body)


def test_jitter_step_parses():
    text = BACKGROUND + ('Scenario: s\n  Given the DICOM directory "d"\n  When ran through the deid pipeline\n'
                         "  Then the images SHOULD be anonymized\n  And the dates should be jittered by -6 days\n")
    (sc,) = parse_suite(text).scenarios
    assert sc.assertions[1] == MustJitterBy(-6, 13)


def test_jitter_step_detects_wrong_shift(tree):
    text = tree.read_text().replace(
        "Then the images SHOULD be anonymized",
        "Then the images SHOULD be anonymized\n  And the dates should be jittered by 5 days", 1)
    tree.write_text(text)
    report = run_suite(load_suite(tree))
    assert not report.passed
    assert "StudyDate" in report.scenarios[0].failures[0]


def test_nonzero_pixel_in_rect_fails(tree):
    # a catalog missing the third rect leaves that marker in place
    scrub = tree.parent / "stanford-scrubber.script"
    scrub.write_text(scrub.read_text().replace("rect 10,478,100,10\n", ""))
    report = run_suite(load_suite(tree))
    assert not report.passed
    (failing,) = [s for s in report.scenarios if not s.passed]
    assert failing.name == "REG-PCT01 GE PET/CT fusion"
    assert len(failing.failures) == 2
    assert all("10,478,100,10" in f for f in failing.failures)


def test_single_nonzero_sample_fails(tree):
    # the catalog skips the third rect; the fixture has exactly one nonzero sample there
    scrub = tree.parent / "stanford-scrubber.script"
    scrub.write_text(scrub.read_text().replace("rect 10,478,100,10\n", ""))
    target = sorted((tree.parent / "dicom-phi/PT/Scrub/GE/Discovery/512x512").iterdir())[0]
    ds = parse_file(target.read_bytes())
    px = decode_pixels(ds)
    frame = px.frames[0].copy()
    frame[478:488, 10:110] = 0
    frame[480, 50] = 1
    px = dataclasses.replace(px, frames=(frame,))
    target.write_bytes(write_file(encode_pixels(ds, px)))
    report = run_suite(load_suite(tree))
    failures = report.scenarios[1].failures
    assert not report.passed
    assert any(target.name in f and "1 nonzero samples inside 10,478,100,10" in f for f in failures)


def test_accepted_file_in_filter_dir_fails(tree):
    src = sorted((tree.parent / "dicom-phi/PT/Anonymize").iterdir())[0]
    shutil.copy(src, tree.parent / "dicom-phi/PT/Filter" / "stray.dcm")
    report = run_suite(load_suite(tree))
    assert [s.passed for s in report.scenarios] == [True, True, False]
    assert "stray.dcm" in report.scenarios[2].failures[0]


def test_unsubstituted_accession_fails(tree):
    anon = tree.parent / "stanford-anonymizer.script"
    anon.write_text(anon.read_text().replace("(0008,0050) := param(accession)", "(0008,0050) := keep"))
    report = run_suite(load_suite(tree))
    assert [s.passed for s in report.scenarios] == [False, True, True]
    assert "AccessionNumber" in report.scenarios[0].failures[0]


def test_fixture_missing(tree):
    shutil.rmtree(tree.parent / "dicom-phi/PT/Filter")
    with pytest.raises(FixtureMissing):
        run_suite(load_suite(tree))


def test_result_independent_of_file_order(tree, monkeypatch):
    scrub = tree.parent / "stanford-scrubber.script"
    scrub.write_text(scrub.read_text().replace("rect 300,22,212,80\n", ""))
    shutil.copy(sorted((tree.parent / "dicom-phi/PT/Anonymize").iterdir())[0],
                tree.parent / "dicom-phi/PT/Filter" / "stray.dcm")
    suite = load_suite(tree)

    def summary(report):
        return [(s.name, s.passed, s.files, sorted(s.failures)) for s in report.scenarios]

    baseline = summary(run_suite(suite))
    original = regression.fixture_files
    for seed in range(3):
        def shuffled(directory, seed=seed):
            files = original(directory)
            random.Random(seed).shuffle(files)
            return files
        monkeypatch.setattr(regression, "fixture_files", shuffled)
        assert summary(run_suite(suite)) == baseline
    assert [p for _, p, _, _ in baseline] == [True, False, False]
