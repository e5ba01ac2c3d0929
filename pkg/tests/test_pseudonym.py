import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deidflow.pseudonym import (
    DuplicateStudy,
    IneligibleAccession,
    IrreversibleStudy,
    MappingStore,
    Mode,
    ReversibleStudy,
    StudyPurged,
    StudyRegistration,
    UnknownAnonId,
    jitter_days,
    read_exclusions,
    write_exclusions,
)


def store_with(mode=Mode.REVERSIBLE, accessions=("A1", "A2", "A3"), path=None, exclusions=(), seed=7):
    s = MappingStore(path, exclusions)
    s.register_study(StudyRegistration("S", mode, set(accessions), seed=seed))
    return s


def test_mapping_is_stable_and_per_patient():
    s = store_with()
    a = s.get_or_create_mapping("S", "A1", "M1")
    assert s.get_or_create_mapping("S", "A1", "M1") is a
    b = s.get_or_create_mapping("S", "A2", "M1")
    c = s.get_or_create_mapping("S", "A3", "M2")
    assert a.anon_mrn == b.anon_mrn != c.anon_mrn
    assert a.jitter_days == b.jitter_days
    assert a.anon_accession != b.anon_accession
    assert "A1" not in a.anon_accession and "M1" not in a.anon_mrn


def test_eligibility():
    s = store_with(exclusions={"A2", "M9"})
    assert not s.validate_accession("S", "A4")
    assert s.validate_accession("S", "A2").reason == "excluded"
    with pytest.raises(IneligibleAccession):
        s.get_or_create_mapping("S", "A4", "M1")
    with pytest.raises(IneligibleAccession):
        s.get_or_create_mapping("S", "A1", "M9")
    with pytest.raises(DuplicateStudy):
        s.register_study(StudyRegistration("S", Mode.REVERSIBLE))


def test_resolve_reversible():
    s = store_with()
    m = s.get_or_create_mapping("S", "A1", "M1")
    assert s.resolve("S", m.anon_accession) == ("A1", "M1")
    with pytest.raises(UnknownAnonId):
        s.resolve("S", "ACN000000000")
    with pytest.raises(ReversibleStudy):
        s.purge_links("S")


def test_purge_irreversible(tmp_path):
    path = tmp_path / "map.jsonl"
    s = store_with(Mode.IRREVERSIBLE, path=path)
    m = s.get_or_create_mapping("S", "A1", "M1")
    with pytest.raises(IrreversibleStudy):
        s.resolve("S", m.anon_accession)
    assert s.purge_links("S") == 1
    text = path.read_text()
    assert '"A1"' not in text
    assert '"M1"' not in text
    reopened = MappingStore(path)
    assert reopened.study("S").purged and reopened.study("S").seed is None
    assert reopened.mappings("S")[0].real_accession is None
    with pytest.raises(StudyPurged):
        reopened.get_or_create_mapping("S", "A1", "M1")
    with pytest.raises(StudyPurged):
        reopened.salt("S")


def test_persistence_replays(tmp_path):
    path = tmp_path / "map.jsonl"
    s = store_with(path=path)
    m = s.get_or_create_mapping("S", "A1", "M1")
    s.approve("S", ["A9"])
    again = MappingStore(path)
    assert again.get_or_create_mapping("S", "A1", "M1") == m
    assert "A9" in again.study("S").approved_accessions


def test_torn_tail_is_ignored(tmp_path):
    path = tmp_path / "map.jsonl"
    s = store_with(path=path)
    s.get_or_create_mapping("S", "A1", "M1")
    with open(path, "a") as fh:
        fh.write('{"type": "mapp')
    assert len(MappingStore(path).mappings("S")) == 1


def test_exclusion_file(tmp_path):
    p = tmp_path / "excl.txt"
    write_exclusions(p, {"B", "A"})
    assert read_exclusions(p) == {"A", "B"}
    (tmp_path / "bad.txt").write_text("A\n")
    with pytest.raises(ValueError):
        read_exclusions(tmp_path / "bad.txt")


@settings(max_examples=200)
@given(st.integers(0, 2 ** 64 - 1), st.text(max_size=12), st.text(max_size=12))
def test_jitter_range(seed, study, mrn):
    j = jitter_days(seed, study, mrn)
    assert -31 <= j <= 31 and j != 0


def test_jitter_covers_range():
    seen = {jitter_days(1, "S", f"M{i}") for i in range(3000)}
    assert seen == set(range(-31, 0)) | set(range(1, 32))
