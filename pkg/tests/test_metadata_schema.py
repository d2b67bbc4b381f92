import json

import pytest
from hypothesis import given, settings, strategies as st

from fairledger.errors import BadTemplate, TemplateMismatch
from fairledger.metadata_schema import (
    DUBLIN_CORE_ELEMENTS, ElementConstraint, Failure, Kind, MetadataRecord, Template, dublin_core_template,
    iso639_1_codes, load_record, load_template, validate_element, validate_record,
)

import builders
import oracles

DC = dublin_core_template()
DATE = DC.element("date")
LANG = DC.element("language")


def test_template_shape():
    assert len(DC.elements) == 15
    assert all(e.required for e in DC.elements)
    assert LANG.kind is Kind.ISO639_1
    assert sorted(e.element_name for e in DC.elements) == sorted([
        "contributor", "coverage", "creator", "date", "description", "format", "identifier", "language",
        "publisher", "relation", "rights", "source", "subject", "title", "type"])


def test_full_record_valid(fibre):
    assert validate_record(fibre, DC).valid


def test_three_letter_language(fibre):
    assert validate_record(fibre.with_elements(language="eng"), DC).failures == (("language", Failure.BAD_FORMAT),)


def test_missing_rights(fibre):
    assert validate_record(fibre.without("rights"), DC).failures == (("rights", Failure.MISSING),)


def test_impossible_date(fibre):
    assert validate_record(fibre.with_elements(date="2021-13-40"), DC).failures == (("date", Failure.BAD_FORMAT),)


def test_unknown_element_reported(fibre):
    report = validate_record(fibre.with_elements(zeta="1", alpha="2"), DC)
    assert report.failures == (("alpha", Failure.UNKNOWN_ELEMENT), ("zeta", Failure.UNKNOWN_ELEMENT))


def test_template_mismatch(fibre):
    with pytest.raises(TemplateMismatch):
        validate_record(fibre, Template("other", ()))


@pytest.mark.parametrize("value,expected", [
    ("no", None), ("en", None), ("zz", Failure.BAD_FORMAT), ("", Failure.MISSING), ("EN", Failure.BAD_FORMAT),
])
def test_language_values(value, expected):
    assert validate_element(value, LANG) == expected


def test_empty_free_text_missing():
    assert validate_element("", ElementConstraint("title")) is Failure.MISSING
    assert validate_element("", ElementConstraint("title", required=False)) is None


def test_iso_list_size():
    codes = iso639_1_codes()
    assert len(codes) == 183
    assert all(len(c) == 2 and c.islower() for c in codes)


@pytest.mark.parametrize("year", [1900, 2000, 2021, 2024])
def test_dates_match_calendar_oracle(year):
    good = oracles.valid_dates(year)
    candidates = {f"{year:04d}-{m:02d}-{d:02d}" for m in range(0, 14) for d in range(0, 33)}
    for value in candidates:
        assert (validate_element(value, DATE) is None) == (value in good), value


@settings(max_examples=200, deadline=None)
@given(st.text(max_size=12))
def test_arbitrary_text_dates(value):
    ok = validate_element(value, DATE) is None
    if ok:
        assert value in oracles.valid_dates(int(value[:4]))


def test_enum_and_regex_constraints():
    enum = ElementConstraint("type", Kind.ENUM, values=("Dataset", "Image"))
    assert validate_element("Image", enum) is None
    assert validate_element("Text", enum) is Failure.BAD_FORMAT
    rx = ElementConstraint("identifier", Kind.REGEX, pattern=r"exp-\d+")
    assert validate_element("exp-12", rx) is None
    assert validate_element("exp-12x", rx) is Failure.BAD_FORMAT


def test_bad_constraints():
    with pytest.raises(BadTemplate):
        ElementConstraint("")
    with pytest.raises(BadTemplate):
        ElementConstraint("x", Kind.ENUM)
    with pytest.raises(BadTemplate):
        ElementConstraint("x", Kind.REGEX, pattern="(")
    with pytest.raises(BadTemplate):
        Template("t", (ElementConstraint("a"), ElementConstraint("a")))


def test_template_and_record_files(tmp_path, fibre):
    tp = tmp_path / "t.json"
    tp.write_text(json.dumps(DC.to_dict()))
    assert load_template(tp) == DC
    rp = tmp_path / "r.json"
    rp.write_text(json.dumps(fibre.to_dict()))
    assert load_record(rp) == fibre


def test_record_requires_name_and_id():
    with pytest.raises(ValueError):
        MetadataRecord("", "id")
    with pytest.raises(ValueError):
        MetadataRecord("n", "")


def test_elements_constant_matches_builders():
    assert set(builders.FIBRE_ELEMENTS) == set(DUBLIN_CORE_ELEMENTS)
