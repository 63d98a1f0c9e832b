from __future__ import annotations

import json

import pytest
from golden_cases import load_cases
from hypothesis import given
from hypothesis import strategies as st

from oraclesim.query.helpers import (
    HelperError,
    HelperErrorCode,
    HelperKind,
    ParsingHelper,
    apply_helpers,
    helper_json,
    helper_slice,
    helper_xml,
    helper_xpath,
)

CASES = load_cases()


@pytest.mark.parametrize("case", CASES, ids=[c.id for c in CASES])
def test_golden(case):
    passed, observed = case.check()
    assert passed, f"{case.id}: observed {observed}"


def test_golden_suite_covers_every_helper_and_error():
    kinds = {ParsingHelper.parse(h).kind for c in CASES for h in c.helpers}
    assert kinds == set(HelperKind)
    assert {c.error for c in CASES if c.error} == {"parse_failure", "path_miss", "out_of_bounds"}
    assert len({c.doc for c in CASES}) >= 20


class TestDirect:
    def test_json_direct_path(self):
        assert helper_json('{"a":{"b":3}}', "a.b") == 3

    def test_json_accepts_parsed_documents(self):
        assert helper_json({"a": [1, {"b": "x"}]}, "a.1.b") == "x"

    def test_xml_direct_path(self):
        assert helper_xml("<r><p>7</p></r>", "r/p") == "7"

    def test_xpath_missing_node(self):
        with pytest.raises(HelperError) as info:
            helper_xpath("<r><p>7</p></r>", "/r/q")
        assert info.value.code is HelperErrorCode.PATH_MISS

    @pytest.mark.parametrize(
        "offset, length, expected", [(0, 5, b"\x01\x02\x03\x04\x05"), (2, 2, b"\x03\x04"), (5, 0, b"")]
    )
    def test_slice(self, offset, length, expected):
        assert helper_slice(b"\x01\x02\x03\x04\x05", offset, length) == expected

    @pytest.mark.parametrize("offset, length", [(4, 3), (-1, 2), (0, -1), (6, 0)])
    def test_slice_out_of_bounds(self, offset, length):
        with pytest.raises(HelperError) as info:
            helper_slice(b"\x01\x02\x03\x04\x05", offset, length)
        assert info.value.code is HelperErrorCode.OUT_OF_BOUNDS

    @pytest.mark.parametrize("expr", ["//p", "/r/p[0]", "/r/p[@id='x']", ""])
    def test_unsupported_xpath(self, expr):
        with pytest.raises(HelperError) as info:
            helper_xpath("<r><p>7</p></r>", expr)
        assert info.value.code is HelperErrorCode.BAD_ARGUMENT


class TestParse:
    @pytest.mark.parametrize(
        "text, kind, args",
        [("json(result.XETHZUSD.c.0)", HelperKind.JSON, ("result.XETHZUSD.c.0",)),
         ("xml(fuelPrices/diesel)", HelperKind.XML, ("fuelPrices/diesel",)),
         ("xpath(/html/body/table/tr[2]/td[2])", HelperKind.XPATH, ("/html/body/table/tr[2]/td[2]",)),
         ("slice(2, 4)", HelperKind.SLICE, (2, 4))],
    )
    def test_textual_form(self, text, kind, args):
        helper = ParsingHelper.parse(text)
        assert (helper.kind, helper.args) == (kind, args)
        assert ParsingHelper.parse(str(helper)) == helper

    @pytest.mark.parametrize("text", ["csv(a)", "slice(1)", "slice(a, b)", "json"])
    def test_bad_helper(self, text):
        with pytest.raises(HelperError) as info:
            ParsingHelper.parse(text)
        assert info.value.code is HelperErrorCode.BAD_ARGUMENT


json_scalars = st.one_of(st.integers(-1000, 1000), st.text(max_size=5), st.booleans())
json_docs = st.recursive(
    json_scalars,
    lambda children: st.one_of(
        st.lists(children, min_size=1, max_size=3),
        st.dictionaries(st.text("abcxyz", min_size=1, max_size=3), children, min_size=1, max_size=3),
    ),
    max_leaves=12,
)


def some_path(doc, draw_index):
    """A valid dot path into ``doc`` chosen by ``draw_index``."""
    parts = []
    while isinstance(doc, (list, dict)) and doc:
        keys = list(range(len(doc))) if isinstance(doc, list) else sorted(doc)
        key = keys[draw_index % len(keys)]
        parts.append(str(key))
        doc = doc[key]
        draw_index //= 2
    return parts


@given(json_docs, st.integers(0, 10**6), st.integers(0, 6))
def test_helper_composition_is_sequential_application(doc, index, split):
    parts = some_path(doc, index)
    if len(parts) < 2:
        return
    split = 1 + split % (len(parts) - 1)
    text = json.dumps(doc)
    first = ParsingHelper.json(".".join(parts[:split]))
    second = ParsingHelper.json(".".join(parts[split:]))
    whole = helper_json(text, ".".join(parts))
    assert apply_helpers(text, [first, second]) == second.apply(first.apply(text)) == whole


@given(st.binary(max_size=64), st.integers(0, 64), st.integers(0, 64), st.integers(0, 64), st.integers(0, 64))
def test_slice_composition(data, o1, l1, o2, l2):
    helpers = [ParsingHelper.slice(o1, l1), ParsingHelper.slice(o2, l2)]
    try:
        composed = apply_helpers(data, helpers)
    except HelperError as exc:
        assert exc.code is HelperErrorCode.OUT_OF_BOUNDS
        return
    assert composed == data[o1 : o1 + l1][o2 : o2 + l2]
