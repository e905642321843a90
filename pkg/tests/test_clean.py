import doctest
import re

from hypothesis import given, settings
from hypothesis import strategies as st

from sosecure import clean
from sosecure.clean import clean_comment, clean_html, find_identifiers, prose_segments, scrub


def test_spec_example_inline_code_and_url():
    assert clean_html("<p>Use <code>eval(x)</code> see http://a.io</p>") == (
        "Use <code>eval(x)</code> see [URL]",
        ["eval(x)"],
    )


def test_pre_code_keeps_newlines():
    body, blocks = clean_html("<pre><code>a = 1\nb = 2</code></pre>")
    assert blocks == ["a = 1\nb = 2"]
    assert body == "<code>a = 1\nb = 2</code>"


def test_email_scrubbed():
    assert clean_html("mail me@x.com")[0] == "mail [EMAIL]"
    assert clean_comment("ping me@x.com or see www.example.org.") == "ping [EMAIL] or see [URL]."


def test_entities_decoded_in_code_and_prose():
    body, blocks = clean_html("<p>a &amp; b</p><pre><code>if x &lt; 3 &amp;&amp; y:\n</code></pre>")
    assert blocks == ["if x < 3 && y:\n"]
    assert prose_segments(body) == ["a & b", ""]


def test_code_is_not_scrubbed():
    body, blocks = clean_html("<code>requests.get('http://internal.host/x')</code> see http://a.io")
    assert blocks == ["requests.get('http://internal.host/x')"]
    assert body.endswith("see [URL]")


def test_nested_code_spans_count_once():
    _, blocks = clean_html("<pre><code>outer <code>inner</code> tail</code></pre>")
    assert blocks == ["outer inner tail"]


def test_unclosed_tags_best_effort():
    body, blocks = clean_html("<p>Note<br>this <b>bold<pre><code>x = 1")
    assert blocks == ["x = 1"]
    assert body == "Notethis bold<code>x = 1</code>"


def test_url_variants():
    text = "a http://x.io/p?q=1, b https://y.org. c ftp://f.net/a.txt d www.z.com/e) done"
    assert scrub(text) == "a [URL], b [URL]. c [URL] d [URL]) done"


def test_docstring_example():
    assert doctest.testmod(clean).failed == 0


# property tests

_PIECES = st.sampled_from([
    "<p>", "</p>", "<b>", "</b>", "<br>", "<br/>", "<pre>", "</pre>", "<code>", "</code>",
    '<a href="http://x.io">', "</a>", "&amp;", "&lt;", "&gt;", "&quot;", "&#39;", "&nbsp;",
    " http://a.io/x ", " www.b.com ", " me@x.com ", "user.name+tag@mail.example.co.uk",
    "ftp://f.net/a.txt", "[URL]", "[EMAIL]", "\n", "  ", "<", ">", "&", "@", "http://",
])
_TEXT = st.text(alphabet=st.characters(blacklist_categories=("Cs",)), max_size=12)
_HTML = st.lists(st.one_of(_PIECES, _TEXT), max_size=30).map("".join)


@settings(max_examples=400, deadline=None)
@given(_HTML)
def test_idempotent(body):
    once = clean_html(body)
    assert clean_html(once[0]) == once


@settings(max_examples=400, deadline=None)
@given(_HTML)
def test_no_tags_other_than_code(body):
    cleaned, blocks = clean_html(body)
    stripped = re.sub(r"</?code>", "", cleaned)
    assert "<" not in stripped and ">" not in stripped
    assert cleaned.count("<code>") == cleaned.count("</code>") == len(blocks)


@settings(max_examples=400, deadline=None)
@given(_HTML)
def test_scrub_complete_outside_code(body):
    cleaned, _ = clean_html(body)
    for segment in prose_segments(cleaned):
        assert find_identifiers(segment) == []


@settings(max_examples=200, deadline=None)
@given(st.lists(st.text(alphabet="abcxyz =()\n", min_size=1, max_size=10), min_size=1, max_size=6),
       st.lists(st.sampled_from(["<p>", "</p>", "see ", "<pre>", "</pre>", "<br>"]), min_size=7, max_size=7))
def test_code_block_order_preserved(codes, glue):
    body = glue[0] + "".join(f"<code>{c}</code>{g}" for c, g in zip(codes, glue[1:]))
    assert clean_html(body)[1] == codes


@settings(max_examples=300, deadline=None)
@given(_TEXT)
def test_scrub_fixed_point(text):
    out = scrub(text)
    assert scrub(out) == out
    assert find_identifiers(out) == []
