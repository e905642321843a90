"""HTML cleaning for Stack Overflow post bodies.

Every tag except ``<code>`` is dropped.  Code spans are kept verbatim and
also collected into a list of code blocks; prose between code spans has
URLs and e-mail addresses replaced with ``[URL]`` / ``[EMAIL]`` tokens.

The cleaned body is itself an HTML fragment: text is entity-decoded and
then re-escaped for the three markup-significant characters (``&``, ``<``,
``>``), which keeps it free of stray tags and makes cleaning idempotent.
"""

from __future__ import annotations

import html
import re
from html.parser import HTMLParser

URL_TOKEN = "[URL]"
EMAIL_TOKEN = "[EMAIL]"

URL_RE = re.compile(
    r"(?:(?:https?|ftp)://|\bwww\.)"
    r"[^\s<>\"'\[\]]*[^\s<>\"'\[\].,;:!?)]",
    re.IGNORECASE,
)
EMAIL_RE = re.compile(r"[A-Za-z0-9._%+-]+@[A-Za-z0-9-]+(?:\.[A-Za-z0-9-]+)+")

_CODE_SPLIT_RE = re.compile(r"<code>(.*?)</code>", re.DOTALL)


def scrub(text: str) -> str:
    """Replace URLs and e-mail addresses with placeholder tokens."""
    # iterate to a fixed point so a replacement can never expose a new match
    while True:
        out = EMAIL_RE.sub(EMAIL_TOKEN, URL_RE.sub(URL_TOKEN, text))
        if out == text:
            return out
        text = out


def find_identifiers(text: str) -> list[str]:
    return URL_RE.findall(text) + EMAIL_RE.findall(text)


class _CodeKeepingParser(HTMLParser):
    def __init__(self) -> None:
        super().__init__(convert_charrefs=True)
        self.parts: list[str] = []
        self.code_blocks: list[str] = []
        self._prose: list[str] = []
        self._code: list[str] = []
        self._depth = 0

    def handle_starttag(self, tag, attrs):
        if tag != "code":
            return
        if self._depth == 0:
            self._flush_prose()
            self._code = []
        self._depth += 1

    def handle_endtag(self, tag):
        if tag != "code" or self._depth == 0:
            return
        self._depth -= 1
        if self._depth == 0:
            self._flush_code()

    def handle_startendtag(self, tag, attrs):
        pass

    def handle_data(self, data):
        (self._code if self._depth else self._prose).append(data)

    def _flush_prose(self) -> None:
        if self._prose:
            self.parts.append(html.escape(scrub("".join(self._prose)), quote=False))
            self._prose = []

    def _flush_code(self) -> None:
        code = "".join(self._code)
        self.code_blocks.append(code)
        self.parts.append("<code>" + html.escape(code, quote=False) + "</code>")
        self._code = []

    def finish(self) -> None:
        self.close()
        if self._depth:
            # unclosed <code>: keep what was collected
            self._depth = 0
            self._flush_code()
        self._flush_prose()


def clean_html(body: str) -> tuple[str, list[str]]:
    """Strip every tag except ``<code>`` and collect code spans.

    Returns ``(body_clean, code_blocks)``.  ``<pre><code>`` counts once,
    because only the ``<code>`` span matters; code inside nested ``<code>``
    tags belongs to the outermost span.

    >>> clean_html('<p>Use <code>eval(x)</code> see http://a.io</p>')
    ('Use <code>eval(x)</code> see [URL]', ['eval(x)'])
    """
    parser = _CodeKeepingParser()
    parser.feed(body or "")
    parser.finish()
    return "".join(parser.parts), parser.code_blocks


def prose_segments(body_clean: str) -> list[str]:
    """Decoded text of ``body_clean`` lying outside ``<code>`` spans."""
    return [html.unescape(seg) for seg in _CODE_SPLIT_RE.split(body_clean)[::2]]


def clean_comment(text: str) -> str:
    return scrub(text or "")
