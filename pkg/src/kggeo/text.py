"""String utilities shared by the annotator, the expansion index and the features.

Tokens are maximal runs of non-whitespace characters with punctuation and
symbol characters trimmed from both edges. Offsets are code-point offsets into
the original string.
"""

from __future__ import annotations

import heapq
import itertools
import unicodedata
from dataclasses import dataclass
from typing import Iterable, Iterator, List, Optional, Sequence, Tuple

from rapidfuzz.distance import Levenshtein


@dataclass(frozen=True)
class Token:
    text: str
    start: int
    end: int


def _is_edge_char(ch: str) -> bool:
    cat = unicodedata.category(ch)
    return cat[0] in ("P", "S")


def tokenize(text: str) -> List[Token]:
    tokens: List[Token] = []
    i, n = 0, len(text)
    while i < n:
        while i < n and text[i].isspace():
            i += 1
        if i >= n:
            break
        j = i
        while j < n and not text[j].isspace():
            j += 1
        s, e = i, j
        while s < e and _is_edge_char(text[s]):
            s += 1
        while e > s and _is_edge_char(text[e - 1]):
            e -= 1
        if s < e:
            tokens.append(Token(text[s:e], s, e))
        i = j
    return tokens


def count_tokens(text: str) -> int:
    return len(tokenize(text))


def lower_chars(text: str) -> str:
    """Lowercase one code point at a time.

    ``str.lower`` is context sensitive (Greek final sigma), which would break
    the guarantee that a case-sensitive occurrence is also a case-insensitive
    one. Mapping each character independently keeps that guarantee.
    """
    return "".join(ch.lower() for ch in text)


def normalize_form(text: str) -> str:
    """Lexicon key for a surface string: edge-trimmed and lowercased."""
    toks = tokenize(text)
    if not toks:
        return ""
    return lower_chars(text[toks[0].start:toks[-1].end])


def count_occurrences(needle: str, haystack: Optional[str], case_sensitive: bool = True) -> int:
    """Non-overlapping occurrences of ``needle`` in ``haystack``."""
    if not needle or not haystack:
        return 0
    if not case_sensitive:
        needle, haystack = lower_chars(needle), lower_chars(haystack)
    return haystack.count(needle)


def edit_distance(a: str, b: str) -> int:
    """Levenshtein distance with unit costs over code points (case sensitive)."""
    return Levenshtein.distance(a, b)


class BKTree:
    """Burkhard-Keller tree over distinct strings under Levenshtein distance.

    Each stored string carries a payload list (several entities may share a
    label). ``within`` returns every stored string at distance <= radius.
    """

    def __init__(self, items: Iterable[Tuple[str, object]] = ()):
        self._root: Optional[list] = None  # [word, payloads, children{dist: node}]
        self._size = 0
        for word, payload in items:
            self.add(word, payload)

    def __len__(self) -> int:
        return self._size

    def add(self, word: str, payload: object) -> None:
        if self._root is None:
            self._root = [word, [payload], {}]
            self._size = 1
            return
        node = self._root
        while True:
            d = edit_distance(word, node[0])
            if d == 0:
                node[1].append(payload)
                return
            child = node[2].get(d)
            if child is None:
                node[2][d] = [word, [payload], {}]
                self._size += 1
                return
            node = child

    def within(self, query: str, radius: int) -> Iterator[Tuple[int, str, list]]:
        if self._root is None:
            return
        stack = [self._root]
        while stack:
            node = stack.pop()
            d = edit_distance(query, node[0])
            if d <= radius:
                yield d, node[0], node[1]
            lo, hi = d - radius, d + radius
            for k, child in node[2].items():
                if lo <= k <= hi:
                    stack.append(child)

    def nearest(self, query: str) -> Iterator[Tuple[int, str, list]]:
        """Every stored string in non-decreasing distance from ``query``.

        Best-first over subtrees: a child reached through edge ``k`` from a
        node at distance ``d`` cannot hold anything closer than ``|d - k|``.
        A result is released once no unexplored subtree can beat it, so
        consumers may stop early and still hold an exact prefix.
        """
        if self._root is None:
            return
        seq = itertools.count()
        frontier = [(0, next(seq), self._root)]
        ready: list = []
        while frontier or ready:
            while ready and (not frontier or ready[0][0] <= frontier[0][0]):
                d, _, word, payloads = heapq.heappop(ready)
                yield d, word, payloads
            if not frontier:
                continue
            bound, _, node = heapq.heappop(frontier)
            d = edit_distance(query, node[0])
            heapq.heappush(ready, (d, next(seq), node[0], node[1]))
            for k, child in node[2].items():
                heapq.heappush(frontier, (max(bound, abs(d - k)), next(seq), child))


def uppercase_count(text: str) -> int:
    return sum(1 for ch in text if ch.isupper())


def context_window(text: str, start: int, end: int, width: int = 5) -> str:
    """The span plus up to ``width`` tokens on each side."""
    toks = tokenize(text)
    before = [t for t in toks if t.end <= start][-width:] if width else []
    after = [t for t in toks if t.start >= end][:width] if width else []
    parts = [t.text for t in before] + [text[start:end]] + [t.text for t in after]
    return " ".join(parts)


def ngram_spans(tokens: Sequence[Token], i: int, max_n: int) -> List[Tuple[int, int, int]]:
    """(n, start, end) for n-grams starting at token ``i``, longest first."""
    out = []
    top = min(max_n, len(tokens) - i)
    for n in range(top, 0, -1):
        out.append((n, tokens[i].start, tokens[i + n - 1].end))
    return out

