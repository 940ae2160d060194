"""Alphabets and token strings.

A token string is a plain tuple of symbol strings; the empty tuple is the
empty string. The end-of-string marker is an outcome of next-symbol
distributions, never a member of a token string.
"""

from __future__ import annotations

from typing import Iterable, Sequence, Tuple

from .errors import DataError

Tokens = Tuple[str, ...]

DEFAULT_EOS = "</s>"


def tokenize(text: str) -> Tokens:
    """Whitespace tokenization of a UTF-8 string."""
    return tuple(text.split())


def detokenize(tokens: Sequence[str]) -> str:
    return " ".join(tokens)


def is_prefix(prefix: Sequence[str], string: Sequence[str]) -> bool:
    """True iff ``string`` starts with ``prefix`` (token-level, reflexive)."""
    return tuple(string[: len(prefix)]) == tuple(prefix)


class Alphabet:
    """A finite, non-empty, ordered set of symbols plus a reserved end marker."""

    __slots__ = ("symbols", "eos", "_index")

    def __init__(self, symbols: Iterable[str], eos: str = DEFAULT_EOS):
        symbols = tuple(symbols)
        if not symbols:
            raise ValueError("alphabet must be non-empty")
        index = {}
        for i, s in enumerate(symbols):
            if not isinstance(s, str) or not s:
                raise ValueError(f"alphabet symbol {s!r} is not a non-empty string")
            if s in index:
                raise ValueError(f"duplicate alphabet symbol {s!r}")
            index[s] = i
        if not eos:
            raise ValueError("eos marker must be a non-empty string")
        if eos in index:
            raise ValueError(f"eos marker {eos!r} collides with an alphabet symbol")
        self.symbols = symbols
        self.eos = eos
        self._index = index

    def __len__(self) -> int:
        return len(self.symbols)

    def __contains__(self, symbol: str) -> bool:
        return symbol in self._index

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Alphabet)
            and self.symbols == other.symbols
            and self.eos == other.eos
        )

    def __repr__(self) -> str:
        return f"Alphabet({len(self.symbols)} symbols, eos={self.eos!r})"

    def index(self, symbol: str) -> int:
        try:
            return self._index[symbol]
        except KeyError:
            raise DataError(f"token {symbol!r} is not in the alphabet") from None

    def validate(self, tokens: Sequence[str]) -> None:
        """Raise DataError naming the first token outside the alphabet."""
        for t in tokens:
            if t not in self._index:
                raise DataError(f"token {t!r} is not in the alphabet")
