"""Minimal Java lexer shared by the source indexer and the code-similarity metrics.

Produces a flat token stream with line/column positions. Comments are split
out so callers that need javadoc attachment (the indexer) can see them while
expression-level consumers get a clean stream.
"""

from __future__ import annotations

from dataclasses import dataclass

JAVA_KEYWORDS = frozenset(
    """
    abstract assert boolean break byte case catch char class const continue
    default do double else enum extends final finally float for goto if
    implements import instanceof int interface long native new package
    private protected public return short static strictfp super switch
    synchronized this throw throws transient try void volatile while
    true false null
    """.split()
)

PRIMITIVE_TYPES = frozenset(
    ["boolean", "byte", "char", "short", "int", "long", "float", "double", "void"]
)

MODIFIER_KEYWORDS = frozenset(
    [
        "public", "protected", "private", "static", "final", "abstract",
        "synchronized", "native", "strictfp", "transient", "volatile", "default",
    ]
)

# Longest-match first.
_OPERATORS = [
    ">>>=", "<<=", ">>=", ">>>",
    "...", "->", "::", "==", "!=", "<=", ">=", "&&", "||", "++", "--",
    "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "<<", ">>",
    "+", "-", "*", "/", "%", "=", "<", ">", "!", "~", "&", "|", "^", "?", ":",
    ";", ",", ".", "(", ")", "{", "}", "[", "]", "@",
]


@dataclass(frozen=True)
class Token:
    kind: str  # ident | keyword | number | string | char | punct
    text: str
    line: int
    col: int


@dataclass(frozen=True)
class Comment:
    text: str
    start_line: int
    end_line: int

    @property
    def is_javadoc(self) -> bool:
        return self.text.startswith("/**")


class JavaLexError(ValueError):
    pass


def _is_ident_start(ch: str) -> bool:
    return ch.isalpha() or ch in "_$"


def _is_ident_part(ch: str) -> bool:
    return ch.isalnum() or ch in "_$"


def tokenize(source: str) -> list[Token]:
    """Tokenize, dropping comments."""
    tokens, _ = tokenize_with_comments(source)
    return tokens


def tokenize_with_comments(source: str) -> tuple[list[Token], list[Comment]]:
    tokens: list[Token] = []
    comments: list[Comment] = []
    i = 0
    line = 1
    col = 1
    n = len(source)

    def advance(text: str) -> None:
        nonlocal line, col
        nl = text.count("\n")
        if nl:
            line += nl
            col = len(text) - text.rfind("\n")
        else:
            col += len(text)

    while i < n:
        ch = source[i]
        if ch in " \t\r\n\f":
            advance(ch)
            i += 1
            continue
        if ch == "/" and i + 1 < n:
            nxt = source[i + 1]
            if nxt == "/":
                end = source.find("\n", i)
                if end == -1:
                    end = n
                comments.append(Comment(source[i:end], line, line))
                advance(source[i:end])
                i = end
                continue
            if nxt == "*":
                end = source.find("*/", i + 2)
                if end == -1:
                    raise JavaLexError(f"unterminated block comment at line {line}")
                text = source[i : end + 2]
                comments.append(Comment(text, line, line + text.count("\n")))
                advance(text)
                i = end + 2
                continue
        if ch == '"':
            if source.startswith('"""', i):
                end = source.find('"""', i + 3)
                if end == -1:
                    raise JavaLexError(f"unterminated text block at line {line}")
                text = source[i : end + 3]
                tokens.append(Token("string", text, line, col))
                advance(text)
                i = end + 3
                continue
            j = i + 1
            while j < n:
                if source[j] == "\\":
                    j += 2
                    continue
                if source[j] == '"' or source[j] == "\n":
                    break
                j += 1
            if j >= n or source[j] == "\n":
                raise JavaLexError(f"unterminated string literal at line {line}")
            text = source[i : j + 1]
            tokens.append(Token("string", text, line, col))
            advance(text)
            i = j + 1
            continue
        if ch == "'":
            j = i + 1
            while j < n:
                if source[j] == "\\":
                    j += 2
                    continue
                if source[j] == "'" or source[j] == "\n":
                    break
                j += 1
            if j >= n or source[j] == "\n":
                raise JavaLexError(f"unterminated char literal at line {line}")
            text = source[i : j + 1]
            tokens.append(Token("char", text, line, col))
            advance(text)
            i = j + 1
            continue
        if ch.isdigit() or (ch == "." and i + 1 < n and source[i + 1].isdigit()):
            j = i
            while j < n and (source[j].isalnum() or source[j] in "._xXbBeEpP+-_"):
                # Sign characters only continue a number after an exponent marker.
                if source[j] in "+-" and source[j - 1] not in "eEpP":
                    break
                if source[j] == "." and not (j + 1 < n and (source[j + 1].isdigit() or source[j + 1] in "eEfFdD")):
                    break
                j += 1
            text = source[i:j]
            tokens.append(Token("number", text, line, col))
            advance(text)
            i = j
            continue
        if _is_ident_start(ch):
            j = i + 1
            while j < n and _is_ident_part(source[j]):
                j += 1
            text = source[i:j]
            kind = "keyword" if text in JAVA_KEYWORDS else "ident"
            tokens.append(Token(kind, text, line, col))
            advance(text)
            i = j
            continue
        for op in _OPERATORS:
            if source.startswith(op, i):
                tokens.append(Token("punct", op, line, col))
                advance(op)
                i += len(op)
                break
        else:
            raise JavaLexError(f"unexpected character {ch!r} at line {line}")
    return tokens, comments
