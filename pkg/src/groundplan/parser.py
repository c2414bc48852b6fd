"""Parsers for the three text formats exchanged with the language model.

* executor output: a snippet between ``<code>`` and ``</code>`` holding an
  optional ``def do():`` wrapper around primitive calls with string-literal
  arguments;
* planner output: a tuple or list literal of strings;
* expected-outcomes output: a dict literal mapping strings to strings.

Nothing here evaluates code. Anything outside the grammar raises a
ParseError whose message is meant to be shown to the model.
See docs/wire-formats.md for the grammar.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional, Sequence

OPEN_TAG = "<code>"
CLOSE_TAG = "</code>"


class ParseError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"{message} (line {line})"
        super().__init__(message)


class MissingTags(ParseError):
    pass


class KeyMismatch(ParseError):
    pass


@dataclass(frozen=True)
class PrimitiveCall:
    name: str
    args: tuple[str, ...] = ()

    def __str__(self):
        return format_call(self)

    def to_dict(self) -> dict:
        return {"name": self.name, "args": list(self.args)}

    @classmethod
    def from_dict(cls, data) -> "PrimitiveCall":
        return cls(data["name"], tuple(data.get("args", ())))


@dataclass(frozen=True)
class SnippetProgram:
    calls: tuple[PrimitiveCall, ...]

    def __len__(self):
        return len(self.calls)

    def __iter__(self):
        return iter(self.calls)


# printing


_ESCAPES = {"\\": "\\\\", "\n": "\\n", "\t": "\\t", "\r": "\\r", "'": "\\'"}


def quote(text: str) -> str:
    return "'" + "".join(_ESCAPES.get(ch, ch) for ch in text) + "'"


def format_call(call: PrimitiveCall) -> str:
    return f"{call.name}({', '.join(quote(a) for a in call.args)})"


def format_program(program: SnippetProgram) -> str:
    body = "".join(f"    {format_call(c)}\n" for c in program.calls)
    return f"def do():\n{body}"


# low-level scanning


_UNESCAPE = {"n": "\n", "t": "\t", "r": "\r", "\\": "\\", "'": "'", '"': '"', "0": "\0"}
_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")


class _Scanner:
    def __init__(self, text: str, line: Optional[int] = None):
        self.text = text
        self.pos = 0
        self.line = line

    def error(self, message: str) -> ParseError:
        return ParseError(message, self.line)

    def skip_ws(self, newlines: bool = False, comments: bool = False) -> None:
        while self.pos < len(self.text):
            ch = self.text[self.pos]
            if ch in " \t" or (newlines and ch in "\r\n"):
                self.pos += 1
            elif comments and ch == "#":
                while self.pos < len(self.text) and self.text[self.pos] != "\n":
                    self.pos += 1
            else:
                break

    def peek(self) -> str:
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def at_end(self) -> bool:
        return self.pos >= len(self.text)

    def string(self) -> str:
        quote_char = self.peek()
        if quote_char not in ("'", '"'):
            raise self.error("expected a string literal")
        self.pos += 1
        out = []
        while True:
            if self.at_end():
                raise self.error("unbalanced quotes")
            ch = self.text[self.pos]
            if ch == "\\":
                if self.pos + 1 >= len(self.text):
                    raise self.error("unbalanced quotes")
                nxt = self.text[self.pos + 1]
                out.append(_UNESCAPE.get(nxt, "\\" + nxt))
                self.pos += 2
            elif ch == quote_char:
                self.pos += 1
                return "".join(out)
            elif ch == "\n":
                raise self.error("unbalanced quotes")
            else:
                out.append(ch)
                self.pos += 1

    def strings(self, newlines: bool) -> str:
        """One string literal, with adjacent literals concatenated."""
        parts = [self.string()]
        while True:
            mark = self.pos
            self.skip_ws(newlines=newlines)
            if self.peek() in ("'", '"'):
                parts.append(self.string())
            else:
                self.pos = mark
                return "".join(parts)


# snippet extraction and parsing


def extract_code(raw: str) -> str:
    """Text between the first ``<code>`` tag and the next ``</code>``."""
    start = raw.find(OPEN_TAG)
    if start < 0:
        raise MissingTags(f"no {OPEN_TAG} tag found; enclose the code between {OPEN_TAG} and {CLOSE_TAG}")
    start += len(OPEN_TAG)
    end = raw.find(CLOSE_TAG, start)
    if end < 0:
        raise MissingTags(f"no {CLOSE_TAG} tag found after {OPEN_TAG}")
    return raw[start:end]


_DEF_DO = re.compile(r"def\s+do\s*\(\s*\)\s*(->\s*None\s*)?:\s*(#.*)?$")
_DEF_ANY = re.compile(r"(async\s+)?def\b")
_LOOP = re.compile(r"(for|while|async\s+for)\b")
_COND = re.compile(r"(if|elif|else|match|case)\b")
_ASSIGN = re.compile(r"[A-Za-z_][A-Za-z0-9_.\[\]'\" ,]*\s*(=(?!=)|\+=|-=|\*=|/=|:\s*[A-Za-z_][^=]*=)")
_TOP_CALL = re.compile(r"do\s*\(\s*\)\s*(#.*)?$")
_UNSUPPORTED_KEYWORDS = re.compile(
    r"(import|from|return|try|except|finally|with|class|lambda|global|nonlocal|raise|yield|assert|del)\b"
)


def _paren_depth(line: str, lineno: int, depth: int = 0) -> int:
    """Parenthesis depth after ``line``, ignoring string contents and comments."""
    quote_char = ""
    i = 0
    while i < len(line):
        ch = line[i]
        if quote_char:
            if ch == "\\":
                i += 1
            elif ch == quote_char:
                quote_char = ""
        elif ch in ("'", '"'):
            quote_char = ch
        elif ch == "#":
            break
        elif ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth < 0:
                raise ParseError("unbalanced parentheses", lineno)
        i += 1
    if quote_char:
        raise ParseError("unbalanced quotes", lineno)
    return depth


def _logical_lines(code: str) -> list[tuple[int, str]]:
    """Split into (first line number, text) pairs, joining lines inside open parentheses."""
    out = []
    pending: list[str] = []
    start = 0
    depth = 0
    in_doc = ""
    for lineno, line in enumerate(code.split("\n"), start=1):
        line = line.rstrip("\r")
        stripped = line.strip()
        if in_doc:
            if in_doc in stripped:
                in_doc = ""
            continue
        if not pending and stripped[:3] in ('"""', "'''"):
            # docstring statement: skipped
            delim = stripped[:3]
            if delim not in stripped[3:]:
                in_doc = delim
            continue
        if not pending and stripped.startswith("```"):
            continue
        if not pending:
            start = lineno
        pending.append(line if not pending else " " + stripped)
        depth = _paren_depth(line, lineno, depth)
        if depth == 0:
            out.append((start, "".join(pending)))
            pending = []
            depth = 0
    if in_doc:
        raise ParseError("unterminated docstring")
    if pending:
        raise ParseError("unbalanced parentheses", start)
    return out


def _parse_call(text: str, lineno: int) -> PrimitiveCall:
    sc = _Scanner(text, lineno)
    sc.skip_ws()
    match = _IDENT.match(text, sc.pos)
    if not match:
        raise ParseError(f"unsupported statement {text.strip()!r}", lineno)
    name = match.group()
    sc.pos = match.end()
    sc.skip_ws()
    if sc.peek() != "(":
        raise ParseError(f"expected a call like {name}('...'), got {text.strip()!r}", lineno)
    sc.pos += 1
    args: list[str] = []
    sc.skip_ws()
    while sc.peek() != ")":
        if sc.peek() in ("'", '"'):
            args.append(sc.strings(newlines=False))
        elif sc.at_end():
            raise ParseError("unbalanced parentheses", lineno)
        else:
            kw = _IDENT.match(text, sc.pos)
            if kw and text[kw.end():].lstrip().startswith("=") and not text[kw.end():].lstrip().startswith("=="):
                raise ParseError(
                    f"keyword arguments are not supported in {name}(); pass string literals in order",
                    lineno,
                )
            raise ParseError(f"non-literal argument in {name}(); only quoted strings are allowed", lineno)
        sc.skip_ws()
        if sc.peek() == ",":
            sc.pos += 1
            sc.skip_ws()
        elif sc.peek() != ")":
            if sc.at_end():
                raise ParseError("unbalanced parentheses", lineno)
            raise ParseError(f"non-literal argument in {name}(); only quoted strings are allowed", lineno)
    sc.pos += 1
    sc.skip_ws(comments=True)
    if sc.peek() == ";":
        raise ParseError("one call per line; semicolons are not supported", lineno)
    if not sc.at_end():
        raise ParseError(f"unexpected text after {name}(...)", lineno)
    return PrimitiveCall(name, tuple(args))


def _check_statement(stmt: str, lineno: int) -> None:
    if _LOOP.match(stmt):
        raise ParseError("loops are not supported", lineno)
    if _COND.match(stmt):
        raise ParseError("conditionals are not supported", lineno)
    if _DEF_ANY.match(stmt):
        raise ParseError("nested function definitions are not supported", lineno)
    if _UNSUPPORTED_KEYWORDS.match(stmt):
        word = stmt.split()[0].rstrip(":")
        raise ParseError(f"'{word}' statements are not supported", lineno)
    if _ASSIGN.match(stmt) and not re.match(r"[A-Za-z_][A-Za-z0-9_]*\s*\(", stmt):
        raise ParseError("assignments are not supported", lineno)


def parse_snippet(code: str) -> SnippetProgram:
    calls: list[PrimitiveCall] = []
    in_body = False
    seen_def = False
    body_indent: Optional[int] = None
    after_body = False
    for lineno, line in _logical_lines(code):
        stmt = line.strip()
        if not stmt or stmt.startswith("#"):
            continue
        indent = len(line) - len(line.lstrip())
        if stmt == "pass":
            continue
        if _DEF_DO.match(stmt):
            if seen_def:
                raise ParseError("do() is defined twice", lineno)
            if calls:
                raise ParseError("def do(): must come before any call", lineno)
            seen_def = in_body = True
            continue
        if _DEF_ANY.match(stmt) and not seen_def:
            raise ParseError("only a function named do() without parameters may be defined", lineno)
        if in_body:
            if body_indent is None:
                if indent == 0:
                    raise ParseError("expected an indented block after def do():", lineno)
                body_indent = indent
            elif indent == 0:
                in_body = False
                after_body = True
            elif indent != body_indent:
                _check_statement(stmt, lineno)
                raise ParseError("unexpected indentation", lineno)
        if after_body:
            if _TOP_CALL.match(stmt):
                continue
            _check_statement(stmt, lineno)
            raise ParseError("only a final do() call may follow the body of do()", lineno)
        if not seen_def and indent > 0:
            _check_statement(stmt, lineno)
            raise ParseError("unexpected indentation", lineno)
        _check_statement(stmt, lineno)
        if not seen_def and _TOP_CALL.match(stmt):
            continue
        calls.append(_parse_call(stmt, lineno))
    if not calls:
        raise ParseError("no primitive calls found")
    return SnippetProgram(tuple(calls))


# plan and expected-outcome literals


_FENCE = re.compile(r"```[A-Za-z0-9_+-]*")
_ENUM = re.compile(r"^\s*(?:step\s*)?\d+\s*[.):-]\s*", re.IGNORECASE)


def _strip_fences(raw: str) -> str:
    return _FENCE.sub(" ", raw)


def _string_sequence(sc: _Scanner, closer: str) -> list[str]:
    items = []
    sc.skip_ws(newlines=True, comments=True)
    while sc.peek() != closer:
        if sc.peek() not in ("'", '"'):
            raise sc.error("plan entries must be quoted strings")
        items.append(sc.strings(newlines=True))
        sc.skip_ws(newlines=True, comments=True)
        if sc.peek() == ",":
            sc.pos += 1
            sc.skip_ws(newlines=True, comments=True)
        elif sc.peek() != closer:
            raise sc.error(f"expected ',' or '{closer}' in the plan")
    sc.pos += 1
    return items


def parse_plan(raw: str) -> list[str]:
    """Steps from the first tuple or list literal of strings in ``raw``."""
    text = _strip_fences(raw)
    last_error: Optional[ParseError] = None
    for match in re.finditer(r"[(\[]", text):
        sc = _Scanner(text)
        sc.pos = match.end()
        sc.skip_ws(newlines=True)
        if sc.peek() not in ("'", '"'):
            continue
        try:
            items = _string_sequence(sc, ")" if match.group() == "(" else "]")
        except ParseError as exc:
            last_error = exc
            continue
        return [_ENUM.sub("", item).strip() for item in items]
    if last_error is not None:
        raise ParseError(f"could not read the plan: {last_error}")
    raise ParseError("no tuple or list of strings found; output the plan as a tuple of strings")


def _string_map(sc: _Scanner) -> dict[str, str]:
    out: dict[str, str] = {}
    sc.skip_ws(newlines=True, comments=True)
    while sc.peek() != "}":
        if sc.peek() not in ("'", '"'):
            raise sc.error("dictionary keys must be quoted strings")
        key = sc.strings(newlines=True)
        sc.skip_ws(newlines=True)
        if sc.peek() != ":":
            raise sc.error("expected ':' after a dictionary key")
        sc.pos += 1
        sc.skip_ws(newlines=True)
        if sc.peek() not in ("'", '"'):
            raise sc.error("dictionary values must be quoted strings")
        out[key] = sc.strings(newlines=True)
        sc.skip_ws(newlines=True, comments=True)
        if sc.peek() == ",":
            sc.pos += 1
            sc.skip_ws(newlines=True, comments=True)
        elif sc.peek() != "}":
            raise sc.error("expected ',' or '}' in the dictionary")
    sc.pos += 1
    return out


def parse_eo_map(raw: str, plan: Optional[Sequence[str]] = None) -> dict[str, str]:
    """Expected outcomes keyed by plan step.

    Keys are matched to ``plan`` exactly; if that fails and the counts agree,
    entries are matched by position instead.
    """
    text = _strip_fences(raw)
    mapping: Optional[dict[str, str]] = None
    last_error: Optional[ParseError] = None
    for match in re.finditer(r"\{", text):
        sc = _Scanner(text)
        sc.pos = match.end()
        try:
            mapping = _string_map(sc)
            break
        except ParseError as exc:
            last_error = exc
    if mapping is None:
        if last_error is not None:
            raise ParseError(f"could not read the dictionary: {last_error}")
        raise ParseError("no dictionary literal found")
    if plan is None:
        return mapping
    plan = list(plan)
    if all(step in mapping for step in plan):
        return {step: mapping[step] for step in plan}
    if len(mapping) == len(plan):
        return dict(zip(plan, mapping.values()))
    raise KeyMismatch(
        f"expected outcomes do not match the plan: {len(mapping)} entries for {len(plan)} steps"
    )
