"""Recursive-descent parser for the OpenFOAM dictionary subset used in case
``system/``, ``constant/`` and ``0/`` files.

Comments are skipped; ``#`` directives are preserved verbatim as Raw nodes and
never evaluated. polyMesh boundary files parse as a file-level standalone
counted list next to the keyword entries.
"""

from __future__ import annotations

from .nodes import (
    Dimensioned,
    DictNode,
    DuplicateKeywordError,
    FoamFile,
    FoamNode,
    ListNode,
    Raw,
    Scalar,
)

# Characters that may continue a bare token once started.
_TOKEN_START_EXTRA = '_#$".'
_TOKEN_CONT = "_.<>#$:+-*/|&^%~!?="


class FoamSyntaxError(Exception):
    """Parse failure with source position and the offending text."""

    def __init__(self, message: str, line: int, column: int, token: str = ""):
        self.line = line
        self.column = column
        self.token = token
        where = f"line {line}, column {column}"
        if token:
            where += f" at {token!r}"
        super().__init__(f"{message} ({where})")


class UnbalancedBracesError(FoamSyntaxError):
    pass


class DuplicateKeywordSyntaxError(FoamSyntaxError):
    def __init__(self, keyword: str, line: int, column: int):
        self.keyword = keyword
        super().__init__(f"duplicate keyword {keyword!r}", line, column, keyword)


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0
        self.n = len(text)

    # -- position helpers ---------------------------------------------------

    def _line_col(self, pos: int) -> tuple[int, int]:
        line = self.text.count("\n", 0, pos) + 1
        start = self.text.rfind("\n", 0, pos) + 1
        return line, pos - start + 1

    def error(self, message: str, pos: int | None = None, token: str = "",
              cls: type = FoamSyntaxError) -> FoamSyntaxError:
        at = self.pos if pos is None else pos
        line, col = self._line_col(at)
        if not token and at < self.n:
            token = self.text[at : at + 16].split()[0] if self.text[at:].split() else ""
        return cls(message, line, col, token)

    # -- lexing -------------------------------------------------------------

    def skip(self) -> None:
        text, n = self.text, self.n
        while self.pos < n:
            c = text[self.pos]
            if c in " \t\r\n\f\v":
                self.pos += 1
            elif text.startswith("//", self.pos):
                end = text.find("\n", self.pos)
                self.pos = n if end < 0 else end + 1
            elif text.startswith("/*", self.pos):
                end = text.find("*/", self.pos + 2)
                if end < 0:
                    raise self.error("unterminated block comment")
                self.pos = end + 2
            else:
                return

    def at_end(self) -> bool:
        return self.pos >= self.n

    def peek(self) -> str:
        return self.text[self.pos] if self.pos < self.n else ""

    def expect(self, ch: str) -> None:
        if self.peek() != ch:
            raise self.error(f"expected {ch!r}")
        self.pos += 1

    def read_token(self) -> str:
        """Bare word or quoted string; bare words may contain balanced parens
        (scheme keywords like ``div(phi,U)``)."""
        c = self.peek()
        if c == '"':
            start = self.pos
            self.pos += 1
            while self.pos < self.n:
                if self.text[self.pos] == "\\":
                    self.pos += 2
                    continue
                if self.text[self.pos] == '"':
                    self.pos += 1
                    return self.text[start : self.pos]
                self.pos += 1
            raise self.error("unterminated quoted string", start)
        if not (c.isalpha() or c in _TOKEN_START_EXTRA):
            raise self.error("expected token")
        start = self.pos
        depth = 0
        while self.pos < self.n:
            c = self.text[self.pos]
            if depth > 0:
                if c == "(":
                    depth += 1
                elif c == ")":
                    depth -= 1
                elif c in ";{}" or c.isspace():
                    raise self.error("unbalanced parentheses in token", start)
                self.pos += 1
            elif c.isalnum() or c in _TOKEN_CONT:
                self.pos += 1
            elif c == "(":
                depth += 1
                self.pos += 1
            else:
                break
        if depth != 0:
            raise self.error("unbalanced parentheses in token", start)
        return self.text[start : self.pos]

    _NUMBER_CHARS = set("0123456789+-.eE")

    def try_number(self) -> Scalar | None:
        start = self.pos
        c = self.peek()
        if not (c.isdigit() or (c in "+-." and self._digit_follows())):
            return None
        while self.pos < self.n and self.text[self.pos] in self._NUMBER_CHARS:
            self.pos += 1
        text = self.text[start : self.pos]
        try:
            value: int | float = int(text)
        except ValueError:
            try:
                value = float(text)
            except ValueError:
                self.pos = start
                return None
        # Numbers must end at a delimiter, not run into a word (e.g. `1e5x`).
        nxt = self.peek()
        if nxt and (nxt.isalnum() or nxt in _TOKEN_CONT):
            self.pos = start
            return None
        return Scalar(text, value)

    def _digit_follows(self) -> bool:
        i = self.pos
        if i < self.n and self.text[i] in "+-":
            i += 1
        if i < self.n and self.text[i] == ".":
            i += 1
        return i < self.n and self.text[i].isdigit()

    # -- grammar ------------------------------------------------------------

    def parse_directive(self) -> Raw:
        start = self.pos
        end = self.text.find("\n", start)
        if end < 0:
            end = self.n
        self.pos = end
        return Raw(self.text[start:end].rstrip("\r").rstrip())

    def parse_dict_body(self, open_pos: int | None) -> DictNode:
        """Entries until '}' (or EOF when open_pos is None, i.e. file level)."""
        result = DictNode()
        while True:
            self.skip()
            if self.at_end():
                if open_pos is not None:
                    raise self.error("missing closing brace", open_pos,
                                     cls=UnbalancedBracesError)
                return result
            c = self.peek()
            if c == "}":
                if open_pos is None:
                    raise self.error("unmatched closing brace",
                                     cls=UnbalancedBracesError)
                self.pos += 1
                return result
            if c == "#":
                result.add(None, self.parse_directive())
                continue
            key_pos = self.pos
            keyword = self.read_token()
            self.skip()
            if self.peek() == "{":
                open_brace = self.pos
                self.pos += 1
                value: FoamNode = self.parse_dict_body(open_brace)
            else:
                value = self.parse_entry_value()
            try:
                result.add(keyword, value)
            except DuplicateKeywordError:
                line, col = self._line_col(key_pos)
                raise DuplicateKeywordSyntaxError(keyword, line, col) from None

    def parse_entry_value(self) -> FoamNode:
        items: list[FoamNode] = []
        while True:
            self.skip()
            if self.at_end():
                raise self.error("missing ';' before end of input")
            c = self.peek()
            if c == ";":
                self.pos += 1
                break
            if c in "})":
                raise self.error(f"unmatched {c!r} in entry value",
                                 cls=UnbalancedBracesError)
            if c == "{":
                raise self.error("unexpected '{' in entry value")
            items.append(self.parse_item())
        if not items:
            return ListNode([], bare=True)
        if len(items) == 1:
            return items[0]
        return ListNode(items, bare=True)

    def parse_item(self) -> FoamNode:
        c = self.peek()
        if c == "(":
            return self.parse_list(counted=False)
        if c == "[":
            return self.parse_dimensioned()
        if c == "{":
            open_brace = self.pos
            self.pos += 1
            return self.parse_dict_body(open_brace)
        number = self.try_number()
        if number is not None:
            save = self.pos
            self.skip()
            if self.peek() == "(" and isinstance(number.value, int) and number.value >= 0:
                return self.parse_list(counted=True, count=number.value)
            self.pos = save
            return number
        token = self.read_token()
        return Scalar(token, None)

    def parse_list(self, counted: bool, count: int | None = None) -> ListNode:
        open_pos = self.pos
        self.expect("(")
        items: list[FoamNode] = []
        while True:
            self.skip()
            if self.at_end():
                raise self.error("missing closing parenthesis", open_pos,
                                 cls=UnbalancedBracesError)
            if self.peek() == ")":
                self.pos += 1
                break
            items.append(self.parse_list_item())
        if counted and count is not None and count != len(items):
            raise self.error(
                f"list count {count} does not match {len(items)} elements", open_pos)
        return ListNode(items, counted=counted)

    def parse_list_item(self) -> FoamNode:
        c = self.peek()
        if c in "([{" or c.isdigit() or (c in "+-." and self._digit_follows()):
            return self.parse_item()
        token = self.read_token()
        self.skip()
        if self.peek() == "{":
            # Named sub-dictionary inside a list (boundary patch entries).
            open_brace = self.pos
            self.pos += 1
            body = self.parse_dict_body(open_brace)
            named = DictNode()
            named.add(token, body)
            return named
        return Scalar(token, None)

    def parse_dimensioned(self) -> Dimensioned:
        open_pos = self.pos
        self.expect("[")
        exponents: list[int] = []
        while True:
            self.skip()
            if self.peek() == "]":
                self.pos += 1
                break
            number = self.try_number()
            if number is None or not isinstance(number.value, int):
                raise self.error("expected integer dimension exponent")
            exponents.append(number.value)
        if len(exponents) != 7:
            raise self.error(
                f"dimension set has {len(exponents)} exponents, expected 7", open_pos)
        save = self.pos
        self.skip()
        magnitude: FoamNode | None = None
        if self.peek() == "(":
            magnitude = self.parse_list(counted=False)
        else:
            number = self.try_number()
            if number is not None:
                magnitude = number
            else:
                self.pos = save
        return Dimensioned(tuple(exponents), magnitude)  # type: ignore[arg-type]

    def parse_standalone(self) -> FoamNode:
        return self.parse_item()

    def parse_file(self) -> FoamFile:
        root = DictNode()
        standalone: FoamNode | None = None
        while True:
            self.skip()
            if self.at_end():
                break
            c = self.peek()
            if c == "#":
                root.add(None, self.parse_directive())
                continue
            if c == "}":
                raise self.error("unmatched closing brace", cls=UnbalancedBracesError)
            if c.isdigit() or c == "(":
                if standalone is not None:
                    raise self.error("more than one standalone data block")
                standalone = self.parse_standalone()
                continue
            key_pos = self.pos
            keyword = self.read_token()
            self.skip()
            if self.peek() == "{":
                open_brace = self.pos
                self.pos += 1
                value: FoamNode = self.parse_dict_body(open_brace)
            else:
                value = self.parse_entry_value()
            try:
                root.add(keyword, value)
            except DuplicateKeywordError:
                line, col = self._line_col(key_pos)
                raise DuplicateKeywordSyntaxError(keyword, line, col) from None

        header = None
        header_node = root.get("FoamFile")
        if isinstance(header_node, DictNode):
            header = header_node
            remaining = DictNode()
            for key, node in root.entries():
                if key != "FoamFile":
                    remaining.add(key, node)
            root = remaining
        return FoamFile(root=root, header=header, standalone=standalone)


def parse_dict(text: str, source_path: str = "") -> FoamFile:
    """Parse dictionary text into a FoamFile, preserving keyword order."""
    parser = _Parser(text)
    result = parser.parse_file()
    result.source_path = source_path
    return result
