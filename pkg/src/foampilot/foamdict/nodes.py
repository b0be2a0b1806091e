"""Value model for OpenFOAM dictionary files.

A parsed file is a tree of nodes: scalars (tokens and numbers), dimensioned
values, lists, nested dictionaries, and raw spans for directives the grammar
deliberately leaves untouched. Scalars keep their source text so emission
never reformats numbers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Union

FoamNode = Union["Scalar", "Dimensioned", "ListNode", "DictNode", "Raw"]


@dataclass(frozen=True)
class Scalar:
    """A single token: word, quoted string, or number (text + parsed value)."""

    text: str
    value: int | float | None = None

    @staticmethod
    def from_value(value: int | float | str) -> "Scalar":
        if isinstance(value, bool):
            return Scalar("yes" if value else "no")
        if isinstance(value, int):
            return Scalar(str(value), value)
        if isinstance(value, float):
            return Scalar(format_float(value), value)
        return Scalar(value, _numeric_value(value))


@dataclass(frozen=True)
class Dimensioned:
    """A 7-exponent dimension set, optionally followed by a magnitude."""

    exponents: tuple[int, int, int, int, int, int, int]
    magnitude: FoamNode | None = None

    def __post_init__(self) -> None:
        if len(self.exponents) != 7:
            raise ValueError("dimension set requires exactly 7 exponents")


@dataclass
class ListNode:
    """Ordered sequence.

    ``bare`` lists are multi-token entry values emitted without parentheses
    (e.g. ``uniform (1 0 0)``); ``counted`` lists carry a leading element
    count, as in polyMesh boundary files.
    """

    items: list[FoamNode] = field(default_factory=list)
    bare: bool = False
    counted: bool = False

    @staticmethod
    def of(*values: int | float | str) -> "ListNode":
        return ListNode([Scalar.from_value(v) for v in values])

    @staticmethod
    def vector(x: float, y: float, z: float) -> "ListNode":
        return ListNode.of(x, y, z)


@dataclass
class Raw:
    """Verbatim text span (directives such as ``#include``), re-emitted as-is."""

    text: str


class DuplicateKeywordError(Exception):
    """Raised when a keyword repeats within one dictionary level."""

    def __init__(self, keyword: str, line: int = 0, column: int = 0):
        self.keyword = keyword
        self.line = line
        self.column = column
        super().__init__(f"duplicate keyword {keyword!r}")


class DictNode:
    """Ordered keyword->node mapping.

    Entries with a ``None`` key are raw directive lines; named keywords are
    unique within one level. Iteration order is source order.
    """

    def __init__(self, entries: list[tuple[str | None, FoamNode]] | None = None):
        self._entries: list[tuple[str | None, FoamNode]] = []
        self._index: dict[str, int] = {}
        for key, node in entries or []:
            self.add(key, node)

    @staticmethod
    def of(**kwargs: FoamNode | int | float | str) -> "DictNode":
        d = DictNode()
        for key, value in kwargs.items():
            d.add(key, value if _is_node(value) else Scalar.from_value(value))
        return d

    def add(self, key: str | None, node: FoamNode) -> None:
        if key is not None:
            if key in self._index:
                raise DuplicateKeywordError(key)
            self._index[key] = len(self._entries)
        self._entries.append((key, node))

    def set(self, key: str, node: FoamNode) -> None:
        """Insert or replace the entry for ``key``, keeping its position."""
        if key in self._index:
            self._entries[self._index[key]] = (key, node)
        else:
            self.add(key, node)

    def get(self, key: str, default: FoamNode | None = None) -> FoamNode | None:
        i = self._index.get(key)
        return self._entries[i][1] if i is not None else default

    def __getitem__(self, key: str) -> FoamNode:
        node = self.get(key)
        if node is None:
            raise KeyError(key)
        return node

    def __contains__(self, key: str) -> bool:
        return key in self._index

    def __len__(self) -> int:
        return len(self._entries)

    def __bool__(self) -> bool:
        return bool(self._entries)

    def keys(self) -> list[str]:
        return [k for k, _ in self._entries if k is not None]

    def entries(self) -> Iterator[tuple[str | None, FoamNode]]:
        return iter(self._entries)

    def items(self) -> Iterator[tuple[str, FoamNode]]:
        return ((k, n) for k, n in self._entries if k is not None)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DictNode):
            return NotImplemented
        return self._entries == other._entries

    def __repr__(self) -> str:
        return f"DictNode({self._entries!r})"


@dataclass
class FoamFile:
    """One dictionary file: header metadata, body, optional standalone block.

    ``header`` is the FoamFile sub-dictionary (None when the source had none);
    ``standalone`` holds a file-level value with no keyword, as found in
    polyMesh boundary files (a counted list of named patch dictionaries).
    """

    root: DictNode = field(default_factory=DictNode)
    header: DictNode | None = None
    standalone: FoamNode | None = None
    source_path: str = field(default="", compare=False)

    @property
    def object_name(self) -> str:
        if self.header is not None:
            node = self.header.get("object")
            if isinstance(node, Scalar):
                return node.text
        return self.source_path.rsplit("/", 1)[-1] if self.source_path else ""

    @property
    def class_name(self) -> str:
        if self.header is not None:
            node = self.header.get("class")
            if isinstance(node, Scalar):
                return node.text
        return "dictionary"


def make_header(class_name: str, object_name: str, location: str | None = None) -> DictNode:
    """Standard FoamFile header block for generated files."""
    header = DictNode()
    header.add("version", Scalar("2.0", 2.0))
    header.add("format", Scalar("ascii"))
    header.add("class", Scalar(class_name))
    if location is not None:
        header.add("location", Scalar(f'"{location}"'))
    header.add("object", Scalar(object_name))
    return header


def format_float(value: float) -> str:
    """Shortest round-trippable decimal text for a float."""
    if value == int(value) and abs(value) < 1e16:
        return str(int(value))
    return repr(value)


def node_tokens(node: FoamNode) -> list[str]:
    """Flatten a scalar or bare token sequence into its token texts."""
    if isinstance(node, Scalar):
        return [node.text]
    if isinstance(node, ListNode) and node.bare:
        out: list[str] = []
        for item in node.items:
            out.extend(node_tokens(item))
        return out
    return []


def scalar_values(node: FoamNode) -> list[float]:
    """Numeric values of a flat list node (vectors, number lists)."""
    if not isinstance(node, ListNode):
        raise TypeError(f"expected list node, got {type(node).__name__}")
    out = []
    for item in node.items:
        if not isinstance(item, Scalar) or item.value is None:
            raise ValueError(f"non-numeric list item {item!r}")
        out.append(float(item.value))
    return out


def _numeric_value(text: str) -> int | float | None:
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return None


def _is_node(value: object) -> bool:
    return isinstance(value, (Scalar, Dimensioned, ListNode, DictNode, Raw))
