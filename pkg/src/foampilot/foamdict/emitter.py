"""Deterministic text emission for parsed dictionary trees.

Emission is a fixed point: parsing emitted text and emitting again yields
byte-identical output, which keeps generated case files diff-stable across
correction iterations.
"""

from __future__ import annotations

from .nodes import Dimensioned, DictNode, FoamFile, FoamNode, ListNode, Raw, Scalar

INDENT = "    "
KEYWORD_PAD = 16
INLINE_LIST_LIMIT = 72

BANNER = """\
/*--------------------------------*- C++ -*----------------------------------*\\
|                                                                              |
\\*---------------------------------------------------------------------------*/
"""
SEPARATOR = (
    "// * * * * * * * * * * * * * * * * * * * * * * * * * * * * * * * * * * * * * //\n"
)
FOOTER = (
    "\n// ************************************************************************* //\n"
)


def _emit_scalar(node: Scalar) -> str:
    return node.text


def _emit_dimensioned(node: Dimensioned) -> str:
    dims = "[" + " ".join(str(e) for e in node.exponents) + "]"
    if node.magnitude is None:
        return dims
    return dims + " " + _emit_inline(node.magnitude)


def _emit_inline(node: FoamNode) -> str:
    """Single-line form; only defined for nodes with no nested dictionaries."""
    if isinstance(node, Scalar):
        return _emit_scalar(node)
    if isinstance(node, Dimensioned):
        return _emit_dimensioned(node)
    if isinstance(node, Raw):
        return node.text
    if isinstance(node, ListNode):
        inner = " ".join(_emit_inline(item) for item in node.items)
        if node.bare:
            return inner
        if node.counted:
            return f"{len(node.items)} ({inner})" if inner else f"{len(node.items)} ()"
        return f"({inner})" if inner else "()"
    raise TypeError(f"cannot inline {type(node).__name__}")


def _is_inline(node: FoamNode) -> bool:
    if isinstance(node, (Scalar, Raw)):
        return True
    if isinstance(node, Dimensioned):
        return node.magnitude is None or _is_inline(node.magnitude)
    if isinstance(node, ListNode):
        if node.counted and len(node.items) > 8:
            return False
        return all(_is_inline(item) for item in node.items)
    return False


def _emit_list_block(node: ListNode, depth: int, lines: list[str]) -> None:
    pad = INDENT * depth
    if node.counted:
        lines.append(f"{pad}{len(node.items)}")
    lines.append(f"{pad}(")
    for item in node.items:
        if isinstance(item, DictNode):
            _emit_list_dict(item, depth + 1, lines)
        elif isinstance(item, ListNode) and not _is_inline(item):
            _emit_list_block(item, depth + 1, lines)
        else:
            lines.append(f"{INDENT * (depth + 1)}{_emit_inline(item)}")
    lines.append(f"{pad})")


def _emit_list_dict(node: DictNode, depth: int, lines: list[str]) -> None:
    pad = INDENT * depth
    items = list(node.entries())
    if len(items) == 1 and items[0][0] is not None and isinstance(items[0][1], DictNode):
        # Named sub-dictionary (a boundary patch): `name { ... }`.
        name, body = items[0]
        lines.append(f"{pad}{name}")
        lines.append(f"{pad}{{")
        _emit_dict_body(body, depth + 1, lines)
        lines.append(f"{pad}}}")
    else:
        lines.append(f"{pad}{{")
        _emit_dict_body(node, depth + 1, lines)
        lines.append(f"{pad}}}")


def _key_field(keyword: str) -> str:
    if len(keyword) >= KEYWORD_PAD:
        return keyword + " "
    return keyword.ljust(KEYWORD_PAD)


def _emit_bare_block(node: ListNode, depth: int, lines: list[str]) -> None:
    """A bare value whose items do not all fit inline: inline items stay on
    their own lines, nested blocks expand; no parens are introduced."""
    pad = INDENT * depth
    for item in node.items:
        if isinstance(item, ListNode) and not _is_inline(item):
            _emit_list_block(item, depth, lines)
        elif isinstance(item, DictNode):
            _emit_list_dict(item, depth, lines)
        else:
            lines.append(f"{pad}{_emit_inline(item)}")


def _emit_entry(keyword: str, node: FoamNode, depth: int, lines: list[str]) -> None:
    pad = INDENT * depth
    if isinstance(node, DictNode):
        lines.append(f"{pad}{keyword}")
        lines.append(f"{pad}{{")
        _emit_dict_body(node, depth + 1, lines)
        lines.append(f"{pad}}}")
        return
    if _is_inline(node):
        rendered = _emit_inline(node)
        line = f"{pad}{_key_field(keyword)}{rendered};"
        if len(line) <= INLINE_LIST_LIMIT or not isinstance(node, ListNode):
            lines.append(line)
            return
    lines.append(f"{pad}{keyword}")
    assert isinstance(node, ListNode)
    if node.bare:
        _emit_bare_block(node, depth, lines)
    else:
        _emit_list_block(node, depth, lines)
    lines[-1] += ";"


def _emit_dict_body(node: DictNode, depth: int, lines: list[str]) -> None:
    pad = INDENT * depth
    for index, (keyword, value) in enumerate(node.entries()):
        if keyword is None:
            assert isinstance(value, Raw)
            lines.append(f"{pad}{value.text}")
            continue
        if isinstance(value, DictNode) and index > 0:
            lines.append("")
        _emit_entry(keyword, value, depth, lines)


def emit_node(node: FoamNode) -> str:
    """Render a single node without any file framing."""
    if isinstance(node, DictNode):
        lines: list[str] = ["{"]
        _emit_dict_body(node, 1, lines)
        lines.append("}")
        return "\n".join(lines)
    if _is_inline(node):
        return _emit_inline(node)
    lines = []
    assert isinstance(node, ListNode)
    _emit_list_block(node, 0, lines)
    return "\n".join(lines)


def emit_dict(file: FoamFile) -> str:
    """Render a FoamFile to deterministic dictionary text."""
    lines: list[str] = []
    if file.header is not None:
        lines.append("FoamFile")
        lines.append("{")
        _emit_dict_body(file.header, 1, lines)
        lines.append("}")
        lines.append(SEPARATOR.rstrip("\n"))
        lines.append("")
    _emit_dict_body(file.root, 0, lines)
    if file.standalone is not None:
        if file.root:
            lines.append("")
        if _is_inline(file.standalone):
            lines.append(_emit_inline(file.standalone))
        else:
            assert isinstance(file.standalone, ListNode)
            _emit_list_block(file.standalone, 0, lines)
    body = "\n".join(lines)
    return BANNER + body + FOOTER
