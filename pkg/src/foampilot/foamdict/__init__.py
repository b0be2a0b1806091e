"""Parse, edit and re-emit OpenFOAM dictionary files with order preserved."""

from .emitter import emit_dict, emit_node
from .lint import LintFinding, NotSchemesFileError, lint_schemes
from .nodes import (
    Dimensioned,
    DictNode,
    DuplicateKeywordError,
    FoamFile,
    FoamNode,
    ListNode,
    Raw,
    Scalar,
    format_float,
    make_header,
    node_tokens,
    scalar_values,
)
from .parser import (
    DuplicateKeywordSyntaxError,
    FoamSyntaxError,
    UnbalancedBracesError,
    parse_dict,
)

__all__ = [
    "Dimensioned",
    "DictNode",
    "DuplicateKeywordError",
    "DuplicateKeywordSyntaxError",
    "FoamFile",
    "FoamNode",
    "FoamSyntaxError",
    "LintFinding",
    "ListNode",
    "NotSchemesFileError",
    "Raw",
    "Scalar",
    "UnbalancedBracesError",
    "emit_dict",
    "emit_node",
    "format_float",
    "lint_schemes",
    "make_header",
    "node_tokens",
    "parse_dict",
    "scalar_values",
]
