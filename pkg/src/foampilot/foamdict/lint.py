"""Static checks over fvSchemes dictionaries.

Flags numerics choices known to destabilise high-lift external-aero runs:
divergence schemes left on a bare default, and gradient schemes without a
limiter. Operates purely on the parsed tree, no solver required.
"""

from __future__ import annotations

from dataclasses import dataclass

from .nodes import DictNode, FoamFile, FoamNode, node_tokens

_SCHEME_SECTIONS = (
    "ddtSchemes",
    "gradSchemes",
    "divSchemes",
    "laplacianSchemes",
    "interpolationSchemes",
    "snGradSchemes",
    "wallDist",
)

_LIMITED_GRAD_PREFIXES = ("cellLimited", "faceLimited", "cellMDLimited", "faceMDLimited")


class NotSchemesFileError(Exception):
    """Input has none of the fvSchemes sections."""


@dataclass(frozen=True)
class LintFinding:
    section: str
    keyword: str
    message: str

    def __str__(self) -> str:
        return f"{self.section}/{self.keyword}: {self.message}"


def _tokens(node: FoamNode) -> list[str]:
    return node_tokens(node)


def _is_limited_grad(node: FoamNode) -> bool:
    tokens = _tokens(node)
    return bool(tokens) and tokens[0] in _LIMITED_GRAD_PREFIXES


def lint_schemes(file: FoamFile) -> list[LintFinding]:
    """Return findings ordered by section appearance; empty means clean."""
    root = file.root
    if not any(section in root for section in _SCHEME_SECTIONS):
        raise NotSchemesFileError(
            "no scheme sections found; expected an fvSchemes dictionary")

    findings: list[LintFinding] = []

    div = root.get("divSchemes")
    if isinstance(div, DictNode):
        named = [k for k, _ in div.entries() if k is not None and k != "default"]
        default = div.get("default")
        if default is not None and not named:
            default_tokens = _tokens(default)
            if default_tokens != ["none"]:
                findings.append(LintFinding(
                    "divSchemes", "default",
                    "all divergence terms ride on the default scheme; name "
                    "div(phi,U) and turbulence fluxes explicitly"))

    grad = root.get("gradSchemes")
    if isinstance(grad, DictNode):
        named_any = False
        for keyword, node in grad.entries():
            if keyword is None or keyword == "default":
                continue
            named_any = True
            if not _is_limited_grad(node):
                findings.append(LintFinding(
                    "gradSchemes", keyword,
                    "gradient scheme has no limiter; cellLimited damps "
                    "overshoots near sharp geometry"))
        if not named_any:
            default = grad.get("default")
            if default is not None and not _is_limited_grad(default):
                findings.append(LintFinding(
                    "gradSchemes", "default",
                    "default gradient scheme has no limiter; cellLimited "
                    "damps overshoots near sharp geometry"))

    return findings
