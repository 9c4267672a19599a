"""The ``.scn`` scenario language."""

from .compiler import CompiledScenario, compile_scenario, load_file, load_scenario
from .printer import format_doc
from .syntax import Diagnostic, DiagnosticError, ScenarioDoc, Span, parse_scenario, tokenize

__all__ = [
    "CompiledScenario",
    "Diagnostic",
    "DiagnosticError",
    "ScenarioDoc",
    "Span",
    "compile_scenario",
    "format_doc",
    "load_file",
    "load_scenario",
    "parse_scenario",
    "tokenize",
]
