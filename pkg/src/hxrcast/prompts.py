"""Prompt assembly: context, task, and input descriptors with special tokens.

Templates are plain-text files with {name}-style placeholders, shipped as
package data and swappable via a template directory so prompt ablations
don't touch code.
"""

from __future__ import annotations

import re
import string
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .data import InputStats
from .errors import TemplateError

_UNRESOLVED = re.compile(r"\{[A-Za-z_][A-Za-z0-9_]*\}")

DEFAULT_MAX_CHARS = 4000


@dataclass(frozen=True)
class SpecialTokens:
    """Delimiter tokens; defaults follow the common chat-model convention."""

    begin: str = "<|begin_of_text|>"
    header_start: str = "<|start_header_id|>"
    header_end: str = "<|end_header_id|>"
    section_end: str = "<|eot_id|>"


@dataclass(frozen=True)
class PromptDescriptors:
    """The three template texts, in assembly order."""

    context_text: str
    task_text: str
    input_template: str

    def __post_init__(self):
        for name in ("context_text", "task_text", "input_template"):
            if not getattr(self, name).strip():
                raise TemplateError(name, f"descriptor {name} is empty")


@dataclass(frozen=True)
class FusionPrompt:
    """Assembled prompt text plus the bindings that produced it."""

    text: str
    placeholder_bindings: dict[str, str] = field(default_factory=dict)
    token_budget: int = DEFAULT_MAX_CHARS

    def __post_init__(self):
        if self.token_budget <= 0:
            raise TemplateError("token_budget", "token budget must be positive")
        if len(self.text) > self.token_budget:
            raise TemplateError(
                "token_budget",
                f"prompt length {len(self.text)} exceeds budget {self.token_budget}",
            )
        leftover = _UNRESOLVED.search(self.text)
        if leftover:
            raise TemplateError(leftover.group(0).strip("{}"))


def load_descriptors(directory: str | Path) -> PromptDescriptors:
    """Read context.txt / task.txt / input.txt from a template directory."""
    directory = Path(directory)
    texts = {}
    for name in ("context", "task", "input"):
        path = directory / f"{name}.txt"
        if not path.is_file():
            raise TemplateError(name, f"missing template file: {path}")
        texts[name] = path.read_text(encoding="utf-8").strip()
    return PromptDescriptors(texts["context"], texts["task"], texts["input"])


def default_descriptors() -> PromptDescriptors:
    base = resources.files("hxrcast").joinpath("templates/default")
    return PromptDescriptors(
        base.joinpath("context.txt").read_text(encoding="utf-8").strip(),
        base.joinpath("task.txt").read_text(encoding="utf-8").strip(),
        base.joinpath("input.txt").read_text(encoding="utf-8").strip(),
    )


def _substitute(template: str, bindings: dict[str, str]) -> str:
    """str.format with explicit error naming the first missing placeholder."""
    for _, name, _, _ in string.Formatter().parse(template):
        if name is None:
            continue
        if name == "":
            raise TemplateError("", "positional placeholders are not supported")
        if name not in bindings:
            raise TemplateError(name)
    return template.format(**bindings)


def render_value(x: float) -> str:
    """Decimal rendering of descriptor statistics at 6 significant digits."""
    return format(float(x), ".6g")


def stats_bindings(stats: InputStats) -> dict[str, str]:
    return {
        "min": render_value(stats.min),
        "max": render_value(stats.max),
        "median": render_value(stats.median),
    }


def build_input_descriptor(stats: InputStats, seq_len: int, pred_len: int,
                           phase_plate: str,
                           template: str | None = None) -> str:
    """Fill the input descriptor with series statistics and shot parameters."""
    if seq_len <= 0 or pred_len <= 0:
        raise TemplateError("seq_len", "sequence and prediction lengths must be positive")
    if template is None:
        template = default_descriptors().input_template
    bindings = stats_bindings(stats)
    bindings.update({
        "seq_len": str(seq_len),
        "pred_len": str(pred_len),
        "phase_plate": phase_plate,
    })
    return _substitute(template, bindings)


def assemble_prompt(descriptors: PromptDescriptors,
                    bindings: dict[str, str],
                    tokens: SpecialTokens = SpecialTokens(),
                    max_chars: int = DEFAULT_MAX_CHARS) -> FusionPrompt:
    """Begin token, then context / task / input sections in fixed order."""
    clean = {k: str(v) for k, v in bindings.items()}
    for value in clean.values():
        if "{" in value or "}" in value:
            raise TemplateError("bindings", "binding values may not contain braces")
    sections = (
        ("context", _substitute(descriptors.context_text, clean)),
        ("task", _substitute(descriptors.task_text, clean)),
        ("input", _substitute(descriptors.input_template, clean)),
    )
    parts = [tokens.begin]
    for name, body in sections:
        parts.append(f"{tokens.header_start}{name}{tokens.header_end}\n{body}{tokens.section_end}")
    return FusionPrompt(text="".join(parts), placeholder_bindings=clean,
                        token_budget=max_chars)
