"""Prompt asset loading and placeholder substitution.

Templates live under glitchscope/prompts/ as plain text. Placeholders are
written as {name}; substitution touches only the names passed in, so literal
braces in JSON examples inside the prompts survive untouched.
"""

from __future__ import annotations

from functools import lru_cache
from importlib import resources


@lru_cache(maxsize=None)
def load_prompt(name: str) -> str:
    ref = resources.files("glitchscope.prompts").joinpath(f"{name}.txt")
    return ref.read_text(encoding="utf-8").rstrip("\n")


def render(template: str, **values) -> str:
    out = template
    for key, value in values.items():
        out = out.replace("{" + key + "}", str(value))
    return out


def render_prompt(name: str, **values) -> str:
    return render(load_prompt(name), **values)
