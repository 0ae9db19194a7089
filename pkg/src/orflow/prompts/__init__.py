"""Default prompt templates.

Templates are plain text with literal placeholders ({problem}, {transcript},
{ground_truth}) substituted by string replacement, so braces elsewhere in a
template (such as \\boxed{...}) are left untouched.
"""

from __future__ import annotations

from importlib import resources


def load_template(name: str) -> str:
    return (
        resources.files(__package__).joinpath(f"{name}.txt").read_text(encoding="utf-8")
    )


def reasoner_template() -> str:
    return load_template("reasoner")


def intervener_template() -> str:
    return load_template("intervener")


def classifier_template() -> str:
    return load_template("classifier")


def fill(template: str, **values: str) -> str:
    for key, value in values.items():
        template = template.replace("{" + key + "}", value)
    return template
