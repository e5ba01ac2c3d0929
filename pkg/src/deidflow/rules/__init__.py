"""Filter, pixel-scrub and anonymizer rule scripts."""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .anon import (
    Action,
    AnonScript,
    ScriptParams,
    TransformRecord,
    apply_anon,
    hash_uid,
    parse_anon_script,
    shift_date,
)
from .common import (
    DuplicateKey,
    MissingParam,
    RuleError,
    ScriptError,
    ScriptSyntaxError,
    UnknownAttributeAlias,
)
from .filter import FilterDecision, FilterRule, FilterScript, evaluate_filter, parse_filter_script
from .scrub import (
    ScrubEntry,
    ScrubLookup,
    ScrubScript,
    ScrubVerdict,
    lookup_scrub,
    parse_scrub_script,
    render_scrub_script,
)

DEFAULT_SCRIPT_NAMES = {"filter": "default.filter", "scrub": "default.scrub", "anon": "default.anon"}


@dataclass(frozen=True)
class RuleSet:
    filter: FilterScript
    scrub: ScrubScript
    anon: AnonScript
    name: str = "custom"


@dataclass(frozen=True)
class ScriptTexts:
    """Raw script sources; what a work item carries so workers can rebuild a RuleSet."""

    filter: str
    scrub: str
    anon: str
    name: str = "custom"

    def compile(self) -> RuleSet:
        return RuleSet(
            parse_filter_script(self.filter, f"{self.name}:filter"),
            parse_scrub_script(self.scrub, f"{self.name}:scrub"),
            parse_anon_script(self.anon, f"{self.name}:anon"),
            self.name,
        )


def default_script_text(kind: str) -> str:
    return resources.files(__package__).joinpath("scripts", DEFAULT_SCRIPT_NAMES[kind]).read_text()


def default_script_path(kind: str) -> Path:
    return Path(str(resources.files(__package__).joinpath("scripts", DEFAULT_SCRIPT_NAMES[kind])))


def default_texts() -> ScriptTexts:
    return ScriptTexts(default_script_text("filter"), default_script_text("scrub"),
                       default_script_text("anon"), "default")


def default_rules() -> RuleSet:
    return default_texts().compile()


def load_texts(filter_path=None, scrub_path=None, anon_path=None, name="custom") -> ScriptTexts:
    """Read script files, falling back to the shipped defaults for any path left as None."""
    def read(path, kind):
        return default_script_text(kind) if path is None else Path(path).read_text()
    return ScriptTexts(read(filter_path, "filter"), read(scrub_path, "scrub"), read(anon_path, "anon"), name)


__all__ = [
    "RuleSet", "ScriptTexts", "default_rules", "default_texts", "default_script_text", "default_script_path",
    "load_texts",
    "FilterScript", "FilterRule", "FilterDecision", "parse_filter_script", "evaluate_filter",
    "ScrubScript", "ScrubEntry", "ScrubLookup", "ScrubVerdict", "parse_scrub_script", "lookup_scrub",
    "render_scrub_script",
    "AnonScript", "Action", "ScriptParams", "TransformRecord", "parse_anon_script", "apply_anon",
    "hash_uid", "shift_date",
    "ScriptError", "ScriptSyntaxError", "DuplicateKey", "UnknownAttributeAlias", "RuleError", "MissingParam",
]
