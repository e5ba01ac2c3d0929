"""Filter scripts: accept or discard an instance on its metadata.

Grammar, one rule per line::

    accept|reject <attr> equals|contains|matches_regex "<literal>" [and ...] [reason "<text>"]
    accept|reject <attr> is_empty|is_present|is_absent [and ...] [reason "<text>"]
    default accept|reject

Rules are evaluated top to bottom and the first match wins, so whitelist
``accept`` rules placed above a ``reject`` rule bypass it.
"""

from __future__ import annotations

import re
import shlex
from dataclasses import dataclass, field

from ..dicom import DataSet, Tag
from .common import ScriptSyntaxError, attribute, components, fold

VALUE_OPS = ("equals", "contains", "matches_regex")
UNARY_OPS = ("is_empty", "is_present", "is_absent")


@dataclass(frozen=True)
class Predicate:
    tag: Tag
    op: str
    literal: str | None = None
    pattern: re.Pattern | None = field(default=None, compare=False)

    def test(self, ds: DataSet) -> bool:
        el = ds.get(self.tag)
        if self.op == "is_absent":
            return el is None
        if el is None:
            return False
        if self.op == "is_present":
            return True
        if self.op == "is_empty":
            return el.is_empty
        parts = components(el)
        if self.op == "equals":
            return fold("\\".join(parts)) == fold(self.literal)
        if self.op == "contains":
            needle = fold(self.literal)
            return any(needle in fold(p) for p in parts)
        return self.pattern.search("\\".join(parts)) is not None


@dataclass(frozen=True)
class FilterRule:
    accept: bool
    predicates: tuple[Predicate, ...]
    reason: str
    line: int

    def matches(self, ds: DataSet) -> bool:
        return all(p.test(ds) for p in self.predicates)


@dataclass(frozen=True)
class FilterDecision:
    accepted: bool
    reason: str = ""
    line: int | None = None

    def __bool__(self) -> bool:
        return self.accepted


ACCEPT = FilterDecision(True, "default")


@dataclass(frozen=True)
class FilterScript:
    rules: tuple[FilterRule, ...] = ()
    default_accept: bool = True


def parse_filter_script(text: str, source: str | None = None) -> FilterScript:
    rules = []
    default_accept = True
    seen_default = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        try:
            tokens = shlex.split(raw, comments=True)
        except ValueError as exc:
            raise ScriptSyntaxError(str(exc), lineno, source) from None
        if not tokens:
            continue
        head = tokens[0].lower()
        if head == "default":
            if len(tokens) != 2 or tokens[1].lower() not in ("accept", "reject"):
                raise ScriptSyntaxError("expected 'default accept|reject'", lineno, source)
            if seen_default is not None:
                raise ScriptSyntaxError(f"default already set on line {seen_default}", lineno, source)
            seen_default = lineno
            default_accept = tokens[1].lower() == "accept"
            continue
        if head not in ("accept", "reject"):
            raise ScriptSyntaxError(f"unknown keyword {tokens[0]!r}", lineno, source)
        rules.append(_parse_rule(head == "accept", tokens[1:], raw.strip(), lineno, source))
    return FilterScript(tuple(rules), default_accept)


def _parse_rule(accept, tokens, text, lineno, source):
    predicates = []
    reason = None
    i = 0
    while True:
        if i + 1 >= len(tokens):
            raise ScriptSyntaxError("expected '<attribute> <operator>'", lineno, source)
        tag = attribute(tokens[i], lineno, source)
        op = tokens[i + 1].lower()
        i += 2
        if op in VALUE_OPS:
            if i >= len(tokens):
                raise ScriptSyntaxError(f"{op} needs a quoted literal", lineno, source)
            literal = tokens[i]
            i += 1
            pattern = None
            if op == "matches_regex":
                try:
                    pattern = re.compile(literal, re.IGNORECASE)
                except re.error as exc:
                    raise ScriptSyntaxError(f"bad regex: {exc}", lineno, source) from None
            predicates.append(Predicate(tag, op, literal, pattern))
        elif op in UNARY_OPS:
            predicates.append(Predicate(tag, op))
        else:
            raise ScriptSyntaxError(f"unknown operator {op!r}", lineno, source)
        if i == len(tokens):
            break
        word = tokens[i].lower()
        if word == "and":
            i += 1
            continue
        if word == "reason" and i + 2 == len(tokens):
            reason = tokens[i + 1]
            break
        raise ScriptSyntaxError(f"unexpected {tokens[i]!r}", lineno, source)
    return FilterRule(accept, tuple(predicates), reason or text, lineno)


def evaluate_filter(script: FilterScript, ds: DataSet) -> FilterDecision:
    for rule in script.rules:
        if rule.matches(ds):
            return FilterDecision(rule.accept, rule.reason, rule.line)
    if script.default_accept:
        return ACCEPT
    return FilterDecision(False, "default reject")
