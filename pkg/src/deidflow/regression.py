"""Scenario suites: plain-text regression gates over directories of fixture files.

A suite names the three scripts and the script parameters once, in a
``Background:`` block, then lists scenarios. Each scenario points at a
directory and asserts what must happen to every file in it::

    Feature: PET/CT
    Background:
    Given the pipeline uses the anonymizer script, "site.anon"
    Given the pipeline uses the pixel script, "site.scrub"
    Given the pipeline uses the filter script, "site.filter"
    And script parameter "accession" is "ACN123"
    And script parameter "mrn" is "MRN123"
    And script parameter "jitter" is "-6"

    Scenario: fusion screenshots
      Given the DICOM directory "PT/Scrub"
      When ran through the deid pipeline
      Then the resulting images should be scrubbed at 256,0,256,22

Only the step phrases listed in ``_STEPS`` are understood; anything else is
a syntax error naming its line.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dicom import DataSet, decode_pixels, parse_file
from .dicom.pixels import Rect
from .engine import Status, deid_instance
from .rules import RuleSet, ScriptParams, load_texts
from .rules.anon import shift_date

DATE_ATTRIBUTES = ("StudyDate", "SeriesDate", "AcquisitionDate", "ContentDate")
REQUIRED_PARAMS = ("accession", "mrn", "jitter")
SCRIPT_KINDS = ("anonymizer", "pixel", "filter")


class SuiteSyntaxError(SyntaxError):
    def __init__(self, message: str, lineno: int, source: str | None = None):
        where = f"{source}:{lineno}" if source else f"line {lineno}"
        super().__init__(f"{where}: {message}")
        self.lineno = lineno
        self.filename = source


class MissingBackground(ValueError):
    pass


class FixtureMissing(FileNotFoundError):
    pass


@dataclass(frozen=True)
class MustAnonymize:
    line: int = 0


@dataclass(frozen=True)
class MustScrubAt:
    rect: Rect
    line: int = 0


@dataclass(frozen=True)
class MustFilter:
    line: int = 0


@dataclass(frozen=True)
class MustJitterBy:
    days: int
    line: int = 0


Assertion = MustAnonymize | MustScrubAt | MustFilter | MustJitterBy


@dataclass
class Scenario:
    name: str
    line: int
    directory: str | None = None
    ran: bool = False
    assertions: list = field(default_factory=list)


@dataclass
class Background:
    scripts: dict[str, str] = field(default_factory=dict)  # anonymizer|pixel|filter -> path
    params: dict[str, str] = field(default_factory=dict)
    line: int = 0


@dataclass
class ScenarioSuite:
    feature: str = ""
    background: Background | None = None
    scenarios: list[Scenario] = field(default_factory=list)
    base_dir: Path = field(default_factory=Path)

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p

    def script_params(self) -> ScriptParams:
        return ScriptParams.from_mapping(self.background.params)

    def rules(self) -> RuleSet:
        s = self.background.scripts
        return load_texts(self.resolve(s["filter"]), self.resolve(s["pixel"]),
                          self.resolve(s["anonymizer"]), name=self.feature or "suite").compile()


_KW = r"(?:given|when|then|and)\s+"
_STEPS = [
    ("script", re.compile(_KW + r'the pipeline uses the (anonymizer|pixel|filter) script,\s*"([^"]*)"$', re.I)),
    ("param", re.compile(_KW + r'script parameter "([^"]*)" is "([^"]*)"$', re.I)),
    ("directory", re.compile(_KW + r'the DICOM directory "([^"]*)"$', re.I)),
    ("run", re.compile(_KW + r"ran through the deid pipeline$", re.I)),
    ("anonymized", re.compile(_KW + r"the images SHOULD be anonymized$", re.I)),
    ("scrubbed", re.compile(_KW + r"the resulting images should be scrubbed at\s*(\d+),\s*(\d+),\s*(\d+),\s*(\d+)$",
                            re.I)),
    ("filtered", re.compile(_KW + r"the images SHOULD NOT pass the filter$", re.I)),
    ("jitter", re.compile(_KW + r"the dates should be jittered by (-?\d+) days?$", re.I)),
]
_HEADER = re.compile(r"(feature|background|scenario):\s*(.*)$", re.I)


def parse_suite(text: str, base_dir=None, source: str | None = None) -> ScenarioSuite:
    suite = ScenarioSuite(base_dir=Path(base_dir) if base_dir is not None else Path.cwd())
    section = None  # None | "background" | Scenario
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        m = _HEADER.match(line)
        if m:
            kind, rest = m.group(1).lower(), m.group(2).strip()
            if kind == "feature":
                suite.feature = rest
            elif kind == "background":
                if suite.background is not None:
                    raise SuiteSyntaxError("second Background section", lineno, source)
                if suite.scenarios:
                    raise SuiteSyntaxError("Background must precede scenarios", lineno, source)
                suite.background = Background(line=lineno)
                section = "background"
            else:
                section = Scenario(rest, lineno)
                suite.scenarios.append(section)
            continue

        for step, pattern in _STEPS:
            m = pattern.match(line)
            if m:
                break
        else:
            raise SuiteSyntaxError(f"unknown step: {line!r}", lineno, source)

        if section == "background":
            if step == "script":
                suite.background.scripts[m.group(1).lower()] = m.group(2)
            elif step == "param":
                suite.background.params[m.group(1)] = m.group(2)
            else:
                raise SuiteSyntaxError(f"step not allowed in Background: {line!r}", lineno, source)
        elif isinstance(section, Scenario):
            _scenario_step(section, step, m, line, lineno, source)
        else:
            raise SuiteSyntaxError(f"step outside Background or Scenario: {line!r}", lineno, source)

    for sc in suite.scenarios:
        if sc.directory is None:
            raise SuiteSyntaxError(f"scenario {sc.name!r} names no DICOM directory", sc.line, source)
        if not sc.ran:
            raise SuiteSyntaxError(f"scenario {sc.name!r} never runs the pipeline", sc.line, source)
        if not sc.assertions:
            raise SuiteSyntaxError(f"scenario {sc.name!r} asserts nothing", sc.line, source)
    if suite.scenarios:
        _check_background(suite.background)
    return suite


def _scenario_step(sc: Scenario, step, m, line, lineno, source):
    if step == "directory":
        if sc.directory is not None:
            raise SuiteSyntaxError("scenario already names a directory", lineno, source)
        sc.directory = m.group(1)
    elif step == "run":
        sc.ran = True
    elif step in ("script", "param"):
        raise SuiteSyntaxError(f"step only allowed in Background: {line!r}", lineno, source)
    elif not sc.ran:
        raise SuiteSyntaxError("assertion before 'When ran through the deid pipeline'", lineno, source)
    elif step == "anonymized":
        sc.assertions.append(MustAnonymize(lineno))
    elif step == "scrubbed":
        sc.assertions.append(MustScrubAt(Rect(*(int(g) for g in m.groups())), lineno))
    elif step == "filtered":
        sc.assertions.append(MustFilter(lineno))
    elif step == "jitter":
        sc.assertions.append(MustJitterBy(int(m.group(1)), lineno))


def _check_background(bg: Background | None):
    if bg is None:
        raise MissingBackground("suite has scenarios but no Background section")
    missing = [f"{k} script" for k in SCRIPT_KINDS if k not in bg.scripts]
    missing += [f'parameter "{p}"' for p in REQUIRED_PARAMS if p not in bg.params]
    if missing:
        raise MissingBackground(f"Background (line {bg.line}) lacks " + ", ".join(missing))


def load_suite(path) -> ScenarioSuite:
    path = Path(path)
    return parse_suite(path.read_text(), base_dir=path.parent, source=str(path))


# -- execution ---------------------------------------------------------------

@dataclass
class FileResult:
    path: str
    status: str
    output: DataSet | None
    source: DataSet | None


@dataclass
class ScenarioResult:
    name: str
    line: int
    files: int
    failures: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures


@dataclass
class SuiteReport:
    feature: str
    scenarios: list[ScenarioResult]

    @property
    def passed(self) -> bool:
        return all(s.passed for s in self.scenarios)

    def lines(self) -> list[str]:
        out = [f"Feature: {self.feature}"]
        for s in self.scenarios:
            out.append(f"  {'PASS' if s.passed else 'FAIL'}  {s.name} ({s.files} files)")
            out.extend(f"        {f}" for f in s.failures)
        out.append(f"{'PASSED' if self.passed else 'FAILED'}: "
                   f"{sum(s.passed for s in self.scenarios)}/{len(self.scenarios)} scenarios")
        return out

    def as_dict(self) -> dict:
        return {"feature": self.feature, "passed": self.passed,
                "scenarios": [{"name": s.name, "line": s.line, "files": s.files, "passed": s.passed,
                               "failures": s.failures} for s in self.scenarios]}


def fixture_files(directory: Path) -> list[Path]:
    if not directory.is_dir():
        raise FixtureMissing(f"fixture directory {directory} does not exist")
    files = sorted(p for p in directory.rglob("*") if p.is_file())
    if not files:
        raise FixtureMissing(f"fixture directory {directory} is empty")
    return files


def run_suite(suite: ScenarioSuite, rules: RuleSet | None = None) -> SuiteReport:
    if not suite.scenarios:
        return SuiteReport(suite.feature, [])
    rules = rules or suite.rules()
    params = suite.script_params()
    return SuiteReport(suite.feature, [run_scenario(sc, suite, rules, params) for sc in suite.scenarios])


def run_scenario(sc: Scenario, suite: ScenarioSuite, rules: RuleSet, params: ScriptParams) -> ScenarioResult:
    directory = suite.resolve(sc.directory)
    results = []
    for path in fixture_files(directory):
        raw = path.read_bytes()
        try:
            source = parse_file(raw)
        except Exception:
            source = None
        out, outcome = deid_instance(raw, rules, params)
        results.append(FileResult(str(path.relative_to(directory)), outcome.status.value, out, source))

    res = ScenarioResult(sc.name, sc.line, len(results))
    for a in sc.assertions:
        for fr in results:
            problem = _check(a, fr, params)
            if problem:
                res.failures.append(f"line {a.line}: {fr.path}: {problem}")
    return res


def _check(a, fr: FileResult, params: ScriptParams) -> str | None:
    if isinstance(a, MustFilter):
        return None if fr.status == Status.FILTERED.value else f"expected filtered, got {fr.status}"
    if fr.output is None:
        return f"no output (status {fr.status})"
    if isinstance(a, MustAnonymize):
        if fr.status not in (Status.ANONYMIZED.value, Status.SCRUBBED.value):
            return f"expected anonymized, got {fr.status}"
        for kw, want in (("AccessionNumber", params.accession), ("PatientID", params.mrn)):
            got = fr.output.text(kw)
            if got != want:
                return f"{kw} is {got!r}, expected {want!r}"
        return _check_dates(fr, params.jitter)
    if isinstance(a, MustJitterBy):
        return _check_dates(fr, a.days)
    if isinstance(a, MustScrubAt):
        try:
            px = decode_pixels(fr.output)
        except Exception as exc:
            return f"pixels unreadable: {exc}"
        if not a.rect.fits(px.rows, px.cols):
            return f"rect {a.rect} outside {px.cols}x{px.rows} image"
        for i in range(len(px.frames)):
            region = px.region(i, a.rect)
            if np.any(region):
                return f"frame {i}: {int(np.count_nonzero(region))} nonzero samples inside {a.rect}"
        return None
    raise TypeError(a)


def _check_dates(fr: FileResult, days: int) -> str | None:
    if fr.source is None:
        return "source unreadable"
    for kw in DATE_ATTRIBUTES:
        if kw not in fr.source:
            continue
        before = fr.source.text(kw)
        try:
            want = shift_date(before, days)
        except ValueError:
            want = None
        got = fr.output.text(kw) if kw in fr.output else None
        if got != want:
            return f"{kw} is {got!r}, expected {want!r} ({before} shifted {days:+d} days)"
    return None
