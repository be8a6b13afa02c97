"""Corner-case scripts (``.ccs``): a small line-oriented scenario language.

Example::

    # left turn across the ego's path
    scenario A
    ego crosses
    adversary opposite turns left
    param EGO_SPEED in [5, 80] kmh
    sim timestep 0.05 horizon 20 radius 50

Statements, one per line (``#`` starts a comment, keywords are case-insensitive,
parameter names are not):

``scenario <id>``
    One of A-F or any other identifier for a custom scenario.
``layout two_by_two | three_lane``
    Lane layout; implied by the built-in ids, defaults to ``two_by_two`` otherwise.
``ego <maneuver>`` / ``adversary (opposite | perpendicular) <maneuver>``
    ``<maneuver>`` is ``crosses``, ``turns left`` or ``turns right``.
``param <NAME> in [<low>, <high>] (kmh | m | unitless)``
    Overrides the default range of one genome parameter.
``sim [timestep <s>] [horizon <s>] [radius <m>]``
    Simulation settings.
"""

from __future__ import annotations

import dataclasses
import math
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .scenario_model import (
    DEFAULT_RANGES,
    GENE_NAMES,
    GENE_UNITS,
    SCENARIO_IDS,
    Approach,
    ConfigError,
    IntersectionLayout,
    LaneLayout,
    ManeuverKind,
    ParameterRange,
    ScenarioTemplate,
    Unit,
    template_for,
)
from .simulator import SimulationConfig

SCRIPT_SUFFIX = ".ccs"
SCRIPTS_DIR = Path(__file__).parent / "scripts"

PARAM_NAMES = tuple(name.upper() for name in GENE_NAMES)
_UNIT_WORDS = {"kmh": Unit.KM_PER_H, "m": Unit.METERS, "unitless": Unit.DIMENSIONLESS}
_UNIT_SPELLING = {unit: word for word, unit in _UNIT_WORDS.items()}
_APPROACH_WORDS = {"opposite": Approach.SAME_ROAD_OPPOSITE, "perpendicular": Approach.PERPENDICULAR}
_APPROACH_SPELLING = {a: w for w, a in _APPROACH_WORDS.items()}
_MANEUVER_SPELLING = {
    ManeuverKind.CROSS_STRAIGHT: "crosses",
    ManeuverKind.LEFT_TURN: "turns left",
    ManeuverKind.RIGHT_TURN: "turns right",
}
_SIM_WORDS = {"timestep": "timestep", "horizon": "horizon", "radius": "interaction_radius"}
_DEFAULTS = {r.name.upper(): r for r in DEFAULT_RANGES}


class Severity(str, Enum):
    ERROR = "error"
    WARNING = "warning"


@dataclass(frozen=True)
class ParseDiagnostic:
    line: int
    column: int
    message: str
    severity: Severity = Severity.ERROR

    def __post_init__(self):
        if self.line < 1 or self.column < 1:
            raise ValueError("diagnostic positions are 1-based")

    def __str__(self) -> str:
        return f"{self.line}:{self.column}: {self.severity.value}: {self.message}"


class ScriptError(ValueError):
    def __init__(self, diagnostics: list[ParseDiagnostic], source_name: str = "<script>"):
        self.diagnostics = diagnostics
        self.source_name = source_name
        super().__init__("\n".join(f"{source_name}:{d}" for d in diagnostics))


@dataclass(frozen=True)
class VehicleDecl:
    role: str  # "ego" | "adversary"
    maneuver: ManeuverKind
    approach: Approach | None = None
    line: int = field(default=1, compare=False)


@dataclass(frozen=True)
class ParamDecl:
    name: str  # upper-case genome parameter name
    low: float
    high: float
    unit: Unit
    line: int = field(default=1, compare=False)


@dataclass(frozen=True)
class SimDecl:
    timestep: float | None = None
    horizon: float | None = None
    interaction_radius: float | None = None
    line: int = field(default=1, compare=False)


@dataclass(frozen=True, eq=False)
class ScriptAst:
    """Parsed script.

    Equality is structural over the effective content: a parameter declared
    with its default range is the same script as one that leaves it out, and
    parameter order does not matter.
    """

    scenario_id: str
    vehicle_decls: tuple[VehicleDecl, ...]
    param_decls: tuple[ParamDecl, ...] = ()
    sim_decls: SimDecl | None = None
    layout: LaneLayout | None = None
    warnings: tuple[ParseDiagnostic, ...] = field(default=(), repr=False)

    def vehicle(self, role: str) -> VehicleDecl | None:
        return next((v for v in self.vehicle_decls if v.role == role), None)

    def effective_params(self) -> tuple[ParamDecl, ...]:
        """Declarations that differ from the default range, in genome order."""
        by_name = {p.name: p for p in self.param_decls}
        return tuple(
            p for name in PARAM_NAMES if (p := by_name.get(name)) is not None and not _is_default(p)
        )

    def _key(self):
        return (self.scenario_id, self.vehicle_decls, self.effective_params(), self.sim_decls, self.layout)

    def __eq__(self, other):
        if not isinstance(other, ScriptAst):
            return NotImplemented
        return self._key() == other._key()

    def __hash__(self):
        return hash(self._key())


def _is_default(p: ParamDecl) -> bool:
    default = _DEFAULTS[p.name]
    return (p.low, p.high) == (default.low, default.high)


# ---------------------------------------------------------------------------
# Lexing

_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t]+)
  | (?P<num>[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)
  | (?P<word>[A-Za-z_][A-Za-z0-9_\-]*)
  | (?P<punct>[\[\],])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    column: int


def _tokenize(text: str, lineno: int, diags: list[ParseDiagnostic]) -> list[Token] | None:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            diags.append(ParseDiagnostic(lineno, pos + 1, f"unexpected character {text[pos]!r}"))
            return None
        if m.lastgroup != "ws":
            tokens.append(Token(m.lastgroup, m.group(), pos + 1))
        pos = m.end()
    return tokens


class _LineError(Exception):
    def __init__(self, column: int, message: str):
        self.column = column
        self.message = message


class _Cursor:
    def __init__(self, tokens: list[Token], line_len: int):
        self.tokens = tokens
        self.i = 0
        self.end_col = line_len + 1

    def peek(self) -> Token | None:
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def next(self, what: str) -> Token:
        tok = self.peek()
        if tok is None:
            raise _LineError(self.end_col, f"expected {what}")
        self.i += 1
        return tok

    def keyword(self, *choices: str) -> tuple[str, Token]:
        tok = self.next(" or ".join(repr(c) for c in choices))
        word = tok.text.lower()
        if tok.kind != "word" or word not in choices:
            raise _LineError(tok.column, f"expected {' or '.join(repr(c) for c in choices)}, found {tok.text!r}")
        return word, tok

    def number(self) -> float:
        tok = self.next("a number")
        if tok.kind != "num":
            raise _LineError(tok.column, f"expected a number, found {tok.text!r}")
        value = float(tok.text)
        if not math.isfinite(value):
            raise _LineError(tok.column, "number must be finite")
        return value

    def punct(self, char: str) -> None:
        tok = self.next(repr(char))
        if tok.text != char:
            raise _LineError(tok.column, f"expected {char!r}, found {tok.text!r}")

    def done(self) -> None:
        tok = self.peek()
        if tok is not None:
            raise _LineError(tok.column, f"unexpected {tok.text!r} at end of statement")


def _maneuver(cur: _Cursor) -> ManeuverKind:
    word, _ = cur.keyword("crosses", "turns")
    if word == "crosses":
        return ManeuverKind.CROSS_STRAIGHT
    side, _ = cur.keyword("left", "right")
    return ManeuverKind.LEFT_TURN if side == "left" else ManeuverKind.RIGHT_TURN


# ---------------------------------------------------------------------------
# Parsing

_STATEMENTS = ("scenario", "layout", "ego", "adversary", "param", "sim")


def parse(source: str, source_name: str = "<script>") -> ScriptAst:
    """Parse a script; raises :class:`ScriptError` listing every error found."""
    ast, diags = _parse(source)
    errors = [d for d in diags if d.severity is Severity.ERROR]
    if errors:
        raise ScriptError(diags, source_name)
    return ast


def check(source: str) -> list[ParseDiagnostic]:
    """All diagnostics (errors and warnings) for ``source``, including compile-time ones."""
    ast, diags = _parse(source)
    if ast is not None and not any(d.severity is Severity.ERROR for d in diags):
        try:
            compile_script(ast)
        except ScriptError as exc:
            diags.extend(exc.diagnostics)
    return diags


def _parse(source: str) -> tuple[ScriptAst | None, list[ParseDiagnostic]]:
    diags: list[ParseDiagnostic] = []
    scenario_id: str | None = None
    layout: LaneLayout | None = None
    vehicles: dict[str, VehicleDecl] = {}
    params: dict[str, ParamDecl] = {}
    sim: SimDecl | None = None

    for lineno, raw in enumerate(source.splitlines(), start=1):
        text = raw.split("#", 1)[0].rstrip()
        tokens = _tokenize(text, lineno, diags)
        if not tokens:
            continue
        cur = _Cursor(tokens, len(text))
        head = tokens[0]
        keyword = head.text.lower() if head.kind == "word" else None
        try:
            if keyword not in _STATEMENTS:
                raise _LineError(head.column, f"unknown keyword {head.text!r}")
            cur.next("statement")
            if keyword == "scenario":
                tok = cur.next("a scenario id")
                if tok.kind != "word":
                    raise _LineError(tok.column, f"invalid scenario id {tok.text!r}")
                cur.done()
                if scenario_id is not None:
                    raise _LineError(head.column, "duplicate scenario declaration")
                scenario_id = tok.text
            elif keyword == "layout":
                word, _ = cur.keyword(*(option.value for option in LaneLayout))
                cur.done()
                if layout is not None:
                    raise _LineError(head.column, "duplicate layout declaration")
                layout = LaneLayout(word)
            elif keyword == "ego":
                maneuver = _maneuver(cur)
                cur.done()
                if "ego" in vehicles:
                    raise _LineError(head.column, "duplicate ego declaration")
                vehicles["ego"] = VehicleDecl("ego", maneuver, None, lineno)
            elif keyword == "adversary":
                word, _ = cur.keyword(*_APPROACH_WORDS)
                maneuver = _maneuver(cur)
                cur.done()
                if "adversary" in vehicles:
                    raise _LineError(head.column, "duplicate adversary declaration")
                vehicles["adversary"] = VehicleDecl("adversary", maneuver, _APPROACH_WORDS[word], lineno)
            elif keyword == "param":
                decl = _param(cur, lineno)
                if decl.name in params:
                    raise _LineError(head.column, f"duplicate parameter {decl.name}")
                params[decl.name] = decl
                if _is_default(decl):
                    diags.append(
                        ParseDiagnostic(lineno, head.column, f"{decl.name} repeats the default range", Severity.WARNING)
                    )
            else:
                if sim is not None:
                    raise _LineError(head.column, "duplicate sim declaration")
                sim = _sim(cur, lineno)
        except _LineError as err:
            diags.append(ParseDiagnostic(lineno, err.column, err.message))

    end_line = max(1, len(source.splitlines()))
    if scenario_id is None:
        diags.append(ParseDiagnostic(1, 1, "missing scenario declaration"))
    for role in ("ego", "adversary"):
        if role not in vehicles:
            diags.append(ParseDiagnostic(end_line, 1, f"missing {role} declaration"))
    if any(d.severity is Severity.ERROR for d in diags):
        return None, diags

    kept = tuple(params.values())
    ast = ScriptAst(
        scenario_id=scenario_id,
        vehicle_decls=(vehicles["ego"], vehicles["adversary"]),
        param_decls=kept,
        sim_decls=sim,
        layout=layout,
        warnings=tuple(d for d in diags if d.severity is Severity.WARNING),
    )
    return ast, diags


def _param(cur: _Cursor, lineno: int) -> ParamDecl:
    tok = cur.next("a parameter name")
    if tok.kind != "word" or tok.text not in PARAM_NAMES:
        raise _LineError(tok.column, f"unknown parameter {tok.text!r}")
    name = tok.text
    cur.keyword("in")
    bracket = cur.peek()
    cur.punct("[")
    low = cur.number()
    cur.punct(",")
    high = cur.number()
    cur.punct("]")
    unit_word, unit_tok = cur.keyword(*_UNIT_WORDS)
    cur.done()
    unit = _UNIT_WORDS[unit_word]
    expected = GENE_UNITS[name.lower()]
    if unit is not expected:
        raise _LineError(unit_tok.column, f"unit mismatch: {name} is measured in {_UNIT_SPELLING[expected]}")
    if low > high:
        raise _LineError(bracket.column, "range low exceeds high")
    return ParamDecl(name, low, high, unit, lineno)


def _sim(cur: _Cursor, lineno: int) -> SimDecl:
    values: dict[str, float] = {}
    if cur.peek() is None:
        raise _LineError(cur.end_col, "expected 'timestep', 'horizon' or 'radius'")
    while cur.peek() is not None:
        word, tok = cur.keyword(*_SIM_WORDS)
        field_name = _SIM_WORDS[word]
        if field_name in values:
            raise _LineError(tok.column, f"duplicate sim setting {word!r}")
        values[field_name] = cur.number()
    return SimDecl(line=lineno, **values)


# ---------------------------------------------------------------------------
# Compiling and formatting


def compile_script(
    ast: ScriptAst, geometry: IntersectionLayout | None = None
) -> tuple[ScenarioTemplate, tuple[ParameterRange, ...], SimulationConfig]:
    """Resolve an AST to a template, the seven parameter ranges and a simulation config."""
    diags: list[ParseDiagnostic] = []
    roles = [v.role for v in ast.vehicle_decls]
    for role in ("ego", "adversary"):
        if roles.count(role) != 1:
            problem = "missing" if roles.count(role) == 0 else "conflicting"
            diags.append(ParseDiagnostic(1, 1, f"{problem} {role} declaration"))
    if diags:
        raise ScriptError(diags)
    ego, adv = ast.vehicle("ego"), ast.vehicle("adversary")
    if adv.approach is None:
        raise ScriptError([ParseDiagnostic(adv.line, 1, "adversary needs an approach")])

    if ast.scenario_id in SCENARIO_IDS:
        template = template_for(ast.scenario_id, geometry)
        declared = (ego.maneuver, adv.maneuver, adv.approach, ast.layout or template.lane_layout)
        expected = (template.ego_maneuver, template.adv_maneuver, template.adv_approach, template.lane_layout)
        if declared != expected:
            raise ScriptError(
                [ParseDiagnostic(ego.line, 1, f"vehicle declarations conflict with built-in scenario {ast.scenario_id}")]
            )
    else:
        template = ScenarioTemplate(
            id=ast.scenario_id,
            lane_layout=ast.layout or LaneLayout.TWO_BY_TWO,
            ego_maneuver=ego.maneuver,
            adv_maneuver=adv.maneuver,
            adv_approach=adv.approach,
            geometry=geometry if geometry is not None else IntersectionLayout(),
        )

    overrides = {}
    for p in ast.param_decls:
        if p.name in overrides:
            raise ScriptError([ParseDiagnostic(p.line, 1, f"duplicate parameter {p.name}")])
        try:
            overrides[p.name] = ParameterRange(p.name.lower(), p.low, p.high, p.unit)
        except ConfigError as exc:
            raise ScriptError([ParseDiagnostic(p.line, 1, str(exc))]) from None
    ranges = tuple(overrides.get(name, _DEFAULTS[name]) for name in PARAM_NAMES)

    sim = SimulationConfig()
    if ast.sim_decls is not None:
        settings = {
            k: getattr(ast.sim_decls, k)
            for k in ("timestep", "horizon", "interaction_radius")
            if getattr(ast.sim_decls, k) is not None
        }
        try:
            sim = dataclasses.replace(sim, **settings)
        except ConfigError as exc:
            raise ScriptError([ParseDiagnostic(ast.sim_decls.line, 1, str(exc))]) from None
    return template, ranges, sim


def _num(x: float) -> str:
    return str(int(x)) if float(x).is_integer() and abs(x) < 1e15 else repr(float(x))


def format_script(ast: ScriptAst) -> str:
    """Canonical text for an AST; ``parse(format_script(a)) == a``."""
    lines = [f"scenario {ast.scenario_id}"]
    if ast.layout is not None:
        lines.append(f"layout {ast.layout.value}")
    for v in ast.vehicle_decls:
        if v.role == "ego":
            lines.append(f"ego {_MANEUVER_SPELLING[v.maneuver]}")
        else:
            lines.append(f"adversary {_APPROACH_SPELLING[v.approach]} {_MANEUVER_SPELLING[v.maneuver]}")
    for p in ast.param_decls:
        if _is_default(p):
            continue
        lines.append(f"param {p.name} in [{_num(p.low)}, {_num(p.high)}] {_UNIT_SPELLING[p.unit]}")
    if ast.sim_decls is not None:
        parts = [
            f"{word} {_num(getattr(ast.sim_decls, attr))}"
            for word, attr in _SIM_WORDS.items()
            if getattr(ast.sim_decls, attr) is not None
        ]
        if parts:
            lines.append("sim " + " ".join(parts))
    return "\n".join(lines) + "\n"


def load_script(path: str | Path) -> ScriptAst:
    path = Path(path)
    return parse(path.read_text(encoding="utf-8"), str(path))


def builtin_script(scenario_id: str) -> Path:
    return SCRIPTS_DIR / f"{scenario_id}{SCRIPT_SUFFIX}"
