"""
Edit Command Language

Grammar (case-insensitive, commands separated by ';'):

    scale <class> [x <float>] [y <float>]
    translate <class> dx <int> dy <int>
    rotate <class> <float> deg

Class names come from the ClassId table. Parsing yields an EditProgram,
and format_program prints one back in canonical form.
"""

from dataclasses import dataclass
from typing import List, Sequence, Union

from pyparsing import (
    CaselessKeyword, Group, Optional as Opt, ParseBaseException, ParseFatalException,
    ParserElement, StringEnd, Suppress, Word, ZeroOrMore, alphas, common,
)

from phantom.classes import ClassId

MAX_SCALE = 8.0
MAX_DEGREES = 180.0


class EditSyntaxError(ValueError):
    """Malformed edit program; carries the 1-based line and column."""

    def __init__(self, message: str, line: int = 1, col: int = 1):
        self.line = line
        self.col = col
        self.reason = message
        super().__init__(f"{message} (line {line}, column {col})")


@dataclass(frozen=True)
class Scale:
    cls: ClassId
    sx: float = 1.0
    sy: float = 1.0

    def __post_init__(self):
        for name, v in (('sx', self.sx), ('sy', self.sy)):
            if not 0.0 < v <= MAX_SCALE:
                raise ValueError(f"{name}={v} outside (0, {MAX_SCALE:g}]")


@dataclass(frozen=True)
class Translate:
    cls: ClassId
    dx: int
    dy: int


@dataclass(frozen=True)
class Rotate:
    cls: ClassId
    degrees: float

    def __post_init__(self):
        if abs(self.degrees) > MAX_DEGREES:
            raise ValueError(f"rotation {self.degrees} deg exceeds +/-{MAX_DEGREES:g}")


EditCommand = Union[Scale, Translate, Rotate]


@dataclass(frozen=True)
class EditProgram:
    commands: tuple

    def __post_init__(self):
        if not self.commands:
            raise ValueError("EditProgram must contain at least one command")

    def __iter__(self):
        return iter(self.commands)

    def __len__(self) -> int:
        return len(self.commands)


def _class_action(s, loc, toks):
    try:
        return ClassId.from_name(toks[0])
    except KeyError:
        raise ParseFatalException(s, loc, f"unknown class '{toks[0]}'")


def _command_action(factory):
    def action(s, loc, toks):
        try:
            return factory(toks[0])
        except ValueError as e:
            raise ParseFatalException(s, loc, str(e))
    return action


def _scale(t) -> Scale:
    return Scale(t['cls'], float(t.get('sx', 1.0)), float(t.get('sy', 1.0)))


def _translate(t) -> Translate:
    return Translate(t['cls'], int(t['dx']), int(t['dy']))


def _rotate(t) -> Rotate:
    return Rotate(t['cls'], float(t['degrees']))


def create_parser() -> ParserElement:
    """Build the program grammar."""
    class_name = Word(alphas, alphas + '_-').set_parse_action(_class_action)('cls')
    real = common.fnumber
    integer = common.signed_integer

    scale = Group(
        Suppress(CaselessKeyword('scale')) + class_name
        + Opt(Suppress(CaselessKeyword('x')) + real('sx'))
        + Opt(Suppress(CaselessKeyword('y')) + real('sy'))
    ).set_parse_action(_command_action(_scale))

    translate = Group(
        Suppress(CaselessKeyword('translate')) + class_name
        + Suppress(CaselessKeyword('dx')) + integer('dx')
        + Suppress(CaselessKeyword('dy')) + integer('dy')
    ).set_parse_action(_command_action(_translate))

    rotate = Group(
        Suppress(CaselessKeyword('rotate')) + class_name
        + real('degrees') + Suppress(CaselessKeyword('deg'))
    ).set_parse_action(_command_action(_rotate))

    command = scale | translate | rotate
    sep = Suppress(';')
    return command + ZeroOrMore(sep + command) + Opt(sep) + StringEnd()


_PARSER = create_parser()


def parse_edit(text: str) -> EditProgram:
    """
    Parse an edit program.

    Raises:
        EditSyntaxError: empty program, unknown class, malformed number or
            out-of-range parameter, with its position
    """
    if not text or not text.strip():
        raise EditSyntaxError("empty program", 1, 1)
    try:
        commands = _PARSER.parse_string(text, parse_all=True)
    except ParseBaseException as e:
        raise EditSyntaxError(e.msg, e.lineno, e.col) from None
    return EditProgram(tuple(commands))


def format_command(cmd: EditCommand) -> str:
    name = cmd.cls.label
    if isinstance(cmd, Scale):
        return f"scale {name} x {cmd.sx!r} y {cmd.sy!r}"
    if isinstance(cmd, Translate):
        return f"translate {name} dx {cmd.dx} dy {cmd.dy}"
    if isinstance(cmd, Rotate):
        return f"rotate {name} {cmd.degrees!r} deg"
    raise TypeError(f"Not an edit command: {cmd!r}")


def format_program(program: Union[EditProgram, Sequence[EditCommand]]) -> str:
    """Canonical text of a program; parse_edit(format_program(p)) == p."""
    return '; '.join(format_command(c) for c in program)
