"""Line-oriented mechanism file format.

    # comment
    SPECIES: A B C
    INIT: 1 0 0
    TSPAN: 0 1e5
    A -> B : 0.04
    2 B -> B + C : 3e7
    QSS: B              (optional, read by parse_partition)

``INIT`` defaults to all zeros and ``TSPAN`` to ``0 1`` when omitted.
"""

import re
from typing import Dict, List, Optional, Tuple

from ..common.errors import MechanismError, MechanismSyntaxError
from .model import Mechanism, Reaction

_NAME = r"[A-Za-z_][^\s+:]*"
_TERM = re.compile(rf"^(?:(\d+)\s*)?({_NAME})$")
_HEADERS = ("SPECIES", "INIT", "TSPAN")


def _strip(line: str) -> str:
    return line.split("#", 1)[0].strip()


def _parse_reals(text: str, line_number: int) -> List[float]:
    values = []
    for token in text.split():
        try:
            values.append(float(token))
        except ValueError:
            raise MechanismSyntaxError(f"not a real number: {token!r}", line_number) from None
    return values


def _parse_side(text: str, index: Dict[str, int], line_number: int) -> Dict[int, int]:
    stoich: Dict[int, int] = {}
    for term in text.split("+"):
        term = term.strip()
        match = _TERM.match(term)
        if not match:
            raise MechanismSyntaxError(f"cannot parse reaction term {term!r}", line_number)
        coefficient = int(match.group(1)) if match.group(1) else 1
        name = match.group(2)
        if name not in index:
            raise MechanismError(f"line {line_number}: unknown species {name}")
        if coefficient == 0:
            raise MechanismSyntaxError(f"zero stoichiometric coefficient for {name}", line_number)
        stoich[index[name]] = stoich.get(index[name], 0) + coefficient
    return stoich


def _parse_reaction(body: str, index: Dict[str, int], line_number: int) -> Reaction:
    if "->" not in body or ":" not in body:
        raise MechanismSyntaxError("expected '<reactants> -> <products> : <rate>'", line_number)
    equation, rate_text = body.rsplit(":", 1)
    lhs, _, rhs = equation.partition("->")
    rates = _parse_reals(rate_text, line_number)
    if len(rates) != 1:
        raise MechanismSyntaxError("expected exactly one rate constant", line_number)
    if not lhs.strip() or not rhs.strip():
        raise MechanismSyntaxError("reaction needs reactants and products", line_number)
    reactants = _parse_side(lhs, index, line_number)
    products = _parse_side(rhs, index, line_number)
    if rates[0] <= 0.0:
        raise MechanismError(f"line {line_number}: non-positive rate constant {rates[0]}")
    try:
        return Reaction(reactants, products, rates[0])
    except MechanismError as exc:
        raise MechanismError(f"line {line_number}: {exc}") from None


def _records(source_text: str):
    for line_number, raw in enumerate(source_text.splitlines(), start=1):
        line = _strip(raw)
        if line:
            yield line_number, line


def _keyword(line: str) -> Optional[Tuple[str, str]]:
    head, sep, tail = line.partition(":")
    if sep and head.strip().upper() in (*_HEADERS, "QSS") and "->" not in line:
        return head.strip().upper(), tail.strip()
    return None


def parse_mechanism(source_text: str) -> Mechanism:
    """Parse mechanism text; reactions keep file order."""
    names: Optional[List[str]] = None
    init: Optional[List[float]] = None
    t_span: Optional[List[float]] = None
    reactions: List[Reaction] = []
    index: Dict[str, int] = {}
    provenance = "\n".join(
        raw[1:].strip() for raw in source_text.splitlines() if raw.lstrip().startswith("#")
    )

    for line_number, line in _records(source_text):
        keyword = _keyword(line)
        if names is None:
            if not keyword or keyword[0] != "SPECIES":
                raise MechanismSyntaxError("first line must be 'SPECIES: <name> ...'", line_number)
            names = keyword[1].split()
            for name in names:
                if not re.fullmatch(_NAME, name):
                    raise MechanismSyntaxError(f"invalid species name {name!r}", line_number)
                if name in index:
                    raise MechanismError(f"line {line_number}: duplicate species name {name}")
                index[name] = len(index)
            continue
        if keyword:
            kind, body = keyword
            if kind == "QSS":
                continue
            if reactions:
                raise MechanismSyntaxError(f"{kind} must precede the reactions", line_number)
            if kind == "INIT" and init is None:
                init = _parse_reals(body, line_number)
                if len(init) != len(names):
                    raise MechanismSyntaxError(
                        f"INIT has {len(init)} values for {len(names)} species", line_number
                    )
            elif kind == "TSPAN" and t_span is None:
                t_span = _parse_reals(body, line_number)
                if len(t_span) != 2:
                    raise MechanismSyntaxError("TSPAN needs exactly two values", line_number)
            else:
                raise MechanismSyntaxError(f"unexpected {kind} line", line_number)
            continue
        reactions.append(_parse_reaction(line, index, line_number))

    if names is None:
        raise MechanismSyntaxError("missing 'SPECIES:' line", 1)
    return Mechanism(
        species_names=tuple(names),
        reactions=tuple(reactions),
        initial_concentrations=tuple(init if init is not None else [0.0] * len(names)),
        t_span=tuple(t_span if t_span is not None else (0.0, 1.0)),
        provenance=provenance,
    )


def parse_qss_names(source_text: str) -> Optional[Tuple[str, ...]]:
    """Return the names on a ``QSS:`` line, or None when the file has none."""
    for _, line in _records(source_text):
        keyword = _keyword(line)
        if keyword and keyword[0] == "QSS":
            return tuple(keyword[1].split())
    return None


def _side_text(stoich: Dict[int, int], names: Tuple[str, ...]) -> str:
    terms = []
    for index, coefficient in stoich.items():
        prefix = f"{coefficient} " if coefficient != 1 else ""
        terms.append(f"{prefix}{names[index]}")
    return " + ".join(terms)


def serialize_mechanism(m: Mechanism, qss_names: Optional[Tuple[str, ...]] = None) -> str:
    """Inverse of :func:`parse_mechanism`; reals use ``repr`` so values round-trip."""
    lines = [f"# {line}" if line else "#" for line in m.provenance.splitlines()]
    lines.append("SPECIES: " + " ".join(m.species_names))
    lines.append("INIT: " + " ".join(repr(c) for c in m.initial_concentrations))
    lines.append(f"TSPAN: {m.t_span[0]!r} {m.t_span[1]!r}")
    for reaction in m.reactions:
        lhs = _side_text(reaction.reactant_stoich, m.species_names)
        rhs = _side_text(reaction.product_stoich, m.species_names)
        lines.append(f"{lhs} -> {rhs} : {reaction.rate_constant!r}")
    if qss_names:
        lines.append("QSS: " + " ".join(qss_names))
    return "\n".join(lines) + "\n"
