"""Built-in benchmark mechanisms and mechanism reference resolution."""

from importlib import resources
from pathlib import Path
from typing import Dict

from ..common.errors import MechanismError
from .model import Mechanism
from .parser import parse_mechanism

BUILTIN_MECHANISMS: Dict[str, str] = {
    "rober": "rober.mech",
    "pollu": "pollu.mech",
}


def builtin_source(name: str) -> str:
    """Return the embedded mechanism file text for a built-in name."""
    key = name.lower()
    if key not in BUILTIN_MECHANISMS:
        valid = ", ".join(sorted(BUILTIN_MECHANISMS))
        raise MechanismError(f"Unknown builtin mechanism '{name}'. Valid builtins: {valid}")
    return resources.files(__package__).joinpath("data", BUILTIN_MECHANISMS[key]).read_text(
        encoding="utf-8"
    )


def builtin_rober() -> Mechanism:
    return parse_mechanism(builtin_source("rober"))


def builtin_pollu() -> Mechanism:
    return parse_mechanism(builtin_source("pollu"))


def mechanism_source(reference: str) -> str:
    """Resolve a mechanism reference to file text.

    Resolution order:
        1. ``builtin:<name>``
        2. a path to a mechanism file
        3. a bare builtin name (``rober``, ``pollu``)

    Raises:
        MechanismError: If the reference matches nothing.
    """
    if reference.startswith("builtin:"):
        return builtin_source(reference.split(":", 1)[1])
    path = Path(reference)
    if path.is_file():
        return path.read_text(encoding="utf-8")
    if reference.lower() in BUILTIN_MECHANISMS:
        return builtin_source(reference)
    valid = ", ".join(f"builtin:{name}" for name in sorted(BUILTIN_MECHANISMS))
    raise MechanismError(
        f"Mechanism not found: {reference}\n\n"
        f"Pass a mechanism file path or one of: {valid}"
    )


def load_mechanism(reference: str) -> Mechanism:
    return parse_mechanism(mechanism_source(reference))
