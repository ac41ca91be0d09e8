"""INI experiment configuration.

Values are layered: dataclass defaults, then an optional preset, then a
config file, then ``--section.key=value`` overrides. The merged result is
validated into frozen section dataclasses and can be written back as INI.
"""

import configparser
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple, get_type_hints

from .errors import ConfigError
from .presets import get_preset

DEFAULT_CONFIG_NAME = "stiff_pinn.ini"

SYSTEMS = ("full", "reduced")
OUTPUT_GRIDS = ("log", "linear", "steps")
CLOSURES = ("auto", "newton", "closed-form-rober")
MODES = ("stiff", "regular")


@dataclass(frozen=True)
class MechanismSection:
    source: str = "builtin:rober"


@dataclass(frozen=True)
class SolverSection:
    system: str = "full"
    method: str = "bdf"
    rtol: float = 1e-8
    atol: Tuple[float, ...] = (1e-12,)
    initial_step: float = 0.0
    max_steps: int = 500_000
    output_grid: str = "log"
    output_points: int = 200
    t_end: Optional[float] = None


@dataclass(frozen=True)
class QssaSection:
    threshold: float = 1e-4
    closure: str = "auto"
    species: Tuple[str, ...] = ()
    consumed_only: bool = True
    tolerance: float = 1e-12
    max_iterations: int = 50


@dataclass(frozen=True)
class NetworkSection:
    widths: Tuple[int, ...] = (128, 128, 128)


@dataclass(frozen=True)
class TrainingSection:
    mode: str = "stiff"
    n_collocation: int = 2500
    t_min: float = 1e-5
    t_max: float = 1e5
    sampling: str = "log-uniform"
    batch_size: int = 128
    learning_rate: float = 1e-3
    max_updates: int = 100_000
    species_weights: str = ""
    seed: int = 0
    output_transform: str = "hard-ic"
    y_ref_scale: Tuple[float, ...] = ()
    ic_weights: Tuple[float, ...] = ()
    log_every: int = 100
    plateau_window: int = 10_000


@dataclass(frozen=True)
class OutputSection:
    directory: str = "runs"
    emit_svg: bool = True
    eval_points: int = 1000


@dataclass(frozen=True)
class SweepSection:
    grid: str = "64x4,64x5,128x2,128x3,256x1"
    seeds: int = 3
    jobs: int = 1


@dataclass(frozen=True)
class ExperimentConfig:
    mechanism: MechanismSection = field(default_factory=MechanismSection)
    solver: SolverSection = field(default_factory=SolverSection)
    qssa: QssaSection = field(default_factory=QssaSection)
    network: NetworkSection = field(default_factory=NetworkSection)
    training: TrainingSection = field(default_factory=TrainingSection)
    output: OutputSection = field(default_factory=OutputSection)
    sweep: SweepSection = field(default_factory=SweepSection)

    def __post_init__(self):
        _check_choice("solver.system", self.solver.system, SYSTEMS)
        _check_choice("solver.method", self.solver.method, ("bdf", "dopri5"))
        _check_choice("solver.output_grid", self.solver.output_grid, OUTPUT_GRIDS)
        _check_choice("qssa.closure", self.qssa.closure, CLOSURES)
        _check_choice("training.mode", self.training.mode, MODES)
        if self.solver.rtol <= 0 or any(a <= 0 for a in self.solver.atol) or not self.solver.atol:
            raise ConfigError("solver.rtol and solver.atol must be positive")
        if self.solver.output_points < 2:
            raise ConfigError("solver.output_points must be >= 2")
        if self.qssa.threshold < 0:
            raise ConfigError("qssa.threshold must be >= 0")
        if not self.network.widths or min(self.network.widths) < 1:
            raise ConfigError("network.widths needs at least one positive hidden width")
        if self.sweep.seeds < 1 or self.sweep.jobs < 1:
            raise ConfigError("sweep.seeds and sweep.jobs must be >= 1")
        if self.output.eval_points < 1:
            raise ConfigError("output.eval_points must be >= 1")
        parse_grid(self.sweep.grid)


SECTIONS = {f.name: f.default_factory for f in fields(ExperimentConfig)}


def _check_choice(name: str, value: str, choices: Tuple[str, ...]) -> None:
    if value not in choices:
        raise ConfigError(f"Invalid {name} '{value}'. Valid values: {', '.join(choices)}")


def parse_grid(text: str) -> List[Tuple[int, int]]:
    """``"64x4,128x3"`` -> ``[(64, 4), (128, 3)]`` as (width, depth) pairs."""
    cells = []
    for token in text.replace(" ", "").split(","):
        if not token:
            continue
        width, sep, depth = token.lower().partition("x")
        if not sep or not width.isdigit() or not depth.isdigit() or int(width) < 1 or int(depth) < 1:
            raise ConfigError(f"Invalid sweep cell '{token}' (expected <width>x<depth>, e.g. 128x3)")
        cells.append((int(width), int(depth)))
    if not cells:
        raise ConfigError("sweep.grid is empty")
    return cells


def _split(text: str) -> List[str]:
    return [token for token in text.replace(",", " ").split() if token]


def _convert(section: str, key: str, hint, text: str):
    text = text.strip()
    try:
        if hint is bool:
            lowered = text.lower()
            if lowered not in ("true", "false", "yes", "no", "1", "0", "on", "off"):
                raise ValueError(text)
            return lowered in ("true", "yes", "1", "on")
        if hint is int:
            return int(text)
        if hint is float:
            return float(text)
        if hint == Optional[float]:
            return None if text.lower() in ("", "none") else float(text)
        if hint == Tuple[int, ...]:
            return tuple(int(v) for v in _split(text))
        if hint == Tuple[float, ...]:
            return tuple(float(v) for v in _split(text))
        if hint == Tuple[str, ...]:
            return tuple(_split(text))
        return text
    except ValueError:
        raise ConfigError(f"Invalid value for {section}.{key}: {text!r}") from None


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return ""
    if isinstance(value, tuple):
        return ",".join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _apply(raw: Dict[str, Dict[str, str]], section: str, key: str, value: str, origin: str) -> None:
    if section not in SECTIONS:
        raise ConfigError(
            f"Unknown config section [{section}] in {origin}. "
            f"Valid sections: {', '.join(SECTIONS)}"
        )
    valid = [f.name for f in fields(SECTIONS[section])]
    if key not in valid:
        raise ConfigError(
            f"Unknown key '{key}' in [{section}] ({origin}). Valid keys: {', '.join(valid)}"
        )
    raw.setdefault(section, {})[key] = value


def parse_override(text: str) -> Tuple[str, str, str]:
    """``--section.key=value`` (leading dashes optional) -> (section, key, value)."""
    body = text.lstrip("-")
    name, sep, value = body.partition("=")
    section, dot, key = name.partition(".")
    if not sep or not dot or not section or not key:
        raise ConfigError(f"Malformed override '{text}' (expected --section.key=value)")
    return section.strip(), key.strip().replace("-", "_"), value


def _build(raw: Dict[str, Dict[str, str]]) -> ExperimentConfig:
    sections = {}
    for name, factory in SECTIONS.items():
        hints = get_type_hints(factory)
        values = {
            key: _convert(name, key, hints[key], text) for key, text in raw.get(name, {}).items()
        }
        sections[name] = replace(factory(), **values)
    return ExperimentConfig(**sections)


def _read_ini(text: str, origin: str) -> Dict[str, Dict[str, str]]:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text, source=origin)
    except configparser.Error as exc:
        raise ConfigError(f"Cannot parse {origin}: {exc}") from None
    raw: Dict[str, Dict[str, str]] = {}
    for section in parser.sections():
        for key, value in parser.items(section):
            _apply(raw, section, key, value, origin)
    return raw


def parse_config_text(text: str, origin: str = "<config>") -> ExperimentConfig:
    return _build(_read_ini(text, origin))


def serialize_config(cfg: ExperimentConfig) -> str:
    lines = []
    for name in SECTIONS:
        lines.append(f"[{name}]")
        for key, value in asdict(getattr(cfg, name)).items():
            lines.append(f"{key} = {_format(value)}")
        lines.append("")
    return "\n".join(lines)


def find_default_config() -> Optional[Path]:
    """Search the current directory and up to 5 parents for ``stiff_pinn.ini``."""
    current_dir = Path.cwd()
    for directory in [current_dir] + list(current_dir.parents)[:5]:
        candidate = directory / DEFAULT_CONFIG_NAME
        if candidate.is_file():
            return candidate
    return None


def load_config(
    path: Optional[str] = None,
    preset: Optional[str] = None,
    overrides: Iterable[str] = (),
) -> ExperimentConfig:
    """Merge defaults, preset, file and overrides into a validated config.

    Raises:
        ConfigError: On unknown presets, sections, keys or invalid values.
        FileNotFoundError: If ``path`` does not exist.
    """
    raw: Dict[str, Dict[str, str]] = {}
    if preset:
        try:
            layout = get_preset(preset)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        for section, values in layout.items():
            for key, value in values.items():
                _apply(raw, section, key, value, f"preset {preset}")
    if path:
        config_path = Path(path)
        if not config_path.is_file():
            raise FileNotFoundError(f"Config file not found: {path}")
        for section, values in _read_ini(config_path.read_text(encoding="utf-8"), path).items():
            for key, value in values.items():
                _apply(raw, section, key, value, path)
    for text in overrides:
        section, key, value = parse_override(text)
        _apply(raw, section, key, value, "command line")
    return _build(raw)
