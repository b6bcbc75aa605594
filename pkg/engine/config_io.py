"""
Link configuration file I/O.

Configurations are flat INI-style text ([link], [channels.k], [noise], ...),
read with configparser and validated into the immutable types of engine.model.
Calibration results are written as separate overlay files that are merged
key-by-key on top of a base file at load time. A .zarr store holding the
canonical text is supported when zarr is installed.
"""

from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union, Optional
import configparser
import datetime
import hashlib
import logging
import re

from .model import (
    Basis,
    ChannelPlan,
    ChannelSpec,
    FilterConfig,
    FiniteSizeParams,
    LinkParams,
    NoiseProfile,
    PiecewiseLinear,
    PilotTone,
)

try:
    import zarr
except ImportError:
    zarr = None

logger = logging.getLogger(__name__)

_NUMBER = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$")

DEFAULT_XI_SCALING = ((1, 1.0), (2, 1.63), (3, 1.717), (4, 1.63 * 1.11))

# allowed keys per section; channel sections are matched by prefix
SECTION_KEYS = {
    "simulation": ("sample_rate_hz", "block_symbols"),
    "plan": ("spacing_hz", "pilot_tones"),
    "channels": ("symbol_rate_hz", "if_freq_hz", "mod_variance_snu", "basis"),
    "link": ("fiber_length_km", "fiber_loss_db_per_km", "eta_det", "beta", "trusted_devices",
             "f_sym_hz", "transmittance"),
    "noise": ("detector_ratio", "carrier_noise", "excess_noise_floor_snu", "detector_scale"),
    "filters": ("order", "f3db_per_symbol_rate", "demux_bandwidth_hz"),
    "finite_size": ("n_total", "m_pe", "eps_bar", "eps_pe"),
    "scaling": None,
    "calibration": None,
}

_SCALING_KEY = re.compile(r"^channels_(\d+)$")
TARGET_KEY = re.compile(r"^reach_(finite|asympt)(_(\d+)ch)?$")


class ConfigError(ValueError):
    """Configuration text could not be parsed or validated."""

    def __init__(self, message: str, key: Optional[str] = None, line: Optional[int] = None):
        where = ""
        if key is not None:
            where += f" (key '{key}'"
            where += f", line {line})" if line is not None else ")"
        super().__init__(message + where)
        self.reason = message
        self.key = key
        self.line = line


@dataclass(frozen=True)
class SystemConfig:
    """Everything a command needs: layout, link, noise, filters, finite-size and calibration data."""
    plan: ChannelPlan
    link: LinkParams = field(default_factory=LinkParams)
    noise: NoiseProfile = field(default_factory=NoiseProfile.synthetic_default)
    finite: FiniteSizeParams = field(default_factory=FiniteSizeParams)
    filters: FilterConfig = field(default_factory=FilterConfig)
    xi_scaling: tuple = DEFAULT_XI_SCALING
    calibration_targets: tuple = ()
    block_symbols: int = 16384

    def __post_init__(self):
        scaling = tuple(sorted((int(n), float(f)) for n, f in self.xi_scaling))
        object.__setattr__(self, "xi_scaling", scaling)
        object.__setattr__(self, "calibration_targets", tuple(self.calibration_targets))
        if not scaling or scaling[0][0] != 1:
            raise ValueError("xi_scaling must define the single-channel factor (channels_1)")
        if any(f <= 0 for _, f in scaling):
            raise ValueError("xi_scaling factors must be positive")
        if self.block_symbols < 64:
            raise ValueError(f"block_symbols must be >= 64, got {self.block_symbols}")

    def xi_factor(self, n_channels: int) -> float:
        """Excess-noise growth factor for n channels; falls back to the largest defined count below n."""
        factor = self.xi_scaling[0][1]
        for n, f in self.xi_scaling:
            if n <= n_channels:
                factor = f
        return factor

    def excess_noise(self, n_channels: int) -> float:
        return self.noise.excess_noise_floor_snu * self.xi_factor(n_channels)


# =============================================================================
# Parsing helpers
# =============================================================================

def _line_of(texts: Sequence[str], section: str, key: Optional[str] = None) -> Optional[int]:
    """Best-effort 1-based line number of a section header or key (last source wins)."""
    found = None
    for text in texts:
        current = None
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if line.startswith("[") and line.endswith("]"):
                current = line[1:-1].strip()
                if key is None and current == section:
                    found = lineno
            elif key is not None and current == section:
                name = line.split("=", 1)[0].strip()
                if name == key:
                    found = lineno
    return found


def parse_number(text: str, key: str = None) -> float:
    """Decimal literal -> float; anything else (hex, expressions, nan) is rejected."""
    text = text.strip()
    if not _NUMBER.match(text):
        raise ConfigError(f"'{text}' is not a decimal number", key=key)
    return float(text)


def parse_count(text: str, key: str = None) -> int:
    value = parse_number(text, key)
    if value != int(value):
        raise ConfigError(f"'{text}' must be a whole number", key=key)
    return int(value)


def parse_bool(text: str, key: str = None) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "yes", "1"):
        return True
    if lowered in ("false", "no", "0"):
        return False
    raise ConfigError(f"'{text}' is not a boolean (true/false)", key=key)


def parse_profile(text: str, key: str = None) -> PiecewiseLinear:
    """'f0:v0, f1:v1, ...' -> PiecewiseLinear."""
    points = []
    for item in text.replace("\n", " ").split(","):
        item = item.strip()
        if not item:
            continue
        parts = item.split(":")
        if len(parts) != 2:
            raise ConfigError(f"profile entry '{item}' must be freq:value", key=key)
        points.append((parse_number(parts[0], key), parse_number(parts[1], key)))
    try:
        return PiecewiseLinear(tuple(points))
    except ValueError as e:
        raise ConfigError(str(e), key=key) from e


def parse_pilot_tones(text: str, key: str = None) -> tuple:
    """'freq:amplitude:basis, ...' -> tuple of PilotTone."""
    tones = []
    for item in text.replace("\n", " ").split(","):
        item = item.strip()
        if not item:
            continue
        parts = [p.strip() for p in item.split(":")]
        if len(parts) != 3:
            raise ConfigError(f"pilot tone '{item}' must be freq:amplitude:basis", key=key)
        try:
            basis = Basis(parts[2])
        except ValueError:
            raise ConfigError(f"unknown basis '{parts[2]}'", key=key)
        try:
            tones.append(PilotTone(parse_number(parts[0], key), parse_number(parts[1], key), basis))
        except ValueError as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(str(e), key=key) from e
    return tuple(tones)


def validate_section_keys(parser: configparser.ConfigParser) -> tuple:
    """
    Check that every section and key is known.

    :param parser: parsed configuration
    :return success, message, section, key:
    """
    for section in parser.sections():
        base = "channels" if section.startswith("channels.") else section
        if base not in SECTION_KEYS:
            return False, f"unknown section [{section}]", section, None
        if base == "channels":
            suffix = section.split(".", 1)[1]
            if not suffix.isdigit() or int(suffix) < 1:
                return False, f"channel section [{section}] needs a positive integer index", section, None

        allowed = SECTION_KEYS[base]
        for key in parser[section]:
            if allowed is not None and key not in allowed:
                return False, f"unknown key in [{section}]", section, key
            if base == "scaling" and not _SCALING_KEY.match(key):
                return False, "scaling keys must look like channels_<n>", section, key
            if base == "calibration" and not TARGET_KEY.match(key):
                return False, "calibration keys must look like reach_finite[_<n>ch] or reach_asympt[_<n>ch]", \
                    section, key

    return True, "sections validated", None, None


# =============================================================================
# Load
# =============================================================================

def _new_parser() -> configparser.ConfigParser:
    parser = configparser.ConfigParser(interpolation=None, strict=True,
                                       delimiters=("=",), comment_prefixes=("#", ";"),
                                       inline_comment_prefixes=("#",))
    parser.optionxform = str
    return parser


def parse_config_text(texts: Sequence[str], sources: Sequence[str] = ()) -> SystemConfig:
    """
    Build a SystemConfig from one base text followed by overlay texts.

    :param texts: configuration texts, later ones override earlier ones key by key
    :param sources: names used in error messages
    :return cfg:
    """
    parser = _new_parser()
    for ii, text in enumerate(texts):
        source = sources[ii] if ii < len(sources) else f"<config {ii}>"
        try:
            parser.read_string(text, source=source)
        except configparser.Error as e:
            raise ConfigError(f"cannot parse {source}: {e}") from e

    valid, error, section, key = validate_section_keys(parser)
    if not valid:
        raise ConfigError(error, key=key if key else section,
                          line=_line_of(texts, section, key))

    def get(section, key, convert, default=None):
        if parser.has_option(section, key):
            try:
                return convert(parser[section][key])
            except ConfigError as e:
                raise ConfigError(e.reason, key=f"{section}.{key}",
                                  line=_line_of(texts, section, key)) from e
        return default

    def build(section, factory, **kwargs):
        try:
            return factory(**{k: v for k, v in kwargs.items() if v is not None})
        except (TypeError, ValueError) as e:
            raise ConfigError(f"invalid [{section}]: {e}", key=section,
                              line=_line_of(texts, section)) from e

    channels = []
    for section in parser.sections():
        if not section.startswith("channels."):
            continue
        basis_text = get(section, "basis", str.strip, "amplitude")
        try:
            basis = Basis(basis_text)
        except ValueError:
            raise ConfigError(f"unknown basis '{basis_text}'", key=f"{section}.basis",
                              line=_line_of(texts, section, "basis"))
        for required in ("symbol_rate_hz", "if_freq_hz", "mod_variance_snu"):
            if not parser.has_option(section, required):
                raise ConfigError(f"missing required key in [{section}]", key=f"{section}.{required}",
                                  line=_line_of(texts, section))
        channels.append(build(section, ChannelSpec,
                              index=int(section.split(".", 1)[1]),
                              symbol_rate_hz=get(section, "symbol_rate_hz", parse_number),
                              if_freq_hz=get(section, "if_freq_hz", parse_number),
                              mod_variance_snu=get(section, "mod_variance_snu", parse_number),
                              basis=basis))
    if not channels:
        raise ConfigError("configuration defines no [channels.k] sections")

    plan = build("plan", ChannelPlan,
                 channels=tuple(channels),
                 spacing_hz=get("plan", "spacing_hz", parse_number),
                 pilot_tones=get("plan", "pilot_tones", parse_pilot_tones),
                 sample_rate_hz=get("simulation", "sample_rate_hz", parse_number))

    link = build("link", LinkParams,
                 fiber_length_km=get("link", "fiber_length_km", parse_number),
                 fiber_loss_db_per_km=get("link", "fiber_loss_db_per_km", parse_number),
                 eta_det=get("link", "eta_det", parse_number),
                 beta=get("link", "beta", parse_number),
                 trusted_devices=get("link", "trusted_devices", parse_bool),
                 f_sym_hz=get("link", "f_sym_hz", parse_number),
                 transmittance=get("link", "transmittance", parse_number))

    if parser.has_section("noise"):
        default_noise = NoiseProfile.synthetic_default()
        noise = build("noise", NoiseProfile,
                      detector_ratio=get("noise", "detector_ratio", parse_profile, default_noise.detector_ratio),
                      carrier_noise=get("noise", "carrier_noise", parse_profile, default_noise.carrier_noise),
                      excess_noise_floor_snu=get("noise", "excess_noise_floor_snu", parse_number,
                                                 default_noise.excess_noise_floor_snu),
                      detector_scale=get("noise", "detector_scale", parse_number))
    else:
        noise = NoiseProfile.synthetic_default()

    filters = build("filters", FilterConfig,
                    order=get("filters", "order", parse_count),
                    f3db_per_symbol_rate=get("filters", "f3db_per_symbol_rate", parse_number),
                    demux_bandwidth_hz=get("filters", "demux_bandwidth_hz", parse_number))

    finite = build("finite_size", FiniteSizeParams,
                   n_total=get("finite_size", "n_total", parse_count),
                   m_pe=get("finite_size", "m_pe", parse_count),
                   eps_bar=get("finite_size", "eps_bar", parse_number),
                   eps_pe=get("finite_size", "eps_pe", parse_number))

    scaling = dict(DEFAULT_XI_SCALING)
    if parser.has_section("scaling"):
        for key in parser["scaling"]:
            scaling[int(_SCALING_KEY.match(key).group(1))] = get("scaling", key, parse_number)

    targets = []
    if parser.has_section("calibration"):
        for key in parser["calibration"]:
            targets.append((key, get("calibration", key, parse_number)))

    return build("simulation", SystemConfig,
                 plan=plan, link=link, noise=noise, finite=finite, filters=filters,
                 xi_scaling=tuple(scaling.items()),
                 calibration_targets=tuple(targets),
                 block_symbols=get("simulation", "block_symbols", parse_count))


def _read_text(fname: Path) -> str:
    if fname.suffix == ".zarr":
        if zarr is None:
            raise ImportError("zarr is required for loading .zarr files. Install with: pip install zarr numcodecs")
        z = zarr.open(str(fname), "r")
        return z.attrs["config_text"]
    with open(fname, "r", encoding="utf-8") as f:
        return f.read()


def load_config(fname: Union[str, Path], overlays: Sequence[Union[str, Path]] = ()) -> SystemConfig:
    """
    Load a configuration file and apply overlay files on top of it.

    :param fname: base configuration (.ini/.cfg text or .zarr store)
    :param overlays: overlay files, applied in order
    :return cfg:
    """
    paths = [Path(fname)] + [Path(p) for p in overlays]
    texts = []
    for p in paths:
        if not p.exists():
            raise FileNotFoundError(f"configuration file not found: {p}")
        texts.append(_read_text(p))

    cfg = parse_config_text(texts, sources=[str(p) for p in paths])
    logger.debug(f"loaded {len(cfg.plan.channels)} channels from {paths[0]} with {len(overlays)} overlay(s)")
    return cfg


# =============================================================================
# Save
# =============================================================================

def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    return repr(float(value))


def _fmt_profile(profile: PiecewiseLinear) -> str:
    return ", ".join(f"{_fmt(f)}:{_fmt(v)}" for f, v in profile.points)


def dump_config_text(cfg: SystemConfig) -> str:
    """Canonical text form; floats use repr so a reload is bit-exact."""
    lines = ["[simulation]",
             f"sample_rate_hz = {_fmt(cfg.plan.sample_rate_hz)}",
             f"block_symbols = {_fmt(cfg.block_symbols)}",
             "",
             "[plan]"]
    if cfg.plan.spacing_hz is not None:
        lines.append(f"spacing_hz = {_fmt(cfg.plan.spacing_hz)}")
    if cfg.plan.pilot_tones:
        tones = ", ".join(f"{_fmt(p.freq_hz)}:{_fmt(p.relative_amplitude)}:{p.basis.value}"
                          for p in cfg.plan.pilot_tones)
        lines.append(f"pilot_tones = {tones}")
    lines.append("")

    for c in cfg.plan.channels:
        lines += [f"[channels.{c.index}]",
                  f"symbol_rate_hz = {_fmt(c.symbol_rate_hz)}",
                  f"if_freq_hz = {_fmt(c.if_freq_hz)}",
                  f"mod_variance_snu = {_fmt(c.mod_variance_snu)}",
                  f"basis = {c.basis.value}",
                  ""]

    link = cfg.link
    lines += ["[link]",
              f"fiber_length_km = {_fmt(link.fiber_length_km)}",
              f"fiber_loss_db_per_km = {_fmt(link.fiber_loss_db_per_km)}",
              f"eta_det = {_fmt(link.eta_det)}",
              f"beta = {_fmt(link.beta)}",
              f"trusted_devices = {_fmt(link.trusted_devices)}",
              f"f_sym_hz = {_fmt(link.f_sym_hz)}"]
    if link.transmittance is not None:
        lines.append(f"transmittance = {_fmt(link.transmittance)}")

    noise = cfg.noise
    lines += ["",
              "[noise]",
              f"detector_ratio = {_fmt_profile(noise.detector_ratio)}",
              f"carrier_noise = {_fmt_profile(noise.carrier_noise)}",
              f"excess_noise_floor_snu = {_fmt(noise.excess_noise_floor_snu)}",
              f"detector_scale = {_fmt(noise.detector_scale)}",
              "",
              "[filters]",
              f"order = {_fmt(cfg.filters.order)}",
              f"f3db_per_symbol_rate = {_fmt(cfg.filters.f3db_per_symbol_rate)}",
              f"demux_bandwidth_hz = {_fmt(cfg.filters.demux_bandwidth_hz)}",
              "",
              "[finite_size]",
              f"n_total = {_fmt(cfg.finite.n_total)}",
              f"m_pe = {_fmt(cfg.finite.m_pe)}",
              f"eps_bar = {_fmt(cfg.finite.eps_bar)}",
              f"eps_pe = {_fmt(cfg.finite.eps_pe)}",
              "",
              "[scaling]"]
    lines += [f"channels_{n} = {_fmt(f)}" for n, f in cfg.xi_scaling]

    if cfg.calibration_targets:
        lines += ["", "[calibration]"]
        lines += [f"{name} = {_fmt(value)}" for name, value in cfg.calibration_targets]

    return "\n".join(lines) + "\n"


def config_digest(cfg: SystemConfig) -> str:
    """SHA-256 of the canonical text."""
    return hashlib.sha256(dump_config_text(cfg).encode("utf-8")).hexdigest()


def save_config(fname: Union[str, Path], cfg: SystemConfig, use_zarr: bool = False):
    """
    Save a configuration as canonical text, or inside a zarr store.

    :param fname: destination
    :param cfg: configuration
    :param use_zarr: write a zarr store (also implied by a .zarr suffix)
    """
    fname = Path(fname)
    text = dump_config_text(cfg)

    if use_zarr or fname.suffix == ".zarr":
        if zarr is None:
            raise ImportError("zarr is required for saving .zarr files. Install with: pip install zarr numcodecs")
        z = zarr.open(str(fname), "w")
        z.attrs["timestamp"] = datetime.datetime.now().strftime("%Y_%m_%d_%H;%M;%S")
        z.attrs["config_text"] = text
        z.attrs["config_sha256"] = hashlib.sha256(text.encode("utf-8")).hexdigest()
    else:
        with open(fname, "w", encoding="utf-8") as f:
            f.write(text)


def save_overlay(fname: Union[str, Path], sections: dict, comment: str = ""):
    """
    Write an overlay file holding only the given keys.

    :param fname: destination
    :param sections: {section: {key: value}}
    :param comment: free text written as leading '#' lines
    """
    lines = [f"# {line}" for line in comment.splitlines()]
    for section, values in sections.items():
        if lines:
            lines.append("")
        lines.append(f"[{section}]")
        lines += [f"{k} = {_fmt(v)}" for k, v in values.items()]

    with open(fname, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")
