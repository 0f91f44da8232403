"""Pipeline configuration: an INI-style ``key = value`` file with sections.

Grammar (every key optional unless marked)::

    [model]
    name = pitchfork | modal          (required)
    n_interior = 64
    domain_length = 1.0
    branch = lower                    pitchfork: upper | lower | trivial
    schedule = 12:45:1, 45:95:2, 95:120:3    modal: lo:hi:mode, ...
    seed_amplitude = 1.0

    [sampling]
    kind = uniform | packed | explicit
    range = lo, hi                    (required)
    count = 40
    pack_centers = c1, c2
    pack_fraction = 0.4
    pack_width = 0.02
    points = p1, p2, ...              explicit points inline, or
    points_file = path                one value per line

    [solver]
    steady_tol = 1e-10
    max_iter = 100
    rom_tol = 1e-10
    rom_max_iter = 3000
    rom_method = picard | newton

    [clustering]
    k = auto | <int>
    k_max = 8
    alpha = 0.05
    restarts = 10
    max_iter = 300
    seed = 0

    [basis]
    rule = energy | fixed
    energy_tol = 1e-8
    fixed_L = 4

    [online]
    criterion = midrange | mean

    [output]
    dir = artifacts

Unknown sections or keys are rejected.
"""

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from . import textio
from .assignment import criterion_name
from .errors import ConfigError, LocromError
from .fom import DEFAULT_MODAL_SCHEDULE
from .podbasis import TruncationRule
from .sampling import SamplingPlan, load_points

SCHEMA = {
    "model": {"name", "n_interior", "domain_length", "branch", "schedule", "seed_amplitude"},
    "sampling": {"kind", "range", "count", "pack_centers", "pack_fraction", "pack_width",
                 "points", "points_file"},
    "solver": {"steady_tol", "max_iter", "rom_tol", "rom_max_iter", "rom_method"},
    "clustering": {"k", "k_max", "alpha", "restarts", "max_iter", "seed"},
    "basis": {"rule", "energy_tol", "fixed_L"},
    "online": {"criterion"},
    "output": {"dir"},
}


@dataclass(frozen=True)
class PipelineConfig:
    model: dict
    sampling: SamplingPlan
    steady_tol: float = 1e-10
    max_iter: int = 100
    rom_tol: float = 1e-10
    rom_max_iter: int = 3000
    rom_method: str = "picard"
    k: int = None  # None -> elbow selection
    k_max: int = 8
    alpha: float = 0.05
    restarts: int = 10
    kmeans_max_iter: int = 300
    seed: int = 0
    truncation: TruncationRule = field(default_factory=TruncationRule)
    criterion: str = "midrange_radius"
    output_dir: str = None

    def to_sections(self):
        s = self.sampling
        sampling = {"kind": s.kind, "range": textio.fmt_list(s.range), "count": s.count,
                    "pack_width": textio.fmt(s.pack_width)}
        if s.kind == "packed":
            sampling["pack_centers"] = textio.fmt_list(s.pack_centers)
            sampling["pack_fraction"] = textio.fmt(s.pack_fraction)
        if s.kind == "explicit":
            sampling["points"] = textio.fmt_list(s.explicit_points)
        model = {k: v for k, v in textio.model_spec_to_section(self.model).items()
                 if k != "parameter_domain"}
        out = {
            "model": model,
            "sampling": sampling,
            "solver": {"steady_tol": textio.fmt(self.steady_tol), "max_iter": self.max_iter,
                       "rom_tol": textio.fmt(self.rom_tol), "rom_max_iter": self.rom_max_iter,
                       "rom_method": self.rom_method},
            "clustering": {"k": "auto" if self.k is None else self.k, "k_max": self.k_max,
                           "alpha": textio.fmt(self.alpha), "restarts": self.restarts,
                           "max_iter": self.kmeans_max_iter, "seed": self.seed},
            "basis": {"rule": self.truncation.kind, "energy_tol": textio.fmt(self.truncation.energy_tol),
                      "fixed_L": self.truncation.fixed_L},
            "online": {"criterion": self.criterion},
        }
        return out


def _get(sec, key, conv, default):
    if sec is None or key not in sec:
        return default
    raw = sec[key].strip()
    try:
        return conv(raw)
    except (ValueError, LocromError) as exc:
        raise ConfigError(f"[{sec.name}] {key} = {raw!r}: {exc}") from exc


def parse_config(text, base_dir="."):
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unparseable config: {exc}") from exc
    for name in cp.sections():
        if name not in SCHEMA:
            raise ConfigError(f"unknown section [{name}]")
        extra = set(cp[name]) - SCHEMA[name]
        if extra:
            raise ConfigError(f"unknown key(s) in [{name}]: {', '.join(sorted(extra))}")
    if not cp.has_section("model") or "name" not in cp["model"]:
        raise ConfigError("[model] name is required")
    sec = lambda n: cp[n] if cp.has_section(n) else None  # noqa: E731

    m = cp["model"]
    name = m["name"].strip()
    model = {"name": name,
             "n_interior": _get(m, "n_interior", int, 64),
             "domain_length": _get(m, "domain_length", float, 1.0),
             "seed_amplitude": _get(m, "seed_amplitude", float, 1.0)}
    if name == "pitchfork":
        model["branch"] = _get(m, "branch", str, "lower")
        if "schedule" in m:
            raise ConfigError("[model] schedule only applies to the modal model")
    elif name == "modal":
        model["schedule"] = _get(m, "schedule", textio.parse_schedule, DEFAULT_MODAL_SCHEDULE)
        if "branch" in m:
            raise ConfigError("[model] branch only applies to the pitchfork model")
    else:
        raise ConfigError(f"unknown model {name!r}")

    s = sec("sampling")
    if s is None or "range" not in s:
        raise ConfigError("[sampling] range is required")
    points = _get(s, "points", textio.parse_floats, [])
    pfile = _get(s, "points_file", str, None)
    if pfile:
        points = points + load_points(Path(base_dir) / pfile)
    try:
        rng = _get(s, "range", textio.parse_floats, None)
        if len(rng) != 2:
            raise ConfigError("[sampling] range needs exactly two values")
        plan = SamplingPlan(
            kind=_get(s, "kind", str, "uniform"),
            range=tuple(rng),
            count=_get(s, "count", int, len(points) if points else 40),
            pack_centers=tuple(_get(s, "pack_centers", textio.parse_floats, [])),
            pack_fraction=_get(s, "pack_fraction", float, 0.0),
            explicit_points=tuple(points),
            pack_width=_get(s, "pack_width", float, 0.02),
        )
    except LocromError as exc:
        raise ConfigError(f"[sampling] {exc}") from exc

    sv, cl, bs, on, out = sec("solver"), sec("clustering"), sec("basis"), sec("online"), sec("output")
    k_raw = _get(cl, "k", str, "auto")
    try:
        k = None if k_raw == "auto" else int(k_raw)
    except ValueError:
        raise ConfigError(f"[clustering] k must be 'auto' or an integer, got {k_raw!r}")
    try:
        rule = TruncationRule(kind=_get(bs, "rule", str, "energy"),
                              fixed_L=_get(bs, "fixed_L", int, 1),
                              energy_tol=_get(bs, "energy_tol", float, 1e-8))
        criterion = criterion_name(_get(on, "criterion", str, "midrange"))
    except LocromError as exc:
        raise ConfigError(str(exc)) from exc
    cfg = PipelineConfig(
        model=model,
        sampling=plan,
        steady_tol=_get(sv, "steady_tol", float, 1e-10),
        max_iter=_get(sv, "max_iter", int, 100),
        rom_tol=_get(sv, "rom_tol", float, 1e-10),
        rom_max_iter=_get(sv, "rom_max_iter", int, 3000),
        rom_method=_get(sv, "rom_method", str, "picard"),
        k=k,
        k_max=_get(cl, "k_max", int, 8),
        alpha=_get(cl, "alpha", float, 0.05),
        restarts=_get(cl, "restarts", int, 10),
        kmeans_max_iter=_get(cl, "max_iter", int, 300),
        seed=_get(cl, "seed", int, 0),
        truncation=rule,
        criterion=criterion,
        output_dir=_get(out, "dir", str, None),
    )
    _validate(cfg)
    return cfg


def _validate(cfg):
    if cfg.steady_tol <= 0 or cfg.rom_tol <= 0:
        raise ConfigError("tolerances must be positive")
    if cfg.max_iter < 1 or cfg.rom_max_iter < 1 or cfg.kmeans_max_iter < 1:
        raise ConfigError("iteration caps must be >= 1")
    if cfg.rom_method not in ("picard", "newton"):
        raise ConfigError(f"rom_method must be picard or newton, got {cfg.rom_method!r}")
    if not 0.0 < cfg.alpha < 1.0:
        raise ConfigError("alpha must lie in (0, 1)")
    if cfg.restarts < 1:
        raise ConfigError("restarts must be >= 1")
    if cfg.k is None and cfg.k_max < 3:
        raise ConfigError("k_max must be >= 3 for elbow selection")


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, base_dir=path.parent)


def write_config(path, cfg):
    textio.write_ini(path, cfg.to_sections())
