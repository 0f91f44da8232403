"""Helpers for the ``key = value`` text headers used in artifact stores."""

import configparser

from .errors import CorruptStoreError


def fmt(x):
    """Shortest exact round-trip repr for floats."""
    return repr(float(x))


def fmt_list(values):
    return ", ".join(fmt(v) for v in values)


def parse_floats(text):
    text = text.strip()
    return [float(t) for t in text.split(",")] if text else []


def parse_words(text):
    text = text.strip()
    return [t.strip() for t in text.split(",")] if text else []


def fmt_schedule(schedule):
    return ", ".join(f"{fmt(lo)}:{fmt(hi)}:{int(k)}" for lo, hi, k in schedule)


def parse_schedule(text):
    out = []
    for item in parse_words(text):
        lo, hi, k = item.split(":")
        out.append((float(lo), float(hi), int(k)))
    return tuple(out)


def model_spec_to_section(spec):
    sec = {}
    for key, value in spec.items():
        if key == "schedule":
            sec[key] = fmt_schedule(value)
        elif key == "parameter_domain":
            sec[key] = fmt_list(value)
        elif isinstance(value, float):
            sec[key] = fmt(value)
        else:
            sec[key] = str(value)
    return sec


def model_spec_from_section(sec):
    spec = {}
    for key, value in sec.items():
        if key == "schedule":
            spec[key] = parse_schedule(value)
        elif key == "parameter_domain":
            spec[key] = tuple(parse_floats(value))
        elif key in ("n_interior",):
            spec[key] = int(value)
        elif key in ("domain_length", "seed_amplitude"):
            spec[key] = float(value)
        else:
            spec[key] = value
    return spec


def write_ini(path, sections):
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    for name, values in sections.items():
        cp[name] = {k: str(v) for k, v in values.items()}
    with open(path, "w") as fh:
        cp.write(fh)


def read_ini(path):
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise CorruptStoreError(f"{path}: {exc}") from exc
    return cp
