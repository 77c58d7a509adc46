"""Plain-text configuration files for the CLI.

Format: one ``key = value`` pair per line, ``#`` comments, blank lines
ignored.  Unknown or duplicate keys are errors, reported with their line
number.  Trigonometric polynomials (the potential and the nonlocal kernel)
are written as whitespace-separated terms ``c<modes>=<amp>`` or
``s<modes>=<amp>``, where ``<modes>`` is the integer mode vector,
comma-separated in 2D.  Example: ``potential = c1=0.5 s2=-0.1``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import ConfigError
from .grid import Grid
from .models import (
    ConvolutionCoupling,
    Lagrangian,
    LogCoupling,
    ModelSpec,
    PowerCoupling,
    Tolerances,
    TrigPoly,
)

_TERM_RE = re.compile(r"^([cs])(-?\d+(?:,-?\d+)*)=([^=]+)$")

_KNOWN_KEYS = {
    "dim",
    "n",
    "tau",
    "coupling",
    "potential",
    "power_exponent",
    "kernel",
    "normalization",
    "hj_tol",
    "fp_tol",
    "mfg_tol",
    "opt_tol",
    "ref_tol",
    "damping",
    "seed",
    "chain_steps",
    "chain_burn_in",
}

_REQUIRED_KEYS = ("dim", "n", "tau", "coupling")


@dataclass
class RunConfig:
    """A parsed configuration: the model plus simulation extras."""

    model: ModelSpec
    chain_steps: int = 1_000_000
    chain_burn_in: int = 10_000


def _parse_trig_terms(raw: str, dim: int, line: int) -> TrigPoly:
    terms = []
    for token in raw.split():
        match = _TERM_RE.match(token)
        if match is None:
            raise ConfigError(f"bad trig term {token!r}", line)
        kind, modes, amp = match.groups()
        kvec = tuple(int(v) for v in modes.split(","))
        if len(kvec) != dim:
            raise ConfigError(
                f"term {token!r} has {len(kvec)} mode components, expected {dim}", line
            )
        try:
            value = float(amp)
        except ValueError:
            raise ConfigError(f"bad amplitude in term {token!r}", line) from None
        terms.append((kvec, value if kind == "c" else 0.0, value if kind == "s" else 0.0))
    return TrigPoly.from_terms(dim, terms)


def _get_float(entries, key, line_of, default=None, required=False):
    if key not in entries:
        if required:
            raise ConfigError(f"missing required key {key!r}")
        return default
    try:
        return float(entries[key])
    except ValueError:
        raise ConfigError(f"value for {key!r} is not a number", line_of[key]) from None


def _get_int(entries, key, line_of, default=None, required=False):
    if key not in entries:
        if required:
            raise ConfigError(f"missing required key {key!r}")
        return default
    try:
        return int(entries[key])
    except ValueError:
        raise ConfigError(f"value for {key!r} is not an integer", line_of[key]) from None


def parse_config_text(text: str) -> RunConfig:
    entries: dict[str, str] = {}
    line_of: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"expected 'key = value', got {stripped!r}", lineno)
        key, _, value = stripped.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _KNOWN_KEYS:
            raise ConfigError(f"unknown key {key!r}", lineno)
        if key in entries:
            raise ConfigError(f"duplicate key {key!r}", lineno)
        entries[key] = value
        line_of[key] = lineno

    for key in _REQUIRED_KEYS:
        if key not in entries:
            raise ConfigError(f"missing required key {key!r}")

    dim = _get_int(entries, "dim", line_of, required=True)
    n = _get_int(entries, "n", line_of, required=True)
    try:
        grid = Grid(dim=dim, n=n)
    except ConfigError as exc:
        raise ConfigError(str(exc), line_of["n"]) from None
    tau = _get_float(entries, "tau", line_of, required=True)

    if "potential" in entries:
        potential = _parse_trig_terms(entries["potential"], dim, line_of["potential"])
    else:
        potential = TrigPoly.zero(dim)

    kind = entries["coupling"]
    if kind == "power":
        exponent = _get_float(entries, "power_exponent", line_of, required=True)
        try:
            coupling = PowerCoupling(exponent)
        except ConfigError as exc:
            raise ConfigError(str(exc), line_of["power_exponent"]) from None
    elif kind == "log":
        coupling = LogCoupling()
    elif kind == "nonlocal":
        if "kernel" not in entries:
            raise ConfigError("nonlocal coupling requires a 'kernel' entry")
        psi = _parse_trig_terms(entries["kernel"], dim, line_of["kernel"])
        try:
            coupling = ConvolutionCoupling(psi)
        except ConfigError as exc:
            raise ConfigError(str(exc), line_of["kernel"]) from None
    else:
        raise ConfigError(
            f"unknown coupling {kind!r} (expected power, log or nonlocal)",
            line_of["coupling"],
        )

    tol = Tolerances(
        hj_tol=_get_float(entries, "hj_tol", line_of, Tolerances.hj_tol),
        fp_tol=_get_float(entries, "fp_tol", line_of, Tolerances.fp_tol),
        mfg_tol=_get_float(entries, "mfg_tol", line_of, Tolerances.mfg_tol),
        opt_tol=_get_float(entries, "opt_tol", line_of, Tolerances.opt_tol),
        ref_tol=_get_float(entries, "ref_tol", line_of, Tolerances.ref_tol),
    )

    normalization = entries.get("normalization", "")
    if normalization not in ("", "point", "max_smooth"):
        raise ConfigError(
            f"unknown normalization {normalization!r}", line_of["normalization"]
        )

    model = ModelSpec(
        grid=grid,
        tau=tau,
        lagrangian=Lagrangian(potential=potential),
        coupling=coupling,
        normalization=normalization,
        tol=tol,
        damping=_get_float(entries, "damping", line_of, 0.5),
        seed=_get_int(entries, "seed", line_of, 0),
    )
    return RunConfig(
        model=model,
        chain_steps=_get_int(entries, "chain_steps", line_of, 1_000_000),
        chain_burn_in=_get_int(entries, "chain_burn_in", line_of, 10_000),
    )


def parse_config(path) -> RunConfig:
    with open(path) as fh:
        return parse_config_text(fh.read())
