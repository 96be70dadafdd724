"""Plain-text experiment configuration.

Format::

    # comment
    [problem]
    kind = centroid
    n = 1000

    [policy]
    label = polyak
    policy = splr

    [run]
    iters = 500
    seeds = auto:40

Every key is validated against the section schema; errors carry the line
number.  ``[policy]`` may repeat, the other sections may not.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import objective
from .harness import initial_point, scheduled_policy, stochastic_caps
from .objective import MiniBatchOracle, Problem
from .stepsize import POLICY_KINDS, Caps, StepPolicy


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, path=None):
        where = ""
        if path is not None:
            where = f"{path}:" + (f"{line}: " if line else " ")
        elif line:
            where = f"line {line}: "
        super().__init__(where + message)
        self.line = line


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.replace(",", " ").split()]


def _choice(*options):
    def conv(text):
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return text
    return conv


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise ValueError("must be a positive integer")
    return v


def _seeds(text: str) -> list[int]:
    if text.startswith("auto:"):
        n = _positive_int(text[5:])
        return list(range(1, n + 1))
    seeds = [int(t) for t in text.replace(",", " ").split()]
    if not seeds:
        raise ValueError("empty seed list")
    return seeds


SCHEMA = {
    "problem": {
        "kind": _choice("centroid", "quadratic", "logistic"),
        "data": str,
        "n": _positive_int,
        "d": _positive_int,
        "mean": float,
        "scale": float,
        "seed": int,
        "eigenvalues": _floats,
        "mu": float,
        "ell": float,
        "center": _floats,
        "offset": float,
        "lambda": float,
        "label_noise": float,
    },
    "policy": {
        "label": str,
        "policy": _choice(*POLICY_KINDS),
        "h0": float,
        "decay_factor": float,
        "decay_period": _positive_int,
        "f_star": float,
        "gamma0": float,
        "gamma_p": float,
        "h_min": float,
        "h_max": float,
        "refresh": _positive_int,
    },
    "run": {
        "name": str,
        "iters": _positive_int,
        "seeds": _seeds,
        "q0": float,
        "x0": _floats,
        "x0_seed": int,
        "record_stride": _positive_int,
        "stop_grad_norm": float,
        "source": _choice("minibatch", "full"),
        "batch_size": _positive_int,
        "sampling": _choice("with", "without"),
        "moment": _choice("auto", "exact", "estimated"),
        "moment_samples": _positive_int,
        "scenario": _choice("none", "good_init"),
        "q0_small": float,
        "workers": _positive_int,
    },
    "heatmap": {
        "x_min": float,
        "x_max": float,
        "y_min": float,
        "y_max": float,
        "resolution": _positive_int,
    },
}
REPEATABLE = {"policy"}


@dataclass
class Section:
    name: str
    line: int
    values: dict = field(default_factory=dict)
    lines: dict = field(default_factory=dict)

    def get(self, key, default=None):
        return self.values.get(key, default)

    def __contains__(self, key):
        return key in self.values


@dataclass
class Config:
    sections: list[Section]
    path: Path | None = None

    def section(self, name: str, required: bool = False) -> Section | None:
        for s in self.sections:
            if s.name == name:
                return s
        if required:
            raise ConfigError(f"missing [{name}] section", path=self.path)
        return None

    def all(self, name: str) -> list[Section]:
        return [s for s in self.sections if s.name == name]

    def error(self, message, section: Section | None = None, key: str | None = None):
        line = None
        if section is not None:
            line = section.lines.get(key, section.line) if key else section.line
        return ConfigError(message, line, self.path)


def parse_config(text: str, path=None) -> Config:
    """Parse config text; any problem raises :class:`ConfigError` with a line number."""
    sections: list[Section] = []
    seen: set[str] = set()
    current = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError("malformed section header", lineno, path)
            name = line[1:-1].strip()
            if name not in SCHEMA:
                raise ConfigError(f"unknown section [{name}]", lineno, path)
            if name in seen and name not in REPEATABLE:
                raise ConfigError(f"duplicate section [{name}]", lineno, path)
            seen.add(name)
            current = Section(name, lineno)
            sections.append(current)
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}", lineno, path)
        if current is None:
            raise ConfigError("key outside of any section", lineno, path)
        key, value = (t.strip() for t in line.split("=", 1))
        schema = SCHEMA[current.name]
        if key not in schema:
            raise ConfigError(f"unknown key {key!r} in [{current.name}]", lineno, path)
        if key in current.values:
            raise ConfigError(f"duplicate key {key!r}", lineno, path)
        try:
            current.values[key] = schema[key](value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}", lineno, path) from None
        current.lines[key] = lineno
    for s in sections:
        if s.name == "policy" and "policy" not in s:
            raise ConfigError("policy block does not name a variant ('policy = ...')", s.line, path)
    return Config(sections, Path(path) if path is not None else None)


def load_config(path) -> Config:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", path=path) from None
    return parse_config(text, path)


# --- building objects ------------------------------------------------------


def build_problem(cfg: Config) -> Problem:
    sec = cfg.section("problem", required=True)
    kind = sec.get("kind")
    if kind is None:
        raise cfg.error("[problem] needs 'kind'", sec)
    try:
        data = objective.load_samples(sec.get("data")) if "data" in sec else None
        if kind == "centroid":
            if data is not None:
                return objective.Centroid(data)
            return objective.gaussian_cloud(sec.get("n", 1000), sec.get("d", 2), sec.get("mean", 0.0),
                                            sec.get("scale", 1.0), sec.get("seed", 0))
        if kind == "quadratic":
            if "eigenvalues" in sec:
                return objective.Quadratic(sec.get("eigenvalues"), sec.get("center"), sec.get("offset", 0.0))
            return objective.random_quadratic(sec.get("d", 2), sec.get("mu", 1.0), sec.get("ell", 10.0),
                                              sec.get("seed", 0), sec.get("center"), sec.get("offset", 0.0))
        lam = sec.get("lambda", 0.1)
        if data is not None:
            # last column holds the +-1 label
            return objective.Logistic(data[:, :-1], data[:, -1], lam)
        return objective.random_logistic(sec.get("n", 1000), sec.get("d", 2), lam, sec.get("seed", 0),
                                         sec.get("label_noise", 0.1))
    except (ValueError, OSError) as exc:
        raise cfg.error(f"invalid problem: {exc}", sec) from None


def build_source(cfg: Config, problem: Problem) -> MiniBatchOracle | None:
    sec = cfg.section("run") or Section("run", 0)
    if sec.get("source", "minibatch") == "full":
        return None
    m = sec.get("batch_size", min(100, problem.n_samples))
    if m > problem.n_samples:
        raise cfg.error(f"batch_size {m} exceeds sample count {problem.n_samples}", sec, "batch_size")
    return MiniBatchOracle(m, sec.get("sampling", "without"), 0, sec.get("moment", "auto"),
                           sec.get("moment_samples", 64))


def build_x0(cfg: Config, problem: Problem) -> np.ndarray:
    sec = cfg.section("run") or Section("run", 0)
    if "x0" in sec:
        x0 = np.asarray(sec.get("x0"))
        if x0.shape != (problem.dimension,):
            raise cfg.error(f"x0 must have {problem.dimension} entries", sec, "x0")
        return x0
    q0 = sec.get("q0", 1.0)
    if not q0 > 0:
        raise cfg.error("q0 must be positive", sec, "q0")
    return initial_point(problem, q0, sec.get("x0_seed", 0))


def build_policy(cfg: Config, sec: Section, problem: Problem, source, x0) -> tuple[str, StepPolicy]:
    kind = sec.get("policy")
    label = sec.get("label", kind)
    caps = None
    if "h_min" in sec or "h_max" in sec:
        caps = Caps(sec.get("h_min", 0.0), sec.get("h_max", math.inf))
    f_star = sec.get("f_star", problem.f_star)
    try:
        if kind == "fixed":
            pol = StepPolicy.fixed(_required(cfg, sec, "h0"), caps)
        elif kind == "epoch":
            pol = StepPolicy.epoch_decay(sec.get("h0", 0.6), sec.get("decay_factor", 6.0),
                                         sec.get("decay_period", 100), caps)
        elif kind == "scheduled":
            pol = scheduled_policy(problem, source, x0, caps)
        elif kind == "polyak":
            pol = StepPolicy.polyak(f_star, caps)
        elif kind == "splr":
            pol = stochastic_caps(problem, StepPolicy.splr(f_star, sec.get("refresh", 1), caps))
        else:
            pol = stochastic_caps(problem, StepPolicy.splr_estimated(sec.get("gamma0", 1.0),
                                                                     sec.get("gamma_p", 0.5), caps))
    except ValueError as exc:
        raise cfg.error(f"invalid policy {label!r}: {exc}", sec) from None
    return label, pol


def _required(cfg, sec, key):
    if key not in sec:
        raise cfg.error(f"policy '{sec.get('policy')}' needs '{key}'", sec)
    return sec.get(key)


def build_policies(cfg: Config, problem, source, x0) -> list[tuple[str, StepPolicy]]:
    blocks = cfg.all("policy")
    if not blocks:
        raise cfg.error("at least one [policy] block is required")
    out = []
    labels = set()
    for sec in blocks:
        label, pol = build_policy(cfg, sec, problem, source, x0)
        if label in labels:
            raise cfg.error(f"duplicate policy label {label!r}", sec, "label")
        labels.add(label)
        out.append((label, pol))
    return out
