"""Sweep configuration: YAML schema, defaults and validation.

Reference schema (every key except ``experiment`` and ``grids.gamma`` is
optional)::

    experiment: rf_regression        # | linear_regression | rf_classification
    estimators: [erm, subsample, {reweighted_ridge: [1.0e-2, 1.0e-4]}]
    grids:
      gamma: [1.5, 2, 4]             # N/n for random features, d/n for linear
      theta_deg: [0, 90, 180]
      pi: [0.8]
    dims: {d: 200, n: 400}           # linear: n is fixed and d = round(gamma n)
    signal: {norm_b0: 1, norm_b1: 1, snr: 10}   # tau^2 = norm_b0^2 / snr
    activation: relu                 # relu | sigmoid | tanh
    replicates: 10
    m_test: 20000
    master_seed: 0
    feature_law: sphere              # law of x; default sphere (gaussian for classification)
    theta_law: sphere                # law of the random-feature weights, same defaults
    output: {csv: results.csv, svg: results.svg, x_axis: gamma, series_key: theta_deg}
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import yaml

from .errors import ConfigParseError, ConfigValidationError
from .moments import BUILTIN
from .sim import FEATURE_LAWS, GAUSSIAN, SPHERE

EXPERIMENTS = ("rf_regression", "linear_regression", "rf_classification")
ESTIMATOR_NAMES = ("erm", "subsample", "reweighted_ridge")
AXES = ("gamma", "pi", "theta_deg")
SERIES_KEYS = ("theta_deg", "pi", "gamma", "estimator")

_TOP_KEYS = {
    "experiment",
    "estimators",
    "grids",
    "dims",
    "signal",
    "activation",
    "replicates",
    "m_test",
    "master_seed",
    "feature_law",
    "theta_law",
    "output",
}
_SECTION_KEYS = {
    "grids": {"gamma", "theta_deg", "pi"},
    "dims": {"d", "n"},
    "signal": {"norm_b0", "norm_b1", "snr"},
    "output": {"csv", "svg", "x_axis", "series_key"},
}

_DIMS = {
    "rf_regression": {"d": 200, "n": 400},
    "linear_regression": {"d": None, "n": 300},
    "rf_classification": {"d": 200, "n": 400},
}
_SIGNAL = {
    "rf_regression": (1.0, 1.0, 10.0),
    "linear_regression": (1.0, 1.0, 10.0),
    "rf_classification": (10.0, 10.0, 10.0),
}
_M_TEST = {"rf_regression": 20_000, "linear_regression": 20_000, "rf_classification": 10_000}


@dataclass(frozen=True)
class Estimator:
    name: str
    lam: float | None = None

    @property
    def label(self) -> str:
        return self.name if self.lam is None else f"{self.name}@{self.lam!r}"


@dataclass(frozen=True)
class Grids:
    gamma: tuple[float, ...]
    theta_deg: tuple[float, ...] = (180.0,)
    pi: tuple[float, ...] = (0.8,)


@dataclass(frozen=True)
class Dims:
    d: int | None
    n: int


@dataclass(frozen=True)
class Signal:
    norm_b0: float = 1.0
    norm_b1: float = 1.0
    snr: float = 10.0

    @property
    def tau(self) -> float:
        return self.norm_b0 / math.sqrt(self.snr)


@dataclass(frozen=True)
class Output:
    csv: str = "results.csv"
    svg: str = "results.svg"
    x_axis: str = "gamma"
    series_key: str = "theta_deg"


@dataclass(frozen=True)
class SweepConfig:
    experiment: str
    estimators: tuple[Estimator, ...]
    grids: Grids
    dims: Dims
    signal: Signal
    activation: str = "relu"
    replicates: int = 10
    m_test: int = 20_000
    master_seed: int = 0
    feature_law: str = SPHERE
    theta_law: str = SPHERE
    output: Output = field(default_factory=Output)

    def with_seed(self, seed: int) -> "SweepConfig":
        return replace(self, master_seed=int(seed))


def _key_lines(node, prefix=()):
    """Map key paths to 1-based line numbers from a composed YAML node."""
    lines = {}
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            path = prefix + (str(k.value),)
            lines[path] = k.start_mark.line + 1
            lines.update(_key_lines(v, path))
    return lines


def load_yaml(text: str):
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        line = mark.line + 1 if mark is not None else None
        raise ConfigParseError(str(exc.problem or exc), line=line) from None
    except yaml.YAMLError as exc:
        raise ConfigParseError(str(exc)) from None
    if not isinstance(data, dict):
        raise ConfigParseError("top level must be a mapping", line=1)
    return data, _key_lines(node)


def parse_config(path) -> SweepConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigParseError(f"cannot read {path}: {exc.strerror}") from None
    return config_from_text(text)


def config_from_text(text: str) -> SweepConfig:
    data, lines = load_yaml(text)
    return config_from_dict(data, lines)


class _Checker:
    def __init__(self, lines):
        self.lines = lines
        self.violations = []

    def add(self, path, message):
        line = self.lines.get(tuple(path))
        where = ".".join(path)
        loc = f"line {line}, " if line else ""
        self.violations.append(f"[{loc}field {where!r}] {message}")

    def number(self, path, value, *, integer=False, low=None, low_open=False, high=None, high_open=False):
        if isinstance(value, str) and not integer:
            # YAML 1.1 reads 1e-8 (no dot) as a string
            try:
                value = float(value)
            except ValueError:
                pass
        ok_type = isinstance(value, int) if integer else isinstance(value, (int, float))
        if isinstance(value, bool) or not ok_type:
            self.add(path, f"expected {'an integer' if integer else 'a number'}, got {value!r}")
            return None
        if not integer and not math.isfinite(value):
            self.add(path, f"must be finite, got {value!r}")
            return None
        if low is not None and (value <= low if low_open else value < low):
            self.add(path, f"must be {'>' if low_open else '>='} {low}, got {value!r}")
            return None
        if high is not None and (value >= high if high_open else value > high):
            self.add(path, f"must be {'<' if high_open else '<='} {high}, got {value!r}")
            return None
        return int(value) if integer else float(value)

    def number_list(self, path, value, **bounds):
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            value = [value]
        if not isinstance(value, list) or not value:
            self.add(path, f"expected a non-empty list of numbers, got {value!r}")
            return None
        out = [self.number(path, v, **bounds) for v in value]
        return None if any(v is None for v in out) else tuple(out)

    def section(self, data, name):
        raw = data.get(name, {})
        if raw is None:
            raw = {}
        if not isinstance(raw, dict):
            self.add([name], f"expected a mapping, got {raw!r}")
            return {}
        for key in raw:
            if key not in _SECTION_KEYS[name]:
                self.add([name, str(key)], f"unknown key; allowed: {sorted(_SECTION_KEYS[name])}")
        return raw


def _estimators(chk, raw, experiment):
    if raw is None:
        raw = ["erm"]
    if isinstance(raw, (str, dict)):
        raw = [raw]
    if not isinstance(raw, list) or not raw:
        chk.add(["estimators"], f"expected a non-empty list, got {raw!r}")
        return ()
    out = []
    for item in raw:
        if isinstance(item, str):
            if item == "reweighted_ridge":
                chk.add(["estimators"], "reweighted_ridge needs a lambda list: {reweighted_ridge: [...]}")
            elif item not in ESTIMATOR_NAMES:
                chk.add(["estimators"], f"unknown estimator {item!r}; allowed: {list(ESTIMATOR_NAMES)}")
            else:
                out.append(Estimator(item))
        elif isinstance(item, dict) and len(item) == 1 and "reweighted_ridge" in item:
            lams = chk.number_list(["estimators", "reweighted_ridge"], item["reweighted_ridge"], low=0.0)
            for lam in lams or ():
                out.append(Estimator("reweighted_ridge", lam))
        else:
            chk.add(["estimators"], f"cannot read estimator entry {item!r}")
    if experiment == "rf_classification" and any(e.name == "reweighted_ridge" for e in out):
        chk.add(["estimators"], "reweighted_ridge is not available for rf_classification")
    if len(set(out)) != len(out):
        chk.add(["estimators"], "duplicate estimator entries")
    return tuple(out)


def config_from_dict(data: dict, lines: dict | None = None) -> SweepConfig:
    """Validate a parsed tree, fill defaults and collect every violation."""
    chk = _Checker(lines or {})
    for key in data:
        if key not in _TOP_KEYS:
            chk.add([str(key)], f"unknown key; allowed: {sorted(_TOP_KEYS)}")

    experiment = data.get("experiment")
    if experiment is None:
        chk.add(["experiment"], f"required; one of {list(EXPERIMENTS)}")
    elif experiment not in EXPERIMENTS:
        chk.add(["experiment"], f"must be one of {list(EXPERIMENTS)}, got {experiment!r}")
        experiment = None
    exp = experiment or "rf_regression"

    estimators = _estimators(chk, data.get("estimators"), experiment)

    g = chk.section(data, "grids")
    gamma = None
    if "gamma" not in g:
        chk.add(["grids", "gamma"], "required")
    else:
        gamma = chk.number_list(["grids", "gamma"], g["gamma"], low=0.0, low_open=True)
    theta = chk.number_list(["grids", "theta_deg"], g.get("theta_deg", [180.0]), low=0.0, high=360.0, high_open=True)
    pi = chk.number_list(["grids", "pi"], g.get("pi", [0.8]), low=0.0, low_open=True, high=1.0)

    dsec = chk.section(data, "dims")
    ddef = _DIMS[exp]
    n = chk.number(["dims", "n"], dsec.get("n", ddef["n"]), integer=True, low=1)
    d = None
    if exp == "linear_regression":
        if dsec.get("d") is not None:
            chk.add(["dims", "d"], "linear_regression derives d = round(gamma * n); remove d")
    else:
        d = chk.number(["dims", "d"], dsec.get("d", ddef["d"]), integer=True, low=2)

    ssec = chk.section(data, "signal")
    b0, b1, snr = _SIGNAL[exp]
    b0 = chk.number(["signal", "norm_b0"], ssec.get("norm_b0", b0), low=0.0)
    b1 = chk.number(["signal", "norm_b1"], ssec.get("norm_b1", b1), low=0.0)
    snr = chk.number(["signal", "snr"], ssec.get("snr", snr), low=0.0, low_open=True)

    activation = data.get("activation", "relu")
    if not isinstance(activation, str) or activation.lower() not in BUILTIN or activation.lower() == "identity":
        chk.add(["activation"], f"must be one of relu, sigmoid, tanh; got {activation!r}")
        activation = "relu"
    activation = activation.lower()

    replicates = chk.number(["replicates"], data.get("replicates", 10), integer=True, low=1)
    m_low = 1000 if exp == "rf_classification" else 100
    m_test = chk.number(["m_test"], data.get("m_test", _M_TEST[exp]), integer=True, low=m_low)
    seed = chk.number(["master_seed"], data.get("master_seed", 0), integer=True, low=0, high=2**64 - 1)

    law_default = GAUSSIAN if exp == "rf_classification" else SPHERE
    laws = {}
    for key in ("feature_law", "theta_law"):
        law = data.get(key, law_default)
        if law not in FEATURE_LAWS:
            chk.add([key], f"must be one of {list(FEATURE_LAWS)}, got {law!r}")
            law = law_default
        laws[key] = law

    osec = chk.section(data, "output")
    out = Output()
    for key in ("csv", "svg"):
        if key in osec and not isinstance(osec[key], str):
            chk.add(["output", key], f"expected a file name, got {osec[key]!r}")
    x_axis = osec.get("x_axis", out.x_axis)
    if x_axis not in AXES:
        chk.add(["output", "x_axis"], f"must be one of {list(AXES)}, got {x_axis!r}")
    series = osec.get("series_key", out.series_key)
    if series not in SERIES_KEYS:
        chk.add(["output", "series_key"], f"must be one of {list(SERIES_KEYS)}, got {series!r}")
    if x_axis == series:
        chk.add(["output", "series_key"], "series_key must differ from x_axis")

    if chk.violations:
        raise ConfigValidationError(chk.violations)
    return SweepConfig(
        experiment=experiment,
        estimators=estimators,
        grids=Grids(gamma, theta, pi),
        dims=Dims(d, n),
        signal=Signal(b0, b1, snr),
        activation=activation,
        replicates=replicates,
        m_test=m_test,
        master_seed=seed,
        feature_law=laws["feature_law"],
        theta_law=laws["theta_law"],
        output=Output(
            str(osec.get("csv", out.csv)), str(osec.get("svg", out.svg)), x_axis, series
        ),
    )
