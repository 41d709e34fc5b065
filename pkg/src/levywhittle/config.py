"""Experiment configuration: JSON parsing, validation and canonical serialization."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, LevyWhittleError
from .levy_noise import KernelFamily, KernelSpec, LevyDriverSpec, driver_cumulants, lattice_size
from .regression import RegressionFamily, RegressionModel
from .spectral import SpectralFamily, SpectralModel, WeightSpec, validate_weight_conditions
from .whittle import Gamma2Mode


@dataclass(frozen=True)
class ExperimentConfig:
    driver: LevyDriverSpec
    kernel: KernelSpec
    regression: RegressionModel
    alpha0: tuple
    spectral: SpectralModel
    theta0: tuple | None
    weights: WeightSpec
    T_ladder: tuple = (500.0, 1000.0, 2000.0)
    delta: float = 0.05
    replicates: int = 400
    seed: int = 20240601
    level: float = 0.95
    out_dir: str = "out"
    gamma2_mode: Gamma2Mode = Gamma2Mode.FROM_DRIVER
    gamma2_value: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def gamma2_driver(self):
        return driver_cumulants(self.driver)[2]

    def with_seed(self, seed):
        return replace(self, seed=int(seed))

    def to_dict(self):
        return {
            "driver": self.driver.to_dict(),
            "kernel": self.kernel.to_dict(),
            "regression": {**self.regression.to_dict(), "alpha0": list(self.alpha0)},
            "spectral": {**self.spectral.to_dict(),
                         "theta0": None if self.theta0 is None else list(self.theta0)},
            "weights": self.weights.to_dict(),
            "T_ladder": list(self.T_ladder),
            "delta": self.delta,
            "replicates": self.replicates,
            "seed": self.seed,
            "level": self.level,
            "out_dir": self.out_dir,
            "gamma2": {"mode": self.gamma2_mode.value, "value": self.gamma2_value},
            "extra": self.extra,
        }


def _section(d, key, path=""):
    full = f"{path}.{key}" if path else key
    if not isinstance(d, dict) or key not in d:
        raise ConfigError("missing required field", full)
    return d[key], full


def _build(fn, where):
    try:
        return fn()
    except ConfigError:
        raise
    except KeyError as exc:
        raise ConfigError(f"missing required field {exc.args[0]!r}", where) from exc
    except (LevyWhittleError, ValueError, TypeError) as exc:
        raise ConfigError(str(exc), where) from exc


def _positive_float(value, where):
    try:
        x = float(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"expected a number, got {value!r}", where) from exc
    if not (math.isfinite(x) and x > 0):
        raise ConfigError(f"must be positive and finite, got {value!r}", where)
    return x


def default_theta0(kernel: KernelSpec, driver: LevyDriverSpec, spectral: SpectralModel):
    """True spectral parameter implied by the simulated noise, when the families match."""
    d2 = driver_cumulants(driver)[0]
    if spectral.family is SpectralFamily.CAR2 and kernel.family is KernelFamily.CAR2:
        return (kernel.decay, d2, kernel.frequency)
    if spectral.family is SpectralFamily.OU and kernel.family is KernelFamily.OU:
        return (kernel.decay, d2)
    return None


def config_from_dict(d) -> ExperimentConfig:
    """Parse and validate a configuration document.

    Raises:
        ConfigError: naming the offending field path.
    """
    if not isinstance(d, dict):
        raise ConfigError("top level must be a JSON object")
    drv_d, where = _section(d, "driver")
    driver = _build(lambda: LevyDriverSpec.from_dict(drv_d), where)
    _build(lambda: driver_cumulants(driver), where)
    ker_d, where = _section(d, "kernel")
    kernel = _build(lambda: KernelSpec.from_dict(ker_d), where)

    reg_d, where = _section(d, "regression")
    regression = _build(lambda: RegressionModel.from_dict(reg_d), where)
    a0, where_a0 = _section(reg_d, "alpha0", "regression")
    alpha0 = tuple(_build(lambda: regression.check(a0).tolist(), where_a0))

    spec_d, where = _section(d, "spectral")
    spectral = _build(lambda: SpectralModel.from_dict(spec_d), where)
    theta0 = spec_d.get("theta0")
    if theta0 is None:
        theta0 = default_theta0(kernel, driver, spectral)
    else:
        theta0 = tuple(_build(lambda: spectral.check(theta0).tolist(), "spectral.theta0"))

    w_d, where = _section(d, "weights")
    weights = _build(lambda: WeightSpec.from_dict(w_d), where)
    report = validate_weight_conditions(weights, spectral)
    if not report.passed:
        raise ConfigError("config rejected: " + "; ".join(report.violations), "weights")

    delta = _positive_float(d.get("delta", 0.05), "delta")
    ladder = d.get("T_ladder", [500, 1000, 2000])
    if not isinstance(ladder, list) or not ladder:
        raise ConfigError("must be a nonempty list", "T_ladder")
    T_ladder = tuple(_positive_float(T, f"T_ladder[{i}]") for i, T in enumerate(ladder))
    for i, T in enumerate(T_ladder):
        _build(lambda: lattice_size(T, delta), f"T_ladder[{i}]")

    nyquist = math.pi / delta
    if weights.cutoff() > nyquist:
        raise ConfigError(f"weight cutoff {weights.cutoff():.4g} exceeds Nyquist pi/delta = {nyquist:.4g}",
                          "delta")
    if regression.family is RegressionFamily.TRIGONOMETRIC:
        top = max(regression.bounds[k][1] for k in regression.frequency_index)
        if top >= nyquist:
            raise ConfigError(f"regression frequency bound {top:g} reaches Nyquist {nyquist:.4g}",
                              "delta")

    replicates = d.get("replicates", 400)
    if not isinstance(replicates, int) or isinstance(replicates, bool) or replicates < 1:
        raise ConfigError(f"must be a positive integer, got {replicates!r}", "replicates")
    seed = d.get("seed", 20240601)
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2**64:
        raise ConfigError(f"must be an unsigned 64-bit integer, got {seed!r}", "seed")
    level = d.get("level", 0.95)
    if not isinstance(level, (int, float)) or not 0 < level < 1:
        raise ConfigError(f"must lie in (0, 1), got {level!r}", "level")

    g_d = d.get("gamma2", {"mode": "from-driver"})
    mode = _build(lambda: Gamma2Mode(g_d.get("mode", "from-driver")), "gamma2.mode")
    g_value = g_d.get("value", 0.0)
    if not isinstance(g_value, (int, float)) or g_value < 0:
        raise ConfigError(f"must be a nonnegative number, got {g_value!r}", "gamma2.value")

    return ExperimentConfig(driver=driver, kernel=kernel, regression=regression, alpha0=alpha0,
                            spectral=spectral, theta0=None if theta0 is None else tuple(theta0),
                            weights=weights, T_ladder=T_ladder, delta=delta,
                            replicates=replicates, seed=seed, level=float(level),
                            out_dir=str(d.get("out_dir", "out")), gamma2_mode=mode,
                            gamma2_value=float(g_value), extra=dict(d.get("extra", {})))


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", str(path)) from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return config_from_dict(doc)


# ---------------------------------------------------------------------------
# canonical output
# ---------------------------------------------------------------------------

def format_float(x):
    """17 significant digits, with ``nan``/``inf`` spelled out."""
    x = float(x) + 0.0  # folds -0.0 into 0.0
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def _canonical(obj):
    if isinstance(obj, dict):
        return {str(k): _canonical(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_canonical(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _canonical(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _Float(float(obj))
    if hasattr(obj, "value") and isinstance(obj.value, str):
        return obj.value
    return obj


class _Float(float):
    """Float marker so the encoder can print 17 significant digits."""


def dumps(obj) -> str:
    """Deterministic JSON with sorted keys and 17-digit floats."""

    def enc(o, indent):
        pad = "  " * indent
        if isinstance(o, _Float):
            s = format_float(o)
            return s if s not in ("nan", "inf", "-inf") else json.dumps(s)
        if isinstance(o, dict):
            if not o:
                return "{}"
            items = [f'{pad}  {json.dumps(k)}: {enc(o[k], indent + 1)}' for k in sorted(o)]
            return "{\n" + ",\n".join(items) + "\n" + pad + "}"
        if isinstance(o, list):
            if not o:
                return "[]"
            if all(not isinstance(v, (dict, list)) for v in o):
                return "[" + ", ".join(enc(v, indent + 1) for v in o) + "]"
            items = [pad + "  " + enc(v, indent + 1) for v in o]
            return "[\n" + ",\n".join(items) + "\n" + pad + "]"
        return json.dumps(o)

    return enc(_canonical(obj), 0) + "\n"


def write_csv(path, header, rows):
    """CSV with a fixed header; floats as 17 significant digits."""

    def cell(v):
        if isinstance(v, (bool, np.bool_)):
            return "1" if v else "0"
        if isinstance(v, (float, np.floating)):
            return format_float(v)
        return str(v)

    lines = [",".join(header)] + [",".join(cell(v) for v in row) for row in rows]
    Path(path).write_text("\n".join(lines) + "\n")
