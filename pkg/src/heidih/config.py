"""TOML experiment configuration.

The schema is versioned and closed: unknown keys are hard errors, as is a
schema_version other than the supported one. A minimal file needs only the
kernel parameters and the horizon; everything else has the documented
defaults (see README for the full schema).
"""

import os
from dataclasses import dataclass, field

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .experiments import PRICE_RULES, STUDY_KINDS, StudyConfig
from .kernels import KernelSpec, MaternParams, WeightFn

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Malformed or invalid configuration."""


# allowed keys per section; None marks a nested table
_SCHEMA = {
    "schema_version": {},
    "kernel": {
        "nu": {},
        "mu": {},
        "zeta": {},
        "embedding_doublings": {},
        "embedding_tol": {},
        "weight": {"kind": {}, "alpha": {}, "scale": {}, "center": {}, "half_width": {}, "amplitude": {}},
    },
    "model": {"a": {}, "T": {}, "domain": {}, "scaling": {}},
    "run": {"samples": {}, "seed": {}, "workers": {}, "record_walltime": {}},
    "study": {
        "kind": {},
        "spatial": {"k_log2": {}, "h_ref_log2": {}, "h_ladder_log2": {}},
        "temporal": {"h_log2": {}, "k_ref_log2": {}, "k_ladder_log2": {}, "coupled": {}},
        "price": {"rules": {}, "hk_k_ref_log2": {}, "hk_k_ladder_log2": {}, "sq_k_ref_log2": {}, "sq_k_ladder_log2": {}},
        "holder": {"h_log2": {}, "k_log2": {}, "sep_log2": {}, "probes": {}},
        "localization": {"h_log2": {}, "k_log2": {}, "domains": {}, "domain_max": {}, "probe_x": {}},
        "timing": {"k_log2s": {}, "reps": {}, "nu": {}},
    },
    "sample": {
        "h_log2": {},
        "k_log2": {},
        "curve_level": {},
        "curve_bump_center": {},
        "curve_bump_half_width": {},
        "curve_bump_amplitude": {},
        "x_max": {},
        "points": {},
    },
    "strict": None,  # free-form slope windows, validated separately
}


def _check_keys(data: dict, schema: dict, prefix: str = "") -> None:
    for key, value in data.items():
        if key not in schema:
            raise ConfigError(f"unknown configuration key {prefix}{key!r}")
        sub = schema[key]
        if sub is None:
            continue
        if isinstance(value, dict):
            if not sub:
                raise ConfigError(f"section not allowed at {prefix}{key!r}")
            _check_keys(value, sub, prefix=f"{prefix}{key}.")
        elif sub and not isinstance(value, dict):
            raise ConfigError(f"{prefix}{key!r} must be a section")


@dataclass(frozen=True)
class StrictRule:
    param: str
    min_slope: float | None
    max_slope: float | None


@dataclass(frozen=True)
class SampleParams:
    h_log2: int = -7
    k_log2: int = -7
    curve_level: float = 1.0
    curve_bump_center: float = 1.0
    curve_bump_half_width: float = 0.5
    curve_bump_amplitude: float = 0.0
    x_max: float = 2.0
    points: int = 65


@dataclass(frozen=True)
class ParsedConfig:
    nus: tuple
    mu: float
    zeta: float
    weight: WeightFn
    embedding_doublings: int
    embedding_tol: float
    a: float
    T: float
    domain: float | None
    scaling: float
    samples: int
    seed: int
    workers: int
    record_walltime: bool
    study_kind: str | None
    study_tables: dict = field(default_factory=dict)
    sample: SampleParams = field(default_factory=SampleParams)
    strict_rules: tuple = ()

    def kernel(self, nu: float | None = None) -> KernelSpec:
        nu = self.nus[0] if nu is None else nu
        return KernelSpec(MaternParams(nu=nu, mu=self.mu, zeta=self.zeta), self.weight)

    def study_config(self, kind: str | None = None, **overrides) -> StudyConfig:
        kind = kind or self.study_kind
        if kind is None:
            raise ConfigError("no study kind given (set [study].kind or pass --study)")
        if kind not in STUDY_KINDS:
            raise ConfigError(f"unknown study kind {kind!r}")
        kwargs = dict(
            kind=kind,
            nus=self.nus,
            mu=self.mu,
            zeta=self.zeta,
            weight=self.weight,
            embedding_doublings=self.embedding_doublings,
            embedding_tol=self.embedding_tol,
            a=self.a,
            T=self.T,
            D=self.domain,
            scaling=self.scaling,
            samples=self.samples,
            master_seed=self.seed,
            workers=self.workers,
            record_walltime=self.record_walltime,
        )
        remap = {
            "spatial": {"k_log2": "spatial_k_log2", "h_ref_log2": "spatial_h_ref_log2", "h_ladder_log2": "spatial_h_ladder_log2"},
            "temporal": {
                "h_log2": "temporal_h_log2",
                "k_ref_log2": "temporal_k_ref_log2",
                "k_ladder_log2": "temporal_k_ladder_log2",
                "coupled": "coupled",
            },
            "price": {
                "rules": "price_rules",
                "hk_k_ref_log2": "price_hk_k_ref_log2",
                "hk_k_ladder_log2": "price_hk_k_ladder_log2",
                "sq_k_ref_log2": "price_sq_k_ref_log2",
                "sq_k_ladder_log2": "price_sq_k_ladder_log2",
            },
            "holder": {"h_log2": "holder_h_log2", "k_log2": "holder_k_log2", "sep_log2": "holder_sep_log2", "probes": "holder_probes"},
            "localization": {"h_log2": "loc_h_log2", "k_log2": "loc_k_log2", "domains": "loc_domains", "domain_max": "loc_domain_max", "probe_x": "loc_probe_x"},
            "timing": {"k_log2s": "timing_k_log2s", "reps": "timing_reps", "nu": "timing_nu"},
        }
        for section, table in self.study_tables.items():
            for key, value in table.items():
                kwargs[remap[section][key]] = tuple(value) if isinstance(value, list) else value
        kwargs.update(overrides)
        try:
            return StudyConfig(**kwargs)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


def _scalar(table, key, kind, default, path):
    value = table.get(key, default)
    if value is None:
        return None
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, kind) or isinstance(value, bool) and kind is not bool:
        raise ConfigError(f"{path}.{key} must be {kind.__name__}, got {value!r}")
    return value


def _weight_from(table) -> WeightFn:
    kind = table.get("kind", "constant")
    try:
        if kind == "constant":
            return WeightFn.constant()
        if kind == "polynomial":
            return WeightFn.polynomial(alpha=float(table["alpha"]), scale=float(table.get("scale", 1.0)))
        if kind == "bump":
            return WeightFn.bump(
                center=float(table["center"]),
                half_width=float(table["half_width"]),
                amplitude=float(table.get("amplitude", 1.0)),
            )
    except KeyError as exc:
        raise ConfigError(f"kernel.weight missing field {exc.args[0]!r} for kind {kind!r}") from exc
    except ValueError as exc:
        raise ConfigError(f"kernel.weight: {exc}") from exc
    raise ConfigError(f"kernel.weight.kind must be constant|polynomial|bump, got {kind!r}")


def _strict_rules(table) -> tuple:
    rules = []
    if not isinstance(table, dict) or set(table) - {"slope"}:
        raise ConfigError("strict section supports only [strict.slope.\"<param>\"] tables")
    for param, window in table.get("slope", {}).items():
        if not isinstance(window, dict) or set(window) - {"min", "max"}:
            raise ConfigError(f"strict.slope.{param!r} must carry min and/or max")
        rules.append(
            StrictRule(
                param=param,
                min_slope=float(window["min"]) if "min" in window else None,
                max_slope=float(window["max"]) if "max" in window else None,
            )
        )
    return tuple(rules)


def parse_config(text: str) -> ParsedConfig:
    """Parse and validate a TOML experiment configuration."""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"TOML parse error: {exc}") from exc
    _check_keys(data, _SCHEMA)
    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"schema_version must be {SCHEMA_VERSION}, got {version!r}")
    kernel = data.get("kernel")
    if not kernel or "nu" not in kernel:
        raise ConfigError("kernel.nu is required")
    nu_raw = kernel["nu"]
    nus = tuple(float(v) for v in nu_raw) if isinstance(nu_raw, list) else (float(nu_raw),)
    model = data.get("model", {})
    if "T" not in model:
        raise ConfigError("model.T is required")
    domain = model.get("domain")
    if domain is not None and not isinstance(domain, (int, float)):
        if domain == "auto":
            domain = None
        else:
            raise ConfigError(f"model.domain must be a number or 'auto', got {domain!r}")
    run = data.get("run", {})
    study = data.get("study", {})
    study_kind = study.get("kind")
    if study_kind is not None and study_kind not in STUDY_KINDS:
        raise ConfigError(f"study.kind must be one of {STUDY_KINDS}, got {study_kind!r}")
    price = study.get("price", {})
    for rule in price.get("rules", []):
        if rule not in PRICE_RULES:
            raise ConfigError(f"study.price.rules entries must be in {PRICE_RULES}, got {rule!r}")
    sample_table = data.get("sample", {})
    sample = SampleParams(
        h_log2=_scalar(sample_table, "h_log2", int, -7, "sample"),
        k_log2=_scalar(sample_table, "k_log2", int, -7, "sample"),
        curve_level=_scalar(sample_table, "curve_level", float, 1.0, "sample"),
        curve_bump_center=_scalar(sample_table, "curve_bump_center", float, 1.0, "sample"),
        curve_bump_half_width=_scalar(sample_table, "curve_bump_half_width", float, 0.5, "sample"),
        curve_bump_amplitude=_scalar(sample_table, "curve_bump_amplitude", float, 0.0, "sample"),
        x_max=_scalar(sample_table, "x_max", float, 2.0, "sample"),
        points=_scalar(sample_table, "points", int, 65, "sample"),
    )
    return ParsedConfig(
        nus=nus,
        mu=_scalar(kernel, "mu", float, 1.0, "kernel"),
        zeta=_scalar(kernel, "zeta", float, 1.0, "kernel"),
        weight=_weight_from(kernel.get("weight", {})),
        embedding_doublings=_scalar(kernel, "embedding_doublings", int, 8, "kernel"),
        embedding_tol=_scalar(kernel, "embedding_tol", float, 1e-8, "kernel"),
        a=_scalar(model, "a", float, 0.05, "model"),
        T=_scalar(model, "T", float, None, "model"),
        domain=float(domain) if domain is not None else None,
        scaling=_scalar(model, "scaling", float, 1.0, "model"),
        samples=_scalar(run, "samples", int, 100, "run"),
        seed=_scalar(run, "seed", int, 0, "run"),
        workers=_scalar(run, "workers", int, default_workers(), "run"),
        record_walltime=_scalar(run, "record_walltime", bool, True, "run"),
        study_kind=study_kind,
        study_tables={k: v for k, v in study.items() if k != "kind"},
        sample=sample,
        strict_rules=_strict_rules(data.get("strict", {})),
    )


def default_workers() -> int:
    """Worker count default, overridable through HEIDIH_WORKERS."""
    env = os.environ.get("HEIDIH_WORKERS")
    if env is None:
        return 1
    try:
        value = int(env)
    except ValueError as exc:
        raise ConfigError(f"HEIDIH_WORKERS must be an integer, got {env!r}") from exc
    if value < 1:
        raise ConfigError("HEIDIH_WORKERS must be >= 1")
    return value
