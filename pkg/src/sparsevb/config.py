"""Declarative experiment recipes (TOML) and their validation."""
from __future__ import annotations

import hashlib
import json
import re
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Union

import tomli

ESTIMATOR_KINDS = ("rls", "garls", "asvb", "ccd_lasso")
INPUT_KINDS = ("bpsk", "butterworth_colored")
SWEEP_KEYS = ("snr_db", "xi", "doppler")


class ConfigError(ValueError):
    def __init__(self, message: str, field: Optional[str] = None,
                 line: Optional[int] = None, source: Optional[str] = None):
        self.message, self.field, self.line, self.source = message, field, line, source
        super().__init__(str(self))

    def __str__(self) -> str:
        where = self.source or "<config>"
        if self.line is not None:
            where += f":{self.line}"
        what = f"{self.field}: " if self.field else ""
        return f"{where}: {what}{self.message}"


@dataclass
class EstimatorSpec:
    kind: str
    label: str
    variant: Optional[str] = None
    lam: Optional[float] = None
    tau: Union[float, str, None] = None


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    N: int = 64
    xi: int = 8
    doppler: float = 5e-5
    lam: float = 0.99
    packet_len: int = 1000
    realizations: int = 200
    snr_db: float = 15.0
    input_kind: str = "bpsk"
    seed: int = 0
    tracking_event: Optional[tuple] = None
    estimators: list = field(default_factory=list)
    steady_fraction: float = 0.2
    threshold_db: float = -17.0
    cv_realizations: int = 5
    sweep_key: Optional[str] = None
    sweep_values: Optional[list] = None

    def to_dict(self) -> dict:
        d = asdict(self)
        if self.tracking_event is not None:
            d["tracking_event"] = list(self.tracking_event)
        return d

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def replace(self, **changes) -> "ExperimentConfig":
        d = self.to_dict()
        d.update(changes)
        d["estimators"] = [EstimatorSpec(**e) if isinstance(e, dict) else e
                           for e in d["estimators"]]
        if d.get("tracking_event") is not None:
            d["tracking_event"] = tuple(d["tracking_event"])
        return ExperimentConfig(**d)


_DEFAULT_LABELS = {
    ("rls", None): "RLS", ("garls", None): "GARLS", ("ccd_lasso", None): "CCD-lasso",
    ("asvb", "s"): "ASVB-S", ("asvb", "l"): "ASVB-L", ("asvb", "mpl"): "ASVB-mpL",
}

_TOP_KEYS = {
    "name": str, "N": int, "xi": int, "doppler": float, "lambda": float,
    "packet_len": int, "realizations": int, "snr_db": float, "input_kind": str,
    "seed": int, "steady_fraction": float, "threshold_db": float,
    "cv_realizations": int,
}


def _line_of(text: Optional[str], key: str) -> Optional[int]:
    if not text:
        return None
    leaf = key.split(".")[-1].split("[")[0]
    pat = re.compile(rf"^\s*{re.escape(leaf)}\s*=")
    for k, line in enumerate(text.splitlines(), 1):
        if pat.match(line):
            return k
    return None


def _coerce(value, typ, key, err):
    if typ is float and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if typ is int and isinstance(value, int) and not isinstance(value, bool):
        return value
    if typ is str and isinstance(value, str):
        return value
    raise err(f"expected {typ.__name__}, got {value!r}", key)


def parse_value(raw: str):
    """Interpret an override value with TOML syntax, falling back to a bare string."""
    try:
        return tomli.loads(f"v = {raw}")["v"]
    except tomli.TOMLDecodeError:
        return raw


def apply_overrides(data: dict, overrides) -> dict:
    data = dict(data)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not KEY=VALUE", field=item, source="--set")
        key, raw = item.split("=", 1)
        key = key.strip()
        value = parse_value(raw.strip())
        if key.startswith("tracking_event."):
            ev = dict(data.get("tracking_event") or {})
            ev[key.split(".", 1)[1]] = value
            data["tracking_event"] = ev
        elif key.startswith("sweep."):
            sw = dict(data.get("sweep") or {})
            sw[key.split(".", 1)[1]] = value
            data["sweep"] = sw
        else:
            data[key] = value
    return data


def config_from_dict(data: dict, text: Optional[str] = None,
                     source: Optional[str] = None) -> ExperimentConfig:
    def err(msg, key):
        return ConfigError(msg, field=key, line=_line_of(text, key), source=source)

    known = set(_TOP_KEYS) | {"estimator", "tracking_event", "sweep"}
    for key in data:
        if key not in known:
            raise err("unknown key", key)
    kw = {}
    for key, typ in _TOP_KEYS.items():
        if key in data:
            kw["lam" if key == "lambda" else key] = _coerce(data[key], typ, key, err)
    cfg = ExperimentConfig(**kw)

    if cfg.N < 1:
        raise err("must be >= 1", "N")
    if not 0 < cfg.xi <= cfg.N:
        raise err(f"must satisfy 0 < xi <= N (N={cfg.N})", "xi")
    if cfg.packet_len < 1:
        raise err("must be >= 1", "packet_len")
    if cfg.realizations < 1:
        raise err("must be >= 1", "realizations")
    if not 0 < cfg.lam <= 1:
        raise err("must lie in (0, 1]", "lambda")
    if cfg.doppler < 0:
        raise err("must be >= 0", "doppler")
    if cfg.input_kind not in INPUT_KINDS:
        raise err(f"must be one of {', '.join(INPUT_KINDS)}", "input_kind")
    if not 0 < cfg.steady_fraction <= 1:
        raise err("must lie in (0, 1]", "steady_fraction")
    if cfg.cv_realizations < 1:
        raise err("must be >= 1", "cv_realizations")
    if cfg.seed < 0:
        raise err("must be >= 0", "seed")

    ev = data.get("tracking_event")
    if ev is not None:
        if not isinstance(ev, dict) or "time" not in ev:
            raise err("needs a 'time' entry", "tracking_event")
        t0 = _coerce(ev["time"], int, "tracking_event.time", err)
        tap = ev.get("tap")
        if tap is not None:
            tap = _coerce(tap, int, "tracking_event.tap", err)
            if not 0 <= tap < cfg.N:
                raise err("tap index out of range", "tracking_event.tap")
        if not 0 < t0 < cfg.packet_len:
            raise err("must satisfy 0 < time < packet_len", "tracking_event.time")
        if cfg.xi >= cfg.N:
            raise err("no off-support tap left to add", "tracking_event")
        cfg.tracking_event = (t0, tap)

    sweep = data.get("sweep")
    if sweep is not None:
        if not isinstance(sweep, dict) or "key" not in sweep or "values" not in sweep:
            raise err("needs 'key' and 'values'", "sweep")
        if sweep["key"] not in SWEEP_KEYS:
            raise err(f"key must be one of {', '.join(SWEEP_KEYS)}", "sweep.key")
        vals = sweep["values"]
        if not isinstance(vals, list) or not vals:
            raise err("must be a non-empty list", "sweep.values")
        typ = int if sweep["key"] == "xi" else float
        cfg.sweep_key = sweep["key"]
        cfg.sweep_values = [_coerce(v, typ, "sweep.values", err) for v in vals]
        if typ is int and any(not 0 < v <= cfg.N for v in cfg.sweep_values):
            raise err("xi values must lie in (0, N]", "sweep.values")

    blocks = data.get("estimator")
    if not blocks:
        raise err("at least one [[estimator]] block is required", "estimator")
    labels = set()
    for k, blk in enumerate(blocks):
        where = f"estimator[{k}]"
        kind = blk.get("kind")
        if kind not in ESTIMATOR_KINDS:
            raise err(f"kind must be one of {', '.join(ESTIMATOR_KINDS)}", f"{where}.kind")
        for key in blk:
            if key not in ("kind", "label", "variant", "lambda", "tau"):
                raise err("unknown key", f"{where}.{key}")
        variant = None
        if kind == "asvb":
            from .batch import Variant
            try:
                variant = Variant.parse(blk.get("variant", "mpl")).value
            except ValueError as exc:
                raise err(str(exc), f"{where}.variant") from None
        lam = blk.get("lambda")
        if lam is not None:
            lam = _coerce(lam, float, f"{where}.lambda", err)
            if not 0 < lam <= 1:
                raise err("must lie in (0, 1]", f"{where}.lambda")
        tau = blk.get("tau")
        if kind == "ccd_lasso":
            if tau is None:
                tau = "cv"
            elif tau != "cv":
                tau = _coerce(tau, float, f"{where}.tau", err)
                if tau < 0:
                    raise err("must be >= 0 or \"cv\"", f"{where}.tau")
        elif tau is not None:
            raise err("only ccd_lasso takes tau", f"{where}.tau")
        label = blk.get("label") or _DEFAULT_LABELS[(kind, variant)]
        if label in labels:
            raise err(f"duplicate label {label!r}", f"{where}.label")
        labels.add(label)
        cfg.estimators.append(EstimatorSpec(kind, label, variant, lam, tau))
    return cfg


def bundled_configs() -> list[str]:
    root = resources.files("sparsevb") / "configs"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def resolve_config_path(path: Union[str, Path]) -> Path:
    """A filesystem path, or the name of a bundled recipe such as ``fig1``."""
    p = Path(path)
    if p.exists():
        return p
    stem = p.name[:-5] if p.name.endswith(".toml") else p.name
    if stem in bundled_configs():
        return Path(str(resources.files("sparsevb") / "configs" / f"{stem}.toml"))
    raise FileNotFoundError(f"no such config file or bundled recipe: {path}")


def load_config(path, overrides=()) -> ExperimentConfig:
    p = resolve_config_path(path)
    text = p.read_text(encoding="utf-8")
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(str(exc), line=int(m.group(1)) if m else None, source=str(p)) from None
    data = apply_overrides(data, overrides)
    return config_from_dict(data, text=text, source=str(p))
