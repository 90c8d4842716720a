"""Experiment configuration files (TOML)."""
from __future__ import annotations

import hashlib
import json
import re
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .fixtures import FIXTURES, get_fixture
from .mdp import FiniteMdp
from .nets import default_embedding, validate_embedding

KINDS = ("simulate", "ode", "compare", "kernel", "poisson-check", "gradcheck", "fluctuation-sweep")


class ParseError(ValueError):
    """Malformed file or a field of the wrong type."""

    def __init__(self, message: str, *, line: int | None = None, field: str | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.line = line
        self.field = field


class ValidationError(ValueError):
    """Well-formed config that violates an invariant."""

    def __init__(self, message: str, *, field: str | None = None):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field


@dataclass
class ExperimentConfig:
    kind: str
    mdp: dict
    embedding: str = "default"
    embedding_vectors: list | None = None
    n_hidden: list[int] = field(default_factory=lambda: [250])
    seeds: list[int] = field(default_factory=lambda: [0])
    horizon_T: float = 1.0
    alpha: float = 1.0
    dt: float = 0.01
    t_end: float = 1.0
    record_step: float = 0.1
    mc_samples: int = 1_000_000
    kernel_seed: int = 0
    kernel_path: str | None = None
    ode_init: str = "coupled"
    diagnostics_period: int | None = None
    track_fluctuations: bool = True
    poisson_eta: float = 0.5
    poisson_n_max: int = 200
    gradcheck_h: float = 1e-5
    out_dir: str | None = None

    def build_mdp(self) -> FiniteMdp:
        spec = dict(self.mdp)
        if "fixture" in spec:
            name = spec.pop("fixture")
            return get_fixture(name, **spec)
        return FiniteMdp(
            np.array(spec["transition"], dtype=float),
            np.array(spec["reward"], dtype=float),
            float(spec["gamma"]),
            np.array(spec["rho0"], dtype=float),
        )

    def build_embedding(self, mdp: FiniteMdp) -> np.ndarray:
        if self.embedding == "default":
            return default_embedding(mdp)
        return validate_embedding(np.array(self.embedding_vectors, dtype=float), mdp.n_pairs)

    def record_times(self, horizon: float) -> tuple[float, ...]:
        n = int(round(horizon / self.record_step))
        times = [round(i * self.record_step, 12) for i in range(n + 1)]
        times = [t for t in times if t <= horizon]
        if times[-1] < horizon:
            times.append(horizon)
        return tuple(times)

    def as_dict(self) -> dict[str, Any]:
        return asdict(self)

    def digest(self) -> str:
        """SHA-256 of the canonical JSON form of every field."""
        blob = json.dumps(self.as_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


_SCALARS = {
    "kind": str, "embedding": str, "horizon_T": float, "alpha": float, "dt": float,
    "t_end": float, "record_step": float, "mc_samples": int, "kernel_seed": int,
    "kernel_path": str, "ode_init": str, "diagnostics_period": int,
    "track_fluctuations": bool, "poisson_eta": float, "poisson_n_max": int,
    "gradcheck_h": float, "out_dir": str,
}
_LISTS = {"n_hidden": int, "seeds": int}
_TOP = set(_SCALARS) | set(_LISTS) | {"mdp", "embedding_vectors"}
_MDP_KEYS = {"fixture", "gamma", "transition", "reward", "rho0"}


def _line_of(text: str, key: str) -> int | None:
    pat = re.compile(rf"^\s*{re.escape(key)}\s*=", re.M)
    hit = pat.search(text)
    return text.count("\n", 0, hit.start()) + 1 if hit else None


def _coerce(value, kind, name, text):
    ok = isinstance(value, kind) and not (kind is int and isinstance(value, bool))
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if not ok:
        raise ParseError(
            f"expected {kind.__name__}, got {type(value).__name__}",
            line=_line_of(text, name.split(".")[-1]), field=name,
        )
    return value


def parse_config(text: str, kind: str | None = None) -> ExperimentConfig:
    """Parse and validate TOML text; see :func:`load_config`."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ParseError(str(exc), line=int(m.group(1)) if m else None) from exc
    unknown = set(raw) - _TOP
    if unknown:
        key = sorted(unknown)[0]
        raise ParseError("unknown key", line=_line_of(text, key), field=key)
    if kind is not None:
        if raw.setdefault("kind", kind) != kind:
            raise ValidationError(
                f"file declares kind {raw['kind']!r} but {kind!r} was requested", field="kind"
            )
    if "kind" not in raw:
        raise ParseError("missing required key", field="kind")
    if "mdp" not in raw or not isinstance(raw["mdp"], dict):
        raise ParseError("missing [mdp] table", field="mdp")
    kwargs: dict[str, Any] = {}
    for key, typ in _SCALARS.items():
        if key in raw:
            kwargs[key] = _coerce(raw[key], typ, key, text)
    for key, typ in _LISTS.items():
        if key in raw:
            vals = raw[key]
            if not isinstance(vals, list):
                vals = [vals]
            kwargs[key] = [_coerce(v, typ, key, text) for v in vals]
    if "embedding_vectors" in raw:
        kwargs["embedding_vectors"] = raw["embedding_vectors"]
    mdp = dict(raw["mdp"])
    bad = set(mdp) - _MDP_KEYS
    if bad:
        key = sorted(bad)[0]
        raise ParseError("unknown key", line=_line_of(text, key), field=f"mdp.{key}")
    if "gamma" in mdp:
        mdp["gamma"] = _coerce(mdp["gamma"], float, "mdp.gamma", text)
    kwargs["mdp"] = mdp
    cfg = ExperimentConfig(**kwargs)
    validate(cfg)
    return cfg


def load_config(path: str | Path, kind: str | None = None) -> ExperimentConfig:
    """Read a TOML experiment file, fill defaults and validate.

    ``kind`` fills in a missing ``kind`` key and must match a present one.

    Raises
    ------
    ParseError
        Malformed TOML, unknown keys, or wrongly typed fields.
    ValidationError
        A well-formed value that breaks an invariant, such as a discount
        outside (0, 1) or a transition row that does not sum to one.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    return parse_config(path.read_text(), kind)


def validate(cfg: ExperimentConfig) -> None:
    if cfg.kind not in KINDS:
        raise ValidationError(f"unknown experiment kind {cfg.kind!r}; expected one of {KINDS}", field="kind")
    if not cfg.n_hidden:
        raise ValidationError("N list must be nonempty", field="n_hidden")
    if any(n < 1 for n in cfg.n_hidden):
        raise ValidationError("every N must be positive", field="n_hidden")
    if not cfg.seeds:
        raise ValidationError("seed list must be nonempty", field="seeds")
    if len(set(cfg.seeds)) != len(cfg.seeds):
        raise ValidationError("seeds must be distinct", field="seeds")
    if not cfg.horizon_T > 0:
        raise ValidationError("horizon must be positive", field="horizon_T")
    if cfg.alpha < 0:
        raise ValidationError("critic rate must be nonnegative", field="alpha")
    if not 0 < cfg.dt <= 0.1:
        raise ValidationError("dt must lie in (0, 0.1]", field="dt")
    if cfg.t_end < 0:
        raise ValidationError("t_end must be nonnegative", field="t_end")
    if not cfg.record_step > 0:
        raise ValidationError("record grid step must be positive", field="record_step")
    if cfg.mc_samples < 10_000:
        raise ValidationError("mc_samples must be at least 1e4", field="mc_samples")
    if cfg.ode_init not in ("coupled", "gaussian", "zero"):
        raise ValidationError("ode_init must be coupled, gaussian or zero", field="ode_init")
    if cfg.embedding not in ("default", "explicit"):
        raise ValidationError("embedding must be default or explicit", field="embedding")
    if cfg.embedding == "explicit" and cfg.embedding_vectors is None:
        raise ValidationError("explicit embedding needs embedding_vectors", field="embedding_vectors")
    if not 0 < cfg.poisson_eta <= 1:
        raise ValidationError("exploration rate must lie in (0, 1]", field="poisson_eta")
    if cfg.diagnostics_period is not None and cfg.diagnostics_period < 1:
        raise ValidationError("diagnostics period must be at least 1", field="diagnostics_period")
    spec = cfg.mdp
    if "fixture" in spec:
        if spec["fixture"] not in FIXTURES:
            raise ValidationError(
                f"unknown fixture {spec['fixture']!r}; known: {sorted(FIXTURES)}", field="mdp.fixture"
            )
        extra = set(spec) - {"fixture", "gamma"}
        if extra:
            raise ValidationError(f"fixture cannot be combined with {sorted(extra)}", field="mdp")
    else:
        missing = {"transition", "reward", "gamma", "rho0"} - set(spec)
        if missing:
            raise ValidationError(f"explicit MDP is missing {sorted(missing)}", field="mdp")
    if "gamma" in spec and not 0.0 < spec["gamma"] < 1.0:
        raise ValidationError(f"discount must lie in (0, 1), got {spec['gamma']}", field="mdp.gamma")
    try:
        mdp = cfg.build_mdp()
        cfg.build_embedding(mdp)
    except ValueError as exc:
        name = "mdp" if "embedding" not in str(exc) else "embedding_vectors"
        raise ValidationError(str(exc), field=name) from exc
