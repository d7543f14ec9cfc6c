"""Experiment configuration: a flat, versioned JSON record.

Only the fields that influence results are embedded in artifacts and hashed;
worker count, output directory and checkpoint cadence are run-time settings
and never change an artifact's bytes.
"""
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields

from .errors import ConfigError

SCHEMA_VERSION = 1
KINDS = ("validate", "survival", "tuple", "pathspace", "splitting", "mixing", "cone")
INITIAL_KINDS = ("diametric-lines", "angular-gap")
FUNCTIONAL_NAMES = ("endpoint-angle", "sep-indicator", "halfspace-fraction")
MIN_BASE_RADIUS = 8.0
RUNTIME_FIELDS = ("threads", "out", "checkpoint_every")
_U64_MAX = 2**64 - 1


def _default_checkpoints():
    return [1000 * i for i in range(1, 11)]


@dataclass
class ExperimentConfig:
    kind: str = "survival"
    seed: int = 1
    pairs: int = 10_000
    max_steps: int = 10_000
    checkpoints: list = field(default_factory=_default_checkpoints)
    m: int = 1
    n: int = 1
    h_lag: int = 10_000
    particles: int = 1000
    replicates: int = 20
    shells: int = 8
    base_radius: float = 32.0
    initial: str = "diametric-lines"
    gap: float = 0.01
    initial2: str = "angular-gap"
    gap2: float = 0.01
    seed2: int = 2
    functional: str = "endpoint-angle"
    window: list = None
    half_angle: float = math.pi / 2
    sigma: float = 0.01
    trials: int = 100_000
    chunk: int = 10_000
    threads: int = 1
    out: str = "out"
    checkpoint_every: float = 60.0
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError("schema_version", f"unsupported version {self.schema_version}")
        if self.kind not in KINDS:
            raise ConfigError("kind", f"must be one of {', '.join(KINDS)}")
        _int("seed", self.seed, 0, _U64_MAX)
        _int("seed2", self.seed2, 0, _U64_MAX)
        for name in ("pairs", "max_steps", "particles", "replicates", "shells", "trials",
                     "chunk", "threads", "m", "n", "h_lag"):
            _int(name, getattr(self, name), 1)
        if self.m + self.n > 255:
            raise ConfigError("m", "m + n must not exceed 255")
        cps = self.checkpoints
        if not isinstance(cps, list) or not cps:
            raise ConfigError("checkpoints", "must be a non-empty list")
        for c in cps:
            _int("checkpoints", c, 1, self.max_steps)
        if cps != sorted(set(cps)):
            raise ConfigError("checkpoints", "must be strictly increasing")
        if not isinstance(self.base_radius, (int, float)) or not self.base_radius >= MIN_BASE_RADIUS:
            raise ConfigError("base_radius", f"must be a number >= {MIN_BASE_RADIUS}")
        for name in ("initial", "initial2"):
            if getattr(self, name) not in INITIAL_KINDS:
                raise ConfigError(name, f"must be one of {', '.join(INITIAL_KINDS)}")
        for name in ("gap", "gap2"):
            g = getattr(self, name)
            if not isinstance(g, (int, float)) or not 0 < g <= 1:
                raise ConfigError(name, "must lie in (0, 1]")
        if self.functional not in FUNCTIONAL_NAMES:
            raise ConfigError("functional", f"must be one of {', '.join(FUNCTIONAL_NAMES)}")
        w = self.window
        if w is not None and (
                not isinstance(w, list) or len(w) != 2
                or not all(isinstance(x, int) and not isinstance(x, bool) for x in w)
                or w[0] < 0 or w[1] - w[0] < 3 or w[1] > self.shells):
            raise ConfigError("window", "must be [n0, n1] with n1 - n0 >= 3 and n1 <= shells")
        if self.kind in ("splitting", "mixing") and self.effective_window() is None:
            raise ConfigError("shells", "need at least 3 shells for an exponent window")
        if not isinstance(self.half_angle, (int, float)) or not 0 < self.half_angle <= math.pi:
            raise ConfigError("half_angle", "must lie in (0, pi]")
        if not isinstance(self.sigma, (int, float)) or not 0 < self.sigma <= 0.01:
            raise ConfigError("sigma", "must lie in (0, 0.01]")
        if not isinstance(self.out, str) or not self.out:
            raise ConfigError("out", "must be a non-empty path")
        if not isinstance(self.checkpoint_every, (int, float)) or self.checkpoint_every < 0:
            raise ConfigError("checkpoint_every", "must be a non-negative number of seconds")

    def effective_window(self):
        """Exponent window; by default from the burn-in shell (2, or less if
        there are few shells) to the last shell."""
        if self.window is not None:
            return list(self.window)
        if self.shells < 3:
            return None
        return [min(2, self.shells - 3), self.shells]

    # -- serialisation --------------------------------------------------------

    def to_dict(self):
        return asdict(self)

    def science(self):
        """Fields that determine the results."""
        d = self.to_dict()
        for k in RUNTIME_FIELDS:
            d.pop(k)
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ConfigError("config", "must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(unknown[0], "unknown field")
        return cls(**d)

    @classmethod
    def from_json(cls, text):
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"invalid JSON: {exc}") from None
        return cls.from_dict(d)

    def digest(self):
        blob = json.dumps(self.science(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def replace(self, **changes):
        d = self.to_dict()
        d.update(changes)
        return ExperimentConfig.from_dict(d)


def _int(name, value, low, high=None):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(name, f"must be an integer, got {value!r}")
    if value < low or (high is not None and value > high):
        bound = f"[{low}, {high}]" if high is not None else f">= {low}"
        raise ConfigError(name, f"must be in {bound}, got {value}")


def parse_checkpoints(text):
    """``"1000,2000"`` or ``"1000:10000:1000"`` (inclusive stop) to a list of ints."""
    try:
        if ":" in text:
            a, b, s = (int(x) for x in text.split(":"))
            if s <= 0:
                raise ValueError
            return list(range(a, b + 1, s))
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError("checkpoints", f"cannot parse {text!r}") from None
