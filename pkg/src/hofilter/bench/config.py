"""Experiment configuration: one JSON document, validated before any work."""

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields

from ..errors import RejectedInput
from ..likelihood import make_functional
from ..model import make_model

KINDS = ("simulate", "filter", "convergence", "robustness", "ibp-check")
FAMILIES = ("shift", "bump", "resample", "zero")


def _power_of_two(v):
    return v >= 1 and not v & (v - 1)


@dataclass
class ExperimentConfig:
    """All knobs of every experiment kind.

    The fine grid has ``max(n) * k_fine`` steps, except in convergence runs,
    where it has ``n_ref * k_fine`` steps, and in ibp-check runs, which sweep
    ``k_levels`` steps per subinterval instead of ``k_fine``.
    """

    kind: str
    model: str = "bounded_sensor"
    model_params: dict = field(default_factory=lambda: {"x0": {"kind": "point", "value": [1.0]}})
    t: float = 0.5
    n: list = field(default_factory=lambda: [8])
    partition_times: list | None = None
    m: list = field(default_factory=lambda: [1, 2])
    k_fine: int = 64
    N: int = 10_000
    seed: int = 0
    phi: str | dict = "bounded"
    out: str = "results"
    # simulate / filter
    scenarios: int = 1
    scenario_index: int = 0
    observation: str | None = None
    # convergence
    replications: int = 32
    n_ref: int = 256
    m_ref: int = 2
    bootstrap: int = 200
    # robustness
    R: float = 4.0
    pairs: int = 200
    families: list = field(default_factory=lambda: ["shift", "bump", "resample"])
    amplitude: float = 0.5
    path_knots: int = 512
    riemann_k: int | None = None
    # ibp-check
    k_levels: list = field(default_factory=lambda: [128, 256, 512, 1024])

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise RejectedInput(f"unknown configuration keys: {', '.join(unknown)}")
        if "kind" not in data:
            raise RejectedInput("configuration needs a 'kind'")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, location, **overrides):
        try:
            with open(location) as fh:
                data = json.load(fh)
        except OSError as exc:
            raise RejectedInput(f"cannot read config {location}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise RejectedInput(f"{location}: invalid JSON ({exc})") from None
        if not isinstance(data, dict):
            raise RejectedInput(f"{location}: top level must be an object")
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_dict(data)

    def to_dict(self):
        return asdict(self)

    @property
    def hash(self):
        """Digest of everything that affects results (the output directory does not)."""
        d = self.to_dict()
        d.pop("out")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def build_model(self):
        return make_model(self.model, self.model_params)

    def validate(self):
        if self.kind not in KINDS:
            raise RejectedInput(f"kind must be one of {', '.join(KINDS)}, got {self.kind!r}")
        if isinstance(self.n, int):
            self.n = [self.n]
        if isinstance(self.m, int):
            self.m = [self.m]
        if not self.t > 0:
            raise RejectedInput("t must be positive")
        if not self.n or any(int(v) != v or v < 1 for v in self.n):
            raise RejectedInput("n must be a non-empty list of positive integers")
        if not self.m or any(int(v) != v or not 1 <= v <= 5 for v in self.m):
            raise RejectedInput("m entries must be integers in 1..5")
        for name in ("k_fine", "N", "scenarios", "replications", "n_ref", "pairs", "path_knots"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise RejectedInput(f"{name} must be a positive integer")
        if self.N < 2:
            raise RejectedInput("N must be at least 2")
        if int(self.seed) != self.seed or not 0 <= self.seed < 2 ** 64:
            raise RejectedInput("seed must be an unsigned 64-bit integer")
        if self.scenario_index < 0:
            raise RejectedInput("scenario_index must be non-negative")
        make_functional(self.phi)
        model = self.build_model()
        top = max(self.m + ([self.m_ref] if self.kind == "convergence" else []))
        if top - 1 > model.oracle.max_order:
            raise RejectedInput(f"model {self.model!r} supports m <= {model.oracle.max_order + 1}")
        if self.partition_times is not None:
            ts = [float(v) for v in self.partition_times]
            if ts[0] != 0.0 or any(b <= a for a, b in zip(ts, ts[1:])):
                raise RejectedInput("partition_times must start at 0 and increase")
            if abs(ts[-1] - self.t) > 1e-12:
                raise RejectedInput("partition_times must end at t")
        if self.riemann_k is not None and not _power_of_two(self.riemann_k):
            raise RejectedInput("riemann_k must be a power of two")
        getattr(self, f"_validate_{self.kind.replace('-', '_')}", lambda: None)()

    def _validate_convergence(self):
        ns = sorted(self.n)
        if len(set(ns)) < 3:
            raise RejectedInput("a slope fit needs at least three meshsizes")
        if not all(_power_of_two(v) for v in ns + [self.n_ref]):
            raise RejectedInput("convergence meshes n and n_ref must be powers of two")
        if self.n_ref < 8 * ns[-1]:
            raise RejectedInput(f"n_ref={self.n_ref} must be at least 8x the finest n ({ns[-1]})")
        if self.replications < 2:
            raise RejectedInput("need at least two replications")
        if self.bootstrap < 200:
            raise RejectedInput("bootstrap needs at least 200 resamples")
        if not 1 <= self.m_ref <= 5:
            raise RejectedInput("m_ref must be in 1..5")

    def _validate_robustness(self):
        if not self.R > 0:
            raise RejectedInput("R must be positive")
        bad = [f for f in self.families if f not in FAMILIES]
        if bad or not self.families:
            raise RejectedInput(f"families must be drawn from {', '.join(FAMILIES)}")
        if self.riemann_k is not None and self.riemann_k > self.k_fine:
            raise RejectedInput("riemann_k cannot exceed k_fine")

    def _validate_ibp_check(self):
        if len(self.k_levels) < 2 or not all(_power_of_two(k) for k in self.k_levels):
            raise RejectedInput("k_levels needs at least two powers of two")
