"""Experiment configuration loaded from a single JSON file."""

from dataclasses import asdict, dataclass, fields

from .boundary import RULES
from .errors import DomainError, SchemaError
from .io import read_json

STATE_KINDS = ("mes", "dephased", "product", "file")


@dataclass(frozen=True)
class ExperimentConfig:
    """Parameters of one simulated (or loaded) randomized-measurement run.

    ``n_events=None`` means exact correlators. ``phase_noise`` is a phase
    range ``[lo, hi]`` applied per setting, or ``None``. ``kappa4`` overrides
    the fourth-moment scale of the observable.
    """

    d: int = 5
    n_unitaries: int = 800
    n_events: int = None
    seed: int = 0
    state: str = "mes"
    state_file: str = None
    dataset_file: str = None
    phimax: float = 0.53
    dephasing_n: int = 20000
    phase_noise: tuple = None
    observable: object = "isotropic"
    k_sigma: float = 2.0
    rule: str = "ellipse"
    grid_size: int = 512
    kappa4: float = 1.0
    n_batches: int = 200
    batch_size: int = None
    histogram_draws: int = 0
    histogram_bins: int = 60
    workers: int = None

    def __post_init__(self):
        if self.d < 2:
            raise DomainError(f"d must be >= 2, got {self.d}")
        for name in ("n_unitaries", "dephasing_n", "grid_size", "n_batches", "histogram_bins"):
            if getattr(self, name) < 1:
                raise DomainError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("n_events", "batch_size", "workers"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise DomainError(f"{name} must be positive, got {v}")
        if self.histogram_draws < 0:
            raise DomainError("histogram_draws must be >= 0")
        if self.k_sigma < 0:
            raise DomainError(f"k_sigma must be >= 0, got {self.k_sigma}")
        if self.kappa4 <= 0:
            raise DomainError(f"kappa4 must be positive, got {self.kappa4}")
        if self.phimax < 0:
            raise DomainError(f"phimax must be >= 0, got {self.phimax}")
        if self.state not in STATE_KINDS:
            raise DomainError(f"state must be one of {STATE_KINDS}, got {self.state!r}")
        if self.state == "file" and not self.state_file:
            raise DomainError("state 'file' needs state_file")
        if self.rule not in RULES:
            raise DomainError(f"rule must be one of {RULES}, got {self.rule!r}")
        if self.phase_noise is not None:
            pn = tuple(float(v) for v in self.phase_noise)
            if len(pn) != 2 or not pn[1] > pn[0]:
                raise DomainError(f"phase_noise must be [lo, hi] with hi > lo, got {self.phase_noise}")
            object.__setattr__(self, "phase_noise", pn)
        if isinstance(self.observable, list):
            object.__setattr__(self, "observable", tuple(self.observable))

    @property
    def exact(self):
        return self.n_events is None

    @property
    def effective_batch_size(self):
        return self.batch_size or self.n_unitaries

    def replace(self, **changes):
        data = asdict(self)
        data.update(changes)
        return ExperimentConfig(**data)

    def to_dict(self):
        out = asdict(self)
        if out["phase_noise"] is not None:
            out["phase_noise"] = list(out["phase_noise"])
        if isinstance(out["observable"], tuple):
            out["observable"] = list(out["observable"])
        return out

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        if data.pop("exact", False):
            data["n_events"] = None
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise SchemaError(f"unknown config keys {unknown}", "$")
        try:
            return cls(**data)
        except TypeError as exc:
            raise SchemaError(str(exc), "$") from exc


def load_config(path):
    obj = read_json(path)
    if not isinstance(obj, dict):
        raise SchemaError("config must be a JSON object", str(path))
    return ExperimentConfig.from_dict(obj)
