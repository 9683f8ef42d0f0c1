"""
Data models for the federated shuffling simulator.
"""

from dataclasses import dataclass, field, asdict
from enum import Enum
from typing import List, Optional, Dict, Any, Tuple, Union

import numpy as np

from ..utils.errors import ConfigurationError, ProblemError


class Algorithm(str, Enum):
    """Outer loops: compressed FedRR, its shifted variant and the double variance-reduced one."""
    FED_CRR = 'FedCRR'
    FED_CRR_VR = 'FedCRR_VR'
    FED_CRR_VR2 = 'FedCRR_VR2'
    FED_RR = 'FedRR'

    @property
    def uses_shifts(self) -> bool:
        return self in (Algorithm.FED_CRR_VR, Algorithm.FED_CRR_VR2)


class ShuffleMode(str, Enum):
    """RR redraws every client's permutation each epoch; SO draws it once."""
    RR = 'RR'
    SO = 'SO'


@dataclass(frozen=True)
class Permutation:
    """0-based ordering of the n local components."""
    order: Tuple[int, ...]

    def __post_init__(self):
        order = tuple(int(i) for i in self.order)
        if sorted(order) != list(range(len(order))):
            raise ProblemError(f"not a permutation of 0..{len(order) - 1}: {order}")
        object.__setattr__(self, 'order', order)

    def __len__(self):
        return len(self.order)

    def __iter__(self):
        return iter(self.order)

    def one_based(self) -> Tuple[int, ...]:
        return tuple(i + 1 for i in self.order)


@dataclass(frozen=True)
class CompressorSpec:
    """Compressor description as it appears in a config file."""
    kind: str = 'identity'
    k: Optional[int] = None
    levels: Optional[int] = None

    def __post_init__(self):
        if self.kind not in ('identity', 'randk', 'dithering'):
            raise ConfigurationError(f"unknown compressor kind '{self.kind}'", 'compressor.kind')
        if self.kind == 'randk' and (self.k is None or self.k < 1):
            raise ConfigurationError(f"randk needs a positive integer k, got {self.k}", 'compressor.k')
        if self.kind == 'dithering' and (self.levels is None or self.levels < 1):
            raise ConfigurationError(
                f"dithering needs a positive integer levels, got {self.levels}", 'compressor.levels'
            )

    def label(self) -> str:
        if self.kind == 'randk':
            return f"randk(k={self.k})"
        if self.kind == 'dithering':
            return f"dithering(s={self.levels})"
        return 'identity'


@dataclass(frozen=True)
class RunConfig:
    """Everything one simulated training run needs besides the problem."""
    algorithm: Algorithm = Algorithm.FED_CRR
    shuffle: ShuffleMode = ShuffleMode.RR
    gamma: float = 0.1
    alpha: float = 1.0
    eta: float = 1.0
    epochs: int = 10
    compressor: CompressorSpec = field(default_factory=CompressorSpec)
    seed: int = 0
    x0: Union[str, Tuple[float, ...]] = 'zeros'

    def __post_init__(self):
        try:
            object.__setattr__(self, 'algorithm', Algorithm(self.algorithm))
        except ValueError:
            raise ConfigurationError(f"unknown algorithm '{self.algorithm}'", 'algorithm')
        try:
            object.__setattr__(self, 'shuffle', ShuffleMode(self.shuffle))
        except ValueError:
            raise ConfigurationError(f"unknown shuffle mode '{self.shuffle}'", 'shuffle')

        if not (self.gamma > 0 and np.isfinite(self.gamma)):
            raise ConfigurationError(f"must be a positive number, got {self.gamma}", 'gamma')
        if not 0 < self.alpha <= 1:
            raise ConfigurationError(f"must lie in (0, 1], got {self.alpha}", 'alpha')
        if not 0 < self.eta <= 1:
            raise ConfigurationError(f"must lie in (0, 1], got {self.eta}", 'eta')
        if int(self.epochs) != self.epochs or self.epochs < 1:
            raise ConfigurationError(f"must be a positive integer, got {self.epochs}", 'epochs')
        if int(self.seed) != self.seed or not 0 <= self.seed < 2 ** 64:
            raise ConfigurationError(f"must be an integer in [0, 2^64), got {self.seed}", 'seed')
        if self.algorithm == Algorithm.FED_RR and self.compressor.kind != 'identity':
            raise ConfigurationError("FedRR is FedCRR with the identity compressor", 'compressor.kind')
        if not isinstance(self.x0, str):
            object.__setattr__(self, 'x0', tuple(float(v) for v in self.x0))
        elif self.x0 != 'zeros':
            raise ConfigurationError(f"must be 'zeros' or a list of numbers, got '{self.x0}'", 'x0')

    def initial_point(self, d: int) -> np.ndarray:
        if isinstance(self.x0, str):
            return np.zeros(d)
        if len(self.x0) != d:
            raise ConfigurationError(f"has length {len(self.x0)}, problem dimension is {d}", 'x0')
        return np.array(self.x0, dtype=np.float64)


@dataclass
class EpochRecord:
    """State of the server iterate at the start of epoch t."""
    t: int
    sq_dist: float
    f_gap: float
    cum_bits: int
    lyapunov: Optional[float] = None


@dataclass
class Trace:
    """Per-epoch record stream of one run."""
    config: RunConfig
    records: List[EpochRecord] = field(default_factory=list)
    terminated_early: bool = False
    termination_reason: Optional[str] = None
    permutations: List[List[Tuple[int, ...]]] = field(default_factory=list)
    final_x: Optional[np.ndarray] = None
    iterates: Optional[List[np.ndarray]] = None

    @property
    def sq_dists(self) -> np.ndarray:
        return np.array([r.sq_dist for r in self.records])

    @property
    def cum_bits(self) -> np.ndarray:
        return np.array([r.cum_bits for r in self.records], dtype=np.int64)

    @property
    def lyapunov_values(self) -> np.ndarray:
        return np.array([np.nan if r.lyapunov is None else r.lyapunov for r in self.records])


@dataclass
class ShuffledLimit:
    """
    Limit points of one epoch started at the optimum.

    step_points[m, i] is x_*^i for client m (i = 0..n, step_points[m, 0] = x_*);
    client_points[m] = step_points[m, n] = x^n_{*,m}.
    """
    client_points: np.ndarray
    step_points: np.ndarray


@dataclass
class ConditionCheck:
    """One theorem condition evaluated as lhs <= rhs."""
    name: str
    theorem: str
    description: str
    lhs: float
    rhs: float
    satisfied: bool


@dataclass
class Neighborhoods:
    """Asymptotic (T -> infinity) error levels predicted by the convergence theorems."""
    thm2: float
    thm2_printed: float
    thm2_compression: float
    thm2_stochastic: float
    thm3: float
    thm4: float


@dataclass
class TheoryReport:
    """Every theorem-side quantity for one problem and run configuration."""
    x_star: List[float]
    constants: Dict[str, float]
    omega: float
    sigma_star: float
    sigma_star_m: List[float]
    grad_norms: List[float]
    sigma_rad_bound: float
    sigma_rad_bound_single: float
    sigma_rad_exact: Optional[float]
    neighborhoods: Neighborhoods
    validity: List[ConditionCheck]
    complexity: Dict[str, float]
    scaling: Dict[str, str]

    @property
    def thm2_neighborhood(self) -> float:
        return self.neighborhoods.thm2

    @property
    def thm3_neighborhood(self) -> float:
        return self.neighborhoods.thm3

    @property
    def thm4_neighborhood(self) -> float:
        return self.neighborhoods.thm4

    def violated(self) -> List[ConditionCheck]:
        return [check for check in self.validity if not check.satisfied]

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data['thm2_neighborhood'] = self.neighborhoods.thm2
        data['thm3_neighborhood'] = self.neighborhoods.thm3
        data['thm4_neighborhood'] = self.neighborhoods.thm4
        return data


@dataclass
class RawDataset:
    """Dense dataset read from a LIBSVM file."""
    features: np.ndarray
    targets: np.ndarray
    source: str = '<memory>'

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.targets = np.asarray(self.targets, dtype=np.float64)
        if self.features.ndim != 2 or self.features.shape[0] < 1 or self.features.shape[1] < 1:
            raise ProblemError(f"dataset needs N >= 1 rows and d >= 1 columns, got {self.features.shape}")
        if self.targets.shape != (self.features.shape[0],):
            raise ProblemError("targets and feature rows disagree in length")
        if not (np.all(np.isfinite(self.features)) and np.all(np.isfinite(self.targets))):
            raise ProblemError("dataset contains non-finite values")

    @property
    def N(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]


class PartitionKind(str, Enum):
    IID = 'iid'
    SORTED_BY_TARGET = 'sorted_by_target'


@dataclass(frozen=True)
class PartitionScheme:
    """How rows of a dataset are split across M clients."""
    kind: PartitionKind = PartitionKind.IID
    M: int = 1

    def __post_init__(self):
        try:
            object.__setattr__(self, 'kind', PartitionKind(self.kind))
        except ValueError:
            raise ConfigurationError(f"unknown partition '{self.kind}'", 'problem.partition')
        if int(self.M) != self.M or self.M < 1:
            raise ConfigurationError(f"must be a positive integer, got {self.M}", 'problem.M')


@dataclass(frozen=True)
class SyntheticSource:
    """Parameters of a generated problem."""
    M: int
    n: int
    d: int
    noise: float = 0.0
    heterogeneity: float = 0.0
    lam: Optional[float] = None
    identical_clients: bool = False
    normalize_rows: bool = False
    seed: int = 0


@dataclass(frozen=True)
class LibSVMSource:
    """A LIBSVM file split across clients."""
    path: str
    M: int
    partition: PartitionKind = PartitionKind.IID
    lam: Optional[float] = None
    n_features: Optional[int] = None
    normalize_rows: bool = False
    seed: int = 0


@dataclass
class ExperimentConfig:
    """A parsed experiment file; sweep fields hold lists, single runs hold one value each."""
    name: str
    problem: Union[SyntheticSource, LibSVMSource]
    algorithms: List[Algorithm]
    shuffle: ShuffleMode
    gammas: List[Union[float, str]]
    alpha: Union[float, str]
    eta: Union[float, str]
    epochs: int
    compressor_kind: str
    ks: List[Optional[int]]
    levels: Optional[int]
    seed: int
    repeats: int
    x0: Union[str, Tuple[float, ...]]
    output: str
    raw: Dict[str, Any] = field(default_factory=dict)

    @property
    def grid_size(self) -> int:
        return len(self.algorithms) * len(self.gammas) * len(self.ks)
