"""
Unbiased compression operators of class B^d(omega) with per-message bit accounting.

Every operator satisfies E[C(x)] = x and E||C(x)||^2 <= (omega + 1) ||x||^2.
"""

import math
import logging
from abc import ABC, abstractmethod
from typing import Dict, Type

import numpy as np

from ..data.models import CompressorSpec
from ..utils.errors import ConfigurationError

logger = logging.getLogger(__name__)

VALUE_BITS = 64
INDEX_BITS = 32


class Compressor(ABC):
    """Randomized map R^d -> R^d; randomness comes only from the generator passed in."""

    kind = 'base'
    lossless = False

    def __init__(self, d: int):
        if d < 1:
            raise ConfigurationError(f"dimension must be >= 1, got {d}", 'compressor')
        self.d = d

    @abstractmethod
    def compress(self, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Return C(x) as a dense vector."""

    @abstractmethod
    def omega(self) -> float:
        """Variance parameter of the operator."""

    @abstractmethod
    def uplink_bits(self) -> int:
        """Bits needed to transmit one compressed d-vector."""

    @classmethod
    def from_spec(cls, spec: CompressorSpec, d: int) -> 'Compressor':
        return cls(d)

    def __repr__(self):
        return f"{type(self).__name__}(d={self.d}, omega={self.omega():g})"


class IdentityCompressor(Compressor):
    """No compression: dense 64-bit values."""

    kind = 'identity'
    lossless = True

    def compress(self, x, rng=None):
        return x

    def omega(self):
        return 0.0

    def uplink_bits(self):
        return VALUE_BITS * self.d


class RandKCompressor(Compressor):
    """
    Random sparsification: keep a uniform size-k coordinate subset S and scale by d/k,
    C(x) = (d/k) sum_{i in S} x_i e_i.
    """

    kind = 'randk'

    def __init__(self, d: int, k: int):
        super().__init__(d)
        if not 1 <= k <= d:
            raise ConfigurationError(f"k must satisfy 1 <= k <= d={d}, got {k}", 'compressor.k')
        self.k = k
        self.scale = d / k

    @classmethod
    def from_spec(cls, spec, d):
        return cls(d, spec.k)

    def sample_subset(self, rng: np.random.Generator) -> np.ndarray:
        return rng.choice(self.d, size=self.k, replace=False)

    def sparsify(self, x: np.ndarray, subset) -> np.ndarray:
        """Deterministic part of the operator for a given index subset."""
        compressed = np.zeros_like(x)
        compressed[subset] = self.scale * x[subset]
        return compressed

    def compress(self, x, rng):
        return self.sparsify(x, self.sample_subset(rng))

    def omega(self):
        return self.d / self.k - 1.0

    def uplink_bits(self):
        return self.k * (VALUE_BITS + INDEX_BITS)


class RandomDitheringCompressor(Compressor):
    """
    l2 random dithering with s levels: C(x) = ||x|| sign(x) xi / s, where
    xi_i = floor(s |x_i| / ||x||) + Bernoulli(fractional part).
    """

    kind = 'dithering'

    def __init__(self, d: int, levels: int):
        super().__init__(d)
        if levels < 1:
            raise ConfigurationError(f"levels must be >= 1, got {levels}", 'compressor.levels')
        self.levels = levels

    @classmethod
    def from_spec(cls, spec, d):
        return cls(d, spec.levels)

    def compress(self, x, rng):
        norm = float(np.linalg.norm(x))
        if norm == 0.0:
            return np.zeros_like(x)
        scaled = self.levels * np.abs(x) / norm
        lower = np.floor(scaled)
        xi = lower + (rng.random(self.d) < scaled - lower)
        return norm * np.sign(x) * xi / self.levels

    def omega(self):
        return min(self.d / self.levels ** 2, math.sqrt(self.d) / self.levels)

    def uplink_bits(self):
        level_bits = math.ceil(math.log2(self.levels + 1))
        return VALUE_BITS + self.d * (1 + level_bits)


COMPRESSORS: Dict[str, Type[Compressor]] = {
    IdentityCompressor.kind: IdentityCompressor,
    RandKCompressor.kind: RandKCompressor,
    RandomDitheringCompressor.kind: RandomDitheringCompressor,
}


def make_compressor(spec: CompressorSpec, d: int) -> Compressor:
    """
    Build the operator described by spec for dimension d.

    Raises:
        ConfigurationError: parameters out of range for d (e.g. k > d)
    """
    return COMPRESSORS[spec.kind].from_spec(spec, d)


def omega(spec: CompressorSpec, d: int) -> float:
    return make_compressor(spec, d).omega()


def uplink_bits(spec: CompressorSpec, d: int) -> int:
    return make_compressor(spec, d).uplink_bits()
