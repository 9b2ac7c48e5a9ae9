"""Per-relation label noise channel.

The channel specifies how an observed label bit depends on the ground-truth
bit, independently for each relation r:

    p(z=1 | y=0) = phi0[r]        (spurious label)
    p(z=0 | y=1) = phi1[r]        (dropped label)

Probabilities are stored and combined in linear space; a floor of
``PROB_FLOOR`` is applied only when logs are taken, so channels with exact
zeros (a perfectly reliable direction) remain representable.
"""

from dataclasses import dataclass

import numpy as np

from .seeding import as_generator

PROB_FLOOR = 1e-12


class DegenerateChannelError(ValueError):
    """Bayes update impossible: both label hypotheses have probability zero."""


def floor_log(p: np.ndarray) -> np.ndarray:
    """log with probabilities floored at PROB_FLOOR."""
    return np.log(np.maximum(p, PROB_FLOOR))


@dataclass(frozen=True)
class NoiseChannel:
    phi0: np.ndarray  # p(z=1 | y=0) per relation
    phi1: np.ndarray  # p(z=0 | y=1) per relation

    def __post_init__(self):
        phi0 = np.ascontiguousarray(self.phi0, dtype=np.float64)
        phi1 = np.ascontiguousarray(self.phi1, dtype=np.float64)
        if phi0.ndim != 1 or phi0.shape != phi1.shape:
            raise ValueError("phi0 and phi1 must be 1-D vectors of equal length")
        if np.any((phi0 < 0) | (phi0 > 1)) or np.any((phi1 < 0) | (phi1 > 1)):
            raise ValueError("channel probabilities must lie in [0, 1]")
        phi0.flags.writeable = False
        phi1.flags.writeable = False
        object.__setattr__(self, "phi0", phi0)
        object.__setattr__(self, "phi1", phi1)

    def __len__(self) -> int:
        return self.phi0.shape[0]

    def prob(self, r: int, y_bit: int, z_bit: int) -> float:
        """Single table entry p(z_bit | y_bit) for relation r."""
        if y_bit not in (0, 1) or z_bit not in (0, 1):
            raise ValueError("bits must be 0 or 1")
        if y_bit == 0:
            return float(self.phi0[r]) if z_bit == 1 else float(1.0 - self.phi0[r])
        return float(self.phi1[r]) if z_bit == 0 else float(1.0 - self.phi1[r])

    def bit_probs(self, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Vectors (p(z|y=0), p(z|y=1)) for an observed vector z."""
        z = np.asarray(z)
        if z.shape != self.phi0.shape:
            raise ValueError(f"length mismatch: z {z.shape} vs channel {self.phi0.shape}")
        given0 = np.where(z == 1, self.phi0, 1.0 - self.phi0)
        given1 = np.where(z == 1, 1.0 - self.phi1, self.phi1)
        return given0, given1

    def bag_prob(self, y: np.ndarray, z: np.ndarray) -> float:
        """p(z | y): product of per-relation table entries."""
        y = np.asarray(y)
        given0, given1 = self.bit_probs(z)
        return float(np.prod(np.where(y == 1, given1, given0)))

    def sample(self, y: np.ndarray, rng) -> np.ndarray:
        """Draw one noisy vector z ~ p(.|y). ``rng`` is a seed or Generator."""
        rng = as_generator(rng)
        y = np.asarray(y)
        p_one = np.where(y == 1, 1.0 - self.phi1, self.phi0)
        return (rng.random(len(self)) < p_one).astype(np.uint8)

    @classmethod
    def noiseless(cls, n: int) -> "NoiseChannel":
        return cls(np.zeros(n), np.zeros(n))

    @classmethod
    def uniform(cls, n: int, phi0: float, phi1: float) -> "NoiseChannel":
        return cls(np.full(n, float(phi0)), np.full(n, float(phi1)))

    def to_json(self) -> dict:
        return {"phi0": self.phi0.tolist(), "phi1": self.phi1.tolist()}

    @classmethod
    def from_config(cls, obj: dict, na_index: int, n_relations: int) -> "NoiseChannel":
        """Parse either explicit arrays or the {na: .., other: ..} shorthand."""
        if "phi0" in obj and "phi1" in obj:
            phi0 = np.asarray(obj["phi0"], dtype=np.float64)
            phi1 = np.asarray(obj["phi1"], dtype=np.float64)
            if phi0.shape != (n_relations,) or phi1.shape != (n_relations,):
                raise ValueError(
                    f"channel arrays must have length {n_relations}, "
                    f"got {phi0.shape} and {phi1.shape}"
                )
            return cls(phi0, phi1)
        if "na" in obj and "other" in obj:
            phi0 = np.full(n_relations, float(obj["other"]["phi0"]))
            phi1 = np.full(n_relations, float(obj["other"]["phi1"]))
            phi0[na_index] = float(obj["na"]["phi0"])
            phi1[na_index] = float(obj["na"]["phi1"])
            return cls(phi0, phi1)
        raise ValueError("channel config needs either phi0/phi1 arrays or na/other blocks")


def flip_noise(y: np.ndarray, p_f: float, rng) -> np.ndarray:
    """Flip each bit of y independently with probability p_f."""
    if not 0.0 <= p_f <= 1.0:
        raise ValueError(f"flip probability {p_f} outside [0, 1]")
    rng = as_generator(rng)
    y = np.asarray(y).astype(np.uint8)
    flips = rng.random(y.shape[0]) < p_f
    return np.where(flips, 1 - y, y).astype(np.uint8)
