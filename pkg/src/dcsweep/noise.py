"""Seeded measurement-noise models: Gaussian, Laplace and salt-and-pepper.

Random streams come from numpy's ``Philox`` counter-based bit generator,
keyed by a 64-bit seed.  Philox output is specified by its algorithm (not by
the platform), so a given seed reproduces bit-identical noise everywhere the
same numpy major version runs.  Sub-seeds for independent streams are derived
with :func:`derive_seed`, a BLAKE2b hash of the parts' ``repr``.
"""

import hashlib
import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigurationError, ContractViolation

KINDS = ("gaussian", "laplace", "salt_pepper", "none")

U64_MAX = 2**64 - 1

# Default levels, relative to the RMS of the clean measurement vector.
DEFAULT_SIGMA_REL = 0.05
DEFAULT_SP_PROB = 0.05
DEFAULT_SP_AMPLITUDE = 1.0


def check_seed(seed):
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise ConfigurationError(f"seed must be an integer, got {seed!r}")
    seed = int(seed)
    if not 0 <= seed <= U64_MAX:
        raise ConfigurationError(f"seed must fit in an unsigned 64-bit integer, got {seed}")
    return seed


def derive_seed(*parts):
    """Stable 64-bit seed from an arbitrary tuple of ints / floats / strings."""
    h = hashlib.blake2b(repr(tuple(parts)).encode("utf-8"), digest_size=8)
    return int.from_bytes(h.digest(), "little")


def make_rng(seed):
    return np.random.Generator(np.random.Philox(check_seed(seed)))


def open_uniform(rng, size):
    """Uniform draws strictly inside (0, 1), on a 2**-53 lattice."""
    k = rng.integers(0, 2**53, size=size, dtype=np.int64)
    return (k + 0.5) * 2.0**-53


@dataclass(frozen=True)
class NoiseSpec:
    """Noise model and its magnitude.

    ``level`` is the Gaussian sigma, the Laplace scale ``b``, or the
    salt-and-pepper corruption probability.  With ``relative=True`` the
    Gaussian / Laplace level is multiplied by the RMS of the vector being
    corrupted; it has no effect on salt-and-pepper, whose spikes are always
    ``amplitude * max|v|``.
    """

    kind: str = "none"
    level: float = 0.0
    amplitude: float = DEFAULT_SP_AMPLITUDE
    relative: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(
                f"noise kind must be one of {KINDS}, got {self.kind!r}")
        level = float(self.level)
        if not math.isfinite(level) or level < 0:
            raise ConfigurationError(f"noise level must be a finite value >= 0, got {self.level!r}")
        if self.kind == "salt_pepper" and level > 1:
            raise ConfigurationError(f"salt_pepper probability must be <= 1, got {level}")
        if not math.isfinite(float(self.amplitude)):
            raise ConfigurationError("salt_pepper amplitude must be finite")
        object.__setattr__(self, "level", level)
        object.__setattr__(self, "amplitude", float(self.amplitude))
        object.__setattr__(self, "relative", bool(self.relative))

    @classmethod
    def default(cls, kind):
        """Default magnitudes: sigma = 5% of RMS, Laplace variance matched to it."""
        if kind == "gaussian":
            return cls("gaussian", DEFAULT_SIGMA_REL, relative=True)
        if kind == "laplace":
            return cls("laplace", DEFAULT_SIGMA_REL / math.sqrt(2.0), relative=True)
        if kind == "salt_pepper":
            return cls("salt_pepper", DEFAULT_SP_PROB, DEFAULT_SP_AMPLITUDE)
        if kind == "none":
            return cls("none")
        raise ConfigurationError(f"noise kind must be one of {KINDS}, got {kind!r}")

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ConfigurationError(f"noise spec must be an object, got {d!r}")
        unknown = set(d) - {"kind", "level", "amplitude", "relative"}
        if unknown:
            raise ConfigurationError(f"unknown noise field(s): {sorted(unknown)}")
        if "kind" not in d:
            raise ConfigurationError("noise spec is missing field 'kind'")
        base = cls.default(d["kind"])
        try:
            return cls(kind=d["kind"],
                       level=d.get("level", base.level),
                       amplitude=d.get("amplitude", base.amplitude),
                       relative=d.get("relative", base.relative))
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigurationError):
                raise
            raise ConfigurationError(f"bad noise spec {d!r}: {exc}") from exc

    def to_dict(self):
        return asdict(self)


def laplace_sample(u, b):
    """Inverse-CDF Laplace(0, b) transform of uniform draws ``u`` in (0, 1)."""
    u_arr = np.asarray(u, dtype=float)
    if np.any(~((u_arr > 0) & (u_arr < 1))):
        raise ContractViolation("laplace_sample needs 0 < u < 1")
    if not b > 0:
        raise ContractViolation(f"laplace scale must be positive, got {b}")
    s = u_arr - 0.5
    out = -b * np.sign(s) * np.log1p(-2.0 * np.abs(s))
    return float(out) if np.ndim(u) == 0 else out


def apply_noise(v, spec, seed):
    """Return a noisy copy of ``v``; deterministic in ``(v, spec, seed)``."""
    if not isinstance(spec, NoiseSpec):
        raise ConfigurationError(f"expected a NoiseSpec, got {type(spec).__name__}")
    v = np.asarray(v, dtype=float)
    rng = make_rng(seed)
    out = v.copy()
    if spec.kind == "none" or spec.level == 0.0:
        return out
    scale = spec.level
    if spec.relative and spec.kind != "salt_pepper":
        scale *= float(np.sqrt(np.mean(v * v))) if v.size else 0.0
        if scale == 0.0:
            return out

    if spec.kind == "gaussian":
        out += rng.normal(0.0, scale, size=v.shape)
    elif spec.kind == "laplace":
        out += laplace_sample(open_uniform(rng, v.shape), scale)
    else:
        u = rng.random(size=v.shape)
        spike = spec.amplitude * (float(np.max(np.abs(v))) if v.size else 0.0)
        half = spec.level / 2.0
        out[u < half] = spike
        out[(u >= half) & (u < spec.level)] = -spike
    return out
