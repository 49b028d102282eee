"""Grid geometry and the surface / gradient-field containers."""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ContractViolation


def _is_pow2(k):
    return k >= 1 and (k & (k - 1)) == 0


@dataclass(frozen=True)
class GridDims:
    """Shape of an H x W grid, flattened row-major to length ``n``.

    Both sides must be powers of two so the Haar transform is defined at full
    depth.
    """

    rows: int
    cols: int

    def __post_init__(self):
        for name in ("rows", "cols"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or isinstance(v, bool):
                raise ConfigurationError(f"{name} must be an integer, got {v!r}")
            if not _is_pow2(int(v)):
                raise ConfigurationError(
                    f"grid {name} must be a power of two, got {v}")

    @property
    def n(self):
        return self.rows * self.cols

    @property
    def shape(self):
        return (self.rows, self.cols)

    def check(self, v, what="vector"):
        v = np.asarray(v, dtype=float)
        if v.ndim != 1 or v.size != self.n:
            raise ContractViolation(
                f"{what} must have length {self.n} for {self.rows}x{self.cols} "
                f"grid, got shape {v.shape}")
        return v


@dataclass(frozen=True, eq=False)
class SurfaceGrid:
    """Height map z(x, y) stored as a flat row-major vector."""

    dims: GridDims
    z: np.ndarray
    label: str = "surface"

    def __post_init__(self):
        z = self.dims.check(self.z, "surface heights")
        if not np.all(np.isfinite(z)):
            raise ContractViolation(f"surface {self.label!r} has non-finite heights")
        object.__setattr__(self, "z", z)

    @classmethod
    def from_array(cls, arr, label="surface"):
        arr = np.asarray(arr, dtype=float)
        if arr.ndim != 2:
            raise ContractViolation(f"expected a 2-D array, got shape {arr.shape}")
        return cls(GridDims(*arr.shape), arr.ravel().copy(), label)

    def as_array(self):
        return self.z.reshape(self.dims.shape)


@dataclass(frozen=True, eq=False)
class GradientField:
    """Flattened partial derivatives (z_x along columns, z_y along rows)."""

    dims: GridDims
    zx: np.ndarray
    zy: np.ndarray = field(repr=False)

    def __post_init__(self):
        zx = self.dims.check(self.zx, "zx")
        zy = self.dims.check(self.zy, "zy")
        if not (np.all(np.isfinite(zx)) and np.all(np.isfinite(zy))):
            raise ContractViolation("gradient field has non-finite entries")
        object.__setattr__(self, "zx", zx)
        object.__setattr__(self, "zy", zy)
