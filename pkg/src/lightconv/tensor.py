"""Dense NCHW tensor value type and the parameter records blocks share.

A :class:`Tensor` is an immutable rank-4 array of 64-bit floats laid out
(batch, channels, rows, cols) with the column index fastest-varying. Every
operation in this library consumes and produces finite tensors; NaN/Inf is
rejected at construction so a bad value is caught where it appears, not
three blocks later.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError


class Tensor:
    """Immutable (n, c, h, w) array of float64, finite everywhere.

    The wrapped ndarray is exposed read-only through :attr:`data`; use
    :meth:`to_array` for a mutable copy.
    """

    __slots__ = ("_data",)

    def __init__(self, data, copy: bool = True):
        if copy:
            arr = np.array(data, dtype=np.float64)
        else:
            arr = np.asarray(data, dtype=np.float64)
        if arr.ndim != 4:
            raise ShapeError(f"tensor must be rank 4 (n, c, h, w), got shape {arr.shape}")
        if arr.size and not np.all(np.isfinite(arr)):
            raise ShapeError("tensor contains non-finite values")
        arr.setflags(write=False)
        self._data = arr

    # -- constructors -------------------------------------------------

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Tensor":
        """Wrap a freshly computed array without copying."""
        return cls(arr, copy=False)

    @classmethod
    def zeros(cls, shape) -> "Tensor":
        return cls._wrap(np.zeros(shape, dtype=np.float64))

    @classmethod
    def full(cls, shape, value: float) -> "Tensor":
        return cls._wrap(np.full(shape, float(value), dtype=np.float64))

    @classmethod
    def from_flat(cls, shape, values) -> "Tensor":
        """Build a tensor from a row-major flat sequence."""
        flat = np.asarray(values, dtype=np.float64).ravel()
        n_expected = int(np.prod(shape))
        if flat.size != n_expected:
            raise ShapeError(
                f"flat data has {flat.size} values, shape {tuple(shape)} needs {n_expected}"
            )
        return cls._wrap(flat.reshape(shape).copy())

    # -- accessors ----------------------------------------------------

    @property
    def data(self) -> np.ndarray:
        """Read-only view of the underlying array."""
        return self._data

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self._data.shape

    @property
    def n(self) -> int:
        return self._data.shape[0]

    @property
    def c(self) -> int:
        return self._data.shape[1]

    @property
    def h(self) -> int:
        return self._data.shape[2]

    @property
    def w(self) -> int:
        return self._data.shape[3]

    @property
    def size(self) -> int:
        return self._data.size

    def to_array(self) -> np.ndarray:
        """Mutable copy of the data."""
        return self._data.copy()

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"Tensor(shape={self.shape})"


@dataclass(frozen=True)
class ConvSpec:
    """Hyperparameters of a 2-D convolution.

    ``weights`` passed alongside a spec must be shaped
    (out_channels, in_channels // groups, kernel, kernel).
    """

    in_channels: int
    out_channels: int
    kernel: int
    stride: int = 1
    padding: int = 0
    groups: int = 1
    has_bias: bool = False

    def __post_init__(self):
        if self.kernel < 1:
            raise ValueError(f"kernel must be >= 1, got {self.kernel}")
        if self.stride < 1:
            raise ValueError(f"stride must be >= 1, got {self.stride}")
        if self.padding < 0:
            raise ValueError(f"padding must be >= 0, got {self.padding}")
        if self.in_channels < 1 or self.out_channels < 1:
            raise ValueError("channel counts must be >= 1")
        if self.groups < 1:
            raise ValueError(f"groups must be >= 1, got {self.groups}")
        if self.in_channels % self.groups:
            raise ValueError(
                f"in_channels {self.in_channels} not divisible by groups {self.groups}"
            )
        if self.out_channels % self.groups:
            raise ValueError(
                f"out_channels {self.out_channels} not divisible by groups {self.groups}"
            )

    @property
    def weight_shape(self) -> tuple[int, int, int, int]:
        return (
            self.out_channels,
            self.in_channels // self.groups,
            self.kernel,
            self.kernel,
        )

    def output_hw(self, h: int, w: int) -> tuple[int, int]:
        ho = (h + 2 * self.padding - self.kernel) // self.stride + 1
        wo = (w + 2 * self.padding - self.kernel) // self.stride + 1
        if ho < 1 or wo < 1:
            raise ShapeError(
                f"non-positive output dims ({ho}, {wo}) for input ({h}, {w}) with {self}"
            )
        return ho, wo


@dataclass
class GroupNormParams:
    """Per-channel affine (gamma, beta) plus grouping for group normalization."""

    gamma: np.ndarray
    beta: np.ndarray
    num_groups: int
    epsilon: float = 1e-5

    def __post_init__(self):
        self.gamma = np.asarray(self.gamma, dtype=np.float64).ravel()
        self.beta = np.asarray(self.beta, dtype=np.float64).ravel()
        if self.gamma.shape != self.beta.shape:
            raise ValueError(
                f"gamma length {self.gamma.size} != beta length {self.beta.size}"
            )
        if self.gamma.size < 1:
            raise ValueError("gamma/beta must have at least one channel")
        if self.num_groups < 1:
            raise ValueError(f"num_groups must be >= 1, got {self.num_groups}")
        if self.gamma.size % self.num_groups:
            raise ValueError(
                f"channels {self.gamma.size} not divisible by num_groups {self.num_groups}"
            )
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")

    @property
    def channels(self) -> int:
        return self.gamma.size
