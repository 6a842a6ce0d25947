"""Parametric generators with exact rendering Jacobians.

Two representations are provided:

* :class:`DirectVector` renders its parameters verbatim (identity Jacobian).
* :class:`SplatField2D` is an additive field of isotropic Gaussian splats
  evaluated on a pixel grid, seen through an affine "camera" that re-samples
  the grid.

Both expose a flat parameter vector so the optimizer can treat them alike.
``render`` is written dtype-generically so complex-step differentiation can
be used as an independent check of ``pullback``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import ShapeError, ViewError


@dataclass(frozen=True)
class ViewSpec:
    kind: str = "identity"
    angle: float = 0.0
    translation: tuple = (0.0, 0.0)

    def __post_init__(self):
        if self.kind not in ("identity", "affine"):
            raise ViewError(f"unknown view kind {self.kind!r}")
        object.__setattr__(self, "translation", tuple(float(v) for v in self.translation))
        if len(self.translation) != 2:
            raise ViewError("translation must be a 2-vector")

    @property
    def is_identity(self) -> bool:
        return self.kind == "identity"


IDENTITY = ViewSpec()


class DirectVector:
    """theta is the image itself."""

    def __init__(self, params):
        params = np.array(params, dtype=np.float64).ravel()
        if not np.all(np.isfinite(params)):
            raise ShapeError("DirectVector parameters must be finite")
        self.params = params

    @property
    def dim(self) -> int:
        return self.params.size

    @property
    def image_dim(self) -> int:
        return self.params.size

    def image_shape(self):
        return (1, self.params.size, 1)

    def get_params(self) -> np.ndarray:
        return self.params.copy()

    def set_params(self, theta) -> None:
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != self.params.shape:
            raise ShapeError(f"expected {self.params.shape} parameters, got {theta.shape}")
        self.params = theta.copy()

    def copy(self) -> "DirectVector":
        return DirectVector(self.params)

    def render(self, view: ViewSpec = IDENTITY, params=None):
        if not view.is_identity:
            raise ViewError("DirectVector only supports the identity view")
        p = self.params if params is None else params
        return p.copy()

    def pullback(self, view: ViewSpec, image_grad) -> np.ndarray:
        if not view.is_identity:
            raise ViewError("DirectVector only supports the identity view")
        g = np.asarray(image_grad, dtype=np.float64)
        if g.shape != (self.image_dim,):
            raise ShapeError(f"image gradient shape {g.shape} != ({self.image_dim},)")
        return g.copy()


@dataclass(frozen=True)
class Grid:
    width: int
    height: int
    channels: int = 1

    @property
    def size(self) -> int:
        return self.width * self.height * self.channels

    @property
    def center(self) -> np.ndarray:
        return np.array([(self.width - 1) / 2.0, (self.height - 1) / 2.0])

    def points(self) -> np.ndarray:
        """Pixel coordinates (x, y), row-major over (height, width)."""
        ys, xs = np.meshgrid(np.arange(self.height, dtype=np.float64),
                             np.arange(self.width, dtype=np.float64), indexing="ij")
        return np.stack([xs.ravel(), ys.ravel()], axis=1)


def view_points(grid: Grid, view: ViewSpec) -> np.ndarray:
    """Grid points after the view's affine map (rotation about the grid centre, then shift)."""
    pts = grid.points()
    if view.is_identity:
        return pts
    c, s = np.cos(view.angle), np.sin(view.angle)
    rot = np.array([[c, -s], [s, c]])
    ctr = grid.center
    return (pts - ctr) @ rot.T + ctr + np.asarray(view.translation)


class SplatField2D:
    """Additive isotropic Gaussian splats on a ``width x height x channels`` grid.

    Flat parameter layout, per splat: ``[cx, cy, log_scale, amp_0 .. amp_{C-1}]``.
    """

    def __init__(self, centers, log_scales, amplitudes, grid: Grid):
        self.grid = grid
        centers = np.array(centers, dtype=np.float64).reshape(-1, 2)
        n = centers.shape[0]
        log_scales = np.array(log_scales, dtype=np.float64).reshape(n)
        amplitudes = np.array(amplitudes, dtype=np.float64).reshape(n, grid.channels)
        self.params = np.concatenate([centers, log_scales[:, None], amplitudes], axis=1).ravel()

    @property
    def n_splats(self) -> int:
        return self.params.size // self.stride

    @property
    def stride(self) -> int:
        return 3 + self.grid.channels

    @property
    def dim(self) -> int:
        return self.params.size

    @property
    def image_dim(self) -> int:
        return self.grid.size

    def image_shape(self):
        return (self.grid.height, self.grid.width, self.grid.channels)

    def _unpack(self, params):
        p = params.reshape(-1, self.stride)
        return p[:, 0:2], p[:, 2], p[:, 3:]

    @property
    def centers(self):
        return self._unpack(self.params)[0]

    @property
    def log_scales(self):
        return self._unpack(self.params)[1]

    @property
    def amplitudes(self):
        return self._unpack(self.params)[2]

    def get_params(self) -> np.ndarray:
        return self.params.copy()

    def set_params(self, theta) -> None:
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != self.params.shape:
            raise ShapeError(f"expected {self.params.shape} parameters, got {theta.shape}")
        self.params = theta.copy()

    def copy(self) -> "SplatField2D":
        out = SplatField2D(np.zeros((0, 2)), [], np.zeros((0, self.grid.channels)), self.grid)
        out.params = self.params.copy()
        return out

    def _kernel(self, view, params):
        centers, log_scales, amps = self._unpack(params)
        q = view_points(self.grid, view)                          # (P, 2)
        diff = q[:, None, :] - centers[None, :, :]                 # (P, N, 2)
        sq = np.sum(diff * diff, axis=2)                           # (P, N)
        inv_var = np.exp(-2.0 * log_scales)                        # 1 / scale^2
        k = np.exp(-0.5 * sq * inv_var[None, :])
        return diff, sq, inv_var, k, amps

    def render(self, view: ViewSpec = IDENTITY, params=None):
        p = self.params if params is None else params
        if self.n_splats == 0:
            return np.zeros(self.image_dim, dtype=p.dtype)
        _, _, _, k, amps = self._kernel(view, p)
        return (k @ amps).ravel()                                  # (P, C) row-major

    def pullback(self, view: ViewSpec, image_grad) -> np.ndarray:
        g = np.asarray(image_grad, dtype=np.float64)
        if g.shape != (self.image_dim,):
            raise ShapeError(f"image gradient shape {g.shape} != ({self.image_dim},)")
        if self.n_splats == 0:
            return np.zeros(0)
        diff, sq, inv_var, k, amps = self._kernel(view, self.params)
        g = g.reshape(-1, self.grid.channels)                      # (P, C)
        d_amp = k.T @ g                                            # (N, C)
        # per (pixel, splat): sum_c g[p, c] * amp[n, c] * k[p, n]
        gak = (g @ amps.T) * k                                     # (P, N)
        d_center = np.einsum("pn,pnd->nd", gak, diff) * inv_var[:, None]
        d_log_scale = np.sum(gak * sq, axis=0) * inv_var
        return np.concatenate([d_center, d_log_scale[:, None], d_amp], axis=1).ravel()


Representation = Union[DirectVector, SplatField2D]


def render(rep: Representation, view: ViewSpec = IDENTITY) -> np.ndarray:
    return rep.render(view)


def pullback(rep: Representation, view: ViewSpec, image_grad) -> np.ndarray:
    """Adjoint Jacobian product J^T g of ``render`` at the current parameters."""
    return rep.pullback(view, image_grad)


def random_splat_field(rng: np.random.Generator, grid: Grid, n_splats: int = 4) -> SplatField2D:
    centers = rng.uniform([0, 0], [grid.width - 1, grid.height - 1], size=(n_splats, 2))
    log_scales = rng.uniform(np.log(0.8), np.log(3.0), size=n_splats)
    amps = rng.normal(size=(n_splats, grid.channels))
    return SplatField2D(centers, log_scales, amps, grid)
