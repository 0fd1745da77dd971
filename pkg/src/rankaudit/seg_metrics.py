"""Volume-overlap and surface-agreement metrics between voxel masks.

Conventions fixed here for degenerate inputs:

* both masks empty: ``dsc`` = 1.0 and ``nsd`` = 1.0,
* exactly one mask with an empty boundary: ``nsd`` = 0.0,
* a foreground voxel is a boundary voxel iff at least one of its six face
  neighbours is background or lies outside the volume,
* distances are measured between voxel centres in millimetres.

The distance transform is exact: squared distances are carried as integers
in units of ``1/scale`` mm^2 (``scale`` clears the denominators of the
squared spacings), so every comparison, including the tolerance test inside
``nsd``, is an exact integer comparison with no floating-point ambiguity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .data_model import VoxelMask
from .errors import ShapeMismatchError, ValidationError

__all__ = [
    "Tolerance",
    "BoundarySet",
    "DistanceField",
    "DEFAULT_TOLERANCE_MM",
    "dsc",
    "boundary",
    "distance_field",
    "nsd",
]

DEFAULT_TOLERANCE_MM = 1.5


@dataclass(frozen=True)
class Tolerance:
    """Surface-distance tolerance in millimetres."""

    tau: float

    def __post_init__(self) -> None:
        tau = float(self.tau)
        if not math.isfinite(tau) or tau < 0:
            raise ValidationError(f"tolerance must be finite and nonnegative, got {self.tau!r}")
        object.__setattr__(self, "tau", tau)


def _tau_mm(tol: "Tolerance | float | int") -> float:
    return tol.tau if isinstance(tol, Tolerance) else Tolerance(float(tol)).tau


@dataclass(frozen=True)
class BoundarySet:
    """Boundary voxel coordinates of a mask, with the originating geometry."""

    voxels: tuple[tuple[int, int, int], ...]
    source_dims: tuple[int, int, int]
    spacing: tuple[float, float, float]

    def __len__(self) -> int:
        return len(self.voxels)

    def as_mask(self) -> np.ndarray:
        """Boolean occupancy array of the boundary voxels, indexed [x, y, z]."""
        arr = np.zeros(self.source_dims, dtype=bool)
        if self.voxels:
            idx = np.asarray(self.voxels, dtype=np.intp)
            arr[idx[:, 0], idx[:, 1], idx[:, 2]] = True
        return arr


@dataclass(frozen=True, eq=False)
class DistanceField:
    """Per-voxel distance in mm to the nearest voxel of a reference boundary.

    ``values`` holds distances in mm (+inf when the reference is empty).
    ``sq_scaled`` holds the exact squared distances as integers in units of
    ``1/scale`` mm^2, flat in x-fastest order, or None per voxel when the
    reference boundary is empty.
    """

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]
    values: np.ndarray
    sq_scaled: tuple["int | None", ...]
    scale: int

    def within(self, tol: "Tolerance | float") -> np.ndarray:
        """Boolean array: squared distance <= tau^2, decided in exact arithmetic."""
        tau = _tau_mm(tol)
        threshold = Fraction(tau) ** 2 * self.scale
        limit = math.floor(threshold)
        flat = np.fromiter(
            (s is not None and s <= limit for s in self.sq_scaled),
            dtype=bool,
            count=len(self.sq_scaled),
        )
        return flat.reshape(self.dims, order="F")

    def sq_mm2(self, x: int, y: int, z: int) -> "Fraction | None":
        """Exact squared distance in mm^2 at one voxel, or None when infinite."""
        nx, ny, _ = self.dims
        s = self.sq_scaled[x + nx * (y + ny * z)]
        return None if s is None else Fraction(s, self.scale)


def _check_same_grid(a: VoxelMask, b: VoxelMask) -> None:
    if a.dims != b.dims or a.spacing != b.spacing:
        raise ShapeMismatchError(
            f"masks disagree on geometry: dims {a.dims} vs {b.dims}, spacing {a.spacing} vs {b.spacing}"
        )


def dsc(gt: VoxelMask, pred: VoxelMask) -> float:
    """Volume-overlap score 2|A&B| / (|A|+|B|); 1.0 when both masks are empty."""
    _check_same_grid(gt, pred)
    n_gt = int(gt.voxels.sum())
    n_pred = int(pred.voxels.sum())
    if n_gt + n_pred == 0:
        return 1.0
    n_common = int((gt.voxels & pred.voxels).sum())
    return 2.0 * n_common / (n_gt + n_pred)


def boundary(mask: VoxelMask) -> BoundarySet:
    """Foreground voxels with a background (or out-of-volume) face neighbour."""
    vox = mask.voxels
    interior = vox.copy()
    for axis in range(3):
        for direction in (-1, 1):
            neighbour = np.zeros_like(vox)
            src = [slice(None)] * 3
            dst = [slice(None)] * 3
            if direction == 1:
                dst[axis], src[axis] = slice(0, -1), slice(1, None)
            else:
                dst[axis], src[axis] = slice(1, None), slice(0, -1)
            neighbour[tuple(dst)] = vox[tuple(src)]
            interior &= neighbour
    surface = vox & ~interior
    coords = tuple(tuple(int(v) for v in row) for row in np.argwhere(surface))
    return BoundarySet(voxels=coords, source_dims=mask.dims, spacing=mask.spacing)


def _scaled_weights(spacing: tuple[float, float, float]) -> tuple[int, int, int, int]:
    """Integer per-axis squared spacings (wx, wy, wz) and the common scale.

    wx / scale == spacing_x^2 exactly, and likewise for y and z.
    """
    fx, fy, fz = (Fraction(s) ** 2 for s in spacing)
    scale = math.lcm(fx.denominator, fy.denominator, fz.denominator)
    return int(fx * scale), int(fy * scale), int(fz * scale), scale


def _edt_line(g: list, weight: int) -> list:
    """Exact 1-D transform: out[p] = min_q weight*(p-q)^2 + g[q], None = +inf.

    Lower-envelope scan over parabolas; crossings are kept as integer
    (numerator, denominator) pairs so every comparison is exact.
    """
    n = len(g)
    sites = [i for i in range(n) if g[i] is not None]
    if not sites:
        return [None] * n
    vertices = [sites[0]]
    crossings: list = [None]  # crossings[i] separates vertices[i-1] and vertices[i]
    for q in sites[1:]:
        while True:
            r = vertices[-1]
            num = (g[q] - g[r]) + weight * (q * q - r * r)
            den = 2 * weight * (q - r)  # positive: q > r
            if len(vertices) > 1:
                pn, pd = crossings[-1]
                if num * pd <= pn * den:
                    vertices.pop()
                    crossings.pop()
                    continue
            break
        vertices.append(q)
        crossings.append((num, den))
    out = [None] * n
    k = 0
    for p in range(n):
        while k + 1 < len(vertices):
            cn, cd = crossings[k + 1]
            if cn <= p * cd:
                k += 1
            else:
                break
        q = vertices[k]
        out[p] = weight * (p - q) * (p - q) + g[q]
    return out


def distance_field(ref: BoundarySet) -> DistanceField:
    """Exact anisotropic Euclidean distance transform of a boundary set.

    Separable: one exact 1-D squared-distance pass per axis. Returns an
    all-infinite field when the reference boundary is empty.
    """
    nx, ny, nz = ref.source_dims
    wx, wy, wz, scale = _scaled_weights(ref.spacing)
    flat_ref = ref.as_mask().ravel(order="F")
    g: list = [0 if b else None for b in flat_ref]

    for z in range(nz):
        for y in range(ny):
            start = nx * (y + ny * z)
            g[start : start + nx] = _edt_line(g[start : start + nx], wx)
    plane = nx * ny
    for z in range(nz):
        base = plane * z
        for x in range(nx):
            sl = slice(base + x, base + x + plane, nx)
            g[sl] = _edt_line(g[sl], wy)
    for y in range(ny):
        for x in range(nx):
            start = x + nx * y
            sl = slice(start, start + plane * nz, plane)
            g[sl] = _edt_line(g[sl], wz)

    values = np.fromiter(
        (math.inf if s is None else math.sqrt(s / scale) for s in g),
        dtype=np.float64,
        count=len(g),
    ).reshape((nx, ny, nz), order="F")
    return DistanceField(
        dims=ref.source_dims,
        spacing=ref.spacing,
        values=values,
        sq_scaled=tuple(g),
        scale=scale,
    )


def nsd(gt: VoxelMask, pred: VoxelMask, tol: "Tolerance | float") -> float:
    """Fraction of pooled boundary voxels within tolerance of the other boundary.

    Counts, over both boundaries, the voxels whose distance to the opposite
    boundary is <= tau, and divides by the total boundary size. Returns 1.0
    when both boundaries are empty and 0.0 when exactly one is.
    """
    _check_same_grid(gt, pred)
    tau = _tau_mm(tol)
    b_gt = boundary(gt)
    b_pred = boundary(pred)
    if len(b_gt) == 0 and len(b_pred) == 0:
        return 1.0
    if len(b_gt) == 0 or len(b_pred) == 0:
        return 0.0
    to_pred = distance_field(b_pred).within(tau)
    to_gt = distance_field(b_gt).within(tau)
    hits = int(to_pred[b_gt.as_mask()].sum()) + int(to_gt[b_pred.as_mask()].sum())
    return hits / (len(b_gt) + len(b_pred))
