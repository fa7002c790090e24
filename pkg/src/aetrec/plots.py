"""Raster heatmaps of nodal fields on the disk.

Triangle rasterization onto a fixed 512x512 grid with fixed color ranges
(conductivities on [1, 10], differences on [0, 3] unless overridden).
Plots are visual conveniences; nothing downstream consumes them.
"""

import numpy as np

from . import mesh as meshmod

RASTER_SIZE = 512
SIGMA_RANGE = (1.0, 10.0)
DIFF_RANGE = (0.0, 3.0)


def rasterize(mesh, values, size=RASTER_SIZE):
    """Sample the P1 field on a size x size grid over [-1, 1]^2.

    Pixels outside the meshed polygon are NaN.
    """
    values = np.asarray(values, dtype=float)
    ticks = (np.arange(size) + 0.5) / size * 2.0 - 1.0
    gx, gy = np.meshgrid(ticks, ticks)
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    tri_idx, bary = meshmod.locate_points(mesh, pts)
    out = np.full(len(pts), np.nan)
    found = tri_idx >= 0
    if np.any(found):
        tris = mesh.triangles[tri_idx[found]]
        out[found] = np.sum(values[tris] * bary[found], axis=1)
    # image row 0 at the top (y = +1)
    return out.reshape(size, size)[::-1]


def heatmap_png(path, mesh, values, vmin, vmax, size=RASTER_SIZE):
    """Write a PNG heatmap with the given fixed color range."""
    from matplotlib import colormaps
    from PIL import Image

    grid = rasterize(mesh, values, size=size)
    span = vmax - vmin
    if span <= 0:
        raise ValueError("vmax must exceed vmin")
    normed = np.clip((grid - vmin) / span, 0.0, 1.0)
    inside = np.isfinite(grid)
    normed = np.where(inside, normed, 0.0)
    rgba = colormaps["viridis"](normed)
    rgba[..., 3] = np.where(inside, 1.0, 0.0)
    img = Image.fromarray((rgba * 255.0 + 0.5).astype(np.uint8), mode="RGBA")
    img.save(path, format="PNG")


def sigma_png(path, mesh, values):
    heatmap_png(path, mesh, values, *SIGMA_RANGE)


def difference_png(path, mesh, values):
    heatmap_png(path, mesh, values, *DIFF_RANGE)
