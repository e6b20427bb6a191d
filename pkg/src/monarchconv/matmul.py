"""Cache-blocked complex matrix products.

Tiles are multiplied with numpy and accumulated in complex128 in a fixed
order over the inner dimension, so results do not depend on how work is
distributed between threads.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class BlockedMatmulConfig:
    tile_rows: int = 16
    tile_cols: int = 16
    tile_inner: int = 16

    def __post_init__(self):
        if min(self.tile_rows, self.tile_cols, self.tile_inner) < 1:
            raise ValueError("tile extents must be >= 1")


DEFAULT_TILES = BlockedMatmulConfig()


def _ceil_div(a, b):
    return -(-a // b)


def tile_count(m, n, k, cfg):
    return _ceil_div(m, cfg.tile_rows) * _ceil_div(n, cfg.tile_cols) * _ceil_div(k, cfg.tile_inner)


def blocked_matmul(a, b, cfg=DEFAULT_TILES):
    """``a @ b`` for 2-D complex matrices, computed tile by tile.

    >>> import numpy as np
    >>> blocked_matmul(np.eye(3), np.arange(9.0).reshape(3, 3)).real
    array([[0., 1., 2.],
           [3., 4., 5.],
           [6., 7., 8.]])
    """
    a = np.asarray(a, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError("blocked_matmul expects 2-D matrices")
    m, k = a.shape
    k2, n = b.shape
    if k != k2:
        raise ValueError(f"dimension mismatch: {a.shape} @ {b.shape}")
    out = np.zeros((m, n), dtype=np.complex128)
    tr, tc, ti = cfg.tile_rows, cfg.tile_cols, cfg.tile_inner
    for i0 in range(0, m, tr):
        for j0 in range(0, n, tc):
            acc = out[i0:i0 + tr, j0:j0 + tc]
            for p0 in range(0, k, ti):
                acc += a[i0:i0 + tr, p0:p0 + ti] @ b[p0:p0 + ti, j0:j0 + tc]
    return out


def left_apply(mat, x, rows, inner, cfg):
    """``mat[:rows, :inner] @ x[..., :inner, :]`` for a stack of data matrices.

    ``mat`` is a small factor matrix. The long trailing axis of ``x`` is not
    tiled in Python; it is swept by each tile product. Partial tiles are
    charged as whole tiles. Returns a complex128 array and the number of
    ``cfg``-sized tile products it represents.
    """
    batch = x.shape[:-2]
    cols = x.shape[-1]
    out = np.zeros(batch + (rows, cols), dtype=np.complex128)
    tr, ti = cfg.tile_rows, cfg.tile_inner
    for i0 in range(0, rows, tr):
        i1 = min(rows, i0 + tr)
        acc = out[..., i0:i1, :]
        for p0 in range(0, inner, ti):
            p1 = min(inner, p0 + ti)
            acc += mat[i0:i1, p0:p1] @ x[..., p0:p1, :]
    nbatch = int(np.prod(batch)) if batch else 1
    return out, nbatch * tile_count(rows, cols, inner, cfg)


def right_apply(x, mat, inner, cols, cfg):
    """``x[:, :inner] @ mat[:inner, :cols]`` for a tall 2-D ``x``.

    Rows of ``x`` are independent sequences and are swept, not tiled, in
    Python. Returns a complex128 array and the tile-product count.
    """
    rows = x.shape[0]
    out = np.zeros((rows, cols), dtype=np.complex128)
    tc, ti = cfg.tile_cols, cfg.tile_inner
    for j0 in range(0, cols, tc):
        j1 = min(cols, j0 + tc)
        acc = out[:, j0:j1]
        for p0 in range(0, inner, ti):
            p1 = min(inner, p0 + ti)
            acc += x[:, p0:p1] @ mat[p0:p1, j0:j1]
    return out, tile_count(rows, cols, inner, cfg)
