"""Finite-difference stencils and banded derivative matrices.

All four derivative matrices annihilate the constant vector, including their
boundary rows.  That identity is what makes the adjoint forward operator
conserve total probability.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import StencilError
from .mesh import Grid1D


@dataclass(frozen=True)
class StencilTriple:
    offsets: tuple[int, int, int]
    coeffs: tuple[float, float, float]

    def apply(self, f, i: int) -> float:
        return sum(c * f[i + o] for o, c in zip(self.offsets, self.coeffs))


def _positive(*widths):
    if any(not w > 0.0 for w in widths):
        raise StencilError(f"mesh widths must be positive, got {widths}")


def central_first(dxl: float, dxr: float) -> StencilTriple:
    _positive(dxl, dxr)
    return StencilTriple(
        (-1, 0, 1),
        (
            -dxr / (dxl * (dxl + dxr)),
            (dxr - dxl) / (dxl * dxr),
            dxl / (dxr * (dxl + dxr)),
        ),
    )


def forward_first(dx1: float, dx2: float) -> StencilTriple:
    """One-sided second-order first derivative on nodes i, i+1, i+2."""
    _positive(dx1, dx2)
    return StencilTriple(
        (0, 1, 2),
        (
            (-2.0 * dx1 - dx2) / (dx1 * (dx1 + dx2)),
            (dx1 + dx2) / (dx1 * dx2),
            -dx1 / (dx2 * (dx1 + dx2)),
        ),
    )


def central_second(dxl: float, dxr: float) -> StencilTriple:
    _positive(dxl, dxr)
    return StencilTriple(
        (-1, 0, 1),
        (
            2.0 / (dxl * (dxl + dxr)),
            -2.0 / (dxl * dxr),
            2.0 / (dxr * (dxl + dxr)),
        ),
    )


class BandedMatrix:
    """Square matrix stored by diagonals.

    ``data[k, i]`` holds ``A[i, i + offsets[k]]`` (zero where the column falls
    outside the matrix).  Products act along axis 0 of their argument, so an
    ``(n, k)`` array is multiplied column by column.
    """

    def __init__(self, offsets, data):
        self.offsets = tuple(int(o) for o in offsets)
        self.data = np.asarray(data, dtype=float)
        if self.data.shape[0] != len(self.offsets):
            raise ValueError("one row of data per diagonal")
        self.n = self.data.shape[1]

    @classmethod
    def from_rows(cls, n: int, rows: dict[int, StencilTriple | dict[int, float]]):
        """Assemble from per-row stencils; keys of ``rows`` are row indices."""
        entries: dict[int, np.ndarray] = {}
        for i, row in rows.items():
            pairs = zip(row.offsets, row.coeffs) if isinstance(row, StencilTriple) else row.items()
            for off, c in pairs:
                if not 0 <= i + off < n:
                    raise StencilError(f"row {i}: column {i + off} outside matrix")
                entries.setdefault(off, np.zeros(n))[i] += c
        offsets = sorted(entries)
        return cls(offsets, np.array([entries[o] for o in offsets]))

    @property
    def lower_bw(self) -> int:
        return max(0, -min(self.offsets))

    @property
    def upper_bw(self) -> int:
        return max(0, max(self.offsets))

    @property
    def T(self) -> "BandedMatrix":
        data = np.zeros_like(self.data)
        for k, off in enumerate(self.offsets):
            if off >= 0:
                data[k, off:] = self.data[k, : self.n - off]
            else:
                data[k, : self.n + off] = self.data[k, -off:]
        return BandedMatrix([-o for o in self.offsets], data)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        out = np.zeros(x.shape, dtype=np.result_type(x, self.data, float))
        pad = (slice(None),) + (None,) * (x.ndim - 1)
        n = self.n
        for d, off in zip(self.data, self.offsets):
            d = d[pad]
            if off >= 0:
                out[: n - off] += d[: n - off] * x[off:]
            else:
                out[-off:] += d[-off:] * x[: n + off]
        return out

    def rmatvec(self, x: np.ndarray) -> np.ndarray:
        """Transpose product without forming the transpose."""
        x = np.asarray(x)
        out = np.zeros(x.shape, dtype=np.result_type(x, self.data, float))
        pad = (slice(None),) + (None,) * (x.ndim - 1)
        n = self.n
        for d, off in zip(self.data, self.offsets):
            d = d[pad]
            if off >= 0:
                out[off:] += d[: n - off] * x[: n - off]
            else:
                out[: n + off] += d[-off:] * x[-off:]
        return out

    __matmul__ = matvec

    def scale_rows(self, a) -> "BandedMatrix":
        """diag(a) @ self"""
        return BandedMatrix(self.offsets, self.data * np.asarray(a, dtype=float)[None, :])

    def scale_cols(self, a) -> "BandedMatrix":
        """self @ diag(a)"""
        a = np.asarray(a, dtype=float)
        data = self.data.copy()
        n = self.n
        for k, off in enumerate(self.offsets):
            if off >= 0:
                data[k, : n - off] *= a[off:]
                data[k, n - off :] = 0.0
            else:
                data[k, -off:] *= a[: n + off]
                data[k, : -off] = 0.0
        return BandedMatrix(self.offsets, data)

    def __add__(self, other: "BandedMatrix") -> "BandedMatrix":
        offsets = sorted(set(self.offsets) | set(other.offsets))
        data = np.zeros((len(offsets), self.n))
        for src in (self, other):
            for d, off in zip(src.data, src.offsets):
                data[offsets.index(off)] += d
        return BandedMatrix(offsets, data)

    def __sub__(self, other: "BandedMatrix") -> "BandedMatrix":
        return self + (-1.0) * other

    def __mul__(self, c: float) -> "BandedMatrix":
        return BandedMatrix(self.offsets, c * self.data)

    __rmul__ = __mul__

    def toarray(self) -> np.ndarray:
        a = np.zeros((self.n, self.n))
        rows = np.arange(self.n)
        for d, off in zip(self.data, self.offsets):
            cols = rows + off
            ok = (cols >= 0) & (cols < self.n)
            a[rows[ok], cols[ok]] = d[ok]
        return a

    def tosparse(self):
        from scipy import sparse

        n = self.n
        diags = [d[: n - o] if o >= 0 else d[-o:] for d, o in zip(self.data, self.offsets)]
        return sparse.diags(diags, self.offsets, shape=(n, n), format="csr")

    def to_lapack(self, lower: int | None = None, upper: int | None = None) -> np.ndarray:
        """Diagonal-ordered form accepted by ``scipy.linalg.solve_banded``."""
        lower = self.lower_bw if lower is None else lower
        upper = self.upper_bw if upper is None else upper
        ab = np.zeros((lower + upper + 1, self.n))
        n = self.n
        for d, off in zip(self.data, self.offsets):
            if off >= 0:
                ab[upper - off, off:] = d[: n - off]
            else:
                ab[upper - off, : n + off] = d[-off:]
        return ab


@dataclass(frozen=True)
class DiffOps:
    Dx: BandedMatrix
    Dxx: BandedMatrix
    Dv: BandedMatrix
    Dvv: BandedMatrix


def _exp_closure(nodes, at_top: bool):
    """Two-point row exact on u = C1 exp(s) + C2 at a boundary node."""
    if at_top:
        e1, e0 = np.exp(nodes[-1]), np.exp(nodes[-2])
        c = e1 / (e1 - e0)
        return {-1: -c, 0: c}
    e0, e1 = np.exp(nodes[0]), np.exp(nodes[1])
    c = e0 / (e1 - e0)
    return {0: -c, 1: c}


def _interior(g: Grid1D):
    first, second = {}, {}
    w = g.widths
    for i in range(1, g.m - 1):
        first[i] = central_first(w[i], w[i + 1])
        second[i] = central_second(w[i], w[i + 1])
    return first, second


def assemble_x_ops(gx: Grid1D) -> tuple[BandedMatrix, BandedMatrix]:
    """D_x, D_xx with the exponential (linear-in-spot) closure at both ends."""
    first, second = _interior(gx)
    m = gx.m
    for rows in (first, second):
        rows[0] = _exp_closure(gx.nodes, at_top=False)
        rows[m - 1] = _exp_closure(gx.nodes, at_top=True)
    return BandedMatrix.from_rows(m, first), BandedMatrix.from_rows(m, second)


def assemble_v_ops(gv: Grid1D, alpha: float) -> tuple[BandedMatrix, BandedMatrix]:
    """D_v, D_vv.

    At the lower end the first derivative is one-sided and the second
    derivative row is zero.  At the upper end, alpha > 0 uses a first-order
    backward difference with zero second derivative, alpha = 0 the
    exponential closure for both.
    """
    first, second = _interior(gv)
    m, w = gv.m, gv.widths
    first[0] = forward_first(w[1], w[2])
    second[0] = {}
    if alpha > 0.0:
        first[m - 1] = {-1: -1.0 / w[m - 1], 0: 1.0 / w[m - 1]}
        second[m - 1] = {}
    else:
        first[m - 1] = _exp_closure(gv.nodes, at_top=True)
        second[m - 1] = _exp_closure(gv.nodes, at_top=True)
    return BandedMatrix.from_rows(m, first), BandedMatrix.from_rows(m, second)


def assemble(grid) -> DiffOps:
    Dx, Dxx = assemble_x_ops(grid.gx)
    Dv, Dvv = assemble_v_ops(grid.gv, 0.5 if grid.alpha_positive else 0.0)
    return DiffOps(Dx, Dxx, Dv, Dvv)
