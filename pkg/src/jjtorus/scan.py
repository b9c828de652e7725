"""Rotation-number scans over the (B, A) plane with row-wise resumption."""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
import os

import numpy as np

from .dynamics import DEFAULT_TOL, ModelParams, rotation_number


def _row(args):
    A, B_values, omega, tol = args
    out = np.empty((len(B_values), 3))
    for i, B in enumerate(B_values):
        r = rotation_number(ModelParams(float(B), float(A), omega), tol)
        out[i] = r.rho, float(r.locked), r.residual
    return out


@dataclass
class ScanGrid:
    """nx x ny grid; cells[j, i] = (rho, locked, residual) at (B_values[i], A_values[j])."""

    B_range: tuple
    A_range: tuple
    omega: float
    nx: int
    ny: int
    tol: float = DEFAULT_TOL
    cells: np.ndarray = None
    done: np.ndarray = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise ValueError("nx and ny must be >= 2")
        if not self.omega > 0:
            raise ValueError("omega must be positive")
        if self.cells is None:
            self.cells = np.full((self.ny, self.nx, 3), np.nan)
        if self.done is None:
            self.done = np.zeros(self.ny, dtype=bool)

    @property
    def B_values(self):
        return np.linspace(*self.B_range, self.nx)

    @property
    def A_values(self):
        return np.linspace(*self.A_range, self.ny)

    @property
    def rho(self):
        return self.cells[:, :, 0]

    @property
    def locked(self):
        return self.cells[:, :, 1] == 1.0

    @property
    def complete(self):
        return bool(self.done.all())

    def resume_token(self):
        """Indices of rows still to compute."""
        return [int(j) for j in np.nonzero(~self.done)[0]]

    def run(self, threads=1, rows=None, checkpoint=None):
        """Compute the pending rows (or ``rows``); optionally save after each row."""
        todo = self.resume_token() if rows is None else list(rows)
        B = self.B_values
        tasks = [(self.A_values[j], B, self.omega, self.tol) for j in todo]
        if threads > 1 and len(tasks) > 1:
            with ProcessPoolExecutor(threads) as ex:
                results = ex.map(_row, tasks)
                for j, res in zip(todo, results):
                    self._store(j, res, checkpoint)
        else:
            for j, t in zip(todo, tasks):
                self._store(j, _row(t), checkpoint)
        return self

    def _store(self, j, res, checkpoint):
        self.cells[j] = res
        self.done[j] = True
        if checkpoint:
            self.save(checkpoint)

    def save(self, path):
        tmp = path + ".tmp.npz"
        np.savez(tmp, B_range=self.B_range, A_range=self.A_range, omega=self.omega,
                 nx=self.nx, ny=self.ny, tol=self.tol, cells=self.cells, done=self.done)
        os.replace(tmp, path)

    @classmethod
    def load(cls, path):
        d = np.load(path)
        return cls(tuple(d["B_range"]), tuple(d["A_range"]), float(d["omega"]), int(d["nx"]),
                   int(d["ny"]), float(d["tol"]), d["cells"].copy(), d["done"].copy())

    def rows_csv(self):
        B, A = self.B_values, self.A_values
        for j in range(self.ny):
            for i in range(self.nx):
                yield (B[i], A[j], self.rho[j, i], bool(self.locked[j, i]))


@dataclass
class QuantizationReport:
    locked_cells: int
    non_integer_locked: int
    fragmented_rows: list
    monotonicity_violations: int
    integers: list

    @property
    def ok(self):
        return (self.non_integer_locked == 0 and not self.fragmented_rows
                and self.monotonicity_violations == 0)


def quantization_report(grid, slack=0.0):
    """Check integer locks, per-row contiguity of each lock level, and rho monotone in B.

    Along a row A = const the rotation number is non-decreasing in B, so
    each level set {rho = r} meets the row in one interval of cells.
    """
    rho, locked = grid.rho, grid.locked
    nonint = int(np.sum(locked & (rho != np.round(rho))))
    fragmented = []
    levels = sorted({int(r) for r in rho[locked]})
    for j in range(grid.ny):
        for r in levels:
            idx = np.nonzero(locked[j] & (rho[j] == r))[0]
            if idx.size and idx[-1] - idx[0] + 1 != idx.size:
                fragmented.append((j, r))
    # bracket-width slack for unlocked estimates: 2 / max_periods
    viol = int(np.sum(np.diff(rho, axis=1) < -(slack + 2.0 / 200)))
    return QuantizationReport(int(locked.sum()), nonint, fragmented, viol, levels)
