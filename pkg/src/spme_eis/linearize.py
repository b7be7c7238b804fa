from __future__ import annotations

import logging
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from spme_eis.errors import ParameterDomainError
from spme_eis.formats.files import atomic_write_text
from spme_eis.model.dae import DaeSystem

logger = logging.getLogger(__name__)

FD_STEP = 1e-6
FD_FLOOR = 1e-8
DISCREPANCY_FLOOR = 1e-4


def jacobian(dae: DaeSystem, x_m) -> sp.csr_matrix:
    """Exact dF/dx at ``x_m``; the sparsity pattern does not depend on ``x_m``."""
    return dae.jacobian(np.asarray(x_m, dtype=float))


def fd_jacobian(dae: DaeSystem, x_m, h: float = FD_STEP) -> sp.csr_matrix:
    """Central-difference Jacobian, one column at a time.

    Column ``j`` uses the step ``max(h * |x_j|, 1e-8)``.
    """
    if not 1e-9 <= h <= 1e-3:
        raise ParameterDomainError("h", h, "relative step must lie in [1e-9, 1e-3]")
    x = np.array(x_m, dtype=float)
    n = x.size
    out = np.empty((dae.size, n))
    for j in range(n):
        step = max(h * abs(x[j]), FD_FLOOR)
        orig = x[j]
        x[j] = orig + step
        f_plus = dae.residual(x)
        x[j] = orig - step
        f_minus = dae.residual(x)
        x[j] = orig
        out[:, j] = (f_plus - f_minus) / (2.0 * step)
    return sp.csr_matrix(out)


def relative_discrepancy(exact: sp.spmatrix, approx: sp.spmatrix, floor: float = DISCREPANCY_FLOOR) -> float:
    """Largest entrywise ``|dJ_ij| / max(|J_ij|, floor * max_k |J_ik|)`` over the union pattern.

    The row-relative floor only applies to entries that are zero or near zero
    in ``exact``; every other entry is compared against itself.
    """
    exact = sp.csr_matrix(exact)
    diff = abs(exact - sp.csr_matrix(approx)).tocoo()
    if diff.nnz == 0:
        return 0.0
    row_max = np.asarray(abs(exact).max(axis=1).todense()).ravel()
    ref = np.abs(np.asarray(exact[diff.row, diff.col]).ravel())
    denom = np.maximum(ref, floor * row_max[diff.row])
    denom[denom == 0.0] = 1.0
    return float(np.max(diff.data / denom))


def dump_coo(matrix: sp.spmatrix, path: Path) -> None:
    """Write ``# row, col, value`` coordinate text."""
    coo = sp.coo_matrix(matrix)
    lines = ["# row, col, value"]
    lines.extend(f"{r}, {c}, {v!r}" for r, c, v in zip(coo.row.tolist(), coo.col.tolist(), coo.data.tolist()))
    atomic_write_text(path, "\n".join(lines) + "\n")
    logger.info("Wrote Jacobian (%d entries) to %s", coo.nnz, path)
