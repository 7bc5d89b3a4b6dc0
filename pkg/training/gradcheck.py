"""
Central finite-difference check of autograd gradients.
"""

import logging
from typing import Callable, Optional, Tuple

import numpy as np

from .models import TrainingError

logger = logging.getLogger(__name__)

MIN_EPSILON = 1e-6
MAX_EPSILON = 1e-3
DEFAULT_COORDINATES = 50
# Relative errors are measured against at least this magnitude
ERROR_FLOOR = 1e-6


def finite_difference_check(
    loss_fn: Callable[[np.ndarray], Tuple[float, np.ndarray]],
    E: np.ndarray,
    eps: float = 1e-5,
    n_coordinates: int = DEFAULT_COORDINATES,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """
    Max relative error between the reported gradient and central differences.

    loss_fn maps a parameter matrix to (loss, gradient). Coordinates are drawn
    from rows with a non-zero reported gradient when there are any, so the
    check covers the rows the batch actually touches.
    """
    if not MIN_EPSILON <= eps <= MAX_EPSILON:
        raise TrainingError(f"eps must be in [{MIN_EPSILON}, {MAX_EPSILON}], got {eps}")

    rng = rng if rng is not None else np.random.default_rng(0)
    params = np.array(getattr(E, "values", E), dtype=np.float64, copy=True)
    _, analytic = loss_fn(params.copy())

    touched = np.flatnonzero(np.any(analytic != 0.0, axis=1))
    rows = touched if len(touched) else np.arange(params.shape[0])
    pool = [(r, c) for r in rows.tolist() for c in range(params.shape[1])]
    count = min(n_coordinates, len(pool))
    chosen = rng.choice(len(pool), size=count, replace=False)

    worst = 0.0
    for index in chosen.tolist():
        row, col = pool[index]
        plus = params.copy()
        minus = params.copy()
        plus[row, col] += eps
        minus[row, col] -= eps
        numeric = (loss_fn(plus)[0] - loss_fn(minus)[0]) / (2.0 * eps)
        exact = analytic[row, col]
        scale = max(abs(numeric), abs(exact), ERROR_FLOOR)
        worst = max(worst, abs(numeric - exact) / scale)

    logger.debug(f"Finite-difference check on {count} coordinates: max rel error {worst:.3e}")
    return worst
