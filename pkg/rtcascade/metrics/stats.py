import math
from typing import Sequence

import numpy as np
from scipy.special import betainc

from rtcascade.core.exc import DegenerateStatisticError, DimensionError

# differences whose spread is below this fraction of their mean count as constant
SPREAD_TOLERANCE = 1e-10


def paired_t_test(a: Sequence[float], b: Sequence[float]) -> tuple[float, float]:
    """
    Two-sided paired Student t-test.

    Parameters:
        a: first sample
        b: second sample, paired element-wise with `a`
    Returns:
        (t, p) with t = mean(d) / (sd(d) / sqrt(n)) for d = a - b, sd using n - 1,
        and p from the t distribution with n - 1 degrees of freedom via the
        regularised incomplete beta function
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise DimensionError(
            f"Paired samples need equal 1-D shapes, got {a.shape}, {b.shape}"
        )
    n = a.size
    if n < 2:
        raise DegenerateStatisticError(f"A paired t-test needs n >= 2, got {n}")
    d = a - b
    sd = float(np.std(d, ddof=1))
    if sd <= SPREAD_TOLERANCE * abs(float(d.mean())):
        raise DegenerateStatisticError(
            "The paired differences are constant, t is undefined"
        )
    t = float(d.mean() / (sd / math.sqrt(n)))
    df = n - 1
    p = float(betainc(df / 2.0, 0.5, df / (df + t * t)))
    return t, p
