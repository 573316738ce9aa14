"""Independent reference computations used by the tests."""

import mpmath as mp
import numpy as np

FIELDS = ("c_b_paper", "c_b_impl", "epsilon", "a_gamma", "c1", "c2", "c3", "m_gamma", "c_riccati")


def constants_mp(lam, nu, alpha, gamma, dps=50):
    """All closed-form constants in arbitrary precision, straight from the formulas."""
    with mp.workdps(dps):
        lam, nu, a, g = (mp.mpf(str(x)) for x in (lam, nu, alpha, gamma))
        eps = 2 - 6 * a - 2 * g
        A = mp.sqrt(lam**eps - 1)
        c1 = lam ** (2 * g + 1) - lam
        c2 = 2 * c1 / (2 * lam + lam**2 / 2 + lam ** (1 - 2 * g))
        c3 = (1 + lam ** (2 * a)) * c2
        M = 8 * nu * (2 + c3) * mp.sqrt(1 + c2) / (A * lam * c2)
        c = A * lam * c2 / 8
        vals = (lam**a - lam**-a, lam ** (1 + a) - lam ** (1 - a), eps, A, c1, c2, c3, M, c)
        return {k: float(v) for k, v in zip(FIELDS, vals)}


def bilinear_terms(u, v, lam):
    """B(u, v) term by term with explicit 1-based indices."""
    n = len(u)
    uu = [0.0] + list(u) + [0.0]
    vv = [0.0] + list(v) + [0.0]
    out = []
    for k in range(1, n + 1):
        out.append(-lam**k * uu[k - 1] * vv[k - 1] + lam ** (k + 1) * uu[k] * vv[k + 1])
    return np.array(out)
