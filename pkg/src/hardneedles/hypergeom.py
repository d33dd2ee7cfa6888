"""Regularized Gauss hypergeometric function at argument -1."""

from __future__ import annotations

from scipy.special import rgamma


def hyp2f1_regularized_m1(a: float, b: float, c: float, rtol: float = 1e-14, kmax: int = 2000) -> float:
    """Return ``2F1(a, b; c; -1) / Gamma(c)``.

    The Pfaff transformation gives
    ``2F1(a, b; c; -1) = 2**(-b) 2F1(c - a, b; c; 1/2)``, whose series converges
    geometrically. Terms carry ``1/Gamma(c + k)`` through ``rgamma``, which is
    entire, so non-positive integer ``c`` needs no special handling.
    """
    A = c - a
    total = float(rgamma(c))
    pref = 1.0  # (A)_k (b)_k / k! / 2^k
    small = 0
    for k in range(kmax):
        pref *= (A + k) * (b + k) / (k + 1) * 0.5
        term = pref * float(rgamma(c + k + 1))
        total += term
        # require two consecutive small terms; a single term can vanish by accident
        if abs(term) <= rtol * abs(total):
            small += 1
            if small >= 2:
                break
        else:
            small = 0
    else:
        raise RuntimeError(f"hypergeometric series did not converge for a={a}, b={b}, c={c}")
    return 2.0 ** (-b) * total
