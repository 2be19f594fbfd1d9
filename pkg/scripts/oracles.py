"""Brute-force oracles for the golden-value table consumed by the tests.

Everything here is deliberately independent of the package's kernel code:
composite Simpson sums on dense grids, the naive (cancelling) excess formula,
and mpmath for a few high-precision spot values.

Run from the repository root:

    python scripts/oracles.py  > tests/data/golden_values.csv
"""

import csv
import math
import sys

import mpmath
import numpy as np


def simpson(y, h):
    return h / 3.0 * (y[0] + y[-1] + 4.0 * y[1:-1:2].sum() + 2.0 * y[2:-1:2].sum())


def tent(s):
    return np.clip(1.0 - np.abs(s), 0.0, None)


def heat_tent_simpson(x, t, n=10**6):
    s = np.linspace(-1.0, 1.0, n + 1)
    y = tent(s) * np.exp(-(s - x) ** 2 / (4.0 * t))
    return simpson(y, 2.0 / n) / (2.0 * math.sqrt(math.pi * t))


def delta_tent_grid(s_values, n_w=2000):
    # Simpson in w on [-1, 0] and [0, 1] separately (kink of the tent at 0)
    out = np.empty_like(s_values)
    w_left = np.linspace(-1.0, 0.0, n_w + 1)
    w_right = np.linspace(0.0, 1.0, n_w + 1)
    h = 1.0 / n_w
    for i in range(0, s_values.size, 2000):
        s = s_values[i:i + 2000, None]
        total = 0.0
        for w in (w_left, w_right):
            y = tent(w)[None, :] * np.exp(-(w[None, :] - s) ** 2 / 4.0)
            total = total + h / 3.0 * (y[:, 0] + y[:, -1] + 4.0 * y[:, 1:-1:2].sum(axis=1)
                                       + 2.0 * y[:, 2:-1:2].sum(axis=1))
        out[i:i + 2000] = total / (2.0 * math.sqrt(math.pi))
    return out


def excess_mass_simpson(p, half_width=40.0, n=10**6):
    # the tent is even, so integrate over [0, half_width] and double
    s = np.linspace(0.0, half_width, n // 2 + 1)
    delta = delta_tent_grid(s)
    e = ((1.0 - p) + delta ** (1.0 - p)) ** (1.0 / (1.0 - p)) - (1.0 - p) ** (1.0 / (1.0 - p))
    return 2.0 * simpson(e, half_width / (n // 2))


def delta_tent_mpmath(s):
    mpmath.mp.dps = 40
    f = lambda w: (1 - abs(w)) * mpmath.exp(-(w - s) ** 2 / 4)
    # fine partition: far from the support the integrand is sharply peaked at w = 1
    return float(mpmath.quad(f, mpmath.linspace(-1, 1, 81)) / (2 * mpmath.sqrt(mpmath.pi)))


def domain_half_width(t_end, tol, mass=1.0):
    return 1.0 + 2.0 * math.sqrt(t_end * math.log(mass / (2.0 * math.sqrt(math.pi * t_end) * tol)))


def main():
    rows = []
    rows.append(("D", 0.0, 1.0, heat_tent_simpson(0.0, 1.0), 1e-13))
    rows.append(("D", 0.7, 0.3, heat_tent_simpson(0.7, 0.3), 1e-13))
    rows.append(("D", 2.5, 4.0, heat_tent_simpson(2.5, 4.0), 1e-13))
    for s in (0.0, 3.0, 10.0, 25.0):
        val = delta_tent_mpmath(s)
        rows.append(("delta", s, 1.0, val, 1e-11 * val))
    for p in (1.0 / 3.0, 0.2, 0.5, 0.7):
        rows.append((f"I_p{p:.6f}", "", "", excess_mass_simpson(p), 1e-10))
    rows.append(("L_tent_t100_tol1e-12", "", 100.0, domain_half_width(100.0, 1e-12), 1e-12))
    rows.append(("L_tent_t200_tol1e-12", "", 200.0, domain_half_width(200.0, 1e-12), 1e-12))
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(("quantity", "x", "t", "value", "oracle_tolerance"))
    for name, x, t, val, tol in rows:
        writer.writerow((name, x, t, repr(float(val)), tol))


if __name__ == "__main__":
    main()
