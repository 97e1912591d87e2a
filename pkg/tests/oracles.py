"""Independent reference computations used to derive the frozen test values.

Nothing here imports varlab. Everything is plain Python (lists, fractions,
math) so an error in the package cannot leak into its own oracle.
"""
from __future__ import annotations

import math
from fractions import Fraction


def relu(t):
    return t if t > 0 else 0.0


def sigmoid(t):
    return 1.0 / (1.0 + math.exp(-t))


ACTS = {"relu": relu, "abs": abs, "sigmoid": sigmoid}


def forward_lists(layers, x, act, affine_last=False):
    """Loop-based forward pass. ``layers`` is a list of (W rows, b) in plain lists."""
    phi = ACTS[act]
    s = list(x)
    for k, (W, b) in enumerate(layers):
        z = [sum(w * v for w, v in zip(row, s)) + bk for row, bk in zip(W, b)]
        last = k == len(layers) - 1
        s = z if (affine_last and last) else [phi(t) for t in z]
    return s


def fd_jacobian(f, x, h=1e-5):
    """Central-difference Jacobian, rows = outputs."""
    x = [float(v) for v in x]
    cols = []
    for j in range(len(x)):
        xp, xm = list(x), list(x)
        xp[j] += h
        xm[j] -= h
        fp, fm = f(xp), f(xm)
        cols.append([(a - b) / (2 * h) for a, b in zip(fp, fm)])
    return [[cols[j][i] for j in range(len(x))] for i in range(len(cols[0]))]


def fd_gradient(loss, arrays, h=1e-5):
    """Central differences of ``loss()`` w.r.t. every entry of ``arrays`` (mutated and restored)."""
    out = []
    for a in arrays:
        g = a.copy()
        flat, gflat = a.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + h
            lp = loss()
            flat[i] = keep - h
            lm = loss()
            flat[i] = keep
            gflat[i] = (lp - lm) / (2 * h)
        out.append(g)
    return out


def grid_axis_exact(n, lo=-1, hi=1):
    h = Fraction(hi - lo, n - 1)
    return [Fraction(lo) + i * h for i in range(n)]


def v3_cubic_exact(n, margin=2):
    """V3 of f(x, y) = x**3 under interior-mean quadrature, in exact arithmetic.

    The 5-point stencil is exact on cubics, so f_xxx = 6, f_yyy = 0 and the
    ratio is 36 / mean(x**6) over the interior rows.
    """
    ax = grid_axis_exact(n)[margin:n - margin]
    mean_x6 = sum(a ** 6 for a in ax) / len(ax)
    return Fraction(36) / mean_x6


def corrected_width(N_w, L):
    return (-1 + math.sqrt(1 + 4 * N_w / L)) / 2


def binomial_4sigma(p, n):
    return 4.0 * math.sqrt(p * (1 - p) / n)


def checkerboard_counts(n=81, block=10):
    total = interior = boundary = ones = 0
    for i in range(n):
        for j in range(n):
            total += 1
            if i % block == 0 or j % block == 0:
                boundary += 1
            else:
                interior += 1
                ones += (i // block + j // block) % 2
    return total, interior, boundary, ones


if __name__ == "__main__":
    v = v3_cubic_exact(81)
    print("v3 x^3, n=81:", v, float(v))
    print("v3 x^3, n=41:", float(v3_cubic_exact(41)))
    print("continuum x^3:", 36 / (Fraction(2, 7) / 2))
    print("d*(3300,3):", corrected_width(3300, 3))
    print("checkerboard:", checkerboard_counts())
    # hand net: L=2, d=2, relu
    layers = [([[1, -2], [3, 1]], [1, -1]), ([[2, 1], [-1, 1]], [0, 2])]
    print("hand forward relu (1,2):", forward_lists(layers, [1.0, 2.0], "relu"))
    print("hand forward abs (1,2):", forward_lists(layers, [1.0, 2.0], "abs"))
    print("4sigma p=.25 n=1e6:", binomial_4sigma(0.25, 10**6))
