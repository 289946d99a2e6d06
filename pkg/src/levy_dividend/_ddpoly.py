"""Double-double polynomial evaluation for root polishing.

The scale-function identities are checked downstream at 1e-9 absolute on
values that grow like e^{rate * x}; that requires roots and partial-fraction
residues accurate to about one double-precision ulp, while plain Horner
evaluation of the cleared-denominator polynomials stalls near 1e-13 for
mid-plane roots.  A float-pair (hi, lo) representation with error-free
sums and products recovers the missing digits; only the final Newton steps
and residue quotients run here, everything else stays ordinary doubles.
"""

from __future__ import annotations

_SPLITTER = 134217729.0  # 2**27 + 1


def _two_sum(a: float, b: float):
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


def _quick_two_sum(a: float, b: float):
    s = a + b
    return s, b - (s - a)


def _two_prod(a: float, b: float):
    p = a * b
    t = _SPLITTER * a
    ah = t - (t - a)
    al = a - ah
    t = _SPLITTER * b
    bh = t - (t - b)
    bl = b - bh
    err = ((ah * bh - p) + ah * bl + al * bh) + al * bl
    return p, err


def dd_add(x, y):
    s, e = _two_sum(x[0], y[0])
    e += x[1] + y[1]
    return _quick_two_sum(s, e)


def dd_mul(x, y):
    p, e = _two_prod(x[0], y[0])
    e += x[0] * y[1] + x[1] * y[0]
    return _quick_two_sum(p, e)


def dd_div(x, y):
    q1 = x[0] / y[0]
    r = dd_add(x, dd_mul((-q1, 0.0), y))
    q2 = r[0] / y[0]
    r = dd_add(r, dd_mul((-q2, 0.0), y))
    q3 = r[0] / y[0]
    s, e = _quick_two_sum(q1, q2)
    return _quick_two_sum(s, e + q3)


def dd_neg(x):
    return (-x[0], -x[1])


# complex double-double: ((re_hi, re_lo), (im_hi, im_lo))

def cdd(z: complex):
    return ((z.real, 0.0), (z.imag, 0.0))


def cdd_to_complex(z) -> complex:
    return complex(z[0][0] + z[0][1], z[1][0] + z[1][1])


def cdd_add(x, y):
    return (dd_add(x[0], y[0]), dd_add(x[1], y[1]))


def cdd_mul(x, y):
    re = dd_add(dd_mul(x[0], y[0]), dd_neg(dd_mul(x[1], y[1])))
    im = dd_add(dd_mul(x[0], y[1]), dd_mul(x[1], y[0]))
    return (re, im)


def cdd_div(x, y):
    denom = dd_add(dd_mul(y[0], y[0]), dd_mul(y[1], y[1]))
    re = dd_add(dd_mul(x[0], y[0]), dd_mul(x[1], y[1]))
    im = dd_add(dd_mul(x[1], y[0]), dd_neg(dd_mul(x[0], y[1])))
    return (dd_div(re, denom), dd_div(im, denom))


def cdd_polyval(coeffs, z):
    """Horner evaluation of a real-coefficient polynomial at a complex point."""
    acc = cdd(complex(coeffs[0]))
    for c in coeffs[1:]:
        acc = cdd_add(cdd_mul(acc, z), cdd(complex(c)))
    return acc


def polish_root(poly, dpoly, z0: complex, steps: int = 3) -> complex:
    """Newton iterations in double-double arithmetic."""
    z = cdd(z0)
    for _ in range(steps):
        num = cdd_polyval(poly, z)
        den = cdd_polyval(dpoly, z)
        if cdd_to_complex(den) == 0:
            break
        step = cdd_div(num, den)
        z = cdd_add(z, (dd_neg(step[0]), dd_neg(step[1])))
    return cdd_to_complex(z)


def residue_quotient(num_poly, den_poly, z0: complex) -> complex:
    """num(z)/den(z) evaluated in double-double, rounded once at the end."""
    z = cdd(z0)
    return cdd_to_complex(cdd_div(cdd_polyval(num_poly, z), cdd_polyval(den_poly, z)))
