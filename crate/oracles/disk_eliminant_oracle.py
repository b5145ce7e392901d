"""Symbolic check of the disk eliminant: printed Q~ versus the resultant of the Bessel-equation quadratics."""
import sympy as sp

P = sp.symbols("P1:13")
al, w, dm1, t, L = sp.symbols("alpha w dm1 t L")
p = lambda i: P[i - 1]
s = [al, al + w / 4, al + w / 2, al + 3 * w / 4]


def printed(c_weight):
    a = p(3) * p(4) - p(6) * p(1)
    d = p(9) * p(10) - p(12) * p(7)
    b = 2 * al * (p(3) * p(4) + p(1) * p(4)) + dm1 * (p(2) * p(4) - p(5) * p(1)) - (2 * al + w / 2) * (p(6) * p(1) + p(4) * p(1))
    c = (al ** 2 * (p(3) * p(4) + p(1) * p(4)) + al * dm1 * p(2) * p(4)
         - (al + c_weight) * dm1 * p(5) * p(1) - (al + w / 4) ** 2 * (p(6) * p(1) + p(4) * p(1)))
    e = (2 * al + w) * (p(9) * p(10) + p(7) * p(10)) + dm1 * (p(8) * p(10) - p(11) * p(7)) - (2 * al + 3 * w / 2) * (p(12) * p(7) + p(10) * p(7))
    f = ((al + w / 2) ** 2 * (p(9) * p(10) + p(7) * p(10)) + (al + w / 2) * dm1 * p(8) * p(10)
         - (al + 3 * w / 4) * dm1 * p(11) * p(7) - (al + 3 * w / 4) ** 2 * (p(12) * p(7) + p(10) * p(7)))
    q = (b ** 2 * d - 2 * a * c * d - a * b * e + 2 * a ** 2 * f) ** 2 - (a * e - b * d) ** 2 * (b ** 2 - 4 * a * c)
    return a, q


def ode(k):
    f0, f1, f2 = P[3 * k], P[3 * k + 1], P[3 * k + 2]
    x = t + s[k]
    return x ** 2 * f2 + dm1 * x * f1 + (x ** 2 - L) * f0


def eliminate(i, j):
    return sp.Poly(sp.expand(ode(i) * P[3 * j] - ode(j) * P[3 * i]), t)


res = sp.resultant(eliminate(0, 1).as_expr(), eliminate(2, 3).as_expr(), t)
a, q_fixed = printed(w / 4)
print("corrected c: Q~ - 4 a^2 Res == 0:", sp.expand(q_fixed - 4 * a ** 2 * res) == 0)
a, q_lit = printed(w / 2)
print("printed c:   Q~ - 4 a^2 Res == 0:", sp.expand(q_lit - 4 * a ** 2 * res) == 0)
print("total degree in P:", sp.Poly(q_fixed, *P).total_degree())
