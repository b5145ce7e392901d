"""Independent lattice oracle: brute-force shells, scipy arclength, discrepancy-greedy scan on x^2 + 3y^2."""
import math
import numpy as np
from scipy.integrate import quad


def shell(a1, a2, mu):
    pts = []
    for x in range(-math.isqrt(mu // a1), math.isqrt(mu // a1) + 1):
        rest = mu - a1 * x * x
        if rest % a2:
            continue
        y2 = rest // a2
        y = math.isqrt(y2)
        if y * y == y2:
            pts.extend({(x, y), (x, -y)})
    return pts


def arclength_fraction(a1, a2):
    speed = lambda t: math.sqrt(math.sin(t) ** 2 / a1 + math.cos(t) ** 2 / a2)
    total = quad(speed, 0, 2 * math.pi, epsabs=1e-13, epsrel=1e-13, limit=200)[0]
    return lambda t: quad(speed, 0, t, epsabs=1e-13, epsrel=1e-13, limit=200)[0] / total


def discrepancy(a1, a2, pts, frac):
    vals = []
    for x, y in pts:
        t = math.atan2(math.sqrt(a2) * y, math.sqrt(a1) * x) % (2 * math.pi)
        v = frac(t)
        vals.append(0.0 if v >= 1.0 else v)
    v = np.sort(vals)
    n = len(v)
    i = np.arange(n)
    return float(np.max(np.maximum((i + 1) / n - v, v - i / n)))


def greedy(a1, a2, count, slack=0.25, step=1):
    frac = arclength_fraction(a1, a2)
    out, best, mu = [], math.inf, step
    while len(out) < count:
        pts = shell(a1, a2, mu)
        if pts:
            d = discrepancy(a1, a2, pts, frac)
            if d < best * (1 + slack):
                out.append((mu, d))
                best = min(best, d)
        mu += step
    return out


if __name__ == "__main__":
    print("greedy x^2+3y^2", greedy(1, 3, 3))
    print("greedy x^2+3y^2 multiples of 4", greedy(1, 3, 3, step=4))
    counts = [len(shell(1, 1, n)) for n in range(0, 10001)]
    print("r2 checksum", sum(counts), "r2(32045)", len(shell(1, 1, 32045)))
    frac = lambda t: t / (2 * math.pi)
    print("disc", {mu: discrepancy(1, 1, shell(1, 1, mu), frac) for mu in [1, 5, 65, 1105, 32045, 1185665]})
