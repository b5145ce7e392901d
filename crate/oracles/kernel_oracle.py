"""Independent kernel and covariance oracle: brute-force shells, numpy sums, scipy J0."""
import json
import math
import numpy as np
from scipy.special import j0

MUS = [5, 65, 1105, 32045, 1185665]


def shell(mu):
    r = math.isqrt(mu)
    pts = []
    for a in range(-r, r + 1):
        b2 = mu - a * a
        b = math.isqrt(b2)
        if b * b == b2:
            pts.extend({(a, b), (a, -b)})
    return np.array(pts, dtype=float)


def sup_error(mu, radius=4.0, half=80):
    xi = shell(mu) / np.sqrt(mu)
    h = radius / half
    ax = np.arange(-half, half + 1) * h
    X, Y = np.meshgrid(ax, ax)
    mask = np.hypot(X, Y) <= radius + 1e-12
    W = np.stack([X[mask], Y[mask]], axis=1)
    K = np.cos(W @ xi.T).mean(axis=1)
    return float(np.max(np.abs(K - j0(np.hypot(W[:, 0], W[:, 1])))))


def probe_pairs(count, radius):
    out = []
    for i in range(count):
        t = i / count
        ang = 2.399963229728653 * i
        r = radius * (0.1 + 0.9 * t)
        x = (0.0, 0.0) if i % 2 == 0 else (0.3 * np.sin(ang), -0.2 * np.cos(ang))
        out.append((x, (x[0] + r * np.cos(ang), x[1] + r * np.sin(ang))))
    return out


def derandomized(mu):
    pts = shell(mu)
    keep = pts[(pts[:, 0] > 0) & (pts[:, 1] > 0)]
    coeff = 4.0 / np.sqrt(len(pts))
    return keep, coeff


def covariance_deviation(mu, n=50, count=20, radius=4.0):
    keep, c = derandomized(mu)
    lam_sqrt = np.pi * np.sqrt(mu)
    g = (np.arange(n) + 0.5) / n
    Z1, Z2 = np.meshgrid(g, g)
    z1, z2 = Z1.ravel(), Z2.ravel()

    def u(x):
        a = z1[:, None] + x[0] / lam_sqrt
        b = z2[:, None] + x[1] / lam_sqrt
        return c * (np.sin(np.pi * keep[:, 0] * a) * np.sin(np.pi * keep[:, 1] * b)).sum(axis=1)

    worst = 0.0
    for x, y in probe_pairs(count, radius):
        cov = np.mean(u(x) * u(y))
        worst = max(worst, abs(cov - j0(np.hypot(x[0] - y[0], x[1] - y[1]))))
    return worst


if __name__ == "__main__":
    sups = {mu: sup_error(mu) for mu in MUS}
    cov = {mu: covariance_deviation(mu) for mu in [1105, 32045]}
    xi = shell(32045) / np.sqrt(32045)
    at2 = float(abs(np.cos(xi @ np.array([2.0, 0.0])).mean() - j0(2.0)))
    extra = {"sup_error_25": sup_error(25), "delta_32045_at_2": at2}
    print(json.dumps({"sup_error": sups, "covariance_deviation": cov, **extra}, indent=2))
