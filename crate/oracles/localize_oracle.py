"""Independent oracle: square Neumann localization of J0, window R=4, h=0.05, C^1 error, 40x40 base grid."""
import math
import numpy as np
from scipy.special import j0, j1

MUS = [5, 65, 1105, 32045, 1185665]
R, H, NB = 4.0, 0.05, 40


def shell(mu):
    pts = []
    for a in range(-math.isqrt(mu), math.isqrt(mu) + 1):
        b2 = mu - a * a
        b = math.isqrt(b2)
        if b * b == b2:
            pts.extend({(a, b), (a, -b)})
    return pts


def errors(mu):
    full = shell(mu)
    pos = [p for p in full if p[0] > 0 and p[1] > 0]
    lam = math.pi ** 2 * mu
    s = math.sqrt(lam)
    m = min(R / s, 0.25)
    n = int(math.floor(R / H))
    ax = np.arange(-n, n + 1) * H
    X, Y = np.meshgrid(ax, ax)  # row index = y
    mask = X ** 2 + Y ** 2 <= R * R * (1 + 1e-12)
    r = np.hypot(X, Y)
    tv = j0(r)
    with np.errstate(invalid="ignore", divide="ignore"):
        f = np.where(r > 0, -j1(r) / r, -0.5)
    tx, ty = f * X, f * Y
    N1 = np.array([p[0] for p in pos], float) * math.pi
    N2 = np.array([p[1] for p in pos], float) * math.pi
    pref = 16.0 / len(full)
    out = []
    centers = m + (np.arange(NB) + 0.5) * (1 - 2 * m) / NB
    for y0 in centers:
        for x0 in centers:
            c = pref * np.cos(N1 * x0) * np.cos(N2 * y0)
            px = N1[:, None] * (x0 + ax[None, :] / s)
            py = N2[:, None] * (y0 + ax[None, :] / s)
            cx, sx = np.cos(px), -np.sin(px) * (N1[:, None] / s)
            cy, sy = np.cos(py), -np.sin(py) * (N2[:, None] / s)
            v = (cy * c[:, None]).T @ cx
            vx = (cy * c[:, None]).T @ sx
            vy = (sy * c[:, None]).T @ cx
            e = np.maximum(np.abs(v - tv), np.maximum(np.abs(vx - tx), np.abs(vy - ty)))
            out.append(e[mask].max())
    return np.array(out)


def rank(sorted_e, q):
    k = min(max(math.ceil(q * len(sorted_e)), 1), len(sorted_e))
    return sorted_e[k - 1]


res = {mu: np.sort(errors(mu)) for mu in MUS}
eps = rank(res[1105], 0.5)
print("epsilon", repr(float(eps)))
for mu in MUS:
    e = res[mu]
    print(mu, "best_decile", repr(float(rank(e, 0.1))), "median", repr(float(rank(e, 0.5))),
          "fraction", repr(float(np.mean(e < eps))))
