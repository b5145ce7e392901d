"""Independent multistart floor: relative L2 distance of J0 + 0.7 J0(|z - (1.2, 0.4)|) to 8-plane-wave spans.

Grid: ball of radius 4, step 0.2. Variable projection with scipy least_squares from 60 random starts.
"""
import numpy as np
from scipy.optimize import least_squares
from scipy.special import j0

R, H, T = 4.0, 0.2, 8
n = int(np.floor(R / H))
ax = np.arange(-n, n + 1) * H
X, Y = np.meshgrid(ax, ax)
m = X ** 2 + Y ** 2 <= R * R * (1 + 1e-12)
x, y = X[m], Y[m]
f = j0(np.hypot(x, y)) + 0.7 * j0(np.hypot(x - 1.2, y - 0.4))
nf = np.linalg.norm(f)


def resid(th):
    ph = np.outer(x, np.cos(th)) + np.outer(y, np.sin(th))
    A = np.hstack([np.cos(ph), np.sin(ph)])
    c, *_ = np.linalg.lstsq(A, f, rcond=1e-13)
    return (f - A @ c) / nf


rng = np.random.default_rng(11)
best = 1.0
for k in range(60):
    th0 = rng.uniform(0, np.pi, T)
    sol = least_squares(resid, th0, method="lm", xtol=1e-12, ftol=1e-12)
    r = np.linalg.norm(resid(sol.x))
    best = min(best, r)
print("points", len(f))
print("floor", repr(float(best)))
