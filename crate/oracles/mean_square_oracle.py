"""Independent Monte-Carlo estimate of the mean of E^2 over (z0, window) for square Neumann, target J0."""
import math
import numpy as np
from scipy.special import j0

MUS = [5, 65, 1105, 32045, 1185665]
R = 4.0


def shell(mu):
    pts = set()
    for a in range(-math.isqrt(mu), math.isqrt(mu) + 1):
        b2 = mu - a * a
        b = math.isqrt(b2)
        if b * b == b2:
            pts |= {(a, b), (a, -b)}
    return sorted(pts)


rng = np.random.default_rng(7)
xs = []
ys = []
for mu in MUS:
    full = np.array(shell(mu), float)
    pos = full[(full[:, 0] > 0) & (full[:, 1] > 0)]
    s = math.sqrt(math.pi ** 2 * mu)
    acc = []
    for _ in range(4000):
        m = min(R / s, 0.25)
        z0 = rng.uniform(m, 1 - m, 2)
        r = R * math.sqrt(rng.uniform())
        t = rng.uniform(0, 2 * math.pi)
        z = np.array([r * math.cos(t), r * math.sin(t)])
        c = 16 / len(full) * np.cos(math.pi * pos[:, 0] * z0[0]) * np.cos(math.pi * pos[:, 1] * z0[1])
        x = z0 + z / s
        v = np.sum(c * np.cos(math.pi * pos[:, 0] * x[0]) * np.cos(math.pi * pos[:, 1] * x[1]))
        k = np.mean(np.cos(full @ z / math.sqrt(mu)))
        acc.append((v - k) ** 2)
    ms = float(np.mean(acc))
    xs.append(math.log(math.pi ** 2 * mu))
    ys.append(math.log(ms))
    print(mu, len(full), ms)
print("slope", np.polyfit(xs, ys, 1)[0])
