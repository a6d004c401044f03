"""Reference p-values for the one-tailed paired t-test.

Inputs are drawn as doubles; mpmath works on their exact binary values
at 50 significant digits. Run from this directory:
    python3 gen_paired_t.py > paired_t.json
"""
import json
import random

import mpmath

mpmath.mp.dps = 50
rng = random.Random(20240917)


def reference(a, b):
    d = [mpmath.mpf(x) - mpmath.mpf(y) for x, y in zip(a, b)]
    m = len(d)
    mean = mpmath.fsum(d) / m
    var = mpmath.fsum((x - mean) ** 2 for x in d) / (m - 1)
    t = mean / (mpmath.sqrt(var) / mpmath.sqrt(m))
    df = mpmath.mpf(m - 1)
    tail = mpmath.betainc(df / 2, mpmath.mpf(1) / 2, 0, df / (df + t * t), regularized=True) / 2
    p = tail if t >= 0 else 1 - tail
    return t, p


cases = []
for i in range(50):
    m = rng.choice([2, 3, 4, 5, 8, 10, 15, 30, 90]) if i >= 4 else [2, 3, 5, 90][i]
    shift = rng.uniform(-0.05, 0.08)
    spread = rng.choice([0.005, 0.02, 0.1])
    b = [rng.uniform(0.5, 0.9) for _ in range(m)]
    a = [y + shift + rng.gauss(0.0, spread) for y in b]
    t, p = reference(a, b)
    cases.append({
        "a": [repr(x) for x in a],
        "b": [repr(x) for x in b],
        "t": mpmath.nstr(t, 30),
        "p": mpmath.nstr(p, 30),
    })

print(json.dumps({"cases": cases}, indent=1))
