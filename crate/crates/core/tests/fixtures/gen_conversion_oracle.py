"""Regenerates conversion_oracle.csv with 60-digit arithmetic (mpmath).

Rows of kind `gamma` hold (b_t, delta, value); rows of kind `seqsew` hold
(l0, l1, horizon, c, value). Run: python3 gen_conversion_oracle.py > conversion_oracle.csv
"""
import random

import mpmath as mp

mp.mp.dps = 60
rng = random.Random(20240517)


def gamma(b, delta):
    b = mp.mpf(b)
    delta = mp.mpf(delta)
    return 2 + 2 * b + 32 * mp.log((mp.sqrt(8) + mp.sqrt(1 + b)) / delta)


def seqsew(l0, l1, horizon, c):
    root = mp.log(mp.e + mp.sqrt(horizon))
    c_t = 2 + mp.log(root, 2)
    return mp.mpf(c) * l0 * (root + c_t * mp.log(1 + mp.mpf(l1) / l0))


print("kind,a,b,c,d,value")
for _ in range(50):
    b = rng.choice([0.0, rng.uniform(0, 5), rng.uniform(0, 500)])
    delta = 10 ** rng.uniform(-8, mp.log10(0.25))
    b, delta = float(b), float(delta)
    print(f"gamma,{b!r},{delta!r},,,{mp.nstr(gamma(b, delta), 30)}")
for _ in range(50):
    l0 = rng.randint(1, 64)
    l1 = float(rng.uniform(0, l0 * 1.5))
    horizon = rng.choice([1, 2, 10, 100, 10_000, rng.randint(1, 10**7)])
    c = float(rng.choice([1.0, rng.uniform(0.1, 10)]))
    print(f"seqsew,{l0},{l1!r},{horizon},{c!r},{mp.nstr(seqsew(l0, l1, horizon, c), 30)}")
