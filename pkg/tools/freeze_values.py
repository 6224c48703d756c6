"""Recompute the frozen constants used in the test suite.

Every closed-form expected value that appears as a literal in the tests
is derived here from the covariance definitions directly, using only the
math module, so the numbers stay independent of the library code they
check. Run and paste: python tools/freeze_values.py
"""

import math


def se(p, q, ls, sf):
    d2 = sum(((a - b) / l) ** 2 for a, b, l in zip(p, q, ls))
    return sf * sf * math.exp(-0.5 * d2)


def ch_ex1(p, q, a, b, sigma):
    hs2 = (p[0] - q[0]) ** 2 + (p[1] - q[1]) ** 2
    u2 = (p[2] - q[2]) ** 2
    g = a * a * u2 + 1.0
    return sigma * sigma * math.exp(-b * b * hs2 / g) / g


def ch_ex3(p, q, a, b, sigma):
    hs2 = (p[0] - q[0]) ** 2 + (p[1] - q[1]) ** 2
    u2 = (p[2] - q[2]) ** 2
    g = a * a * u2 + 1.0
    return sigma * sigma * g / (g * g + b * b * hs2) ** 1.5


def main():
    print("# se_cov at p=(0.3,-1.2,2.0), q=(1.1,0.4,2.5), l=(1,2,0.5), sigma_f=1.5")
    print(repr(se((0.3, -1.2, 2.0), (1.1, 0.4, 2.5), (1.0, 2.0, 0.5), 1.5)))

    pts = [(0.0, 0.0, 0.0), (1.0, -0.5, 0.3), (-0.4, 0.8, 1.1), (2.0, 1.5, -0.7)]
    a, b, sigma = 0.7, 1.3, 1.2
    for name, fn in (("ch_ex1", ch_ex1), ("ch_ex3", ch_ex3)):
        print(f"# {name} 4x4 at a=0.7, b=1.3, sigma=1.2 over fixed 4-point set")
        for p in pts:
            print([fn(p, q, a, b, sigma) for q in pts])

    print("# pclsk prefactor, one active dimension with s_i=1, s_j=4")
    print(repr(4.0**0.25 / math.sqrt(2.5)))

    print("# leis multiplier at lp-lq=3, l_l=1.7, and product with a base value")
    m = math.exp(-0.5 * (3.0 / 1.7) ** 2)
    base = se((0.0, 0.0, 0.0), (0.6, -0.3, 0.9), (1.1, 0.9, 1.4), 1.3)
    print(repr(m), repr(base), repr(base * m))

    print("# latent_lml closed form at m=1, z=0, sigma_fz=0.8, jitter=1e-3")
    s2 = 0.8**2 + 1e-3**2
    print(repr(-0.5 * math.log(2 * math.pi * s2)))

    print("# lml closed forms at n=1: y=0 sf=1 sn=0; y=0.7 sf=1.2 sn=0.3")
    print(repr(-0.5 * math.log(2 * math.pi)))
    tot = 1.2**2 + 0.3**2
    print(repr(-(0.7**2) / (2 * tot) - 0.5 * math.log(2 * math.pi * tot)))


if __name__ == "__main__":
    main()
