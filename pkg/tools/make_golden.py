"""Regenerate the frozen oracle values under tests/golden/.

Everything here is plain bisection in mpmath at 60 digits. No Lambert W
library routine and nothing from the package is used, so the files stay an
independent check on the shipped float64 code.

    python3 tools/make_golden.py
"""

import json
from pathlib import Path

import mpmath as mp

mp.mp.dps = 60
TOL = mp.mpf("1e-40")
OUT = Path(__file__).resolve().parents[1] / "tests" / "golden"


def bisect(g, lo, hi, tol=TOL):
    glo = g(lo)
    ghi = g(hi)
    assert glo * ghi <= 0, (lo, hi, glo, ghi)
    while hi - lo > tol:
        mid = (lo + hi) / 2
        gm = g(mid)
        if (gm > 0) == (glo > 0):
            lo, glo = mid, gm
        else:
            hi = mid
    return (lo + hi) / 2


def w_of(z):
    """Principal-branch inverse of w*exp(w) for z >= 0, by bisection."""
    z = mp.mpf(z)
    if z == 0:
        return mp.mpf(0)
    hi = max(mp.mpf(1), mp.log(z) + 1)
    return bisect(lambda w: w * mp.exp(w) - z, mp.mpf(0), hi)


def lambert_values():
    omega = bisect(lambda w: w * mp.exp(w) - 1, mp.mpf(0), mp.mpf(1))
    w710 = bisect(lambda w: w + mp.log(w) - 710, mp.mpf(1), mp.mpf(710))
    return {"omega": mp.nstr(omega, 30), "w_of_log_710": mp.nstr(w710, 30)}


def hetero_o1():
    # N0=2, m=1, lambda=1; agent 3 repeats agent 1 (cyclic template).
    alpha = [mp.mpf(1), mp.mpf(2), mp.mpf(1)]
    beta = [mp.mpf("0.4"), mp.mpf("0.6"), mp.mpf("0.4")]
    lam = mp.mpf(1)

    def aggregates(j):
        inv = sum(1 / a for a in alpha[:j])
        a_sig = 1 / inv
        b_sig = a_sig * sum(b / a for b, a in zip(beta[:j], alpha[:j]))
        return a_sig, b_sig

    a3, b3 = aggregates(3)
    A3 = 1 / b3
    k3 = [(beta[i] * A3 - 1) / alpha[i] for i in range(3)]

    a2, b2 = aggregates(2)

    def lam_terms(x):
        return [w_of(lam * A3 * mp.exp(-alpha[i] * k3[i] + (beta[i] + lam) * x - 1))
                for i in range(2)]

    def f(x):
        ws = lam_terms(x)
        return (1 + a2 * sum(w / alpha[i] for i, w in enumerate(ws))) / (b2 + lam) - x

    lo = 1 / (b2 + lam)
    hi = max((lam * A3 * mp.exp(-alpha[i] * k3[i]) + 1) / (beta[i] + lam) for i in range(2))
    A2 = bisect(f, lo, hi)
    ws = lam_terms(A2)
    k2 = [((beta[i] + lam) * A2 - 1 - ws[i]) / alpha[i] for i in range(2)]
    return {
        "n0": 2, "m": 1, "lambda": 1.0,
        "alpha": [1.0, 2.0, 1.0], "beta": [0.4, 0.6, 0.4],
        "A": {"2": mp.nstr(A2, 30), "3": mp.nstr(A3, 30)},
        "k": {"2": [mp.nstr(v, 30) for v in k2], "3": [mp.nstr(v, 30) for v in k3]},
    }


if __name__ == "__main__":
    OUT.mkdir(parents=True, exist_ok=True)
    (OUT / "lambert.json").write_text(json.dumps(lambert_values(), indent=2) + "\n")
    (OUT / "hetero_o1.json").write_text(json.dumps(hetero_o1(), indent=2) + "\n")
    print("wrote", sorted(p.name for p in OUT.glob("*.json")))
