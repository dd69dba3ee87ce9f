"""Small fixtures shared by the test modules."""

import numpy as np

from ldaho.net_model import BsConfig, ScenarioTrace, UeConfig


def trace_from_capacity(c, kappa=1.0):
    """Trace whose capacities (bit/s) equal ``c`` (shape (T, I, J) or (I, J)).

    Bandwidth is 1 Hz, so the SINR is 2**c - 1 in linear scale.
    """
    c = np.asarray(c, dtype=float)
    if c.ndim == 2:
        c = c[None]
    T, I, J = c.shape
    sinr_db = 10 * np.log10(np.expm1(c * np.log(2.0)))
    bs = [BsConfig(j, 1.0) for j in range(J)]
    ue = [UeConfig(i) for i in range(I)]
    return ScenarioTrace(sinr_db, bs, ue, kappa=kappa)


def random_trace(rng, T, I, J, lo=0.0, hi=30.0, bw=(5e6, 10e6, 15e6, 20e6)):
    sinr = rng.uniform(lo, hi, size=(T, I, J))
    bs = [BsConfig(j, float(rng.choice(bw))) for j in range(J)]
    ue = [UeConfig(i) for i in range(I)]
    return ScenarioTrace(sinr, bs, ue)


def random_simplex_rows(rng, I, J, interior=False):
    x = rng.dirichlet(np.ones(J), size=I)
    if interior:
        x = 0.9 * x + 0.1 / J
    return x


# criterion number -> (passed, detail); filled by the acceptance tests
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def report(n, ok, detail):
    ACCEPTANCE[n] = (bool(ok), detail)
    print(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
    return bool(ok)
