import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mcdm.datasets import load_acm
from mcdm.design import DesignSet, ProfileCoding, TermSet, encode_predictors, profile_indicator

ACM_PAIRS = ["1", "2", "3", "1:2", "1:3", "2:3"]

# model label -> (S, Z terms, W terms); responses 1=A, 2=C, 3=M
ACM_MODELS = {
    "1": (0, [], ["1", "2", "3"]),
    "2": (2, ["1", "2", "3"], ACM_PAIRS),
    "4a": (2, ["1", "2", "3"], [t for t in ACM_PAIRS if t != "1:2"]),
    "4b": (2, ["1", "2", "3"], [t for t in ACM_PAIRS if t != "1:3"]),
    "4c": (2, ["1", "2", "3"], [t for t in ACM_PAIRS if t != "2:3"]),
    "5": (2, ["1", "3"], ACM_PAIRS),
    "7": (1, ["1"], ACM_PAIRS),
}


@pytest.fixture(scope="session")
def acm():
    table = load_acm()
    coding = ProfileCoding(3, ("A", "C", "M"), (("no", "yes"),) * 3)
    G = profile_indicator([table["alcohol"], table["cigarettes"], table["marijuana"]], coding)
    enc = encode_predictors(table, {"race": "indicator:white", "gender": "indicator:male"})
    return G, enc, coding


def acm_design(acm, model):
    G, enc, coding = acm
    S, z, w = ACM_MODELS[model]
    return DesignSet.for_profiles(enc.X, coding, z, w, enc.labels), S


def random_problem(rng, N=None, R=None, P=None, S=None, z_order=None, scale=1.0):
    """Random profile problem with data simulated from the model."""
    R = R or int(rng.integers(1, 5))
    coding = ProfileCoding(R)
    z_terms = TermSet.up_to_order(R, z_order or int(rng.integers(1, R + 1)))
    w_terms = TermSet.saturated(R)
    P = P or int(rng.integers(1, 6))
    N = N or int(rng.integers(max(20, 2 * P), 201))
    X = rng.standard_normal((N, P))
    d = DesignSet.for_profiles(X, coding, z_terms, w_terms)
    S = S if S is not None else int(rng.integers(1, d.max_rank + 1))
    b_w = rng.normal(scale=0.5, size=d.T)
    B_x = rng.normal(scale=scale, size=(d.P, S))
    B_z = rng.normal(scale=scale, size=(d.Q, S))
    theta = d.W @ b_w + X @ B_x @ B_z.T @ d.Z.T
    p = np.exp(theta - theta.max(axis=1, keepdims=True))
    p /= p.sum(axis=1, keepdims=True)
    y = np.array([rng.choice(d.K, p=row) for row in p])
    G = np.zeros((N, d.K))
    G[np.arange(N), y] = 1
    return G, d, S
