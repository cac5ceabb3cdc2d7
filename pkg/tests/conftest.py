import numpy as np
import pytest


def small_instances():
    """Deterministic fixture set of small problems (n <= 30), some with ties."""
    out = []
    rng = np.random.default_rng(12345)
    for n in (2, 3, 4, 5, 7, 10, 15, 20, 25, 30):
        for p in (1, 2, 3):
            X = rng.standard_normal((n, p))
            y = X @ np.linspace(1.0, 0.5, p) + 0.5 * rng.standard_normal(n)
            e = rng.standard_normal(n)
            u = X[:, 0] + 0.3 * rng.standard_normal(n)
            out.append(dict(name=f"n{n}p{p}", X=X, y=y, e=e, u=u))
            # ties in both the response and the index
            out.append(dict(name=f"n{n}p{p}ties", X=X, y=np.round(y), e=e, u=np.round(u, 1)))
    return out


SMALL = small_instances()


@pytest.fixture(params=SMALL, ids=[c["name"] for c in SMALL])
def small_case(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(2024)


def linear_data(n=200, p=4, seed=0, a=0.0):
    r = np.random.default_rng(seed)
    X = r.standard_normal((n, p))
    b = np.ones(p) / np.sqrt(p)
    u = X @ b
    return X, u + a * np.exp(-u * u) + r.standard_normal(n)
