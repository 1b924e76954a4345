import numpy as np
import pytest

from slhnet import SLHTriple
from slhnet.hilbert import Operator, destroy


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def random_hermitian(rng, space, scale=1.0):
    d = space.total_dim
    m = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return Operator(space, scale * 0.5 * (m + m.conj().T))


def random_unitary(rng, n):
    m = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    q, r = np.linalg.qr(m)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_triple(rng, n_ports=2, dim=4, label="m", coupling_scale=0.7):
    """Random n-port triple: scalar unitary S, L linear in a/a^dag, random H."""
    a = destroy(label, dim)
    U = random_unitary(rng, n_ports)
    S = [[complex(U[i, j]) for j in range(n_ports)] for i in range(n_ports)]
    L = []
    for _ in range(n_ports):
        c1, c2 = rng.normal(size=2) + 1j * rng.normal(size=2)
        L.append(coupling_scale * (c1 * a + c2 * a.dag()))
    H = random_hermitian(rng, a.space)
    return SLHTriple(S, L, H)
