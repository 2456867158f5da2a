import numpy as np
import pytest

from ghzres.reservoirs import RateSet


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_density(rng, d):
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


def random_hermitian(rng, d):
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return a + a.conj().T


def naive_embed(matrix, sites, dims):
    """Sum over matrix elements of Kronecker products of |a><b| and identities."""
    local = [dims[s] for s in sites]
    out = np.zeros((int(np.prod(dims)),) * 2, dtype=complex)
    for ia, a in enumerate(np.ndindex(*local)):
        for ib, b in enumerate(np.ndindex(*local)):
            if matrix[ia, ib] == 0:
                continue
            factors = []
            for s, d in enumerate(dims):
                if s in sites:
                    k = sites.index(s)
                    e = np.zeros((d, d))
                    e[a[k], b[k]] = 1
                    factors.append(e)
                else:
                    factors.append(np.eye(d))
            term = factors[0]
            for f in factors[1:]:
                term = np.kron(term, f)
            out += matrix[ia, ib] * term
    return out


QUTRIT_RATES = RateSet(kappa_u=50.0, kappa_st=1e3, kappa_c=1e3, kappa_p=2.0)
STATE_COND_RATES = RateSet(kappa_u=5.0, kappa_t=5.0, kappa_d=100.0, kappa_r=1e3, kappa_st=1e3,
                           kappa_c=50.0, kappa_p=0.5)
AUDIT_RATES = RateSet(kappa_u=1.0, kappa_d=10.0, kappa_t=1.0, kappa_st=100.0, kappa_r=100.0,
                      kappa_c=10.0, kappa_f=10.0, kappa_p=0.1)
