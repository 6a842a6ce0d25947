import numpy as np
import pytest
from scipy.special import logsumexp
from scipy.stats import multivariate_normal

from prefdistill import GaussianMixture, make_linear_schedule

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def report():
    def _report(name, ok, detail=""):
        ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] {name}  {detail}".rstrip())
        return ok
    return _report


@pytest.fixture(scope="session")
def sched():
    return make_linear_schedule(1000, 1e-4, 0.02)


@pytest.fixture(scope="session")
def two_mode():
    mu = np.array([4.0, 0.0])
    return GaussianMixture.from_arrays([0.5, 0.5], [mu, -mu], [1.0, 1.0])


def random_mixture(rng, dim=None, k=None, labels=2):
    dim = dim or int(rng.integers(1, 5))
    k = k or int(rng.integers(1, 5))
    w = rng.uniform(0.2, 1.0, size=k)
    w /= w.sum()
    w[-1] = 1.0 - w[:-1].sum()
    means = rng.normal(scale=3.0, size=(k, dim))
    stdevs = rng.uniform(0.2, 2.0, size=k)
    lab = [i % labels for i in range(k)]
    return GaussianMixture.from_arrays(w, means, stdevs, lab)


def reference_log_density(x, t, gmm, sched, label=None):
    """Diffused mixture density built from scipy's Gaussian, independent of the package."""
    ab = sched.alpha_bar[t]
    terms = []
    for wk, mk, sk, lk in zip(gmm.weights, gmm.means, gmm.stdevs, gmm.labels):
        if label is not None and lk != label:
            continue
        var = ab * sk ** 2 + (1 - ab)
        terms.append((wk, multivariate_normal.logpdf(x, np.sqrt(ab) * mk, var * np.eye(len(mk)))))
    w = np.array([a for a, _ in terms])
    lp = np.array([b for _, b in terms])
    return logsumexp(lp + np.log(w / w.sum()))


def central_difference(f, x, h):
    g = np.zeros_like(x, dtype=np.float64)
    for i in range(x.size):
        e = np.zeros_like(x, dtype=np.float64)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def rel_err(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)
