import sys

import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def brute_cm_terms(x, gamma, mu, alpha):
    """Term-by-term loop evaluation of the CM loss, no vectorisation."""
    n, d = len(x), len(x[0])
    k = len(mu)
    recon = var = cross = 0.0
    for i in range(n):
        for j in range(d):
            xb = sum(gamma[i][a] * mu[a][j] for a in range(k))
            recon += (x[i][j] - xb) ** 2
        for a in range(k):
            sq = sum(mu[a][j] ** 2 for j in range(d))
            var += gamma[i][a] * (1 - gamma[i][a]) * sq
            for b in range(k):
                if a != b:
                    dot = sum(mu[a][j] * mu[b][j] for j in range(d))
                    cross -= gamma[i][a] * gamma[i][b] * dot
    dirichlet = 0.0
    for a in range(k):
        mean = sum(gamma[i][a] for i in range(n)) / n
        dirichlet += (1 - alpha[a]) * np.log(max(mean, 1e-12))
    return recon / n, var / n, cross / n, dirichlet / n


def kmeans_objective(x, assign, mu):
    n = len(x)
    total = 0.0
    for i in range(n):
        c = assign[i]
        total += sum((x[i][j] - mu[c][j]) ** 2 for j in range(len(x[i])))
    return total / n


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "REPORT", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
