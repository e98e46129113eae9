import numpy as np
import pytest

_LOG2PI = float(np.log(2.0 * np.pi))

# one line per acceptance criterion, printed after the run so the
# verdicts survive pytest's output capture
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


class LinearGaussianLikelihood:
    """Substitute likelihood N(y; a.x, s^2); conjugate with Gaussian priors."""

    def __init__(self, a, s):
        self.a = np.asarray(a, dtype=float).ravel()
        self.s = float(s)

    def log_likelihood_y(self, x, y, include_noise=True):
        return float(self.log_likelihood_y_batch(np.atleast_2d(x), y)[0])

    def log_likelihood_y_batch(self, Xs, y, include_noise=True):
        Xs = np.atleast_2d(np.asarray(Xs, dtype=float))
        mean = Xs @ self.a
        v = self.s**2
        return -0.5 * (_LOG2PI + np.log(v)) - 0.5 * (y - mean) ** 2 / v

    def posterior_moments(self, y):
        """Closed-form posterior of x given y under a N(0, I) prior."""
        p = self.a.shape[0]
        prec = np.eye(p) + np.outer(self.a, self.a) / self.s**2
        cov = np.linalg.inv(prec)
        mean = cov @ self.a * (y / self.s**2)
        return mean, cov


class ConstantLikelihood:
    """Flat likelihood; the posterior collapses to the prior."""

    def log_likelihood_y(self, x, y, include_noise=True):
        return 0.0

    def log_likelihood_y_batch(self, Xs, y, include_noise=True):
        return np.zeros(np.atleast_2d(Xs).shape[0])


@pytest.fixture
def linear_gaussian():
    return LinearGaussianLikelihood(a=[1.0, -0.5], s=0.5)


@pytest.fixture
def constant_likelihood():
    return ConstantLikelihood()
