import numpy as np
import pytest

from mfcso.data import Dataset

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion():
    """Record a one-line verdict for the acceptance summary."""

    def record(number, title, ok, detail=""):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title}"
        if detail:
            line += f" ({detail})"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_dataset(rng, n_samples, n_features, n_classes):
    """Dataset in [0, 1] with every class holding at least two samples."""
    y = np.concatenate([np.repeat(np.arange(n_classes), 2),
                        rng.integers(0, n_classes, n_samples - 2 * n_classes)])
    rng.shuffle(y)
    X = rng.random((n_samples, n_features))
    return Dataset(X, y, n_classes)


@pytest.fixture
def label_dataset():
    """One feature equal to the (scaled) label plus three noise features."""
    rng = np.random.default_rng(11)
    y = np.arange(30) % 2
    X = rng.random((30, 4))
    X[:, 1] = y
    return Dataset(X, y, 2)
