import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_blob_image(rng, size=64, radius=24, count=6, sigma=2.5):
    """Sum of Gaussian blobs inside a centered disk (compact, smooth support)."""
    yy, xx = np.mgrid[0:size, 0:size] - size // 2
    img = np.zeros((size, size))
    for _ in range(count):
        r = rng.uniform(0, radius - 3 * sigma)
        t = rng.uniform(0, 2 * np.pi)
        cy, cx = r * np.sin(t), r * np.cos(t)
        img += rng.uniform(0.5, 1.5) * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * sigma**2))
    return img


ACCEPTANCE_LINES: dict[int, str] = {}


def record(criterion: int, ok: bool, detail: str) -> bool:
    line = f"criterion {criterion:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[criterion] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
