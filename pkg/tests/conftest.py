import numpy as np
import pytest

from crackprobe import fixtures, imaging, pipeline
from crackprobe.config import Config


def zhang_suen_reference(img):
    """Plain double-loop Zhang-Suen, used as an independent oracle."""
    img = np.pad(np.asarray(img, bool), 1).astype(int)
    h, w = img.shape
    changed = True
    while changed:
        changed = False
        for step in range(2):
            kill = []
            for r in range(1, h - 1):
                for c in range(1, w - 1):
                    if not img[r, c]:
                        continue
                    p = [img[r - 1, c], img[r - 1, c + 1], img[r, c + 1], img[r + 1, c + 1],
                         img[r + 1, c], img[r + 1, c - 1], img[r, c - 1], img[r - 1, c - 1]]
                    b = sum(p)
                    a = sum(1 for i in range(8) if p[i] == 0 and p[(i + 1) % 8] == 1)
                    p2, p3, p4, p5, p6, p7, p8, p9 = p
                    if 2 <= b <= 6 and a == 1:
                        if step == 0 and p2 * p4 * p6 == 0 and p4 * p6 * p8 == 0:
                            kill.append((r, c))
                        if step == 1 and p2 * p4 * p8 == 0 and p2 * p6 * p8 == 0:
                            kill.append((r, c))
            for r, c in kill:
                img[r, c] = 0
            if kill:
                changed = True
    return img[1:-1, 1:-1].astype(bool)


def line_mask(shape, p0, p1, thickness=1, scale=1.0):
    """Mask holding a thick segment between (x, y) points."""
    h, w = shape
    rr, cc = np.mgrid[0:h, 0:w]
    a, b = np.asarray(p0, float), np.asarray(p1, float)
    d = b - a
    t = np.clip(((cc - a[0]) * d[0] + (rr - a[1]) * d[1]) / (d @ d), 0, 1)
    dist = np.hypot(cc - (a[0] + t * d[0]), rr - (a[1] + t * d[1]))
    return imaging.BinaryMask(dist <= thickness / 2, scale)


@pytest.fixture(scope="session")
def cfg():
    return Config()


@pytest.fixture(scope="session")
def y_fixture():
    return fixtures.bundled("y_1")


@pytest.fixture(scope="session")
def y_image(y_fixture):
    return fixtures.camera_image(y_fixture, y_fixture.pose_deg)


@pytest.fixture(scope="session")
def y_analysis(y_image, cfg):
    return pipeline.analyze(y_image, cfg)


@pytest.fixture(scope="session")
def synthetic_set(cfg):
    """(samples, all-channel dataset) at the default 150 traces per class."""
    return pipeline.build_dataset(cfg)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
