import numpy as np
import pytest
from PIL import Image

_ACCEPTANCE_RESULTS = []


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance" in report.nodeid:
        _ACCEPTANCE_RESULTS.append((report.nodeid.split("::")[-1], report.outcome))


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_RESULTS:
        terminalreporter.write_line("")
        terminalreporter.write_line("acceptance criteria (secondary):")
        for name, outcome in _ACCEPTANCE_RESULTS:
            terminalreporter.write_line(f"  {outcome.upper():6s} {name}")


def agar_image(size, tint, blobs, seed):
    """Procedural dish-like fixture: tinted agar with bright round blobs."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size] / size
    base = np.array([0.78, 0.66, 0.42]) * np.asarray(tint)
    img = base[None, None, :] * (1 - 0.1 * ((yy - 0.5) ** 2 + (xx - 0.5) ** 2))[..., None]
    img = np.clip(img + rng.normal(0, 0.01, (size, size, 3)), 0, 1)
    Y, X = np.mgrid[0:size, 0:size]
    for cy, cx, radius in blobs:
        disk = ((Y - cy) ** 2 + (X - cx) ** 2) <= radius * radius
        img[disk] = [0.94, 0.91, 0.80]
    return img


def save(path, img):
    Image.fromarray(np.rint(img * 255).astype(np.uint8)).save(path)
    return str(path)


@pytest.fixture(scope="session")
def fixtures(tmp_path_factory):
    root = tmp_path_factory.mktemp("imgs")
    blobs_a = [(60, 70, 18), (150, 180, 25), (200, 80, 14)]
    blobs_b = [(90, 160, 20), (180, 60, 16), (60, 200, 12), (210, 210, 10)]
    return {
        "content_a": save(root / "content_a.png", agar_image(256, (1, 1, 1), blobs_a, 1)),
        "content_b": save(root / "content_b.png", agar_image(256, (1, 1, 1), blobs_b, 2)),
        "style": save(root / "style.png", agar_image(256, (0.8, 0.9, 1.3), [], 3)),
        "small_content": save(
            root / "small_content.png", agar_image(48, (1, 1, 1), [(24, 20, 8)], 4)
        ),
        "small_style": save(root / "small_style.png", agar_image(48, (1.1, 0.9, 0.7), [], 5)),
        "root": root,
    }
