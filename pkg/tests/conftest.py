import stat

import numpy as np
import pytest

from agarsynth.demo import make_demo_tree

_ACCEPTANCE_RESULTS = []


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance" in report.nodeid:
        _ACCEPTANCE_RESULTS.append((report.nodeid.split("::")[-1], report.outcome))


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_RESULTS:
        terminalreporter.write_line("")
        terminalreporter.write_line("acceptance criteria:")
        for name, outcome in _ACCEPTANCE_RESULTS:
            terminalreporter.write_line(f"  {outcome.upper():6s} {name}")


def write_stub_bridge(path, scale="1.0"):
    """A stand-in bridge executable: copies content to output (optionally
    scaled) and drops the weights sidecar the real bridge would write."""
    path.write_text(
        "#!/usr/bin/env python3\n"
        "import json, sys\n"
        "import numpy as np\n"
        "from PIL import Image\n"
        "job = json.load(open(sys.argv[1]))\n"
        "img = np.asarray(Image.open(job['content']).convert('RGB'), dtype=float)\n"
        f"out = np.clip(img * {scale}, 0, 255).astype('uint8')\n"
        "Image.fromarray(out).save(job['output'])\n"
        "np.savez(job['output'] + '.weights.npz', token=np.array([1.0]))\n"
    )
    path.chmod(path.stat().st_mode | stat.S_IEXEC)
    return path


@pytest.fixture()
def stub_bridge(tmp_path):
    return write_stub_bridge(tmp_path / "stub_bridge.py")


@pytest.fixture(scope="session")
def demo_tree(tmp_path_factory):
    """The bundled fixture corpus: 2 annotated dish images, 1 empty dish,
    4 style carriers, drawn deterministically."""
    root = tmp_path_factory.mktemp("demo")
    make_demo_tree(root)
    return root


@pytest.fixture(scope="session")
def cluster_bank_dir(demo_tree, tmp_path_factory):
    """Cluster bank extracted once from the fixture corpus (seed 42)."""
    from agarsynth.cli import main

    out = tmp_path_factory.mktemp("bank")
    rc = main(
        [
            "extract",
            "--images",
            str(demo_tree / "real"),
            "--annotations",
            str(demo_tree / "real" / "annotations.json"),
            "--out",
            str(out),
            "--seed",
            "42",
        ]
    )
    assert rc == 0
    return out


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
