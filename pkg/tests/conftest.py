from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parents[1]
MNIST10K = (
    ROOT / "data" / "mnist10k-images-idx3-ubyte.gz",
    ROOT / "data" / "mnist10k-labels-idx1-ubyte.gz",
)


@pytest.fixture(scope="session")
def mnist10k():
    from cs_mbdct.dataset import load_idx

    if not MNIST10K[0].exists():
        pytest.skip("bundled MNIST fixture missing (see scripts/make_mnist10k.py)")
    return load_idx(*MNIST10K)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_idx(mnist10k, tmp_path_factory):
    """First 300 bundled digits as an IDX pair: 240 train, 60 test."""
    from cs_mbdct.dataset import save_idx

    d = tmp_path_factory.mktemp("small")
    paths = (d / "img.idx3.gz", d / "lab.idx1.gz")
    save_idx(mnist10k.take(np.arange(300)), *paths)
    return paths


@pytest.fixture
def small_cfg(small_idx, tmp_path):
    """Config dict for a quick pipeline run on ``small_idx``."""
    return {
        "data": {"images": str(small_idx[0]), "labels": str(small_idx[1]),
                 "train_count": 240, "test_count": 60},
        "rates": [0.25],
        "dictionary": {"k": 16, "sample_size": 10, "max_iters": 20},
        "classifier": {"k_grid": [1, 3, 5]},
        "out": str(tmp_path / "out"),
    }


# acceptance criteria: tests record (number, title, ok, detail); one summary
# line per criterion is printed at the end of the session
_ACCEPTANCE = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = {}


@pytest.fixture
def acceptance(request):
    store = request.config.stash[_ACCEPTANCE]

    def record(number, title, ok, detail=""):
        entry = store.setdefault(number, {"title": title, "results": []})
        entry["results"].append((ok, detail))

    return record


def pytest_terminal_summary(terminalreporter, config):
    store = config.stash.get(_ACCEPTANCE, {})
    if not store:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(store):
        entry = store[number]
        oks = [ok for ok, _ in entry["results"]]
        status = "SKIP" if all(ok is None for ok in oks) else (
            "PASS" if all(ok is not False for ok in oks) else "FAIL")
        detail = "; ".join(d for _, d in entry["results"] if d)
        terminalreporter.write_line(f"[{status}] {number}. {entry['title']}: {detail}")
