import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from wenet.corpus import CorpusSplit, load_documents  # noqa: E402
from wenet.model import ModelParams  # noqa: E402
from wenet.training import TrainConfig, train  # noqa: E402

DATA = Path(__file__).parent / "data"
MICRO_CORPUS = DATA / "micro.jsonl"

# settings for the micro-corpus overfitting run
OVERFIT_CONFIG = dict(embedding_dim=32, encoder_hidden=32, decoder_hidden=64, iterations=2,
                      learning_rate=5e-3, epochs=200, patience=200, max_decode_len=30, seed=0)
OVERFIT_MAX_STEPS = 2000


@pytest.fixture(scope="session")
def micro_docs():
    return load_documents(MICRO_CORPUS)


@pytest.fixture(scope="session")
def overfit_run(micro_docs):
    """Train once on the 10-pair micro-corpus; shared by the slow checks."""
    split = CorpusSplit(micro_docs, [], micro_docs)
    start = time.perf_counter()
    result = train(split, TrainConfig(**OVERFIT_CONFIG), max_steps=OVERFIT_MAX_STEPS)
    return result, split, time.perf_counter() - start


def random_params(vocab=7, emb=4, enc=3, seed=0, scale=0.5):
    """Model with all tensors (biases included) drawn from U(-scale, scale)."""
    params = ModelParams.init(vocab, emb, enc, seed=seed)
    rng = np.random.default_rng(seed + 1000)
    for t in params.named_tensors().values():
        t.data[...] = rng.uniform(-scale, scale, size=t.shape)
    return params


def zero_params(vocab=7, emb=4, enc=3):
    params = ModelParams.init(vocab, emb, enc)
    for t in params.named_tensors().values():
        t.data[...] = 0.0
    return params


_criteria: dict[int, list] = {}


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    marker = report.user_properties and dict(report.user_properties).get("criterion")
    if marker:
        number, title = marker
        entry = _criteria.setdefault(number, [title, True, False])
        entry[1] = entry[1] and report.outcome != "failed"
        entry[2] = entry[2] or report.outcome == "skipped"


@pytest.hookimpl(tryfirst=True)
def pytest_runtest_setup(item):
    marker = item.get_closest_marker("criterion")
    if marker:
        item.user_properties.append(("criterion", tuple(marker.args)))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        title, ok, skipped = _criteria[number]
        status = "SKIP" if skipped and ok else ("PASS" if ok else "FAIL")
        terminalreporter.write_line(f"AC{number:<2d} {status}  {title}")
