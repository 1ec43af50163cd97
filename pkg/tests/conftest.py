import hashlib
import json
from dataclasses import asdict

import pytest

from foolforge.victims import (
    STOCK_ARCHITECTURES,
    get_architecture,
    load_checkpoint,
    make_synthetic_dataset,
    save_checkpoint,
    train_classifier,
)
from foolforge.victims.train import TrainConfig

ZOO_SEED = 0


@pytest.fixture(scope="session")
def shapes_data():
    return make_synthetic_dataset(3000, 600, ZOO_SEED)


@pytest.fixture(scope="session")
def zoo(request, shapes_data):
    """The stock zoo at default settings, cached across pytest runs (about 5 minutes cold)."""
    train, val = shapes_data
    hyper = TrainConfig()
    out = {}
    for name in STOCK_ARCHITECTURES:
        spec = get_architecture(name)
        key = json.dumps([spec.to_dict(), asdict(hyper), train.fingerprint(), ZOO_SEED], sort_keys=True)
        digest = hashlib.sha256(key.encode()).hexdigest()[:16]
        path = request.config.cache.mkdir("foolforge-zoo") / f"{name}-{digest}.ffck"
        if path.is_file():
            out[name] = load_checkpoint(path)
        else:
            out[name] = train_classifier(spec, train, val, hyper, seed=ZOO_SEED)
            save_checkpoint(out[name], path)
    return out


@pytest.fixture(scope="session")
def pipeline_runs(tmp_path_factory):
    """Two smoke-profile pipeline runs with the same seed (about 2 minutes each)."""
    from foolforge.cli.main import main

    roots = []
    for name in ("first", "second"):
        out = tmp_path_factory.mktemp("pipeline") / name
        assert main(["pipeline", "--profile", "smoke", "--seed", "11", "--out", str(out)]) == 0
        roots.append(out)
    return roots


_CRITERIA = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.when not in ("setup", "call"):
        return
    number, title = marker.args
    props = dict(item.user_properties)
    if rep.failed or (rep.when == "call" and rep.passed):
        verdict = "PASS" if rep.passed else "FAIL"
        _CRITERIA[number] = f"criterion {number:>2} {verdict}  {title}  {props.get('detail', '')}".rstrip()


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        terminalreporter.write_line(_CRITERIA[number])
