import csv
import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from foolforge.evaluation import (
    REPORT_HEADER,
    AttackReport,
    ReportRow,
    StatsSummary,
    baseline_fgsm_targeted,
    channel_stat_vectors,
    evaluate_attack,
    representation_stats,
    rmsd,
    rtd,
    separation_score,
    transfer_success_rate,
    write_report_csv,
    write_series_csv,
)
from foolforge.victims import ArchitectureSpec, Classifier, Layer, predict, synthetic_shapes
from foolforge.victims.zoo import init_params


class Constant:
    """Stub victim that always answers one class."""

    def __init__(self, label):
        self.label = label

    def top1(self, images):
        return np.full(len(images), self.label)


def tiny_victim(seed=0):
    layers = (
        Layer("conv", "conv1", 4), Layer("relu", "relu1"), Layer("pool", "pool1"),
        Layer("conv", "conv2", 4), Layer("relu", "relu2"),
        Layer("gap", "gap"), Layer("dense", "logits", 10),
    )
    spec = ArchitectureSpec("tiny", layers, ("relu1", "relu2", "logits"))
    return Classifier(spec, init_params(spec, np.random.default_rng(seed)))


# -- transfer rate ---------------------------------------------------------------

def test_rate_extremes():
    x = np.zeros((5, 3, 32, 32))
    assert transfer_success_rate(x, [Constant(3), Constant(1)], 3) == [1.0, 0.0]


def test_rate_counts_exact_top1():
    victim = tiny_victim()
    x = synthetic_shapes(20, 0).images
    labels = predict(victim, x).argmax(1)
    target = int(np.bincount(labels).argmax())
    assert transfer_success_rate(x, [victim], target) == [float((labels == target).mean())]


def test_rate_needs_images():
    with pytest.raises(ValueError):
        transfer_success_rate(np.zeros((0, 3, 32, 32)), [Constant(0)], 0)


# -- RMSD and RTD ----------------------------------------------------------------

def test_rmsd_identical_and_offset():
    x = np.random.default_rng(0).uniform(0, 0.5, (2, 3, 4, 4))
    assert rmsd(x, x) == 0.0
    assert rmsd(x + 0.1, x, scale=1.0) == pytest.approx(0.1, abs=1e-15)
    assert rmsd(x + 0.1, x) == pytest.approx(25.5, abs=1e-12)


def test_rmsd_against_direct_summation():
    rng = np.random.default_rng(1)
    a, b = rng.uniform(0, 1, (3, 3, 5, 7)), rng.uniform(0, 1, (3, 3, 5, 7))
    total = 0.0
    for u, v in zip(a.ravel(), b.ravel()):
        total += ((u - v) * 255.0) ** 2
    assert abs(rmsd(a, b) - (total / a.size) ** 0.5) < 1e-12


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**16))
def test_rmsd_is_a_metric(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (rng.uniform(0, 1, (2, 3, 4, 4)) for _ in range(3))
    assert rmsd(a, b) == rmsd(b, a) > 0
    assert rmsd(a, c) <= rmsd(a, b) + rmsd(b, c) + 1e-12


def test_rmsd_shape_mismatch():
    with pytest.raises(ValueError):
        rmsd(np.zeros((1, 3, 4, 4)), np.zeros((1, 3, 4, 5)))


def test_rtd_values():
    assert rtd(0.5, 10.0) == 5.0
    assert rtd(0.0, 3.0) == 0.0
    assert rtd(0.3, 0.0) is None
    with pytest.raises(ValueError):
        rtd(0.3, -1.0)


def test_rtd_reproduces_published_black_box_row():
    assert abs(rtd(0.94, 3.41) - 27.57) <= 0.01


# -- FGSM baseline ---------------------------------------------------------------

def test_fgsm_zero_budget_is_identity():
    x = synthetic_shapes(4, 0).images
    np.testing.assert_array_equal(baseline_fgsm_targeted(tiny_victim(), x, 3, 0.0), x)


@settings(max_examples=10, deadline=None)
@given(eps=st.floats(0.001, 0.3), steps=st.integers(1, 4), seed=st.integers(0, 100))
def test_fgsm_stays_in_budget_and_box(eps, steps, seed):
    x = synthetic_shapes(3, seed).images
    adv = baseline_fgsm_targeted(tiny_victim(), x, 3, eps, steps)
    assert np.abs(adv - x).max() <= eps + 1e-12
    assert adv.min() >= 0 and adv.max() <= 1


def test_fgsm_moves_toward_target():
    victim = tiny_victim()
    x = synthetic_shapes(10, 1).images
    adv = baseline_fgsm_targeted(victim, x, 3, 0.1, 10)
    assert predict(victim, adv)[:, 3].mean() > predict(victim, x)[:, 3].mean()


def test_fgsm_rejects_negative_budget():
    with pytest.raises(ValueError):
        baseline_fgsm_targeted(tiny_victim(), np.zeros((1, 3, 32, 32)), 3, -0.1)


@pytest.mark.slow
def test_fgsm_white_box_success(zoo, shapes_data):
    victim = zoo["plain-cnn"]
    val = shapes_data[1]
    x = val.images[val.labels != 3][:100]
    adv = baseline_fgsm_targeted(victim, x, 3, 8 / 255, 10)
    assert (predict(victim, adv).argmax(1) == 3).mean() >= 0.9


# -- representation statistics ---------------------------------------------------

def test_identical_groups_score_one():
    g = np.random.default_rng(0).standard_normal((6, 4))
    assert separation_score({"a": g, "b": g.copy()}) == pytest.approx(1.0, rel=1e-12)


def test_separated_clusters_score_high():
    rng = np.random.default_rng(1)
    a, b = rng.standard_normal((50, 1)), 10.0 + rng.standard_normal((50, 1))
    assert separation_score({"a": a, "b": b}) > 5


def test_separation_degenerate_cases():
    z = np.zeros((3, 2))
    assert separation_score({"a": z, "b": z}) == 1.0
    assert separation_score({"a": z, "b": z + 1}) == float("inf")
    with pytest.raises(ValueError):
        separation_score({"a": z})


def test_channel_stat_vectors():
    acts = np.arange(16, dtype=float).reshape(1, 2, 2, 4)
    np.testing.assert_allclose(channel_stat_vectors(acts), [[3.5, 11.5, 5.25, 5.25]])


def test_representation_stats_shapes():
    victim = tiny_victim()
    groups = {"low": synthetic_shapes(4, 0).images, "high": np.random.default_rng(0).uniform(0, 1, (4, 3, 32, 32))}
    summaries, scores = representation_stats(victim, groups, ["relu1", "relu2"])
    assert set(scores) == {"relu1", "relu2"}
    assert [(s.tap, s.group) for s in summaries] == [("relu1", "low"), ("relu1", "high"), ("relu2", "low"), ("relu2", "high")]
    assert all(s.mean.shape == (4,) and (s.var >= 0).all() for s in summaries)


def test_stats_summary_rejects_negative_variance():
    with pytest.raises(ValueError):
        StatsSummary("t", "g", np.zeros(2), np.array([0.0, -1.0]))


# -- reports ---------------------------------------------------------------------

def test_unchanged_sources_report():
    victim = tiny_victim()
    x = synthetic_shapes(10, 0).images
    target = int((set(range(10)) - set(predict(victim, x).argmax(1).tolist())).pop())
    rep = evaluate_attack(x, x, {"tiny": victim}, target)
    row = rep.rows[0]
    assert (row.transfer_rate, row.rmsd, row.rtd) == (0.0, 0.0, None)
    assert "n/a" in rep.to_csv()


def test_rows_keep_declaration_order_with_oracle_last():
    x = np.zeros((4, 3, 32, 32))
    adv = x + 0.01
    rep = evaluate_attack(adv, x, {"b": Constant(3), "a": Constant(2)}, 3, method="m", seed=7, oracle=Constant(3))
    assert [r.victim for r in rep.rows] == ["b", "a", "oracle"]
    assert [r.transfer_rate for r in rep.rows] == [1.0, 0.0, 1.0]
    for r in rep.rows:
        assert r.rtd == rtd(r.transfer_rate, r.rmsd)
        assert (r.method, r.n, r.target, r.seed) == ("m", 4, 3, 7)
    assert rep.rate("oracle") == 1.0


def test_report_csv_header_and_repeatability(tmp_path):
    x = synthetic_shapes(6, 3).images
    victims = {"v0": tiny_victim(0), "v1": tiny_victim(1)}
    a = evaluate_attack(np.clip(x + 0.05, 0, 1), x, victims, 3, method="ftn")
    b = evaluate_attack(np.clip(x + 0.05, 0, 1), x, victims, 3, method="ftn")
    write_report_csv([a], tmp_path / "a.csv")
    write_report_csv([b], tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    rows = list(csv.reader(io.StringIO((tmp_path / "a.csv").read_text())))
    assert rows[0] == list(REPORT_HEADER) == "method,victim,n,target,transfer_rate,rmsd,rtd,seed".split(",")
    assert len(rows) == 3


def test_report_row_cells():
    row = ReportRow("m", "v", 10, 3, 0.5, 2.0, 25.0, 1)
    assert row.cells() == ["m", "v", 10, 3, "0.500000", "2.000000", "25.000000", 1]
    with pytest.raises(KeyError):
        AttackReport([row]).rate("other")


def test_series_csv(tmp_path):
    write_series_csv(tmp_path / "p" / "s.csv", ("step", "confidence"), [0, 1], [0.25, 0.5])
    assert (tmp_path / "p" / "s.csv").read_text() == "step,confidence\n0,0.25\n1,0.5\n"
