import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from geotransfer.data import (
    DataFormatError,
    DomainDataset,
    SyntheticConfig,
    generate_synthetic_shift,
    givens_rotation,
    load_dataset_csv,
    load_domains_csv,
    save_dataset_csv,
)
from geotransfer.benchmark import benchmark_data
from geotransfer.pipeline import TrainingConfig, train


def pairwise(X):
    G = X.T @ X
    sq = np.diag(G)
    return np.sqrt(np.maximum(sq[:, None] + sq[None, :] - 2 * G, 0))


def test_class_counts_and_labels():
    cfg = SyntheticConfig(k=4, dim=6, samples_per_class=17, seed=3)
    src, tgt = generate_synthetic_shift(cfg)
    for ds in (src, tgt):
        assert ds.X.shape == (6, 68)
        np.testing.assert_array_equal(np.bincount(ds.labels, minlength=4), [17] * 4)
    assert src.domain == "source" and tgt.domain == "target"


def test_center_separation():
    cfg = SyntheticConfig(noise=0.0, rotation=0.0, translation=0.0, seed=1)
    src, _ = generate_synthetic_shift(cfg)
    centers = np.stack([src.X[:, src.labels == i][:, 0] for i in range(cfg.k)], axis=1)
    D = pairwise(centers)
    np.testing.assert_allclose(D[np.triu_indices(cfg.k, 1)], cfg.separation, atol=1e-12)


def test_deterministic_per_seed():
    a = generate_synthetic_shift(SyntheticConfig(seed=5))
    b = generate_synthetic_shift(SyntheticConfig(seed=5))
    c = generate_synthetic_shift(SyntheticConfig(seed=6))
    assert a[0].X.tobytes() == b[0].X.tobytes() and a[1].X.tobytes() == b[1].X.tobytes()
    assert a[1].X.tobytes() != c[1].X.tobytes()


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 12), st.floats(0, np.pi), st.integers(0, 2**31))
def test_givens_rotation_is_orthogonal(dim, angle, seed):
    R = givens_rotation(dim, angle, np.random.default_rng(seed))
    np.testing.assert_allclose(R.T @ R, np.eye(dim), atol=1e-12)
    assert np.linalg.det(R) == pytest.approx(1.0)


def test_rotation_turns_every_vector_by_the_angle_in_even_dim():
    R = givens_rotation(10, np.pi / 6, np.random.default_rng(0))
    x = np.random.default_rng(1).standard_normal(10)
    cos = x @ R @ x / (x @ x)
    assert cos == pytest.approx(np.cos(np.pi / 6), abs=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31), st.floats(0, 3), st.floats(0, 5))
def test_shift_is_rigid(seed, angle, shift):
    cfg = SyntheticConfig(samples_per_class=8, rotation=angle, translation=shift, seed=seed % 10**6)
    _, tgt, info = generate_synthetic_shift(cfg, return_shift=True)
    np.testing.assert_allclose(pairwise(tgt.X), pairwise(info["pre_shift"]), atol=1e-10)
    assert np.linalg.norm(info["translation"]) == pytest.approx(shift, abs=1e-12)


def test_config_validation():
    with pytest.raises(ValueError):
        SyntheticConfig(k=1)
    with pytest.raises(ValueError):
        SyntheticConfig(noise=-1)
    with pytest.raises(ValueError):
        SyntheticConfig(k=5, dim=3)
    with pytest.raises(DataFormatError):
        DomainDataset(np.zeros((2, 2)), [0, -1], "source", 2)


def _source_only(cfg, seed):
    src, tgt = generate_synthetic_shift(cfg)
    tc = TrainingConfig(t_warm=10, t_adapt=0, lr=1e-2, lambda_dc=0, lambda_co=0, lambda_t=0, seed=seed)
    _, hist = train(tc, src, tgt)
    return hist.last.source_acc, hist.last.target_acc


@pytest.mark.slow
def test_no_shift_means_equal_accuracy():
    gaps = []
    for seed in range(10):
        s, t = _source_only(benchmark_data(seed, rotation=0.0, translation=0.0), seed)
        gaps.append(s - t)
    assert abs(np.mean(gaps)) <= 0.02


@pytest.mark.slow
def test_shift_lowers_source_only_target_accuracy():
    for seed in range(10):
        s, t = _source_only(benchmark_data(seed), seed)
        assert t < s


def test_csv_round_trip(tmp_path):
    src, tgt = generate_synthetic_shift(SyntheticConfig(samples_per_class=5, seed=2))
    for ds in (src, tgt):
        p = tmp_path / f"{ds.domain}.csv"
        save_dataset_csv(ds, p)
        back = load_dataset_csv(p, k=3)
        np.testing.assert_allclose(back.X, ds.X, rtol=1e-15, atol=0)
        np.testing.assert_array_equal(back.labels, ds.labels)
        assert back.domain == ds.domain


def test_csv_unlabeled_target(tmp_path):
    X = np.arange(6.0).reshape(2, 3)
    p = tmp_path / "t.csv"
    save_dataset_csv(DomainDataset(X, [-1, -1, 0], "target", 2), p)
    back = load_dataset_csv(p, k=2)
    assert not back.has_truth and back.labels.tolist() == [-1, -1, 0]


@pytest.mark.parametrize("body,needle", [
    ("", "missing header"),
    ("domain,label,x0\n", "line 1: malformed header"),
    ("domain,label,f0\nsource,7,1.0\n", "line 2: label 7 out of range"),
    ("domain,label,f0,f1\nsource,0,1.0,2.0\nsource,1,1.0\n", "line 3: expected 4 fields"),
    ("domain,label,f0\nmoon,0,1.0\n", "line 2: unknown domain"),
    ("domain,label,f0\nsource,-1,1.0\n", "line 2: unlabeled source"),
    ("domain,label,f0\nsource,0,abc\n", "line 2"),
    ("domain,label,f0\n", "no data rows"),
])
def test_csv_errors(tmp_path, body, needle):
    p = tmp_path / "bad.csv"
    p.write_text(body)
    with pytest.raises(DataFormatError, match=needle):
        load_dataset_csv(p, k=3)


def test_mixed_file_needs_domain(tmp_path):
    p = tmp_path / "both.csv"
    p.write_text("domain,label,f0\nsource,0,1.0\ntarget,1,2.0\n")
    with pytest.raises(DataFormatError, match="mixes domains"):
        load_dataset_csv(p)
    assert load_dataset_csv(p, domain="target").X.tolist() == [[2.0]]
    assert set(load_domains_csv(p)) == {"source", "target"}
