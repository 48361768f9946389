import numpy as np
import pytest

from proxboost.data import (
    DatasetSplit,
    Design,
    Model,
    SynthSpec,
    correlated_design,
    generate,
    load_csv,
    split,
    write_csv,
)
from proxboost.errors import DataError, InvalidTargetError
from proxboost.losses import Task


def test_correlated_design_covariance():
    # at 1e5 rows the worst of 15 entries exceeds 0.01 for about 2% of seeds
    X = correlated_design(100_000, 6, np.random.default_rng(1))
    corr = np.corrcoef(X, rowvar=False)
    for i in range(6):
        for j in range(6):
            if abs(i - j) <= 4:
                assert abs(corr[i, j] - 2.0 ** -abs(i - j)) <= 0.01
    np.testing.assert_allclose(X.var(axis=0), 1.0, atol=0.02)


def test_correlated_design_unbiased_across_seeds():
    target = 2.0 ** -np.abs(np.subtract.outer(np.arange(5), np.arange(5)))
    mean = np.mean([np.corrcoef(correlated_design(20_000, 5, np.random.default_rng(s)),
                                rowvar=False) for s in range(25)], axis=0)
    assert np.abs(mean - target).max() < 0.005


def test_uncorrelated_design_range():
    ds = generate(SynthSpec(Model.REGRESSION, Design.UNCORRELATED, seed=3))
    assert np.all(np.abs(ds.features) < 1.0)


def test_default_shapes():
    assert generate(SynthSpec(Model.REGRESSION)).features.shape == (800, 100)
    assert generate(SynthSpec(Model.CLASSIFICATION)).features.shape == (1500, 50)
    assert generate(SynthSpec(Model.SINE)).features.shape == (500, 1)


def test_classification_has_both_classes():
    y = generate(SynthSpec(Model.CLASSIFICATION, seed=0)).targets
    assert set(np.unique(y)) == {-1.0, 1.0}
    assert 0.1 < np.mean(y == 1) < 0.9


def test_regression_noise_is_variance():
    spec = SynthSpec(Model.REGRESSION, Design.UNCORRELATED, n=200_000, d=4, seed=1)
    ds = generate(spec)
    x = ds.features.T
    signal = -np.sin(2 * x[0]) + x[1] ** 2 + x[2] - np.exp(-x[3])
    assert np.var(ds.targets - signal) == pytest.approx(0.5, rel=0.02)


def test_generator_is_deterministic():
    spec = SynthSpec(Model.CLASSIFICATION, n=300, seed=7)
    a, b = generate(spec), generate(spec)
    assert np.array_equal(a.features, b.features) and np.array_equal(a.targets, b.targets)
    c = generate(SynthSpec(Model.CLASSIFICATION, n=300, seed=8))
    assert not np.array_equal(a.features, c.features)


@pytest.mark.parametrize("model,d", [(Model.REGRESSION, 3), (Model.CLASSIFICATION, 17)])
def test_too_few_dimensions(model, d):
    with pytest.raises(DataError):
        SynthSpec(model, d=d)


def test_dataset_rejects_bad_labels_and_nan():
    with pytest.raises(InvalidTargetError):
        DatasetSplit(np.zeros((2, 1)), [1.0, 0.0], Task.CLASSIFICATION)
    with pytest.raises(DataError):
        DatasetSplit(np.array([[np.nan]]), [1.0])
    with pytest.raises(DataError):
        DatasetSplit(np.zeros((2, 1)), [1.0])


def test_load_csv_basic(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("a,y\n1,2\n3,4\n5,6\n")
    ds = load_csv(p)
    assert ds.features.shape == (3, 1)
    np.testing.assert_array_equal(ds.targets, [2, 4, 6])


def test_load_csv_target_in_middle(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("a,label,b\n1,2,3\n4,5,6\n")
    ds = load_csv(p, target_column="label")
    np.testing.assert_array_equal(ds.features, [[1, 3], [4, 6]])


def test_load_csv_names_bad_cell(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("a,y\n1,2\nNA,4\n")
    with pytest.raises(DataError, match=r"d\.csv:3: column 'a'.*'NA'"):
        load_csv(p)


def test_load_csv_missing_target(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(DataError, match="target column"):
        load_csv(p)


def test_load_csv_invalid_classification_target(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("a,y\n1,1\n2,0\n")
    with pytest.raises(InvalidTargetError):
        load_csv(p, task=Task.CLASSIFICATION)


def test_csv_roundtrip(tmp_path):
    ds = generate(SynthSpec(Model.REGRESSION, n=20, d=5))
    p = tmp_path / "r.csv"
    write_csv(ds, p)
    again = load_csv(p)
    assert np.array_equal(again.features, ds.features)
    assert np.array_equal(again.targets, ds.targets)


def _toy(n):
    return DatasetSplit(np.arange(n, dtype=float)[:, None], np.arange(n, dtype=float))


def test_split_sizes():
    assert [s.n for s in split(_toy(4))] == [2, 1, 1]
    assert [s.n for s in split(_toy(4), (1.0, 0.0, 0.0))] == [4, 0, 0]
    assert [s.n for s in split(_toy(100), (0.29, 0.31, 0.4))] == [29, 31, 40]


def test_split_same_seed_same_permutation():
    a = split(_toy(50), seed=4)
    b = split(_toy(50), seed=4)
    for x, y in zip(a, b):
        assert np.array_equal(x.targets, y.targets)


def test_split_is_partition():
    parts = split(_toy(37), (0.5, 0.3, 0.2), seed=1)
    ids = np.concatenate([p.targets for p in parts])
    assert sorted(ids) == list(range(37))


def test_split_rejects_bad_fractions():
    with pytest.raises(ValueError):
        split(_toy(4), (0.8, 0.5, 0.0))
