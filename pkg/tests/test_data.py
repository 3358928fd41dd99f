import numpy as np
import pytest
from scipy.io import savemat

from dominohd.data import (
    DataError,
    DatasetMeta,
    SplitSpec,
    SyntheticSpec,
    WindowedDataset,
    generate_synthetic,
    load_dataset,
    load_dataset_file,
    make_split,
    save_dataset,
    shift_benchmark,
    sliding_windows,
    window_count,
)
from dominohd.data.loaders import PAMAP2_CHANNELS


def test_window_count_and_sliding():
    assert window_count(125, 125, 125) == 1
    assert window_count(124, 125, 125) == 0
    assert window_count(300, 126, 63) == 3
    sig = np.arange(20.0).reshape(10, 2)
    w = sliding_windows(sig, 4, 3)
    assert w.shape == (3, 2, 4)
    np.testing.assert_array_equal(w[1, 0], [6.0, 8.0, 10.0, 12.0])
    assert sliding_windows(sig, 11, 1).shape == (0, 2, 11)


def tiny(n_domains=3, per=10):
    meta = DatasetMeta(2, 4, 4, 1.0, "t", 2, n_domains)
    n = n_domains * per
    return WindowedDataset(np.arange(n * 8.0).reshape(n, 2, 4), np.arange(n) % 2,
                           np.repeat(np.arange(n_domains), per), meta)


def test_dataset_validation():
    meta = DatasetMeta(2, 4, 4, 1.0, "t", 2, 2)
    with pytest.raises(ValueError):
        WindowedDataset(np.zeros((2, 2, 4)), [0, 2], [0, 0], meta)
    with pytest.raises(ValueError):
        WindowedDataset(np.zeros((2, 2, 4)), [0, 1], [0, 5], meta)
    with pytest.raises(ValueError):
        WindowedDataset(np.zeros((2, 3, 4)), [0, 1], [0, 0], meta)


def test_lodo_split():
    ds = tiny()
    tr, te = make_split(ds, SplitSpec("lodo", holdout=1))
    assert set(te.domains) == {1} and len(te) == 10
    assert 1 not in set(tr.domains) and len(tr) == 20
    with pytest.raises(ValueError):
        make_split(ds, SplitSpec("lodo", holdout=3))


def test_partial_split():
    ds = tiny()
    tr, _ = make_split(ds, SplitSpec("partial", holdout=0, fraction=0.25))
    assert len(tr) == 5 and 0 not in set(tr.domains)
    a, _ = make_split(ds, SplitSpec("partial", holdout=0, fraction=0.5, rng_seed=1))
    b, _ = make_split(ds, SplitSpec("partial", holdout=0, fraction=0.5, rng_seed=1))
    assert np.array_equal(a.windows, b.windows)
    with pytest.raises(ValueError):
        make_split(ds, SplitSpec("partial", holdout=0, fraction=0.01))


def test_imbalanced_split():
    ds = tiny(n_domains=4, per=20)
    tr, te = make_split(ds, SplitSpec("imbalanced", holdout=0, major_domain=1))
    counts = tr.domain_counts()
    assert counts[0] == 0 and counts[1] == 20
    assert counts[2] + counts[3] == round(20 * 0.3 / 0.7)
    with pytest.raises(ValueError):
        make_split(ds, SplitSpec("imbalanced", holdout=1, major_domain=1))


def test_kfold_split_partitions():
    ds = tiny()
    seen = []
    for f in range(5):
        tr, te = make_split(ds, SplitSpec("kfold", folds=5, fold=f))
        assert len(tr) + len(te) == len(ds)
        seen.extend(te.windows[:, 0, 0].tolist())
    assert sorted(seen) == sorted(ds.windows[:, 0, 0].tolist())


def test_domd_roundtrip(tmp_path):
    ds = tiny()
    p = tmp_path / "d.domd"
    save_dataset(ds, p)
    back = load_dataset_file(p)
    np.testing.assert_array_equal(back.windows, ds.windows.astype(np.float32))
    np.testing.assert_array_equal(back.labels, ds.labels)
    np.testing.assert_array_equal(back.domains, ds.domains)
    assert back.meta.source == "t"
    p.write_bytes(p.read_bytes()[:-3])
    with pytest.raises(ValueError):
        load_dataset_file(p)


def test_synthetic_determinism_and_truth():
    spec = SyntheticSpec(rng_seed=5)
    a, ta = generate_synthetic(spec)
    b, tb = generate_synthetic(spec)
    assert np.array_equal(a.windows, b.windows) and ta == tb
    assert len(ta.channels) == 2 and len(ta.features) == 2 * 32
    assert np.all(a.domain_counts() == 120)
    none, t0 = generate_synthetic(SyntheticSpec(planted_fraction=0.0))
    assert t0.channels == () and t0.features == ()
    assert shift_benchmark(3).rng_seed == 3 and shift_benchmark().n_domains == 4


def test_synthetic_shift_lives_on_planted_channels():
    spec = SyntheticSpec(noise=0.0, rng_seed=2)
    ds, truth = generate_synthetic(spec)
    # without noise, same-class windows agree across domains except on planted channels
    c0 = ds.labels == 0
    w0 = ds.windows[c0 & (ds.domains == 0)][0]
    w1 = ds.windows[c0 & (ds.domains == 1)][0]
    differ = np.flatnonzero(np.any(w0 != w1, axis=1))
    assert differ.tolist() == list(truth.channels)


# -- loader fixtures: tiny fake directory trees in each dataset's layout --------------

def make_dsads(root, activities=2, subjects=4, segments=3):
    rng = np.random.default_rng(0)
    for a in range(1, activities + 1):
        for p in range(1, subjects + 1):
            d = root / f"a{a:02d}" / f"p{p}"
            d.mkdir(parents=True)
            for s in range(1, segments + 1):
                np.savetxt(d / f"s{s:02d}.txt", rng.standard_normal((125, 45)), delimiter=",")


def test_dsads_loader(tmp_path):
    make_dsads(tmp_path)
    ds = load_dataset(tmp_path, "dsads")
    assert len(ds) == 2 * 4 * 3
    assert ds.meta.sensors == 45 and ds.meta.window == 125
    assert ds.n_domains == 2 and ds.domain_counts().tolist() == [12, 12]
    assert ds.meta.label_names == (1, 2)
    par = load_dataset(tmp_path, "dsads", workers=3)
    assert np.array_equal(par.windows, ds.windows)


def test_uschad_loader(tmp_path):
    rng = np.random.default_rng(1)
    for subj in range(1, 5):
        d = tmp_path / f"Subject{subj}"
        d.mkdir()
        for act in (1, 2):
            savemat(d / f"a{act}t1.mat", {"sensor_readings": rng.standard_normal((300, 6))})
    ds = load_dataset(tmp_path, "uschad")
    # 300 samples, window 126, stride 63 -> 3 windows per recording
    assert len(ds) == 4 * 2 * 3
    assert ds.n_domains == 2 and ds.domain_counts().tolist() == [18, 6]
    bad = tmp_path / "Subject1" / "a3t1.mat"
    savemat(bad, {"other": np.zeros((3, 3))})
    with pytest.raises(DataError):
        load_dataset(tmp_path, "uschad")


def test_pamap2_loader(tmp_path):
    rng = np.random.default_rng(2)
    proto = tmp_path / "Protocol"
    proto.mkdir()
    for subj in (101, 102, 109):
        n = 800
        data = rng.standard_normal((n, 54))
        data[:, 1] = np.repeat([1, 0, 4, 24], n // 4)  # 0 and 24 are not kept
        data[5, PAMAP2_CHANNELS[0]] = np.nan
        np.savetxt(proto / f"subject{subj}.dat", data)
    ds = load_dataset(tmp_path, "pamap2")
    # per subject: label 1 run keeps 199 of 200 rows -> 2 windows; label 4 run has 200 rows -> 2 windows
    assert len(ds) == 2 * 4
    assert ds.meta.sensors == 36 and ds.n_domains == 1
    assert sorted(set(ds.labels.tolist())) == [0, 3]


def test_loader_errors(tmp_path):
    with pytest.raises(DataError):
        load_dataset(tmp_path / "missing", "dsads")
    with pytest.raises(DataError):
        load_dataset(tmp_path, "dsads")
    with pytest.raises(DataError):
        load_dataset(tmp_path, "nope")
    d = tmp_path / "a01" / "p1"
    d.mkdir(parents=True)
    (d / "s01.txt").write_text("1,2,x\n")
    with pytest.raises(DataError):
        load_dataset(tmp_path, "dsads")
