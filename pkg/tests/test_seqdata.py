"""Ingestion, k-core filtering, splits, window construction, sampling."""

import numpy as np
import pytest

from oracle4rec import ConfigError, DataError, ParseError
from oracle4rec import seqdata as sd


def make_tsv(tmp_path, lines, name="inter.tsv"):
    p = tmp_path / name
    p.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return p


# ---------------------------------------------------------------------------
# load_interactions
# ---------------------------------------------------------------------------

def test_load_basic_line(tmp_path):
    recs = sd.load_interactions(make_tsv(tmp_path, ["u1\ti9\t100"]))
    assert recs == [sd.Interaction("u1", "i9", 100, frozenset())]


def test_load_categories(tmp_path):
    recs = sd.load_interactions(make_tsv(tmp_path, ["u1\ti9\t100\tComedy|Action"]))
    assert recs[0].categories == frozenset({"Comedy", "Action"})


def test_load_missing_field_names_line(tmp_path):
    path = make_tsv(tmp_path, ["u1\ti9\t5", "u1\ti9"])
    with pytest.raises(ParseError, match=":2"):
        sd.load_interactions(path)


def test_load_empty_file(tmp_path):
    p = tmp_path / "empty.tsv"
    p.write_text("", encoding="utf-8")
    with pytest.raises(DataError):
        sd.load_interactions(p)


def test_load_bad_timestamp(tmp_path):
    with pytest.raises(ParseError, match=":1"):
        sd.load_interactions(make_tsv(tmp_path, ["u1\ti9\tsoon"]))


def test_load_order_preserved(tmp_path):
    lines = [f"u1\ti{k}\t{100 - k}" for k in range(5)]
    recs = sd.load_interactions(make_tsv(tmp_path, lines))
    assert [r.item_id for r in recs] == [f"i{k}" for k in range(5)]


# ---------------------------------------------------------------------------
# build_dataset
# ---------------------------------------------------------------------------

def test_build_dataset_threshold_met_exactly():
    # 5 users sharing the same 5 items: every count == 5, all survive
    recs = [sd.Interaction(f"u{u}", f"i{i}", i, frozenset())
            for u in range(5) for i in range(5)]
    ds = sd.build_dataset(recs, min_count=5)
    assert ds.num_users == 5 and ds.num_items == 5
    assert ds.interaction_count == 25


def test_build_dataset_drops_inactive_user():
    base = [sd.Interaction(f"u{u}", f"i{i}", i, frozenset())
            for u in range(5) for i in range(5)]
    extra = [sd.Interaction("u9", f"i{i}", i, frozenset()) for i in range(4)]
    ds = sd.build_dataset(base + extra, min_count=5)
    assert "u9" not in ds.user_ids


def test_build_dataset_is_iterative():
    # i5 appears 4 times -> dropped; u0..u3 then fall to 4 interactions and
    # drop too; their items lose support and the whole set collapses.
    recs = []
    for u in range(4):
        for i in range(4):
            recs.append(sd.Interaction(f"u{u}", f"i{i}", i, frozenset()))
        recs.append(sd.Interaction(f"u{u}", "i5", 9, frozenset()))
    with pytest.raises(DataError):
        sd.build_dataset(recs, min_count=5)


def test_build_dataset_fixpoint():
    rng = np.random.default_rng(0)
    recs = [sd.Interaction(f"u{rng.integers(12)}", f"i{rng.integers(15)}", t, frozenset())
            for t in range(400)]
    ds = sd.build_dataset(recs, min_count=5)
    # re-running the filter on its own output changes nothing
    rebuilt = sd.build_dataset(
        [sd.Interaction(ds.user_ids[u], ds.item_ids[i], ts, frozenset())
         for u, seq in enumerate(ds.user_sequences) for ts, i in enumerate(seq)],
        min_count=5)
    assert rebuilt.stats() == ds.stats()


def test_build_dataset_sorts_by_timestamp_with_stable_ties():
    recs = [
        sd.Interaction("u", "a", 30, frozenset()),
        sd.Interaction("u", "b", 10, frozenset()),
        sd.Interaction("u", "c", 20, frozenset()),
        sd.Interaction("u", "d", 20, frozenset()),
        sd.Interaction("u", "e", 5, frozenset()),
    ]
    ds = sd.build_dataset(recs, min_count=1)
    names = [ds.item_ids[i] for i in ds.user_sequences[0]]
    assert names == ["e", "b", "c", "d", "a"]


def test_build_dataset_categories_indexed():
    recs = [sd.Interaction("u", f"i{k}", k,
                           frozenset({"A"}) if k % 2 else frozenset({"B", "A"}))
            for k in range(6)]
    ds = sd.build_dataset(recs, min_count=1)
    assert ds.category_names == ["A", "B"]
    idx_b = ds.item_ids.index("i0")
    assert ds.item_categories[idx_b] == frozenset({0, 1})


def test_padding_index_never_used():
    recs = [sd.Interaction("u", f"i{k}", k, frozenset()) for k in range(8)]
    ds = sd.build_dataset(recs, min_count=1)
    assert all(0 not in seq for seq in ds.user_sequences)
    assert min(min(s) for s in ds.user_sequences) >= 1


# ---------------------------------------------------------------------------
# split_leave_one_out
# ---------------------------------------------------------------------------

def small_dataset(seqs):
    n = max(max(s) for s in seqs)
    return sd.Dataset(
        user_sequences=[list(s) for s in seqs],
        num_users=len(seqs),
        num_items=n,
        user_ids=[f"u{i}" for i in range(len(seqs))],
        item_ids=["<pad>"] + [f"i{i}" for i in range(1, n + 1)],
    )


def test_split_definitional():
    split = sd.split_leave_one_out(small_dataset([[1, 2, 3, 4, 5], [1, 2, 3]]))
    assert split.train.user_sequences == [[1, 2, 3], [1]]
    assert split.valid_target == [4, 2]
    assert split.test_target == [5, 3]


def test_split_reconstructs_original():
    seqs = [[3, 1, 4, 1, 5, 9, 2], [2, 7, 1, 8, 2, 8]]
    split = sd.split_leave_one_out(small_dataset(seqs))
    for u, seq in enumerate(seqs):
        rebuilt = split.train.user_sequences[u] + [split.valid_target[u],
                                                   split.test_target[u]]
        assert rebuilt == seq


def test_split_too_short_names_user():
    with pytest.raises(DataError, match="u1"):
        sd.split_leave_one_out(small_dataset([[1, 2, 3], [1, 2]]))


# ---------------------------------------------------------------------------
# build_history / build_global
# ---------------------------------------------------------------------------

def test_history_padding_rule():
    assert sd.build_history([1, 2, 3], 4, 5).tolist() == [0, 0, 1, 2, 3]


def test_history_truncation_keeps_recent():
    assert sd.build_history(list(range(1, 8)), 8, 5).tolist() == [3, 4, 5, 6, 7]


def test_history_single_item():
    assert sd.build_history([1, 2], 2, 3).tolist() == [0, 0, 1]


def test_history_range_check():
    with pytest.raises(IndexError):
        sd.build_history([1, 2, 3], 1, 5)
    with pytest.raises(IndexError):
        sd.build_history([1, 2, 3], 5, 5)


def test_global_definitional():
    window, avail = sd.build_global(list(range(1, 11)), 5, 5, 2)
    assert window.tolist() == [3, 4, 5, 6, 7]
    assert avail == 3


def test_global_truncated_future_slides_back():
    window, avail = sd.build_global(list(range(1, 7)), 5, 5, 3)
    assert window.tolist() == [2, 3, 4, 5, 6]
    assert avail == 2


def test_global_padding():
    window, avail = sd.build_global([1, 2, 3], 2, 5, 0)
    assert window.tolist() == [0, 0, 0, 1, 2]
    assert avail == 1


def test_global_out_of_range():
    with pytest.raises(IndexError):
        sd.build_global([1, 2, 3], 4, 5, 1)


def test_history_properties_random():
    rng = np.random.default_rng(1)
    for _ in range(200):
        n = int(rng.integers(2, 30))
        seq = list(rng.integers(1, 50, size=n))
        length = int(rng.integers(1, 12))
        t = int(rng.integers(2, n + 2))
        h = sd.build_history(seq, t, length)
        assert len(h) == length
        real = h[h != 0]
        expect = seq[max(0, t - 1 - length):t - 1]
        assert real.tolist() == expect
        # padding is a contiguous left prefix
        nz = np.nonzero(h)[0]
        if nz.size:
            assert np.all(h[nz[0]:] != 0)


def test_history_global_overlap_order():
    rng = np.random.default_rng(2)
    for _ in range(100):
        n = int(rng.integers(6, 40))
        seq = list(rng.integers(1, 99, size=n))
        length = int(rng.integers(3, 14))
        future = int(rng.integers(0, 4))
        t = int(rng.integers(2, n + 1))
        h = sd.build_history(seq, t, length)
        g, avail = sd.build_global(seq, t, length, future)
        # both windows are contiguous slices of seq: sequence positions they
        # share must carry identical items at matching relative order
        hist_pos = list(range(max(1, t - length), t))
        end = min(t + future, n)
        glob_pos = list(range(max(1, end - length + 1), end + 1))
        by_pos_h = dict(zip(hist_pos, h[length - len(hist_pos):].tolist()))
        by_pos_g = dict(zip(glob_pos, g[length - len(glob_pos):].tolist()))
        common = sorted(set(hist_pos) & set(glob_pos))
        for p in common:
            assert by_pos_h[p] == by_pos_g[p] == seq[p - 1]


def test_future_targets_shift():
    seq = list(range(1, 11))
    window, _ = sd.build_global(seq, 5, 5, 2)   # [3..7]
    targets = sd.build_future_targets(seq, 5, 5, 2)
    assert targets.tolist() == [4, 5, 6, 7, 8]
    assert np.array_equal(targets[:-1], window[1:])


def test_future_targets_at_sequence_end():
    seq = list(range(1, 7))
    targets = sd.build_future_targets(seq, 5, 5, 3)  # window [2..6], end=len
    assert targets.tolist() == [3, 4, 5, 6, 0]


# ---------------------------------------------------------------------------
# negative sampling
# ---------------------------------------------------------------------------

def test_sample_negative_forced():
    rng = np.random.default_rng(0)
    assert sd.sample_negative({1, 2}, 3, rng) == 3


def test_sample_negative_exclusion():
    rng = np.random.default_rng(1)
    for _ in range(200):
        assert sd.sample_negative(set(range(1, 51)), 100, rng) > 50


def test_sample_negative_deterministic():
    a = sd.sample_negative({2, 3}, 50, np.random.default_rng(7))
    b = sd.sample_negative({2, 3}, 50, np.random.default_rng(7))
    assert a == b


def test_sample_negative_exhausted():
    with pytest.raises(DataError):
        sd.sample_negative({1, 2, 3}, 3, np.random.default_rng(0))


def test_sample_negative_coverage_near_uniform():
    rng = np.random.default_rng(3)
    eligible = [i for i in range(1, 13) if i not in (2, 5)]
    counts = {i: 0 for i in eligible}
    for _ in range(10_000):
        counts[sd.sample_negative({2, 5}, 12, rng)] += 1
    assert all(c > 0 for c in counts.values())
    expected = 10_000 / len(eligible)
    assert all(expected / 5 <= c <= expected * 5 for c in counts.values())


def test_sample_negatives_array_matches_exclusion():
    ds = small_dataset([[1, 2, 3, 1], [4, 5, 6, 4]])
    table = sd.interacted_table(ds)
    rng = np.random.default_rng(4)
    rows = np.array([0, 1, 0])
    negs = sd.sample_negatives_array(rng, rows, table, (3, 8), ds.num_items)
    for r, row in zip(rows, negs):
        assert not table[r, row].any()


# ---------------------------------------------------------------------------
# synthetic drift
# ---------------------------------------------------------------------------

def test_synthetic_deterministic():
    a = sd.generate_synthetic_drift(10, 20, 4, 0.1, (5, 9), seed=42)
    b = sd.generate_synthetic_drift(10, 20, 4, 0.1, (5, 9), seed=42)
    assert a.dataset.user_sequences == b.dataset.user_sequences
    assert a.trajectories == b.trajectories


def test_synthetic_len_range_collapse():
    drift = sd.generate_synthetic_drift(8, 20, 4, 0.2, (5, 5), seed=0)
    assert all(len(s) == 5 for s in drift.dataset.user_sequences)


def test_synthetic_zero_drift_stationary():
    drift = sd.generate_synthetic_drift(30, 40, 4, 0.0, (40, 40), seed=1,
                                        noise_rate=0.0)
    for seq, traj in zip(drift.dataset.user_sequences, drift.trajectories):
        assert len(set(traj)) == 1
        cats = {next(iter(drift.dataset.item_categories[i])) for i in seq}
        assert cats == {traj[0]}


def test_synthetic_config_errors():
    with pytest.raises(ConfigError):
        sd.generate_synthetic_drift(5, 3, 4, 0.1, (5, 9), seed=0)
    with pytest.raises(ConfigError):
        sd.generate_synthetic_drift(5, 30, 1, 0.1, (5, 9), seed=0)
    with pytest.raises(ConfigError):
        sd.generate_synthetic_drift(5, 30, 4, 1.5, (5, 9), seed=0)


def test_dataset_round_trip(tmp_path):
    drift = sd.generate_synthetic_drift(6, 18, 3, 0.3, (6, 10), seed=9)
    path = tmp_path / "ds.json"
    sd.save_dataset(drift.dataset, path, extra={"source": "synthetic"})
    back = sd.load_dataset(path)
    assert back.user_sequences == drift.dataset.user_sequences
    assert back.item_categories == drift.dataset.item_categories
    assert back.stats() == drift.dataset.stats()
