"""Interaction ingestion and sequence construction.

Covers TSV parsing (plus a MovieLens-100K directory adapter), iterative
5-core filtering, leave-one-out splits, history/global window construction,
negative sampling, and a synthetic drifting-preference generator used as a
verification oracle.

All functions are pure given explicit inputs and RNG state; datasets are
immutable after construction and safe to share across workers.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, ParseError

PAD = 0  # internal item index reserved for left padding

DATASET_SCHEMA = 1


@dataclass(frozen=True)
class Interaction:
    """One (user, item, time) event with optional category labels."""

    user_id: str
    item_id: str
    timestamp: int
    categories: frozenset = frozenset()


@dataclass
class Dataset:
    """Per-user chronological item-index sequences plus id/category maps.

    Item indices run 1..num_items; index 0 never appears in a sequence.
    """

    user_sequences: list
    num_users: int
    num_items: int
    user_ids: list
    item_ids: list          # item_ids[0] is the padding slot
    category_names: list = field(default_factory=list)
    item_categories: dict = field(default_factory=dict)

    @property
    def interaction_count(self):
        return sum(len(s) for s in self.user_sequences)

    @property
    def density(self):
        return self.interaction_count / (self.num_users * self.num_items)

    def stats(self):
        return {
            "num_users": self.num_users,
            "num_items": self.num_items,
            "num_interactions": self.interaction_count,
            "density_percent": round(100.0 * self.density, 4),
        }


@dataclass
class SplitDataset:
    """Leave-one-out split: train keeps all but the last two items."""

    train: Dataset
    valid_target: list
    test_target: list
    full_sequences: list


@dataclass
class DriftDataset:
    """Synthetic dataset plus the latent category trajectory per user."""

    dataset: Dataset
    trajectories: list
    drift_rate: float
    seed: int


# ---------------------------------------------------------------------------
# ingestion
# ---------------------------------------------------------------------------

def load_interactions(path, fmt="tsv"):
    """Parse a UTF-8 TSV of ``user<TAB>item<TAB>timestamp[<TAB>cat1|cat2]``."""
    if fmt != "tsv":
        raise ConfigError(f"unsupported format '{fmt}'")
    path = Path(path)
    out = []
    with path.open(encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) < 3:
                raise ParseError(f"{path.name}:{lineno}: expected at least 3 "
                                 f"tab-separated fields, got {len(cols)}")
            try:
                ts = int(cols[2])
            except ValueError:
                raise ParseError(f"{path.name}:{lineno}: timestamp "
                                 f"'{cols[2]}' is not an integer") from None
            if ts < 0:
                raise ParseError(f"{path.name}:{lineno}: negative timestamp")
            cats = frozenset()
            if len(cols) >= 4 and cols[3]:
                cats = frozenset(c for c in cols[3].split("|") if c)
            out.append(Interaction(cols[0], cols[1], ts, cats))
    if not out:
        raise DataError(f"{path}: no interactions found")
    return out


_ML100K_GENRES = [
    "unknown", "Action", "Adventure", "Animation", "Children's", "Comedy",
    "Crime", "Documentary", "Drama", "Fantasy", "Film-Noir", "Horror",
    "Musical", "Mystery", "Romance", "Sci-Fi", "Thriller", "War", "Western",
]


def load_ml100k(directory):
    """Read a MovieLens-100K directory (u.data ratings, u.item genres).

    Every rating counts as an interaction; genre flags become categories.
    """
    directory = Path(directory)
    ratings = directory / "u.data"
    if not ratings.exists():
        raise DataError(f"{directory}: missing u.data")

    genre_names = _ML100K_GENRES
    genre_file = directory / "u.genre"
    if genre_file.exists():
        names = []
        for line in genre_file.read_text(encoding="latin-1").splitlines():
            if line.strip():
                names.append(line.split("|")[0])
        if names:
            genre_names = names

    item_cats = {}
    item_file = directory / "u.item"
    if item_file.exists():
        for lineno, line in enumerate(item_file.read_text(encoding="latin-1").splitlines(), 1):
            if not line.strip():
                continue
            cols = line.split("|")
            if len(cols) < 5 + len(genre_names):
                raise ParseError(f"u.item:{lineno}: expected "
                                 f"{5 + len(genre_names)} fields, got {len(cols)}")
            flags = cols[-len(genre_names):]
            item_cats[cols[0]] = frozenset(
                genre_names[i] for i, f in enumerate(flags) if f == "1")

    out = []
    for lineno, line in enumerate(ratings.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        cols = line.split("\t")
        if len(cols) != 4:
            raise ParseError(f"u.data:{lineno}: expected 4 fields, got {len(cols)}")
        user, item, _rating, ts = cols
        out.append(Interaction(user, item, int(ts), item_cats.get(item, frozenset())))
    if not out:
        raise DataError(f"{ratings}: no interactions found")
    return out


# ---------------------------------------------------------------------------
# filtering / splitting
# ---------------------------------------------------------------------------

def build_dataset(interactions, min_count=5):
    """Iterative k-core filter, then dense reindexing.

    Items and users with fewer than ``min_count`` interactions are removed
    alternately until a fixpoint (dropping an item can push a user below the
    threshold and vice versa).  Sequences are sorted by timestamp; ties keep
    input order.  Internal ids are assigned in order of first appearance,
    with item index 0 reserved for padding.
    """
    if min_count < 1:
        raise ConfigError("min_count must be >= 1")
    records = list(interactions)
    while True:
        item_counts = Counter(r.item_id for r in records)
        kept = [r for r in records if item_counts[r.item_id] >= min_count]
        user_counts = Counter(r.user_id for r in kept)
        kept = [r for r in kept if user_counts[r.user_id] >= min_count]
        if len(kept) == len(records):
            break
        records = kept
    if not records:
        raise DataError("no users survive k-core filtering")

    user_index = {}
    item_index = {}
    for r in records:
        if r.user_id not in user_index:
            user_index[r.user_id] = len(user_index)
        if r.item_id not in item_index:
            item_index[r.item_id] = len(item_index) + 1  # 0 is padding

    per_user = [[] for _ in user_index]
    for pos, r in enumerate(records):
        per_user[user_index[r.user_id]].append((r.timestamp, pos, item_index[r.item_id]))
    sequences = []
    for events in per_user:
        events.sort(key=lambda e: (e[0], e[1]))
        sequences.append([item for _, _, item in events])

    cat_names = sorted({c for r in records for c in r.categories})
    cat_index = {c: i for i, c in enumerate(cat_names)}
    item_categories = {}
    for r in records:
        if r.categories:
            idx = item_index[r.item_id]
            got = item_categories.setdefault(idx, set())
            got.update(cat_index[c] for c in r.categories)
    item_categories = {k: frozenset(v) for k, v in item_categories.items()}

    item_ids = ["<pad>"] + [None] * len(item_index)
    for ext, idx in item_index.items():
        item_ids[idx] = ext
    user_ids = [None] * len(user_index)
    for ext, idx in user_index.items():
        user_ids[idx] = ext

    return Dataset(
        user_sequences=sequences,
        num_users=len(user_index),
        num_items=len(item_index),
        user_ids=user_ids,
        item_ids=item_ids,
        category_names=cat_names,
        item_categories=item_categories,
    )


def split_leave_one_out(dataset):
    """Last item per user for test, penultimate for validation."""
    train_seqs, valid, test = [], [], []
    for u, seq in enumerate(dataset.user_sequences):
        if len(seq) < 3:
            raise DataError(f"user {dataset.user_ids[u]!r}: sequence too short "
                            f"to split ({len(seq)} < 3)")
        train_seqs.append(seq[:-2])
        valid.append(seq[-2])
        test.append(seq[-1])
    train = Dataset(
        user_sequences=train_seqs,
        num_users=dataset.num_users,
        num_items=dataset.num_items,
        user_ids=dataset.user_ids,
        item_ids=dataset.item_ids,
        category_names=dataset.category_names,
        item_categories=dataset.item_categories,
    )
    return SplitDataset(train=train, valid_target=valid, test_target=test,
                        full_sequences=[list(s) for s in dataset.user_sequences])


# ---------------------------------------------------------------------------
# window construction
# ---------------------------------------------------------------------------

def build_history(seq, t, length):
    """Window of the ``length`` items before position ``t`` (1-based),
    left-padded with 0.  Valid for 2 <= t <= len(seq)+1."""
    if not 2 <= t <= len(seq) + 1:
        raise IndexError(f"history target position {t} outside [2, {len(seq) + 1}]")
    recent = seq[max(0, t - 1 - length):t - 1]
    out = np.zeros(length, dtype=np.int64)
    if recent:
        out[length - len(recent):] = recent
    return out


def build_global(seq, t, length, future):
    """Window of ``length`` items ending ``future`` positions after ``t``.

    When the sequence ends before t+future the realized window ends at the
    last item (sliding back to keep ``length`` recent items) and the returned
    ``available_future`` counts how many of positions t..t+future exist.
    """
    if not 2 <= t <= len(seq):
        raise IndexError(f"global target position {t} outside [2, {len(seq)}]")
    end = min(t + future, len(seq))
    window = seq[max(0, end - length):end]
    out = np.zeros(length, dtype=np.int64)
    out[length - len(window):] = window
    available = min(future + 1, len(seq) - t + 1)
    return out, available


def build_future_targets(seq, t, length, future):
    """Next-step targets aligned to :func:`build_global`'s window.

    Position l predicts the item at window position l+1; the last position
    predicts the item just past the realized window end (0 if none).
    """
    window, _ = build_global(seq, t, length, future)
    end = min(t + future, len(seq))
    targets = np.zeros(length, dtype=np.int64)
    targets[:-1] = window[1:]
    targets[-1] = seq[end] if end < len(seq) else PAD
    return targets


def sample_negative(user_items, num_items, rng):
    """Uniform item index in [1, num_items] outside ``user_items``."""
    user_items = set(user_items)
    if len(user_items) >= num_items:
        raise DataError("user has interacted with every item; "
                        "no negative available")
    while True:
        cand = int(rng.integers(1, num_items + 1))
        if cand not in user_items:
            return cand


def sample_negatives_array(rng, user_rows, interacted, shape, num_items):
    """Vectorized exclusion sampling.

    ``interacted`` is an (m, num_items+1) boolean table; ``user_rows`` maps
    each row of ``shape`` to a user.  Deterministic given the RNG state.
    """
    if np.any(interacted[user_rows].sum(axis=-1) >= num_items):
        raise DataError("a user has interacted with every item; "
                        "no negative available")
    out = rng.integers(1, num_items + 1, size=shape)
    rows = user_rows.reshape((-1,) + (1,) * (len(shape) - 1))
    bad = interacted[np.broadcast_to(rows, shape), out]
    while bad.any():
        out[bad] = rng.integers(1, num_items + 1, size=int(bad.sum()))
        bad = interacted[np.broadcast_to(rows, shape), out]
    return out


def interacted_table(split_or_dataset):
    """(m, n+1) boolean table of items each user has ever interacted with."""
    if isinstance(split_or_dataset, SplitDataset):
        seqs = split_or_dataset.full_sequences
        n = split_or_dataset.train.num_items
        m = split_or_dataset.train.num_users
    else:
        seqs = split_or_dataset.user_sequences
        n = split_or_dataset.num_items
        m = split_or_dataset.num_users
    table = np.zeros((m, n + 1), dtype=bool)
    for u, seq in enumerate(seqs):
        table[u, seq] = True
    table[:, PAD] = False
    return table


# ---------------------------------------------------------------------------
# synthetic drifting-preference generator
# ---------------------------------------------------------------------------

def generate_synthetic_drift(num_users, num_items, num_categories, drift_rate,
                             seq_len_range, seed, noise_rate=0.1):
    """Users sample items from a latent preferred category that jumps to the
    next category with probability ``drift_rate`` per step; ``noise_rate`` of
    steps draw uniformly from all items.  Items are partitioned into
    contiguous category blocks.  Returns the dataset together with the
    ground-truth category trajectory of every user.
    """
    if num_categories < 2:
        raise ConfigError("num_categories must be >= 2")
    if not 0.0 <= drift_rate <= 1.0:
        raise ConfigError("drift_rate must lie in [0, 1]")
    if num_items < num_categories:
        raise ConfigError("need at least one item per category")
    lo, hi = seq_len_range
    if lo < 5 or hi < lo:
        raise ConfigError("seq_len_range must satisfy 5 <= lo <= hi")

    rng = np.random.default_rng(seed)
    bounds = np.linspace(1, num_items + 1, num_categories + 1).astype(int)
    cat_items = [np.arange(bounds[c], bounds[c + 1]) for c in range(num_categories)]

    sequences, trajectories = [], []
    for _ in range(num_users):
        length = int(rng.integers(lo, hi + 1))
        cat = int(rng.integers(num_categories))
        seq, traj = [], []
        for _ in range(length):
            if rng.random() < drift_rate:
                cat = (cat + 1) % num_categories
            traj.append(cat)
            if rng.random() < noise_rate:
                seq.append(int(rng.integers(1, num_items + 1)))
            else:
                seq.append(int(rng.choice(cat_items[cat])))
        sequences.append(seq)
        trajectories.append(traj)

    item_categories = {}
    for c, items in enumerate(cat_items):
        for i in items:
            item_categories[int(i)] = frozenset([c])
    dataset = Dataset(
        user_sequences=sequences,
        num_users=num_users,
        num_items=num_items,
        user_ids=[f"u{i}" for i in range(num_users)],
        item_ids=["<pad>"] + [f"i{i}" for i in range(1, num_items + 1)],
        category_names=[f"cat{c}" for c in range(num_categories)],
        item_categories=item_categories,
    )
    return DriftDataset(dataset=dataset, trajectories=trajectories,
                        drift_rate=drift_rate, seed=seed)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def save_dataset(dataset, path, extra=None):
    """Write a versioned JSON manifest with per-user index lists."""
    payload = {
        "schema": DATASET_SCHEMA,
        "num_users": dataset.num_users,
        "num_items": dataset.num_items,
        "user_ids": dataset.user_ids,
        "item_ids": dataset.item_ids,
        "category_names": dataset.category_names,
        "item_categories": {str(k): sorted(v) for k, v in dataset.item_categories.items()},
        "sequences": dataset.user_sequences,
    }
    if extra:
        payload["provenance"] = extra
    Path(path).write_text(json.dumps(payload), encoding="utf-8")


def load_dataset(path):
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("schema") != DATASET_SCHEMA:
        raise DataError(f"{path}: unsupported dataset schema "
                        f"{payload.get('schema')!r}")
    return Dataset(
        user_sequences=[list(map(int, s)) for s in payload["sequences"]],
        num_users=payload["num_users"],
        num_items=payload["num_items"],
        user_ids=payload["user_ids"],
        item_ids=payload["item_ids"],
        category_names=payload["category_names"],
        item_categories={int(k): frozenset(v)
                         for k, v in payload["item_categories"].items()},
    )
