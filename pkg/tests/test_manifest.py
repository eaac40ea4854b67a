from __future__ import annotations

import csv
import json
import random

import pytest

from aceforge.errors import ManifestError
from aceforge.manifest import (
    ManifestHeader,
    Sample,
    assign_splits,
    compute_stats,
    read_manifest,
    split_dataset,
    split_sizes,
    stats_from_samples,
    write_manifest,
    write_stats_csv,
)


def sample(i, chars=10, w=900, h=500, kinds=("Formula",)):
    text = "x" * chars
    return Sample("s%04d" % i, "img/s%04d.png" % i, text, w, h, tuple(kinds), chars)


def with_images(tmp_path, samples):
    (tmp_path / "img").mkdir(exist_ok=True)
    for s in samples:
        (tmp_path / s.image_path).write_bytes(b"png")
    return samples


# --- write / read -----------------------------------------------------------

def test_empty_manifest_is_header_only(tmp_path):
    out = write_manifest([], tmp_path / "m.jsonl", ManifestHeader(seed=1, config_hash="abc"))
    lines = out.read_text().splitlines()
    assert len(lines) == 1
    head = json.loads(lines[0])
    assert head["record"] == "header" and head["seed"] == 1 and head["config_hash"] == "abc"
    assert head["toolkit_version"]


def test_three_samples_four_lines_sorted(tmp_path):
    samples = with_images(tmp_path, [sample(3), sample(1), sample(2)])
    out = write_manifest(samples, tmp_path / "m.jsonl")
    lines = out.read_text().splitlines()
    assert len(lines) == 4
    assert [json.loads(x)["sample_id"] for x in lines[1:]] == ["s0001", "s0002", "s0003"]


def test_round_trip(tmp_path):
    samples = with_images(tmp_path, [sample(i, chars=i + 5, kinds=("List", "Formula", "List")) for i in range(5)])
    header = ManifestHeader(seed=7, config_hash="f" * 64)
    write_manifest(samples, tmp_path / "m.jsonl", header)
    h2, back = read_manifest(tmp_path / "m.jsonl")
    assert h2 == header
    assert back == sorted(samples, key=lambda s: s.sample_id)


def test_duplicate_ids_fatal(tmp_path):
    samples = with_images(tmp_path, [sample(1), sample(1)])
    with pytest.raises(ManifestError):
        write_manifest(samples, tmp_path / "m.jsonl")


def test_missing_image_fatal(tmp_path):
    with pytest.raises(ManifestError):
        write_manifest([sample(1)], tmp_path / "m.jsonl")
    assert not (tmp_path / "m.jsonl").exists()


def test_sample_invariants():
    with pytest.raises(ManifestError):
        Sample("a", "a.png", "abc", 1, 1, (), 4)
    with pytest.raises(ManifestError):
        Sample("a", "a.png", "abc", 1, 1, (), 3, split="holdout")


def test_unknown_record_rejected(tmp_path):
    p = tmp_path / "m.jsonl"
    p.write_text('{"record": "header"}\n{"record": "mystery"}\n')
    with pytest.raises(ManifestError):
        read_manifest(p)


# --- splits -----------------------------------------------------------------

def test_split_sizes_examples():
    assert split_sizes(10) == (8, 1, 1)
    assert split_sizes(1) == (0, 0, 1)
    assert split_sizes(0) == (0, 0, 0)
    assert split_sizes(19) == (15, 1, 3)


@pytest.mark.parametrize("n", [1, 10, 100, 1000])
def test_split_partition(n):
    samples = [Sample("id%05d" % i, "p", "", 1, 1, (), 0) for i in range(n)]
    out = assign_splits(samples, seed=3)
    groups = {k: {s.sample_id for s in out if s.split == k} for k in ("train", "val", "test")}
    assert (len(groups["train"]), len(groups["val"]), len(groups["test"])) == (
        n * 8 // 10, n // 10, n - n * 8 // 10 - n // 10)
    assert groups["train"] | groups["val"] | groups["test"] == {s.sample_id for s in samples}
    assert not (groups["train"] & groups["val"] or groups["train"] & groups["test"] or groups["val"] & groups["test"])


def test_split_determinism_and_input_order():
    samples = [Sample("id%03d" % i, "p", "", 1, 1, (), 0) for i in range(100)]
    a = assign_splits(samples, 11)
    shuffled = samples[:]
    random.Random(0).shuffle(shuffled)
    assert assign_splits(shuffled, 11) == a
    b = assign_splits(samples, 12)
    assert [s.split for s in a] != [s.split for s in b]
    assert sorted(s.split for s in a) == sorted(s.split for s in b)


def test_split_dataset_in_place(tmp_path):
    samples = with_images(tmp_path, [sample(i) for i in range(20)])
    m = write_manifest(samples, tmp_path / "m.jsonl", ManifestHeader(seed=1))
    out = split_dataset(m, seed=4)
    header, back = read_manifest(m)
    assert back == out
    assert header.split_seed == 4 and header.split_ratios == (8, 1, 1)
    assert {s.split for s in back} == {"train", "val", "test"}
    with pytest.raises(ManifestError):
        split_dataset(m, seed=4)
    assert split_dataset(m, seed=4, force=True) == out


# --- stats ------------------------------------------------------------------

def test_single_sample_median():
    report = stats_from_samples([sample(0, chars=1107)])
    assert report.char_len_median == 1107
    assert report.total_samples == 1


# Five samples with values checked by hand:
#   chars 900, 1000, 1107, 1200, 1500 -> median 1107
#   widths 950, 960, 974, 990, 1010 -> median 974; heights 480, 520, 493, 450, 510 -> median 493
FIVE = [
    sample(0, 900, 950, 480, ("Formula", "Table")),
    sample(1, 1000, 960, 520, ("Formula",)),
    sample(2, 1107, 974, 493, ("List",)),
    sample(3, 1200, 990, 450, ("Formula", "InlineMathSentence", "InlineMathSentence")),
    sample(4, 1500, 1010, 510, ("Algorithm",)),
]


def test_five_sample_hand_count():
    r = stats_from_samples(FIVE)
    assert r.char_len_median == 1107
    assert r.dim_median == (974, 493)
    assert r.counts_by_kind == {"Formula": 3, "Table": 1, "List": 1, "InlineMathSentence": 2, "Algorithm": 1}
    assert r.char_len_histogram == {900: 1, 1000: 1, 1100: 1, 1200: 1, 1500: 1}
    assert r.dim_histogram_2d == {(950, 450): 3, (950, 500): 1, (1000, 500): 1}
    assert sum(r.char_len_histogram.values()) == r.total_samples


def test_stats_invariant_under_reordering():
    a = stats_from_samples(FIVE).to_json()
    b = stats_from_samples(list(reversed(FIVE))).to_json()
    assert a == b


def test_compute_stats_and_csv(tmp_path):
    samples = with_images(tmp_path, FIVE)
    m = write_manifest(samples, tmp_path / "m.jsonl")
    report = compute_stats(m)
    assert report.to_json()["char_len_median"] == 1107
    write_stats_csv(report, tmp_path / "s.csv")
    rows = list(csv.reader(open(tmp_path / "s.csv")))
    assert rows[0] == ["table", "key", "count"]
    assert ["char_len", "1100-1199", "1"] in rows
    assert ["kind", "Formula", "3"] in rows


def test_empty_stats():
    r = stats_from_samples([])
    assert r.total_samples == 0 and r.char_len_median is None and r.dim_median is None
