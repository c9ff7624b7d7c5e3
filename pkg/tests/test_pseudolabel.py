"""Pseudo motion labels and their manifest."""

import numpy as np
import pytest

from motiondesk.pseudolabel import assign_pseudo_labels, read_manifest, write_manifest


def test_labels_recover_separated_clusters_and_are_deterministic():
    rng = np.random.default_rng(0)
    centers = rng.normal(scale=10, size=(4, 6))
    emb = np.concatenate([c + rng.normal(scale=0.1, size=(8, 6)) for c in centers])
    a = assign_pseudo_labels(emb, K=4, seed=1)
    b = assign_pseudo_labels(emb, K=4, seed=1)
    labels = np.array([c.label for c in a])
    assert labels.tolist() == [c.label for c in b]
    for g in range(4):
        assert len(set(labels[g * 8 : (g + 1) * 8])) == 1
    assert len(set(labels)) == 4
    assert a[3].label_onehot.tolist() == np.eye(4)[labels[3]].tolist()


def test_identical_embeddings_share_one_label():
    labels = {c.label for c in assign_pseudo_labels(np.zeros((20, 3)), K=4, seed=0)}
    assert len(labels) == 1


def test_too_few_clips_suggests_smaller_K():
    with pytest.raises(ValueError, match="smaller K"):
        assign_pseudo_labels(np.zeros((3, 2)), K=16, seed=0)


def test_manifest_round_trip_and_validation(tmp_path):
    clips = assign_pseudo_labels(np.random.default_rng(2).normal(size=(10, 3)), K=3, seed=0, clip_ids=range(100, 110))
    p = tmp_path / "labels.tsv"
    write_manifest(p, clips)
    first = p.read_text().splitlines()[0].split("\t")
    assert first[0] == "100" and len(first) == 2
    back = read_manifest(p, K=3)
    assert [(c.clip_id, c.label) for c in back] == [(c.clip_id, c.label) for c in clips]
    p.write_text("0\t7\n")
    with pytest.raises(ValueError):
        read_manifest(p, K=3)
