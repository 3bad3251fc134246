"""Smoke test for the pytrackfold extension module.

Build first, e.g. `maturin develop` from crates/python, then run
`python python/smoke_test.py`.
"""

import math
import os
import tempfile

import pytrackfold as tf


def close(a, b, tol=1e-12):
    return abs(a - b) <= tol


def main():
    assert tf.method_names() == [
        "raw-pairwise",
        "l2-pairwise",
        "medoid",
        "medoid-l2",
        "avepool",
        "l2-avepool",
        "avepool-l2",
    ]

    assert tf.l2_normalize([3.0, 4.0]) == [0.6, 0.8]
    try:
        tf.l2_normalize([0.0, 0.0])
    except ValueError:
        pass
    else:
        raise AssertionError("zero vector accepted")

    a = tf.Track("a", [[0.0, 0.0], [2.0, 0.0]])
    b = tf.Track("b", [[0.0, 1.0]])
    assert len(a) == 2 and a.dim == 2
    assert tf.aggregate(a, "avepool") == [1.0, 0.0]
    want = (1.0 + math.sqrt(5.0)) / 2.0
    assert close(tf.pairwise_average_distance(a, b), want)
    assert close(tf.track_distance(a, b, "raw-pairwise"), want)
    assert close(tf.kl_divergence([0.5, 0.5], [0.5, 0.5]), 0.0)

    m = tf.verification_metrics([True, True, False, False], [0.1, 0.2, 0.8, 0.9])
    assert m == {"auc": 1.0, "eer": 0.0, "frr_at_far": 0.0}
    assert tf.calibrate_threshold([False] * 100, [float(i) for i in range(1, 101)]) == 1.0

    tracks, labels = tf.synth(seed=1, identities=10)
    assert len(tracks) == 30 and len(labels) == 30
    clusters = tf.cluster(tracks, threshold=0.0)
    assert len(clusters) == 30
    assert len(tf.cluster(tracks, threshold=10.0, mode="hac")) == 1

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "tracks.csv")
        tf.write_tracks(tracks, path)
        back = tf.read_tracks(path)
        assert [t.frames for t in back] == [t.frames for t in tracks]

    print("pytrackfold smoke test passed")


if __name__ == "__main__":
    main()
