"""Smoke test for the gapent extension module.

Build and install first:
    pip install -e crates/python --no-build-isolation
then run:
    python python/smoke_test.py
"""

import json
import math
import os
import tempfile

import gapent


def main():
    assert abs(gapent.zeta(2.0) - math.pi**2 / 6) < 1e-12

    data = gapent.generate(64, 0.5, C=4.0, seed=7)
    assert len(data) == 64 and data.dim == 16
    assert set(data.labels) <= {-1, 1}

    clf, margin = gapent.train(data)
    assert margin >= 0.5 - 1e-6, margin
    assert gapent.empirical_risk(clf, data, gap_tolerant=False) == 0.0
    back = gapent.GapClassifier.from_json(clf.to_json())
    assert back.w == clf.w and back.b == clf.b
    assert sorted(json.loads(clf.to_json())) == ["b", "delta", "p", "w"]

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "d.csv")
        data.write_csv(path)
        again = gapent.LabeledDataset.read_csv(path)
        assert again.points == data.points and again.labels == data.labels

    square = [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]]
    res = gapent.gap_feasible(square, [1, 1, -1, -1], 0.5)
    assert res["feasible"] and res["witness"] is not None
    assert not gapent.gap_feasible(square, [1, -1, 1, -1], 0.1)["feasible"]
    assert gapent.count_dichotomies(square, 0.0) == 14

    est = gapent.annealed_entropy(6, 0.5, trials=50, seed=1)
    hann = gapent.bound("hann_hilbert", {"ell": 6, "r": math.sqrt(gapent.zeta(3.0)), "Delta": 0.5})
    assert est["mean_lnN"] <= hann["value"] + est["ci_halfwidth"]

    m, witness = gapent.vc_search(4, 0.5, budget=500, seed=2)
    assert m <= gapent.bound("vc_hilbert", {"R": 1.0, "Delta": 0.5})["value"]
    assert len(witness) == m

    emb = gapent.diffusion_map(4, [(0, 1), (1, 2), (2, 3), (3, 0)], k=2)
    assert abs(emb.mean_squared_norm() - emb.eigenvalue_moment()) < 1e-12
    emb = gapent.random_graph_embedding(20, 0.3, k=1, seed=3)
    assert emb.mean_squared_norm() <= 1 + 1e-8

    config = json.dumps({"schema_version": 1, "seed": 5, "experiment": {"kind": "vc_search", "dims": [2], "budget": 200}})
    with tempfile.TemporaryDirectory() as tmp:
        summary = gapent.run_experiment(config, out=tmp)
        for name in ("config.json", "results.csv", "summary.json"):
            assert os.path.isfile(os.path.join(summary["directory"], name))
        assert summary["all_passed"]

    try:
        gapent.run_experiment('{"schema_version":1,"seed":1,"experiment":{"kind":"vc_search","oops":1}}')
    except ValueError as e:
        assert "/experiment/oops" in str(e)
    else:
        raise AssertionError("unknown key accepted")

    print("smoke test passed")


if __name__ == "__main__":
    main()
