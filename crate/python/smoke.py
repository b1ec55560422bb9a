"""Smoke test for the gnnfair_py extension module.

Run from the repository root after building the extension:

    cargo build -p gnnfair-py --release --features extension-module
    cp target/release/libgnnfair_py.so python/gnnfair_py.so
    python3 python/smoke.py
"""

import json
import math
import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import gnnfair_py as g  # noqa: E402


def check(cond, msg):
    if not cond:
        raise SystemExit(f"FAIL: {msg}")
    print(f"ok   {msg}")


def main():
    bundle = g.GraphBundle(3, [(0, 1)], [[1.0], [0.0], [2.0]], [0, 1, 0], 2, name="tiny")
    check(bundle.aggregate("two_step_norm") == [[0.5], [0.5], [2.0]], "two-step aggregation of the worked example")
    check(bundle.edges == [(0, 1)] and bundle.num_nodes == 3, "bundle accessors")
    pr = bundle.centrality("pagerank")
    check(abs(sum(pr) - 1.0) < 1e-9, "pagerank sums to one")

    with tempfile.TemporaryDirectory() as d:
        bundle.save(d)
        back = g.GraphBundle.load(d)
        check(back.features == bundle.features and back.labels == bundle.labels, "bundle round trip")

    check(g.margin_loss([[2.0, 1.0], [0.0, 3.0]], [0, 0], 0.0) == 0.5, "margin loss at gamma 0")
    check(abs(g.prior_sigma(8.0, 1.0, 1, 1, 1.0, 1, 0.2) - 0.543423) < 1e-6, "prior sigma closed form")
    rhs1 = g.theorem1_rhs(0.1, 2.0, 10.0, 100, 0.05, 0.0)
    rhs2 = g.theorem2_rhs(0.1, 2.0, 10.0, 100, 0.05, 0.0)
    check(abs((rhs2 - rhs1) - 4.0 / 10.0) < 1e-12, "second bound adds (kl + 2) / lambda")
    check(g.covering_count(2, 1.0, 1.0, 1.0) > 0 and math.isfinite(g.covering_count(2, 1.0, 1.0, 1.0)), "covering count")

    tail = g.spectral_tail_check(0.1, 4, 4, 4, 1.0, trials=2000, seed=1)
    check(tail["consistent"], "spectral tail within its bound")

    mlp = g.MlpClassifier([[[1.0, 0.0], [0.0, 1.0]], [[1.0, -1.0], [-1.0, 1.0]]])
    check(mlp.predict([[2.0, 0.0], [0.0, 2.0]]) == [0, 1], "mlp prediction")
    check(g.MlpClassifier.from_json(mlp.to_json()).to_json() == mlp.to_json(), "mlp json round trip")

    synth = g.synth_homophilous(n_per_class=60, num_classes=3, dim=6, intra_p=0.1, inter_p=0.01, seed=3)
    report = g.audit(synth, model="sgc", groups=3, trials=3, train_per_class=10, val=30, test=60)
    check(len(report["group_mean_accuracy"]) == 3, "audit returns per-group accuracy")
    again = g.audit(synth, model="sgc", groups=3, trials=3, train_per_class=10, val=30, test=60)
    check(json.dumps(report, sort_keys=True) == json.dumps(again, sort_keys=True), "audit is reproducible")

    noisy = g.noisy_experiment(synth, alpha=5.0, model="mlp", groups=3, trials=2, train_per_class=10, val=30, test=60)
    check(set(noisy) >= {"clean", "noisy"}, "noisy experiment has both arms")

    big = g.synth_homophilous(n_per_class=200, num_classes=2, intra_p=0.05, seed=4)
    biased = g.biased_experiment(big, 0, centrality="degree", trials=2, train_per_class=20, val=100, test=200)
    check(len(biased["classes"]) == 2, "biased selection reports every class")

    bound = g.world_bound_audit(n_0=10, s_m=4, epsilon_m=0.3, spread=2.0, groups=2, trials=2, val=10, test=30,
                                gamma=0.5, mc_samples=100, seed=1)
    check(bound["synthetic_world"] and len(bound["per_trial"]) == 2, "bound audit on an assumption world")

    try:
        g.audit(synth, model="gat")
    except ValueError as e:
        check("model" in str(e), "bad model name raises ValueError")
    else:
        raise SystemExit("FAIL: bad model name accepted")

    print("smoke test passed")


if __name__ == "__main__":
    main()
