"""Acceptance suite: one test per shipping criterion, each ending in a
single PASS line (run with -s or -v to see them). Tolerances are stated
inline and are the contract."""

import json
import time
from pathlib import Path

import numpy as np
import pytest

import prnn.training as training_mod
from prnn import tensor as T
from prnn.cli import main as prnn_main
from prnn.config import (NUM_JOINTS, DatasetConfig, EncoderConfig,
                         ExperimentConfig, LSTMConfig)
from prnn.em import (estep_latent_pi, init_bridging, mstep_bridging, q_loglik,
                     sample_disturbed_target)
from prnn.encoder import philox_rng, shape_trace
from prnn.gradcheck import grad_check
from prnn.model import (REG_DIM, init_model_params, refining_loss,
                        sequence_multitask_loss)
from prnn.synthdata import build_dataset, load_manifest, load_split
from prnn.training import prepare, run_refining


@pytest.fixture(scope="module")
def desk_dataset(tmp_path_factory):
    """The desk benchmark: K=4, 10 sequences per class, 60/20/20 split."""
    out = tmp_path_factory.mktemp("desk_data")
    return build_dataset(DatasetConfig(), out)


@pytest.fixture(scope="module")
def desk_config_path(tmp_path_factory):
    p = tmp_path_factory.mktemp("cfg") / "desk.json"
    p.write_text(ExperimentConfig.desk().to_json())
    return p


@pytest.fixture(scope="module")
def ablation(desk_dataset, desk_config_path, tmp_path_factory):
    """Full 4-variant x 5-seed ablation; shared by criteria 6 and 7."""
    out = tmp_path_factory.mktemp("ablation")
    t0 = time.monotonic()
    code = prnn_main(["ablate", "--config", str(desk_config_path),
                      "--manifest", str(desk_dataset),
                      "--seeds", "0,1,2,3,4", "--out", str(out)])
    elapsed = time.monotonic() - t0
    assert code == 0
    return out, elapsed


def test_criterion_1_gradient_correctness():
    """Every differentiable op and both composite losses vs central finite
    differences: rel. error < 1e-5 (fp64, h=1e-6), 20 seeds, < 60 s."""
    t0 = time.monotonic()
    enc = EncoderConfig.desk()
    lstm = LSTMConfig(num_layers=1, hidden_units=2, max_unroll=4)
    worst = 0.0
    for seed in range(20):
        r = np.random.default_rng(seed)
        a = T.Tensor(r.normal(size=(3, 4)))
        b = T.Tensor(r.normal(size=(4, 2)))
        x3 = T.Tensor(r.normal(size=(4, 4, 2)))
        k = T.Tensor(r.normal(size=(3, 3, 2, 2)))
        bias = T.Tensor(r.normal(size=2))
        v = T.Tensor(r.normal(size=5))
        w = T.Tensor(r.normal(size=(2, 5)))
        c = r.normal(size=(3, 4))
        primitive_checks = [
            (lambda: T.sum_all(T.add(a, T.Tensor(c))), [a]),
            (lambda: T.sum_all(T.sub(a, T.scale(a, 0.3))), [a]),
            (lambda: T.sum_all(T.mul(v, v)), [v]),
            (lambda: T.sum_all(T.matmul(a, b)), [a, b]),
            (lambda: T.sum_all(T.reshape(a, (4, 3))), [a]),
            (lambda: T.sum_all(T.concat([v, v])), [v]),
            (lambda: T.sum_all(T.transpose(a)), [a]),
            (lambda: T.scalar_sum([T.sum_all(p) for p in T.unstack(a)]), [a]),
            (lambda: T.sum_all(T.relu_act(v)), [v]),
            (lambda: T.sum_all(T.tanh_act(v)), [v]),
            (lambda: T.sum_all(T.sigmoid_act(v)), [v]),
            (lambda: T.sum_all(T.mul(y := T.conv2d_same(x3, k, bias), y)),
             [x3, k, bias]),
            (lambda: T.sum_all(T.mul(y := T.maxpool2(x3), y)), [x3]),
            (lambda: T.cross_entropy(np.full(5, 0.2), T.softmax(v)), [v]),
            (lambda: T.sum_all(T.affine(w, v, bias)), [w, v, bias]),
        ]
        for fn, params in primitive_checks:
            worst = max(worst, grad_check(fn, params))

        # composite losses at desk-tiny scale
        store = init_model_params(enc, lstm, 3, 3 * NUM_JOINTS,
                                  lstm.max_unroll, seed, with_pi_embed=False)
        frames = philox_rng(seed, 50).uniform(-1, 1, size=(2, 32, 32))
        targets = philox_rng(seed, 51).uniform(-1, 1, size=(2, REG_DIM))
        u = np.array([0.6, 0.3, 0.1])
        params = [store[n] for n in store.names()]
        coord_rng = np.random.default_rng(seed)
        worst = max(worst, grad_check(
            lambda: sequence_multitask_loss(store, frames, targets, 1, 0.5,
                                            enc, lstm),
            params, max_coords=1, rng=coord_rng))
        worst = max(worst, grad_check(
            lambda: refining_loss(store, [(frames, u, 0)], 0.5, enc, lstm),
            params, max_coords=1, rng=coord_rng))
    elapsed = time.monotonic() - t0
    assert worst < 1e-5, f"worst relative error {worst:.2e}"
    assert elapsed < 60.0, f"gradient suite took {elapsed:.1f}s"
    print(f"\nPASS criterion 1: gradient correctness "
          f"(worst rel err {worst:.2e}, {elapsed:.1f}s)")


def test_criterion_2_em_invariants(desk_dataset, monkeypatch):
    """Across a full run_refining on the desk benchmark: posteriors on the
    simplex within 1e-12, bridging rows sum to 1 within 1e-12, Q
    non-decreasing across each M update (tol -1e-9); q_loglik matches a
    brute-force oracle on K=3, J=5 instances to 1e-12."""
    seen_us, seen_ms = [], []

    def spy_estep(logits, label, m):
        u = estep_latent_pi(logits, label, m)
        seen_us.append(u.copy())
        return u

    def spy_mstep(us, labels, K):
        m = mstep_bridging(us, labels, K)
        seen_ms.append(m.copy())
        return m

    monkeypatch.setattr(training_mod, "estep_latent_pi", spy_estep)
    monkeypatch.setattr(training_mod, "mstep_bridging", spy_mstep)

    cfg = ExperimentConfig.desk(seed=0)
    manifest = load_manifest(desk_dataset)
    train = prepare(load_split(manifest, desk_dataset, "train", True), 32)
    val = prepare(load_split(manifest, desk_dataset, "val", True), 32)
    store = init_model_params(cfg.encoder, cfg.lstm, cfg.hyper.K,
                              train[0].skel_embed.shape[1],
                              cfg.lstm.max_unroll, cfg.seed,
                              with_pi_embed=False)
    _, m_final, log = run_refining(train, val, cfg, store.snapshot())

    assert seen_us and seen_ms and log
    for u in seen_us:
        assert np.all(u >= -1e-12)
        assert abs(u.sum() - 1.0) < 1e-12
    for m in seen_ms + [m_final]:
        assert np.all(m >= 0)
        assert np.max(np.abs(m.sum(axis=1) - 1.0)) < 1e-12
    for entry in log:
        assert entry["Q"] >= entry["losses"]["Q_before_bridge"] - 1e-9

    # brute-force oracle for the likelihood itself
    r = np.random.default_rng(0)
    for _ in range(5):
        logits = r.normal(size=(5, 3)) * 3
        labels = r.integers(0, 3, size=5)
        m = r.uniform(0.05, 1.0, size=(3, 3))
        m /= m.sum(axis=1, keepdims=True)
        brute = 0.0
        for j in range(5):
            p = np.exp(logits[j]) / np.exp(logits[j]).sum()
            brute += np.log(sum(p[k] * m[k, labels[j]] for k in range(3)))
        assert abs(q_loglik(logits, labels, m) - brute) < 1e-12
    print(f"\nPASS criterion 2: EM invariants over {len(seen_us)} posteriors, "
          f"{len(seen_ms)} bridging updates, {len(log)} EM iterations")


def test_criterion_3_closed_form_oracles():
    """estep/mstep hand examples to 1e-4; identity/uniform degenerate cases."""
    u = estep_latent_pi(np.array([1.0, 0.0]), 0,
                        np.array([[0.9, 0.1], [0.3, 0.7]]))
    assert abs(u[0] - 0.89079) < 1e-4 and abs(u[1] - 0.10921) < 1e-4

    m = mstep_bridging(np.array([[0.8, 0.2], [0.6, 0.4],
                                 [0.3, 0.7], [0.1, 0.9]]),
                       np.array([0, 0, 1, 1]), 2)
    assert np.max(np.abs(m - [[0.7778, 0.2222], [0.2727, 0.7273]])) < 1e-4

    logits = np.array([3.0, -1.0, 0.5])
    u_id = estep_latent_pi(logits, 1, np.eye(3))
    assert np.max(np.abs(u_id - [0.0, 1.0, 0.0])) < 1e-15
    u_unif = estep_latent_pi(logits, 1, np.full((3, 3), 1 / 3))
    e = np.exp(logits - logits.max())
    assert np.max(np.abs(u_unif - e / e.sum())) < 1e-12
    labels = np.array([0, 1, 2, 0])
    assert np.array_equal(mstep_bridging(np.eye(3)[labels], labels, 3),
                          np.eye(3))
    print("\nPASS criterion 3: closed-form hand examples within 1e-4, "
          "degenerate cases exact")


def test_criterion_4_sampler_calibration():
    """Empirical keep rate within 3 binomial sigma of 1-(K-1)a/K over
    100,000 draws for a in {0, 0.2, 0.4, 1.0}, K in {2, 4, 10}."""
    n = 100_000
    for K in (2, 4, 10):
        u = np.full(K, 1.0 / K)
        for alpha in (0.0, 0.2, 0.4, 1.0):
            p_keep = 1.0 - (K - 1) * alpha / K
            rng = philox_rng(99, K, int(alpha * 10))
            kept = sum(
                np.array_equal(sample_disturbed_target(u, 1, alpha, rng), u)
                for _ in range(n))
            sigma = np.sqrt(max(n * p_keep * (1.0 - p_keep), 1e-12))
            assert abs(kept - n * p_keep) <= 3.0 * sigma + 1e-9, \
                f"K={K} alpha={alpha}: {kept} vs {n * p_keep:.0f}"
    print("\nPASS criterion 4: sampler calibrated within 3 sigma "
          "for all 12 (K, alpha) combinations")


def test_criterion_5_shape_fidelity():
    """Paper-preset encoder: 224x224x1 -> 7x7x512 activation map -> 1000-dim
    feature vector, verified structurally."""
    cfg = EncoderConfig.paper()
    trace = shape_trace(cfg)
    assert cfg.input_size == 224
    assert trace[-1] == (7, 7, 512)
    assert cfg.flat_dim == 7 * 7 * 512
    assert cfg.feature_dim == 1000
    print("\nPASS criterion 5: paper preset maps 224x224x1 -> 7x7x512 -> 1000")


def test_criterion_6_directional_table2(ablation):
    """Desk benchmark, 5 seeds: mean(prnn_full) >= mean(prnn_no_refine),
    mean(prnn_full) >= mean(vanilla_cnn_rnn), mean(prnn_full) >= 0.5;
    4x5 ablation in < 60 minutes on one core."""
    out, elapsed = ablation
    rows = (out / "results.csv").read_text().strip().splitlines()[1:]
    acc = {}
    for row in rows:
        variant, seed, a = row.split(",")
        acc.setdefault(variant, []).append(float(a))
    means = {v: float(np.mean(a)) for v, a in acc.items()}
    assert all(len(a) == 5 for a in acc.values())
    assert means["prnn_full"] >= means["prnn_no_refine"], means
    assert means["prnn_full"] >= means["vanilla_cnn_rnn"], means
    assert means["prnn_full"] >= 0.25 + 0.25, means
    assert elapsed < 3600.0, f"ablation took {elapsed / 60:.1f} min"
    print(f"\nPASS criterion 6: means {means}, ablation {elapsed / 60:.1f} min")


def test_criterion_7_pi_contract(ablation, desk_dataset, desk_config_path,
                                 tmp_path):
    """Eval output is byte-identical with and without skeleton files."""
    out, _ = ablation
    checkpoint = out / "prnn_full_seed0" / "refine"
    with_dir = tmp_path / "with"
    assert prnn_main(["eval", "--config", str(desk_config_path),
                      "--checkpoint", str(checkpoint),
                      "--manifest", str(desk_dataset),
                      "--out", str(with_dir)]) == 0
    stripped = tmp_path / "data_noskel"
    stripped.mkdir()
    for p in Path(desk_dataset).parent.iterdir():
        if not p.name.endswith("_skel.ptns"):
            (stripped / p.name).write_bytes(p.read_bytes())
    without_dir = tmp_path / "without"
    assert prnn_main(["eval", "--config", str(desk_config_path),
                      "--checkpoint", str(checkpoint),
                      "--manifest", str(stripped / "manifest.json"),
                      "--out", str(without_dir)]) == 0
    a = (with_dir / "metrics.json").read_bytes()
    b = (without_dir / "metrics.json").read_bytes()
    assert a == b
    print("\nPASS criterion 7: eval byte-identical with skeletons absent")


def test_criterion_8_determinism(desk_dataset, desk_config_path, tmp_path):
    """Reruns with identical config and seed reproduce byte-identical
    checkpoints and metrics."""
    gen2 = tmp_path / "gen2"
    assert prnn_main(["gen-data", "--config", str(desk_config_path),
                      "--out", str(gen2)]) == 0
    assert (gen2 / "manifest.json").read_bytes() == \
        Path(desk_dataset).read_bytes()
    manifest = json.loads(Path(desk_dataset).read_text())
    for split in manifest["splits"].values():
        for e in split:
            assert (gen2 / e["frames"]).read_bytes() == \
                (Path(desk_dataset).parent / e["frames"]).read_bytes()

    runs = []
    for name in ("a", "b"):
        d = tmp_path / name
        assert prnn_main(["train", "--config", str(desk_config_path),
                          "--manifest", str(desk_dataset),
                          "--variant", "vanilla_cnn_rnn", "--seed", "0",
                          "--out", str(d)]) == 0
        runs.append(d)
    a, b = runs
    assert (a / "metrics.json").read_bytes() == (b / "metrics.json").read_bytes()
    assert (a / "curves.csv").read_bytes() == (b / "curves.csv").read_bytes()
    params_a = sorted((a / "vanilla").glob("*.ptns"))
    assert params_a
    for pa in params_a:
        assert pa.read_bytes() == (b / "vanilla" / pa.name).read_bytes()
    print("\nPASS criterion 8: byte-identical regeneration, checkpoints "
          "and metrics across reruns")
