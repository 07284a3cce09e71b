import functools
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from viewpose.data import WorldSpec
from viewpose.harness import (
    ConfigError,
    ExperimentConfig,
    Model,
    PlateauHalving,
    Prediction,
    Representation,
    decode_outputs,
    evaluate,
    make_training_data,
    output_dim,
    summarize,
    sweep,
    sweep_axes,
    test_scenario as scenario_for,
    train,
    validation_loss,
    with_axis,
)
from viewpose.losses import LossHyper
from viewpose.nnet import Layer, Network, build_network

TINY = dict(hidden=(16,), train_draws=3000, validation_size=640, eval_every=50, max_iterations=300, test_images=30)


def tiny(rep="discrete", **kw):
    return ExperimentConfig.preset(rep, **{**TINY, **kw})


@functools.lru_cache(maxsize=None)
def tiny_data(rep="discrete"):
    return make_training_data(tiny(rep))


# ---- configuration --------------------------------------------------------


def test_preset_defaults():
    d = ExperimentConfig.preset("discrete")
    assert (d.initial_lr, d.eval_every, d.validation_size, d.lr_halving_patience) == (1e-3, 500, 6400, 10)
    assert (d.plan.positives_per_batch, d.plan.negatives_per_batch) == (32, 96)
    c = ExperimentConfig.preset("continuous")
    assert (c.N, c.initial_lr) == (1, 5e-5)
    assert (c.plan.positives_per_batch, c.plan.negatives_per_batch) == (8, 120)


def test_config_invariants():
    with pytest.raises(ConfigError, match="N must be 1"):
        ExperimentConfig.preset("continuous", N=3)
    with pytest.raises(ConfigError, match="P >= 2"):
        ExperimentConfig.preset("discrete", P=1)
    with pytest.raises(ConfigError):
        ExperimentConfig.preset("discrete", initial_lr=0.0)
    with pytest.raises(ValueError):
        ExperimentConfig.preset("joint-c")


def test_world_follows_class_count():
    assert ExperimentConfig.preset("joint-b2", N=5).world.n_classes == 5


@pytest.mark.parametrize(
    "rep, N, P, dim", [("discrete", 3, 8, 25), ("continuous", 1, 8, 3), ("joint-a", 3, 8, 6), ("joint-b1", 3, 8, 10), ("joint-b2", 2, 8, 7)]
)
def test_output_dims(rep, N, P, dim):
    assert output_dim(ExperimentConfig.preset(rep, N=N, P=P)) == dim


# ---- prediction ----------------------------------------------------------


def test_discrete_prediction_example():
    cfg = ExperimentConfig.preset("discrete", N=3, P=8)
    out = np.zeros(output_dim(cfg))
    out[1 + (2 - 1) * 8 + (3 - 1)] = 60.0  # class 2, bin 3
    pred = decode_outputs(cfg, out)
    assert int(np.argmax(pred.scores[0])) + 1 == 2
    assert pred.azimuth[0, 1] == pytest.approx(math.pi / 2, abs=1e-15)
    np.testing.assert_allclose(pred.scores.sum(), 1.0 - 1.0 / (24 + math.exp(60)), rtol=1e-12)


def test_discrete_class_score_sums_bins():
    cfg = ExperimentConfig.preset("discrete", N=2, P=4)
    out = np.random.default_rng(0).normal(size=(5, 9))
    probs = np.exp(out) / np.exp(out).sum(axis=1, keepdims=True)
    pred = decode_outputs(cfg, out)
    np.testing.assert_allclose(pred.scores, np.stack([probs[:, 1:5].sum(1), probs[:, 5:9].sum(1)], axis=1), rtol=1e-12)


def test_continuous_prediction_example():
    cfg = ExperimentConfig.preset("continuous")
    pred = decode_outputs(cfg, [math.cos(1.0), math.sin(1.0), 0.0])
    assert pred.scores[0, 0] == pytest.approx(0.0, abs=1e-15)
    assert pred.azimuth[0, 0] == pytest.approx(1.0, abs=1e-15)
    off = decode_outputs(cfg, [2 * math.cos(1.0), 2 * math.sin(1.0), 0.0])
    assert off.scores[0, 0] == pytest.approx(-1.0, abs=1e-12)


def test_joint_b2_prediction_example():
    cfg = ExperimentConfig.preset("joint-b2", N=2)
    out = np.array([0.0, 0.0, 5.0, 0.0, 0.0, 0.0, 1.0])
    pred = decode_outputs(cfg, out)
    assert int(np.argmax(pred.scores[0])) + 1 == 2
    assert pred.azimuth[0, 1] == pytest.approx(math.pi / 2, abs=1e-15)


def test_joint_a_shares_one_azimuth():
    cfg = ExperimentConfig.preset("joint-a", N=3)
    pred = decode_outputs(cfg, [0, 0, 0, 0, -1.0, 0.0])
    np.testing.assert_allclose(pred.azimuth, [[math.pi] * 3])


def test_head_mismatch_is_config_error():
    with pytest.raises(ConfigError, match="expects 25 outputs, got 7"):
        decode_outputs(ExperimentConfig.preset("discrete"), np.zeros(7))


# ---- schedule ------------------------------------------------------------


def schedule_oracle(vals, lr0, patience):
    """Rate after each evaluation, simulated straight from the rule."""
    lrs, best, stale, lr = [], None, 0, lr0
    for v in vals:
        if best is None or v < best:
            best, stale = v, 0
        else:
            stale += 1
            if stale == patience:
                lr, stale = lr * 0.5, 0
        lrs.append(lr)
    return lrs


def test_plateau_halves_after_exactly_patience_stalls():
    s = PlateauHalving(1e-3, 10)
    assert not s.update(1.0)
    events = [s.update(1.0) for _ in range(10)]
    assert events == [False] * 9 + [True]
    assert s.lr == 5e-4
    # the counter restarted: ten more stalls before the next halving
    assert [s.update(2.0) for _ in range(10)][-1] and s.lr == 2.5e-4
    assert not s.update(0.5) and s.best == 0.5


@settings(max_examples=200)
@given(st.lists(st.sampled_from([0.5, 1.0, 1.5, 2.0]) | st.floats(0, 3), max_size=80), st.integers(1, 12))
def test_plateau_matches_oracle(vals, patience):
    s = PlateauHalving(1e-3, patience)
    got = []
    for v in vals:
        s.update(v)
        got.append(s.lr)
    assert got == schedule_oracle(vals, 1e-3, patience)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.sampled_from([1.0, 0.9, 0.8, 1.2]), min_size=1, max_size=40), st.integers(1, 5))
def test_training_schedule_follows_injected_losses(vals, patience):
    # floor far below any reachable rate so only the halving rule is exercised
    cfg = tiny(eval_every=1, max_iterations=len(vals), lr_halving_patience=patience, hidden=(4,), lr_floor=1e-300)
    _, trace = train(cfg, tiny_data(), val_loss_hook=lambda k, net: vals[k])
    expected = schedule_oracle(vals, cfg.initial_lr, patience)
    assert [r.lr for r in trace.records] == expected
    assert [r.val_loss for r in trace.records] == vals
    halved_at = [i + 1 for i in range(len(vals)) if expected[i] < (expected[i - 1] if i else cfg.initial_lr)]
    assert trace.halvings == halved_at
    assert all(a >= b for a, b in zip(expected, expected[1:]))


def test_training_stops_below_lr_floor():
    cfg = tiny(eval_every=1, max_iterations=1000, lr_halving_patience=1, initial_lr=1e-3, lr_floor=1e-4, hidden=(4,))
    _, trace = train(cfg, tiny_data(), val_loss_hook=lambda k, net: 1.0)
    assert trace.stop_reason == "lr_floor"
    # 1e-3 / 2^4 is the first rate below 1e-4; the first evaluation sets the best
    assert len(trace.records) == 5
    assert trace.records[-1].lr == pytest.approx(1e-3 / 16)


# ---- training ------------------------------------------------------------


def test_zero_iterations_returns_initial_network():
    cfg = tiny(max_iterations=0)
    model, trace = train(cfg, tiny_data())
    assert trace.records == [] and trace.stop_reason == "max_iterations"
    fresh = build_network(cfg.world.dim, cfg.hidden, output_dim(cfg), np.random.default_rng([cfg.seed, 7]))
    for p, q in zip(model.net.params(), fresh.params()):
        np.testing.assert_array_equal(p, q)


@pytest.mark.parametrize("rep", ["discrete", "joint-b2"])
def test_training_reduces_validation_loss(rep):
    cfg = tiny(rep, max_iterations=1000, hidden=(32,))
    data = make_training_data(cfg)
    untrained, _ = train(replace(cfg, max_iterations=0), data)
    model, trace = train(cfg, data)
    before = validation_loss(cfg, untrained.net, data.validation)
    after = validation_loss(cfg, model.net, data.validation)
    assert after < 0.5 * before
    assert trace.records[-1].val_loss == after


def test_reproducible_traces_and_metrics(tmp_path):
    cfg = tiny()
    a_model, a_trace = train(cfg, tiny_data())
    b_model, b_trace = train(cfg, make_training_data(cfg))
    a_trace.write_csv(tmp_path / "a.csv")
    b_trace.write_csv(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert summarize(evaluate(a_model, cfg)) == summarize(evaluate(b_model, cfg))


def test_trace_csv_header(tmp_path):
    _, trace = train(tiny(max_iterations=100), tiny_data())
    trace.write_csv(tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "iteration,train_loss,val_loss,lr"
    assert [int(ln.split(",")[0]) for ln in lines[1:]] == [50, 100]


def test_lambda_zero_decouples_classification():
    cfg = tiny("joint-b2", hyper=LossHyper(lam=0.0), max_iterations=200)
    data = tiny_data()
    ref, _ = train(cfg.classifier_config(), data)
    frozen = [p.copy() for p in ref.net.params()]
    class_cols = []
    model, _ = train(cfg, data, step_hook=lambda it, g: class_cols.append(np.abs(g[:, : cfg.N + 1]).max()), classifier=ref.net)
    assert len(class_cols) == 200 and max(class_cols) == 0.0
    assert model.classifier is ref.net
    for p, q in zip(frozen, ref.net.params()):
        np.testing.assert_array_equal(p, q)
    # scores come from the reference classifier, azimuths from the pose head
    x = data.validation.features[:20]
    pred, ref_pred = model.predict(x), ref.predict(x)
    np.testing.assert_array_equal(pred.scores, ref_pred.scores)


def test_lambda_zero_trains_its_own_classifier_when_not_given():
    cfg = tiny("joint-b2", hyper=LossHyper(lam=0.0), max_iterations=100)
    model, _ = train(cfg, tiny_data())
    ref, _ = train(cfg.classifier_config(), tiny_data())
    for p, q in zip(model.classifier.params(), ref.net.params()):
        np.testing.assert_array_equal(p, q)


def test_positive_lambda_has_no_classifier():
    model, _ = train(tiny("joint-b2", hyper=LossHyper(lam=1.0), max_iterations=50), tiny_data())
    assert model.classifier is None


# ---- evaluation ----------------------------------------------------------


def oracle_predictor(proposals, n_classes):
    """Scores 1 on each object's aligned proposal for its class, with the true azimuth."""
    lookup = {f.tobytes(): k for k, f in enumerate(proposals.features)}

    def predict(features):
        idx = [lookup[f.tobytes()] for f in features]
        scores = np.zeros((len(idx), n_classes))
        az = np.zeros((len(idx), n_classes))
        for row, k in enumerate(idx):
            s = proposals.source[k]
            if s >= 0:
                g = proposals.ground_truth[s]
                scores[row, g.class_id - 1] = 1.0
                az[row, g.class_id - 1] = g.azimuth
        return Prediction(scores, az)

    return predict


@pytest.mark.parametrize("criterion", ["bin", "angle"])
def test_perfect_oracle_scores_one(criterion):
    cfg = tiny(viewpoint_criterion=criterion)
    proposals = scenario_for(cfg)
    res = evaluate(oracle_predictor(proposals, cfg.N), cfg, proposals)
    for r in res.values():
        assert all(v == 1.0 for v in r.metrics.values())


def test_constant_network_gives_prevalence_ap():
    cfg = tiny()
    out = output_dim(cfg)
    net = Network([Layer(np.zeros((cfg.world.dim, out)), np.random.default_rng(0).normal(size=out), "identity")])
    proposals = scenario_for(cfg)
    res = evaluate(Model(cfg, net), cfg, proposals)
    for c, r in res.items():
        objs = [g for g in proposals.ground_truth if g.class_id == c]
        n_pos = sum(not g.difficult for g in objs)
        n_ignored = len(objs) - n_pos
        # every proposal is scored for every class; all ties form one operating point
        assert r.metrics["AP"] == pytest.approx(n_pos / (len(proposals) - n_ignored), abs=1e-12)
        assert all(r.metrics[k] <= r.metrics["AP"] for k in r.metrics)


def test_scenario_is_independent_of_training_seed_stream():
    cfg = tiny()
    a, b = scenario_for(cfg), scenario_for(cfg)
    assert a.features.tobytes() == b.features.tobytes()
    assert scenario_for(replace(cfg, seed=1)).features.tobytes() != a.features.tobytes()


# ---- sweeps --------------------------------------------------------------


def test_single_value_sweep_equals_plain_run():
    cfg = tiny()
    report = sweep("K", [cfg.hyper.K], cfg)
    model, _ = train(cfg, make_training_data(cfg))
    plain = summarize(evaluate(model, cfg))
    assert {k: v[0] for k, v in report.metrics.items()} == plain


def test_delta_sweep_has_three_columns(tmp_path):
    cfg = tiny("continuous", max_iterations=100, hyper=LossHyper(K=64.0))
    report = sweep("delta", [0.25, 0.5, 1.0], cfg)
    rows = report.rows()
    assert rows[0] == ["metric", "delta=0.25", "delta=0.5", "delta=1"]
    assert [r[0] for r in rows[1:]] == ["AP", "AVP@4", "AVP@8", "AVP@16", "AVP@24"]
    assert all(len(r) == 4 for r in rows)
    report.write_csv(tmp_path / "s.csv")
    report.write_svg(tmp_path / "s.svg")
    assert (tmp_path / "s.csv").read_text().splitlines()[0] == "metric,delta=0.25,delta=0.5,delta=1"
    assert (tmp_path / "s.svg").read_text().lstrip().startswith("<svg")


def test_lambda_sweep_structure():
    cfg = tiny("joint-b2", max_iterations=100)
    report = sweep("lambda", [0, 1, 10], cfg)
    assert report.rows()[0] == ["metric", "lambda=0", "lambda=1", "lambda=10"]
    ap = report.metrics["AP"]
    for k, vals in report.metrics.items():
        assert all(v <= a + 1e-12 for v, a in zip(vals, ap))


def test_unknown_axis_lists_valid_axes():
    with pytest.raises(ConfigError) as info:
        with_axis(tiny(), "depth", 3)
    for axis in ("K", "delta", "lambda", "P"):
        assert axis in str(info.value)
    assert "K" in sweep_axes()


def test_with_axis_keeps_types():
    cfg = with_axis(tiny(), "P", 16.0)
    assert cfg.P == 16 and isinstance(cfg.P, int)
    assert with_axis(tiny(), "lambda", 3).hyper.lam == 3.0
    assert Representation(cfg.representation) is Representation.DISCRETE


def test_world_spec_unchanged_by_tiny_overrides():
    assert tiny().world == replace(WorldSpec(), n_classes=3)
