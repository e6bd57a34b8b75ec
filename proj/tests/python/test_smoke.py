import json
import math

import pytest

import coach

coach.set_quiet()


def test_metrics_match_hand_values():
    probs = [[0.9, 0.1, 0.0], [0.2, 0.7, 0.1], [0.3, 0.3, 0.4]]
    labels = [[1, 0, 0], [0, 1, 0], [1, 0, 0]]
    # class 0: tp 1, fn 1 -> f1 2/3 (support 2); class 1: f1 1 (support 1)
    assert coach.weighted_f1(probs, labels) == pytest.approx(100 * (2 * (2 / 3) + 1) / 3)
    assert coach.hamming_loss([[0.6, 0.4]], [[1, 1]]) == pytest.approx(0.5)
    assert coach.wbce([0.8], [1], [1.0]) == pytest.approx(-math.log(0.8))
    # one mode exact, one off by a constant 1 m
    gt = [(1.0, 0.0), (2.0, 0.0)]
    assert coach.mon_ade([[(1.0, 1.0), (1.0, 0.0)], [(1.0, 0.0), (1.0, 0.0)]], gt) == pytest.approx(0.0)


def test_racing_line_objective_never_increases():
    r = coach.racing_line(max_iters=500)
    trace = r["objective_trace"]
    assert len(trace) > 1
    assert all(b <= a for a, b in zip(trace, trace[1:]))
    assert r["max_bound_excess"] <= 1e-9
    track = json.loads(coach.demo_track_json())
    assert len(track["raceline"]) == len(track["centerline"])


def test_urban_train_evaluate_roundtrip(tmp_path):
    data = tmp_path / "urban.jsonl"
    meta = coach.gen_urban(str(data), num=40, gamma=0.5, seed=3)
    assert meta["count"] == 40
    model = {"d_model": 8, "n_heads": 2, "enc_layers": 1, "head_hidden": 8}
    ck, log = coach.train({"tasks": "A", "labeled_path": str(data), "max_epochs": 2, "model": model, "seed": 1})
    assert len(log) == 2
    assert ck.info["tasks"] == "A"
    path = tmp_path / "m.ckpt"
    ck.save(str(path))
    again = coach.load_checkpoint(str(path))
    assert again.hash == ck.hash
    report = coach.evaluate(again, str(data))
    assert 0.0 <= report["weighted_f1"] <= 100.0


def test_errors_map_to_python_exceptions(tmp_path):
    with pytest.raises(coach.DataError):
        coach.load_checkpoint(str(tmp_path / "missing.ckpt"))
    with pytest.raises(coach.ConfigError):
        coach.train({"tasks": "A", "labeled_path": "x", "no_such_key": 1})
    with pytest.raises(ValueError):
        coach.gen_urban(str(tmp_path / "u.jsonl"), num=5, gamma=2.0)


def test_session_replay_is_deterministic(tmp_path):
    data = tmp_path / "track.jsonl"
    coach.gen_track(str(data), students=2, laps=0.5, seed=1)
    model = {"d_model": 8, "n_heads": 2, "enc_layers": 1, "head_hidden": 8, "Q_modes": 2, "n_map_tokens": 4}
    ck, _ = coach.train({"labeled_path": str(data), "max_epochs": 1, "model": model})
    states = coach.simulate_student(line_bias=2.0, line_noise=0.3, laps=0.6, seed=11)
    first = coach.replay(ck, states, tau=0.3, cooldown=2.0)
    assert first == coach.replay(ck, states, tau=0.3, cooldown=2.0)
    lines = [json.loads(x) for x in first.splitlines()]
    assert lines[0]["type"] == "ready" and lines[-1]["type"] == "summary"

    s = coach.Session(ck, tau=0.3, cooldown=2.0)
    cues = []
    for st in states:
        r = s.step(st)
        assert r["accepted"]
        if r["cue"]:
            cues.append(r["cue"])
    assert not s.step(states[0])["accepted"]  # out of order
    summary = s.summary()
    assert summary["dropped"] == 1
    assert [c["t_emit"] for c in cues] == [c["t_emit"] for c in lines[-1]["cues"]]
    for c in cues:
        assert c["prob"] >= 0.3
    assert all(b["t_emit"] - a["t_emit"] >= 2.0 - 1e-9 for a, b in zip(cues, cues[1:]))
