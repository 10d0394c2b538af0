"""Surrogate closed form, Spearman correlation, external evaluator client."""

from __future__ import annotations

import math
import random
import sys
import time

import pytest

from netgrow.costs import network_macs
from netgrow.estimator import (
    AccuracyOutOfRange,
    EvaluatorPool,
    EvaluatorTimeout,
    ExternalEvaluator,
    ExternalRef,
    MalformedResponse,
    NonZeroExit,
    SurrogateParams,
    SurrogateRef,
    calibrate,
    evaluate_external,
    spearman_rho,
    surrogate_accuracy,
)
from netgrow.model import ArchConfig, ValidationError, base_config

from helpers import random_toy, toy_base, toy_macs, toy_surrogate, toy_template


def _surrogate_params(net, noise=0.0, seed=0) -> SurrogateParams:
    coeffs = toy_surrogate(net)
    return SurrogateParams(
        stage_weights=tuple(coeffs["weights"]),
        stage_scales=tuple(coeffs["scales"]),
        resolution_weight=coeffs["res_weight"],
        resolution_scale=coeffs["res_scale"],
        noise=noise,
        seed=seed,
    )


# --- surrogate ----------------------------------------------------------------


def test_surrogate_exact_closed_form():
    net = random_toy(random.Random(4))
    template = toy_template(net)
    config = base_config(template)
    params = _surrogate_params(net)
    got = surrogate_accuracy(template, config, params).accuracy

    # independent evaluation of the closed form, term by term
    _, per_stage = toy_macs(net, *toy_base(net))
    expected = 0.0
    for a, b, m in zip(params.stage_weights, params.stage_scales, per_stage):
        expected += a * (1.0 - math.exp(-m / b))
    expected += params.resolution_weight * (
        1.0 - math.exp(-config.resolution / params.resolution_scale)
    )
    assert got == pytest.approx(min(1.0, max(0.0, expected)), abs=1e-15)
    assert 0.0 <= got <= 1.0


def test_surrogate_vanishes_in_small_network_limit():
    # with scales far above every stage's MACs, each (1 - exp(-m/b)) term
    # collapses toward m/b, so accuracy tends to zero from above
    net = random_toy(random.Random(9))
    template = toy_template(net)
    coeffs = toy_surrogate(net)
    params = SurrogateParams(
        stage_weights=tuple(coeffs["weights"]),
        stage_scales=tuple(1e18 for _ in coeffs["scales"]),
        resolution_weight=coeffs["res_weight"],
        resolution_scale=1e18,
    )
    accuracy = surrogate_accuracy(template, base_config(template), params).accuracy
    assert 0.0 <= accuracy < 1e-8


def test_surrogate_monotone_under_dominance():
    rng = random.Random(21)
    for _ in range(30):
        net = random_toy(rng)
        template = toy_template(net)
        params = _surrogate_params(net)
        r, widths, depths = toy_base(net)
        small = ArchConfig(r, widths, depths)
        big = ArchConfig(
            r + 8, (widths[0] + 4, widths[1]), (depths[0], depths[1] + 1)
        )
        assert (
            surrogate_accuracy(template, big, params).accuracy
            >= surrogate_accuracy(template, small, params).accuracy
        )


def test_surrogate_noise_keyed_by_config_not_call_order():
    net = random_toy(random.Random(6))
    template = toy_template(net)
    params = _surrogate_params(net, noise=0.05, seed=7)
    _, _, base_depths = toy_base(net)
    configs = [
        ArchConfig(net.base_resolution, (w, net.stages[1][2]), base_depths)
        for w in range(net.stages[0][2], net.stages[0][2] + 20, 2)
    ]
    forward = [surrogate_accuracy(template, c, params).accuracy for c in configs]
    backward = [surrogate_accuracy(template, c, params).accuracy for c in reversed(configs)]
    assert forward == list(reversed(backward))
    # different seed perturbs differently
    other = _surrogate_params(net, noise=0.05, seed=8)
    assert forward != [surrogate_accuracy(template, c, other).accuracy for c in configs]


def test_surrogate_params_validation():
    with pytest.raises(ValidationError):
        SurrogateParams((0.6, 0.6), (1.0, 1.0), 0.2, 1.0)  # weights sum above 1
    with pytest.raises(ValidationError):
        SurrogateParams((0.5,), (0.0,), 0.2, 1.0)  # non-positive scale
    with pytest.raises(ValidationError):
        SurrogateParams((0.5,), (1.0,), 0.2, 1.0, noise=-0.1)


# --- spearman -------------------------------------------------------------------


def test_spearman_identical_and_reversed():
    x = [3.0, 1.0, 4.0, 1.5, 9.0, 2.6]
    assert spearman_rho(x, list(x)) == 1.0
    ranks_reversed = [-v for v in x]
    assert spearman_rho(x, ranks_reversed) == -1.0


def test_spearman_worked_example():
    assert spearman_rho([1, 2, 3, 4, 5], [2, 1, 4, 3, 5]) == pytest.approx(0.8, abs=1e-15)


def test_spearman_errors():
    with pytest.raises(ValidationError):
        spearman_rho([1.0], [1.0])
    with pytest.raises(ValidationError):
        spearman_rho([1.0, 2.0], [1.0])
    assert spearman_rho([1.0, 1.0, 1.0], [1.0, 2.0, 3.0]) is None  # zero rank variance


def _oracle_ranks(values):
    # quadratic-time average ranks: count smaller and equal elements
    return [
        sum(1 for v in values if v < x) + (sum(1 for v in values if v == x) + 1) / 2
        for x in values
    ]


def _oracle_pearson(xs, ys):
    n = len(xs)
    mx = sum(xs) / n
    my = sum(ys) / n
    cov = sum((a - mx) * (b - my) for a, b in zip(xs, ys))
    vx = sum((a - mx) ** 2 for a in xs)
    vy = sum((b - my) ** 2 for b in ys)
    return cov / math.sqrt(vx * vy)


def test_spearman_ties_match_rank_by_hand_oracle():
    rng = random.Random(12)
    for _ in range(100):
        n = rng.randint(2, 40)
        x = [rng.choice([0.1, 0.2, 0.3, 0.4, 0.5]) for _ in range(n)]
        y = [rng.choice([1.0, 2.0, 3.0]) for _ in range(n)]
        rx, ry = _oracle_ranks(x), _oracle_ranks(y)
        got = spearman_rho(x, y)
        if len(set(rx)) == 1 or len(set(ry)) == 1:
            assert got is None
            continue
        assert got == pytest.approx(_oracle_pearson(rx, ry), abs=1e-12)
        assert -1.0 <= got <= 1.0


def test_spearman_invariant_under_monotone_transform():
    rng = random.Random(14)
    x = [rng.random() for _ in range(25)]
    y = [rng.random() for _ in range(25)]
    base = spearman_rho(x, y)
    warped = spearman_rho([math.exp(3 * v) for v in x], y)
    assert warped == pytest.approx(base, abs=1e-12)


# --- calibration -----------------------------------------------------------------


def _reference_points(net, template, count, seed=0):
    rng = random.Random(seed)
    params = _surrogate_params(net)
    points = []
    for _ in range(count):
        w1 = net.stages[0][2] + 2 * rng.randint(0, 10)
        w2 = net.stages[1][2] + 2 * rng.randint(0, 10)
        d1 = rng.randint(net.stages[0][3], min(net.stages[0][5], net.stages[0][3] + 2))
        config = ArchConfig(net.base_resolution, (w1, w2), (d1, 1))
        points.append((config, surrogate_accuracy(template, config, params).accuracy))
    return points


def test_calibrate_against_itself_is_one():
    net = random_toy(random.Random(16))
    template = toy_template(net)
    points = _reference_points(net, template, 12, seed=1)
    rho = calibrate(template, points, SurrogateRef(_surrogate_params(net)))
    assert rho == 1.0


def test_calibrate_rank_invariant_under_monotone_reference():
    net = random_toy(random.Random(16))
    template = toy_template(net)
    points = _reference_points(net, template, 12, seed=2)
    warped = [(config, acc**3) for config, acc in points]  # strictly increasing map
    rho = calibrate(template, warped, SurrogateRef(_surrogate_params(net)))
    assert rho == 1.0


def test_calibrate_noisy_vs_clean_matches_oracle():
    net = random_toy(random.Random(18))
    template = toy_template(net)
    points = _reference_points(net, template, 24, seed=3)
    noisy = SurrogateRef(_surrogate_params(net, noise=0.2, seed=5))
    rho = calibrate(template, points, noisy)
    ref_accs = [acc for _, acc in points]
    noisy_accs = [
        surrogate_accuracy(template, config, noisy.params).accuracy for config, _ in points
    ]
    expected = _oracle_pearson(_oracle_ranks(ref_accs), _oracle_ranks(noisy_accs))
    assert rho == pytest.approx(expected, abs=1e-12)
    assert rho < 1.0  # the noise must actually shuffle some ranks


def test_calibrate_needs_two_points():
    net = random_toy(random.Random(16))
    template = toy_template(net)
    with pytest.raises(ValidationError):
        calibrate(template, _reference_points(net, template, 1), SurrogateRef(_surrogate_params(net)))


# --- external evaluator client ----------------------------------------------------

ECHO_SERVER = """
import json, sys
for line in sys.stdin:
    req = json.loads(line)
    print(json.dumps({"id": req["id"], "accuracy": %s, "meta": {"mode": "echo"}}), flush=True)
"""

NOISY_ID_SERVER = """
import json, sys
for line in sys.stdin:
    req = json.loads(line)
    print(json.dumps({"id": 10_000 + req["id"], "accuracy": 0.9}), flush=True)
    print(json.dumps({"id": req["id"], "accuracy": req["resolution"] / 1000.0}), flush=True)
"""

GARBAGE_SERVER = """
import sys
sys.stdin.readline()
print("this is not json", flush=True)
"""

EXIT_SERVER = """
import sys
sys.stdin.readline()
sys.exit(3)
"""

SLEEP_SERVER = """
import sys, time
sys.stdin.readline()
time.sleep(30)
"""

RANGE_SERVER = """
import json, sys
for line in sys.stdin:
    req = json.loads(line)
    print(json.dumps({"id": req["id"], "accuracy": 1.5}), flush=True)
"""


def _server(tmp_path, code: str) -> str:
    path = tmp_path / "server.py"
    path.write_text(code)
    return f"{sys.executable} {path}"


@pytest.fixture
def toy_setup():
    net = random_toy(random.Random(20))
    template = toy_template(net)
    return net, template, base_config(template)


def test_echo_evaluator_returns_constant(tmp_path, toy_setup):
    _, template, config = toy_setup
    command = _server(tmp_path, ECHO_SERVER % "0.5")
    result = evaluate_external(ExternalRef(command, timeout=10), template, config)
    assert result.accuracy == 0.5
    assert result.meta == {"mode": "echo"}


def test_out_of_order_ids_are_matched(tmp_path, toy_setup):
    _, template, config = toy_setup
    command = _server(tmp_path, NOISY_ID_SERVER)
    with ExternalEvaluator(command, timeout=10) as client:
        for _ in range(3):
            result = client.evaluate(config, 10**6)
            assert result.accuracy == config.resolution / 1000.0


def test_malformed_response_raises(tmp_path, toy_setup):
    _, template, config = toy_setup
    command = _server(tmp_path, GARBAGE_SERVER)
    with ExternalEvaluator(command, timeout=10) as client:
        with pytest.raises(MalformedResponse):
            client.evaluate(config, 10**6)


def test_exit_without_response_raises(tmp_path, toy_setup):
    _, template, config = toy_setup
    command = _server(tmp_path, EXIT_SERVER)
    with ExternalEvaluator(command, timeout=10) as client:
        with pytest.raises(NonZeroExit):
            client.evaluate(config, 10**6)


def test_timeout_enforced_and_child_reaped(tmp_path, toy_setup):
    _, template, config = toy_setup
    command = _server(tmp_path, SLEEP_SERVER)
    client = ExternalEvaluator(command, timeout=0.5)
    start = time.monotonic()
    with pytest.raises(EvaluatorTimeout):
        client.evaluate(config, 10**6)
    assert time.monotonic() - start < 5.0
    assert client._proc.poll() is not None  # no orphan left behind
    client.close()


def test_accuracy_out_of_range_rejected(tmp_path, toy_setup):
    _, template, config = toy_setup
    command = _server(tmp_path, RANGE_SERVER)
    with ExternalEvaluator(command, timeout=10) as client:
        with pytest.raises(AccuracyOutOfRange):
            client.evaluate(config, 10**6)


def test_close_reaps_child(tmp_path, toy_setup):
    _, template, config = toy_setup
    command = _server(tmp_path, ECHO_SERVER % "0.25")
    client = ExternalEvaluator(command, timeout=10)
    assert client.evaluate(config, 10**6).accuracy == 0.25
    client.close()
    assert client._proc.poll() is not None


def test_pool_preserves_candidate_order_with_workers(tmp_path, toy_setup):
    net, template, config = toy_setup
    command = _server(tmp_path, NOISY_ID_SERVER)
    jobs = []
    for k in range(8):
        c = ArchConfig(config.resolution + 8 * k, config.widths, config.depths)
        jobs.append((c, network_macs(template, c).total_macs))
    with EvaluatorPool(ExternalRef(command, timeout=10), template, workers=3) as pool:
        results = pool.evaluate_all(jobs)
    assert [r.accuracy for r in results] == [(config.resolution + 8 * k) / 1000.0 for k in range(8)]
