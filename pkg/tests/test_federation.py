"""Federation tests: weighting, aggregation, gate semantics, full runs."""

from __future__ import annotations

import numpy as np
import pytest

from fedhosp import transport as tp
from fedhosp.federation import (
    FedConfig,
    FederationState,
    HospitalDataset,
    aggregate,
    compute_weights,
    gate_and_commit,
    local_test_accuracy,
    local_update,
    run_federation,
    select_cohort,
    wait_for_registrations,
    weighted_accuracy,
    worker_loop,
)
from fedhosp.models import ModelArch, TrainConfig, forward, init_params, train


def _hospital(hid=1, n_train=24, n_test=12, d=3, seed=0, separation=2.0):
    rng = np.random.default_rng(seed)

    def draw(n):
        x = rng.normal(size=(n, d))
        y = (x[:, 0] > 0).astype(float)
        x[y == 1, 0] += separation
        return x, y

    train_x, train_y = draw(n_train)
    test_x, test_y = draw(n_test)
    return HospitalDataset(hid, train_x, train_y, test_x, test_y)


def test_compute_weights_examples():
    assert np.array_equal(compute_weights([100, 100]), [0.5, 0.5])
    assert np.array_equal(compute_weights([1, 3]), [0.25, 0.75])
    assert np.array_equal(compute_weights([42]), [1.0])
    assert abs(compute_weights([7, 11, 13]).sum() - 1.0) <= 1e-12


def test_compute_weights_errors():
    with pytest.raises(ValueError, match="empty"):
        compute_weights([])
    with pytest.raises(ValueError, match="at least one sample"):
        compute_weights([5, 0])


def test_aggregate_identical_vectors_is_exact_identity():
    w = np.array([0.1, -2.5, 3.25, 1e-9])
    out = aggregate([w, w, w], [1 / 3, 1 / 3, 1 / 3])
    assert np.array_equal(out, w)  # bit-exact, not just close


def test_aggregate_arithmetic_examples():
    assert np.array_equal(
        aggregate([np.array([0.0]), np.array([4.0])], [0.25, 0.75]), [3.0]
    )
    out = aggregate([np.array([2.0, 0.0]), np.array([0.0, 2.0])],
                    compute_weights([1, 3]))
    assert np.array_equal(out, [0.5, 1.5])


def test_aggregate_is_order_independent_exactly():
    rng = np.random.default_rng(6)
    updates = [rng.normal(size=12) for _ in range(5)]
    weights = compute_weights(rng.integers(1, 500, 5))
    base = aggregate(updates, weights)
    for _ in range(10):
        perm = rng.permutation(5)
        shuffled = aggregate([updates[i] for i in perm], weights[perm])
        assert np.array_equal(shuffled, base)


def test_aggregate_stays_inside_envelope():
    rng = np.random.default_rng(7)
    updates = [rng.normal(size=20) * 10 for _ in range(4)]
    out = aggregate(updates, compute_weights([3, 1, 4, 1]))
    stacked = np.stack(updates)
    assert np.all(out >= stacked.min(axis=0))
    assert np.all(out <= stacked.max(axis=0))


def test_aggregate_errors():
    with pytest.raises(ValueError, match="weights"):
        aggregate([np.zeros(2), np.zeros(2)], [0.5])
    with pytest.raises(ValueError, match="sum to 1"):
        aggregate([np.zeros(2), np.zeros(2)], [0.5, 0.6])


def test_local_update_zero_epochs_identity():
    h = _hospital()
    arch = ModelArch("lr", input_dim=3)
    start = init_params(arch, 0)
    params, n = local_update(h, start, arch, TrainConfig(epochs=0, seed=1))
    assert np.array_equal(params, start)
    assert n == h.n_train


def test_local_update_matches_direct_training():
    h = _hospital()
    arch = ModelArch("lr", input_dim=3)
    cfg = TrainConfig(epochs=4, seed=9)
    start = init_params(arch, 2)
    via_federation, _ = local_update(h, start, arch, cfg)
    direct = train(arch, start, h.train_x, h.train_y, cfg)
    assert np.array_equal(via_federation, direct)


def test_local_update_reduces_training_loss():
    from fedhosp.models import cross_entropy

    h = _hospital(separation=3.0)
    arch = ModelArch("lr", input_dim=3)
    start = init_params(arch, 0)
    updated, _ = local_update(h, start, arch, TrainConfig(epochs=30, seed=0))
    before = cross_entropy(forward(arch, start, h.train_x), h.train_y)
    after = cross_entropy(forward(arch, updated, h.train_x), h.train_y)
    assert after <= before


def test_local_test_accuracy_matches_metrics_module():
    from fedhosp.metrics import accuracy, auroc

    h = _hospital(seed=4)
    arch = ModelArch("lr", input_dim=3)
    params = train(arch, init_params(arch, 0), h.train_x, h.train_y,
                   TrainConfig(epochs=20, seed=0))
    scores = forward(arch, params, h.test_x)
    value, n = local_test_accuracy(h, params, arch, "accuracy")
    assert (value, n) == (accuracy(scores, h.test_y), h.n_test)
    value_auc, _ = local_test_accuracy(h, params, arch, "auroc")
    assert value_auc == auroc(scores, h.test_y)
    with pytest.raises(ValueError, match="gate_metric"):
        local_test_accuracy(h, params, arch, "f1")


def test_weighted_accuracy_examples():
    assert weighted_accuracy([1.0, 0.5], [100, 100]) == 0.75
    assert weighted_accuracy([0.8, 0.6], [300, 100]) == 0.75
    assert weighted_accuracy([0.42], [7]) == 0.42
    with pytest.raises(ValueError, match="empty"):
        weighted_accuracy([], [])


def test_gate_commits_on_equal_or_better():
    state = FederationState(global_params=np.zeros(2), best_accuracy=0.80)
    better = gate_and_commit(state, np.ones(2), 0.85)
    assert better.best_accuracy == 0.85
    assert np.array_equal(better.global_params, np.ones(2))
    assert better.history[-1].committed

    equal = gate_and_commit(state, np.ones(2), 0.80)
    assert equal.best_accuracy == 0.80
    assert np.array_equal(equal.global_params, np.ones(2))
    assert equal.history[-1].committed


def test_gate_reverts_params_and_accuracy_when_worse():
    state = FederationState(global_params=np.zeros(2), best_accuracy=0.80)
    reverted = gate_and_commit(state, np.ones(2), 0.75)
    assert reverted.best_accuracy == 0.80
    assert np.array_equal(reverted.global_params, np.zeros(2))
    assert not reverted.history[-1].committed
    assert reverted.round == state.round + 1  # the round still counts
    assert reverted.history[-1].candidate_accuracy == 0.75


def test_first_candidate_always_commits():
    state = FederationState(global_params=np.zeros(2))
    assert gate_and_commit(state, np.ones(2), 0.01).history[-1].committed


def test_select_cohort_rules():
    assert select_cohort(2, 1.0, round_seed=0) == (1, 2)
    assert len(select_cohort(2, 0.5, round_seed=0)) == 1
    assert select_cohort(5, 0.5, round_seed=(3, 0)) == select_cohort(5, 0.5, round_seed=(3, 0))
    picked = select_cohort(10, 0.3, round_seed=42)
    assert picked == tuple(sorted(picked))
    assert all(1 <= k <= 10 for k in picked)
    assert select_cohort(3, 0.01, round_seed=1)  # never empty


def test_fed_config_validation():
    with pytest.raises(ValueError, match="cohort_fraction"):
        FedConfig(n_hospitals=2, rounds=1, cohort_fraction=0.0)
    with pytest.raises(ValueError, match="gate_metric"):
        FedConfig(n_hospitals=2, rounds=1, gate_metric="recall")
    with pytest.raises(ValueError, match="rounds"):
        FedConfig(n_hospitals=2, rounds=0)


def test_single_hospital_round_equals_centralized_training():
    h = _hospital(n_train=40)
    arch = ModelArch("lr", input_dim=3)
    fed = FedConfig(n_hospitals=1, rounds=1, local_epochs=3, gate_enabled=False, seed=5)
    state, evals = run_federation([h], arch, fed, TrainConfig(epochs=3, seed=11))
    central = train(arch, init_params(arch, 5), h.train_x, h.train_y,
                    TrainConfig(epochs=3, seed=11))
    assert np.array_equal(state.global_params, central)
    assert len(evals) == 1 and evals[0].n == h.n_test


def test_multi_round_single_hospital_is_sequential_training():
    h = _hospital(n_train=40)
    arch = ModelArch("lr", input_dim=3)
    fed = FedConfig(n_hospitals=1, rounds=4, local_epochs=2, gate_enabled=False, seed=5)
    state, _ = run_federation([h], arch, fed, TrainConfig(epochs=2, seed=11))
    params = init_params(arch, 5)
    for rnd in range(4):  # per-round seed is the base seed plus the round index
        params = train(arch, params, h.train_x, h.train_y,
                       TrainConfig(epochs=2, seed=11 + rnd))
    assert np.array_equal(state.global_params, params)


def test_gate_on_keeps_best_accuracy_non_decreasing():
    hospitals = [_hospital(1, seed=1), _hospital(2, seed=2)]
    arch = ModelArch("lr", input_dim=3)
    fed = FedConfig(n_hospitals=2, rounds=12, local_epochs=1, gate_enabled=True, seed=0)
    state, _ = run_federation(hospitals, arch, fed,
                              TrainConfig(epochs=1, seed=3, lr=0.5))
    best_so_far = 0.0
    for record in state.history:
        if record.committed:
            assert record.candidate_accuracy >= best_so_far
            best_so_far = record.candidate_accuracy
        else:
            assert record.candidate_accuracy < best_so_far
    assert state.best_accuracy == best_so_far
    assert len(state.history) == 12


def test_run_federation_matches_manual_round():
    """One gate-off round recomputed by hand from the module's primitives."""
    hospitals = [_hospital(1, n_train=16, seed=1), _hospital(2, n_train=32, seed=2)]
    arch = ModelArch("lr", input_dim=3)
    fed = FedConfig(n_hospitals=2, rounds=1, local_epochs=2, gate_enabled=False, seed=8)
    train_cfg = TrainConfig(epochs=2, seed=20)
    state, _ = run_federation(hospitals, arch, fed, train_cfg)

    start = init_params(arch, 8)
    updates, sizes = zip(*(
        local_update(h, start, arch, TrainConfig(epochs=2, seed=20))
        for h in hospitals
    ))
    expected = aggregate(list(updates), compute_weights(sizes))
    assert np.array_equal(state.global_params, expected)
    assert state.history[0].weights == (16 / 48, 32 / 48)
    assert state.history[0].cohort == (1, 2)


def test_partial_cohort_still_evaluates_everyone():
    hospitals = [_hospital(k, seed=k) for k in (1, 2, 3)]
    arch = ModelArch("lr", input_dim=3)
    fed = FedConfig(n_hospitals=3, rounds=6, local_epochs=1,
                    cohort_fraction=0.34, gate_enabled=True, seed=2)
    state, evals = run_federation(hospitals, arch, fed, TrainConfig(epochs=1, seed=0))
    assert all(len(r.cohort) == 2 for r in state.history)  # ceil(0.34*3)
    assert {k for r in state.history for k in r.cohort} <= {1, 2, 3}
    # pooled evaluation covers all three hospitals regardless of cohort
    assert all(e.n == sum(h.n_test for h in hospitals) for e in evals)


def test_tcp_and_in_process_runs_are_bit_identical():
    arch = ModelArch("lr", input_dim=3)
    fed = FedConfig(n_hospitals=2, rounds=4, local_epochs=1, gate_enabled=True, seed=13)
    cfg = TrainConfig(epochs=1, seed=40)
    s_ip, e_ip = run_federation([_hospital(1, seed=1), _hospital(2, seed=2)],
                                arch, fed, cfg, tp.InProcessTransport())
    s_tcp, e_tcp = run_federation([_hospital(1, seed=1), _hospital(2, seed=2)],
                                  arch, fed, cfg, tp.TcpTransport("127.0.0.1", 0))
    assert np.array_equal(s_ip.global_params, s_tcp.global_params)
    assert s_ip.history == s_tcp.history
    assert e_ip == e_tcp


def test_duplicate_registration_is_rejected():
    import threading

    transport = tp.InProcessTransport()
    listener = transport.listen()
    outcome = {}

    def register(name, delay):
        import time

        time.sleep(delay)
        conn = transport.connect()
        conn.send(tp.Register(hospital_id=1, n_train=10, n_test=5))
        try:
            outcome[name] = conn.recv()
        except tp.TransportClosedError:
            outcome[name] = "rejected"

    first = threading.Thread(target=register, args=("first", 0.0))
    second = threading.Thread(target=register, args=("second", 0.2))
    first.start(), second.start()

    def serve():
        workers = wait_for_registrations(listener, {1, 2})
        for w in workers.values():
            w.conn.send(tp.Shutdown())

    server = threading.Thread(target=serve)
    server.start()

    def late_unique():
        import time

        time.sleep(0.4)
        conn = transport.connect()
        conn.send(tp.Register(hospital_id=2, n_train=10, n_test=5))
        outcome["unique"] = conn.recv()

    late = threading.Thread(target=late_unique)
    late.start()
    for t in (first, second, late, server):
        t.join(timeout=10)
    assert outcome["second"] == "rejected"  # duplicate id: connection dropped
    assert outcome["first"] == tp.Shutdown()
    assert outcome["unique"] == tp.Shutdown()


def test_worker_failure_surfaces_with_context():
    # a worker whose test labels are single-class cannot compute auroc
    bad = _hospital(2, seed=3)
    bad.test_y[:] = 1.0
    hospitals = [_hospital(1, seed=1), bad]
    arch = ModelArch("lr", input_dim=3)
    fed = FedConfig(n_hospitals=2, rounds=2, local_epochs=1,
                    gate_metric="auroc", seed=0)
    with pytest.raises(RuntimeError, match="hospital 2"):
        run_federation(hospitals, arch, fed, TrainConfig(epochs=1, seed=0))


def test_worker_loop_round_trip_over_plain_pair():
    transport = tp.InProcessTransport()
    listener = transport.listen()
    h = _hospital(5, n_train=16)
    arch = ModelArch("lr", input_dim=3)

    import threading

    worker = threading.Thread(
        target=lambda: worker_loop(transport.connect(), h, arch,
                                   TrainConfig(epochs=1, seed=0)),
    )
    worker.start()
    conn = listener.accept()
    assert conn.recv() == tp.Register(5, 16, 12)
    params = init_params(arch, 1)
    conn.send(tp.BroadcastModel(0, params))
    update = conn.recv()
    assert update.hospital_id == 5 and update.round == 0 and update.n_samples == 16
    conn.send(tp.EvalRequest(0, update.params))
    result = conn.recv()
    assert result.hospital_id == 5 and 0.0 <= result.value <= 1.0
    conn.send(tp.Shutdown())
    worker.join(timeout=10)
    assert not worker.is_alive()


def test_hospital_dataset_validation():
    with pytest.raises(ValueError, match="empty test"):
        HospitalDataset(1, np.zeros((2, 3)), np.zeros(2), np.zeros((0, 3)), np.zeros(0))
    with pytest.raises(ValueError, match="mismatch"):
        HospitalDataset(1, np.zeros((2, 3)), np.zeros(3), np.zeros((1, 3)), np.zeros(1))
