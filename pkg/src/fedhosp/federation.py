"""Federated training across simulated hospitals.

One round: the server broadcasts the global parameters to a cohort, each
cohort hospital trains locally and returns its parameters with its train
size, the server averages them weighted by dataset size

    w_global = sum_k p_k * w_k,    p_k = |D_k| / sum_j |D_j|,

then every hospital (cohort or not) scores the candidate on its local test
set, and the test-size-weighted metric decides whether the candidate is
committed: a candidate at least as good as the best seen is kept, a
strictly worse one is rolled back (parameters and best value both), though
the round still counts. With the gate disabled every candidate commits.

Raw feature rows and labels never travel: the wire protocol can only carry
parameters, sample counts, and metric scalars.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, replace

import numpy as np

from . import transport as tp
from .metrics import EvalResult, accuracy, auroc, evaluate
from .models import ModelArch, TrainConfig, forward, init_params, train

__all__ = [
    "HospitalDataset",
    "RoundRecord",
    "FederationState",
    "FedConfig",
    "GATE_METRICS",
    "compute_weights",
    "aggregate",
    "local_update",
    "local_test_accuracy",
    "weighted_accuracy",
    "gate_and_commit",
    "select_cohort",
    "worker_loop",
    "wait_for_registrations",
    "run_server_rounds",
    "run_federation",
]

GATE_METRICS = ("accuracy", "auroc")


@dataclass(eq=False)
class HospitalDataset:
    """One hospital's local data: train and test rows with labels."""

    hospital_id: int
    train_x: np.ndarray
    train_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray

    def __post_init__(self) -> None:
        self.train_x = np.atleast_2d(np.asarray(self.train_x, dtype=np.float64))
        self.test_x = np.atleast_2d(np.asarray(self.test_x, dtype=np.float64))
        self.train_y = np.asarray(self.train_y).reshape(-1)
        self.test_y = np.asarray(self.test_y).reshape(-1)
        if self.hospital_id < 0:
            raise ValueError(f"hospital_id must be non-negative, got {self.hospital_id}")
        for part, x, y in (("train", self.train_x, self.train_y),
                           ("test", self.test_x, self.test_y)):
            if x.shape[0] < 1:
                raise ValueError(f"hospital {self.hospital_id}: empty {part} set")
            if x.shape[0] != y.size:
                raise ValueError(
                    f"hospital {self.hospital_id}: {part} rows/labels mismatch "
                    f"({x.shape[0]} vs {y.size})"
                )

    @property
    def n_train(self) -> int:
        return self.train_x.shape[0]

    @property
    def n_test(self) -> int:
        return self.test_x.shape[0]


@dataclass(frozen=True)
class RoundRecord:
    """What one round did: the candidate's score and whether it was kept."""

    round: int
    candidate_accuracy: float
    committed: bool
    weights: tuple[float, ...] = ()
    cohort: tuple[int, ...] = ()


@dataclass(frozen=True, eq=False)
class FederationState:
    """Global parameters plus the gate's bookkeeping."""

    global_params: np.ndarray
    round: int = 0
    best_accuracy: float = 0.0
    history: tuple[RoundRecord, ...] = ()


@dataclass(frozen=True)
class FedConfig:
    """Federation-level knobs (per-hospital training lives in TrainConfig)."""

    n_hospitals: int
    rounds: int
    local_epochs: int = 1
    cohort_fraction: float = 1.0
    gate_enabled: bool = True
    gate_metric: str = "accuracy"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_hospitals < 1:
            raise ValueError(f"n_hospitals must be >= 1, got {self.n_hospitals}")
        if self.rounds < 1:
            raise ValueError(f"rounds must be >= 1, got {self.rounds}")
        if self.local_epochs < 0:
            raise ValueError(f"local_epochs must be >= 0, got {self.local_epochs}")
        if not 0.0 < self.cohort_fraction <= 1.0:
            raise ValueError(
                f"cohort_fraction must lie in (0,1], got {self.cohort_fraction}"
            )
        if self.gate_metric not in GATE_METRICS:
            raise ValueError(
                f"unknown gate_metric {self.gate_metric!r}; expected one of {GATE_METRICS}"
            )


def compute_weights(sizes) -> np.ndarray:
    """p_k = |D_k| / sum |D_j| over the cohort; sums to 1 within 1e-12."""
    sizes = np.asarray(sizes, dtype=np.float64).reshape(-1)
    if sizes.size == 0:
        raise ValueError("cannot compute weights for an empty cohort")
    if np.any(sizes < 1):
        raise ValueError("every cohort dataset must have at least one sample")
    return sizes / sizes.sum()


def aggregate(updates, weights) -> np.ndarray:
    """Size-weighted average of parameter vectors.

    Per coordinate the weighted terms are summed in value-sorted order, so
    the result is exactly independent of the order hospitals are listed in;
    it is then clamped to the inputs' coordinate-wise [min, max] envelope,
    which keeps the average of identical vectors exactly identical (a plain
    float sum of e.g. three thirds falls one ulp short) and makes the
    convex-combination bound hold exactly rather than approximately.
    """
    stacked = np.stack([np.asarray(u, dtype=np.float64) for u in updates])
    weights = np.asarray(weights, dtype=np.float64).reshape(-1)
    if stacked.shape[0] != weights.size:
        raise ValueError(
            f"got {stacked.shape[0]} updates but {weights.size} weights"
        )
    if abs(weights.sum() - 1.0) > 1e-9:
        raise ValueError(f"weights must sum to 1, got {weights.sum()!r}")
    terms = np.sort(weights[:, None] * stacked, axis=0)
    summed = terms.sum(axis=0)
    return np.clip(summed, stacked.min(axis=0), stacked.max(axis=0))


def local_update(hospital: HospitalDataset, global_params: np.ndarray,
                 arch: ModelArch, train_cfg: TrainConfig) -> tuple[np.ndarray, int]:
    """Train locally from the global parameters; returns (params, |D_k|)."""
    params = train(arch, global_params, hospital.train_x, hospital.train_y, train_cfg)
    return params, hospital.n_train


def local_test_accuracy(hospital: HospitalDataset, params: np.ndarray,
                        arch: ModelArch, gate_metric: str = "accuracy") -> tuple[float, int]:
    """Gate metric of the given parameters on this hospital's test set."""
    if gate_metric not in GATE_METRICS:
        raise ValueError(f"unknown gate_metric {gate_metric!r}; expected one of {GATE_METRICS}")
    scores = forward(arch, params, hospital.test_x)
    metric = accuracy if gate_metric == "accuracy" else auroc
    return float(metric(scores, hospital.test_y)), hospital.n_test


def weighted_accuracy(values, n_tests) -> float:
    """Test-size-weighted mean of per-hospital metric values."""
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    n_tests = np.asarray(n_tests, dtype=np.float64).reshape(-1)
    if values.size == 0:
        raise ValueError("weighted_accuracy of an empty evaluation is undefined")
    if values.size != n_tests.size:
        raise ValueError(f"values and sizes disagree in length: {values.size} vs {n_tests.size}")
    return float((values * n_tests).sum() / n_tests.sum())


def _advance(state: FederationState, candidate: np.ndarray, a_new: float,
             committed: bool, weights=(), cohort=()) -> FederationState:
    record = RoundRecord(
        round=state.round,
        candidate_accuracy=float(a_new),
        committed=committed,
        weights=tuple(float(w) for w in weights),
        cohort=tuple(int(k) for k in cohort),
    )
    return FederationState(
        global_params=candidate if committed else state.global_params,
        round=state.round + 1,
        best_accuracy=float(a_new) if committed else state.best_accuracy,
        history=state.history + (record,),
    )


def gate_and_commit(state: FederationState, candidate: np.ndarray, a_new: float,
                    weights=(), cohort=()) -> FederationState:
    """Keep the candidate iff it is at least as good as the best so far.

    A strictly worse candidate is discarded: parameters and best value both
    stay as they were. Either way the round counts and is recorded.
    """
    return _advance(state, candidate, a_new, a_new >= state.best_accuracy,
                    weights, cohort)


def select_cohort(n_hospitals: int, cohort_fraction: float, round_seed) -> tuple[int, ...]:
    """Sample max(1, ceil(C*K)) hospital ids without replacement, sorted.

    ``round_seed`` is any numpy-acceptable seed; pass e.g. (seed, round) so
    the draw is deterministic per round.
    """
    if n_hospitals < 1:
        raise ValueError(f"n_hospitals must be >= 1, got {n_hospitals}")
    if not 0.0 < cohort_fraction <= 1.0:
        raise ValueError(f"cohort_fraction must lie in (0,1], got {cohort_fraction}")
    size = max(1, math.ceil(cohort_fraction * n_hospitals))
    rng = np.random.default_rng(round_seed)
    chosen = rng.choice(n_hospitals, size=size, replace=False)
    return tuple(sorted(int(k) + 1 for k in chosen))


# --------------------------------------------------------------------------
# protocol loops


def worker_loop(conn, hospital: HospitalDataset, arch: ModelArch,
                train_cfg: TrainConfig, gate_metric: str = "accuracy") -> None:
    """Serve one hospital over an established connection until Shutdown.

    Registers first, then answers BroadcastModel with a LocalUpdate (trained
    with seed ``train_cfg.seed + round`` so every round reshuffles
    differently but reproducibly) and EvalRequest with an EvalResult.
    """
    conn.send(tp.Register(hospital.hospital_id, hospital.n_train, hospital.n_test))
    while True:
        msg = conn.recv()
        if isinstance(msg, tp.Shutdown):
            conn.close()
            return
        if isinstance(msg, tp.BroadcastModel):
            cfg = replace(train_cfg, seed=(train_cfg.seed + msg.round) % 2**64)
            params, n_samples = local_update(hospital, msg.params, arch, cfg)
            conn.send(tp.LocalUpdate(hospital.hospital_id, msg.round, n_samples, params))
        elif isinstance(msg, tp.EvalRequest):
            value, n_test = local_test_accuracy(hospital, msg.params, arch, gate_metric)
            conn.send(tp.EvalResult(hospital.hospital_id, msg.round, value, n_test))
        else:
            raise tp.ProtocolError(
                f"hospital {hospital.hospital_id}: unexpected {type(msg).__name__}"
            )


@dataclass(eq=False)
class RegisteredWorker:
    conn: object
    n_train: int
    n_test: int


def wait_for_registrations(listener, expected_ids) -> dict[int, RegisteredWorker]:
    """Accept connections until every expected hospital id has registered.

    A connection whose first message is not a Register, names an unknown id,
    or repeats an already-registered id is closed (the rejected worker sees
    its connection drop) and the server keeps waiting for the rest.
    """
    expected = set(int(k) for k in expected_ids)
    if not expected:
        raise ValueError("expected_ids must be non-empty")
    workers: dict[int, RegisteredWorker] = {}
    while set(workers) != expected:
        conn = listener.accept()
        try:
            msg = conn.recv()
        except tp.TransportError:
            conn.close()
            continue
        if not isinstance(msg, tp.Register) or msg.hospital_id not in expected \
                or msg.hospital_id in workers:
            conn.close()
            continue
        workers[msg.hospital_id] = RegisteredWorker(conn, msg.n_train, msg.n_test)
    return workers


def run_server_rounds(workers: dict[int, RegisteredWorker], arch: ModelArch,
                      fed_cfg: FedConfig, evaluate_global=None,
                      ) -> tuple[FederationState, list[EvalResult]]:
    """Drive all federation rounds over already-registered connections.

    ``evaluate_global`` (optional) is called with the committed global
    parameters after each round; its results form the returned evaluation
    history. It exists for instrumentation — nothing it sees travels on the
    wire. On return the workers have been sent Shutdown.
    """
    ids = sorted(workers)
    state = FederationState(global_params=init_params(arch, fed_cfg.seed))
    eval_history: list[EvalResult] = []
    for rnd in range(fed_cfg.rounds):
        cohort = select_cohort(fed_cfg.n_hospitals, fed_cfg.cohort_fraction,
                               (fed_cfg.seed, rnd))
        for k in cohort:
            workers[k].conn.send(tp.BroadcastModel(rnd, state.global_params))
        updates, sizes = [], []
        for k in cohort:
            msg = workers[k].conn.recv()
            if not isinstance(msg, tp.LocalUpdate) or msg.hospital_id != k or msg.round != rnd:
                raise tp.ProtocolError(
                    f"round {rnd}: expected LocalUpdate from hospital {k}, got {msg!r}"
                )
            updates.append(msg.params)
            sizes.append(msg.n_samples)
        weights = compute_weights(sizes)
        candidate = aggregate(updates, weights)

        values, n_tests = [], []
        for k in ids:
            workers[k].conn.send(tp.EvalRequest(rnd, candidate))
        for k in ids:
            msg = workers[k].conn.recv()
            if not isinstance(msg, tp.EvalResult) or msg.hospital_id != k or msg.round != rnd:
                raise tp.ProtocolError(
                    f"round {rnd}: expected EvalResult from hospital {k}, got {msg!r}"
                )
            values.append(msg.value)
            n_tests.append(msg.n_test)
        a_new = weighted_accuracy(values, n_tests)

        if fed_cfg.gate_enabled:
            state = gate_and_commit(state, candidate, a_new, weights, cohort)
        else:
            state = _advance(state, candidate, a_new, True, weights, cohort)
        if evaluate_global is not None:
            eval_history.append(evaluate_global(state.global_params))
    for k in ids:
        workers[k].conn.send(tp.Shutdown())
    return state, eval_history


def run_federation(hospitals, arch: ModelArch, fed_cfg: FedConfig,
                   train_cfg: TrainConfig, transport=None,
                   ) -> tuple[FederationState, list[EvalResult]]:
    """Simulate a whole federation: server plus one worker thread per hospital.

    ``transport`` defaults to a fresh InProcessTransport; pass a TcpTransport
    to run the identical protocol over loopback TCP — the final parameters
    are bit-identical either way. Per-round model quality (all three metrics
    on the hospitals' pooled test sets) is measured on the side and returned
    alongside the final state.
    """
    hospitals = list(hospitals)
    ids = [h.hospital_id for h in hospitals]
    if len(set(ids)) != len(ids):
        raise ValueError(f"hospital ids must be unique, got {ids}")
    if len(hospitals) != fed_cfg.n_hospitals:
        raise ValueError(
            f"fed_cfg expects {fed_cfg.n_hospitals} hospitals, got {len(hospitals)}"
        )
    if transport is None:
        transport = tp.InProcessTransport()
    worker_cfg = replace(train_cfg, epochs=fed_cfg.local_epochs)

    listener = transport.listen()
    failures: list[tuple[int, Exception]] = []

    def run_worker(hospital: HospitalDataset) -> None:
        conn = transport.connect()
        try:
            worker_loop(conn, hospital, arch, worker_cfg, fed_cfg.gate_metric)
        except Exception as exc:  # noqa: BLE001 - surfaced to the caller below
            failures.append((hospital.hospital_id, exc))
            conn.close()  # unblocks the server's recv

    threads = [
        threading.Thread(target=run_worker, args=(h,), daemon=True, name=f"hospital-{h.hospital_id}")
        for h in hospitals
    ]
    for t in threads:
        t.start()

    by_id = {h.hospital_id: h for h in sorted(hospitals, key=lambda h: h.hospital_id)}
    pooled_x = np.vstack([h.test_x for h in by_id.values()])
    pooled_y = np.concatenate([h.test_y for h in by_id.values()])

    def evaluate_global(params: np.ndarray) -> EvalResult:
        return evaluate(forward(arch, params, pooled_x), pooled_y)

    try:
        workers = wait_for_registrations(listener, ids)
        result = run_server_rounds(workers, arch, fed_cfg, evaluate_global)
    except tp.TransportError as exc:
        for t in threads:
            t.join(timeout=5.0)
        if failures:
            hid, worker_exc = failures[0]
            raise RuntimeError(
                f"hospital {hid} failed during federation: {worker_exc}"
            ) from worker_exc
        raise RuntimeError(f"federation transport failure: {exc}") from exc
    finally:
        listener.close()
    for t in threads:
        t.join(timeout=30.0)
    for w in workers.values():
        w.conn.close()
    if failures:
        hid, worker_exc = failures[0]
        raise RuntimeError(
            f"hospital {hid} failed during federation: {worker_exc}"
        ) from worker_exc
    return result
