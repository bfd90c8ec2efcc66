"""
Federated rounds with an accuracy gate
======================================

Four hospitals with label-skewed shards train a shared classifier without
pooling rows.  The server only commits a candidate global model when its
size-weighted test accuracy does not fall below the best seen so far; this
script cranks the learning rate up to make some rounds fail the gate so
the revert path is visible.

Run:  python3 demos/federated_gate.py
"""

from fedhosp.data import (
    PartitionPlan,
    SyntheticConfig,
    generate,
    partition,
    split_train_test,
    variable_names,
)
from fedhosp.features import extract, fit_scaler, transform
from fedhosp.federation import FedConfig, run_federation
from fedhosp.models import ModelArch, TrainConfig

SEED = 7
K = 4

cfg = SyntheticConfig(n_episodes=800, n_variables=5, effect_size=0.6, seed=SEED)
episodes = generate(cfg)
train_eps, test_eps = split_train_test(episodes, 0.2, seed=SEED + 1)
variables = variable_names(cfg.n_variables)
train_fm = extract(train_eps, variables)
test_fm = extract(test_eps, variables)
scaler = fit_scaler(train_fm.rows)

# label_skew draws per-hospital class proportions from a Dirichlet, so the
# shards are deliberately non-IID — hospital 1 might see twice the mortality
# rate of hospital 3.
plan = PartitionPlan("label_skew", n_hospitals=K, skew_alpha=0.5, seed=SEED + 2)
hospitals = partition(
    transform(scaler, train_fm.rows), train_fm.labels,
    transform(scaler, test_fm.rows), test_fm.labels, plan,
)
for h in hospitals:
    print(f"hospital {h.hospital_id}: {h.n_train:>3} train rows, "
          f"prevalence {h.train_y.mean():.2f}")

arch = ModelArch("lr", input_dim=train_fm.rows.shape[1])
fed = FedConfig(n_hospitals=K, rounds=30, local_epochs=1,
                gate_enabled=True, gate_metric="accuracy", seed=SEED + 3)
state, evals = run_federation(hospitals, arch, fed,
                              TrainConfig(epochs=1, seed=SEED + 4, lr=0.8))

print("\nround  candidate  decision   best-so-far")
for record, pooled in zip(state.history, evals):
    verdict = "commit" if record.committed else "REVERT"
    print(f"{record.round:>5}  {record.candidate_accuracy:.4f}     {verdict:<8} "
          f"(pooled auroc {pooled.auroc:.3f})")

commits = sum(r.committed for r in state.history)
print(f"\n{commits}/{len(state.history)} rounds committed; "
      f"final weighted accuracy {state.best_accuracy:.4f}")
