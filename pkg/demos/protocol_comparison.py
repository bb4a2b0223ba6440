"""
Chain versus DAG protocols under whale fees
===========================================

Security thresholds of the three models at a reduced scale, with and
without the destructive ledger rule.
"""

from forksec import ModelParams, security_threshold

# Whales arrive once per hundred blocks and pay twice the subsidy.
# Small caps keep the full model's state space in the thousands.
base = ModelParams(
    alpha=0.5, gamma=0.5, delta=0.01, whale_fee=2.0,
    fork_sensitivity=5, max_fork=3, max_pool=1,
)

# The longest-chain model ignores the DAG knobs entirely.
r = security_threshold(base, "bitcoin_fee")
print(f"longest chain:            {r.threshold:.4f}")

# The merged-fork form is the cheap bound; the full model tracks every
# block reference.
for model in ("simplified_colordag", "chain_colordag"):
    r = security_threshold(base, model)
    print(f"{model + ':':<25} {r.threshold:.4f}")

# Under random tie resolution a fork that re-mines a whale wins half
# its contests, so fee stealing collapses the threshold as the fee
# grows. Discarding contested transactions defuses exactly that attack.
from dataclasses import replace

print(f"\n{'fee':>4}  {'keep':>7}  {'destroy':>7}")
for fee in (2.0, 5.0, 10.0):
    contested = replace(base, tie_break="random", whale_fee=fee)
    keep = security_threshold(contested, "chain_colordag").threshold
    mad = security_threshold(replace(contested, ledger="mad"), "chain_colordag").threshold
    print(f"{fee:>4}  {keep:>7.4f}  {mad:>7.4f}")

# Fork sensitivity is the DAG's patience with divergence: a larger
# bound tolerates longer contests before blocks become unacceptable.
for n in (1, 3, 5):
    r = security_threshold(replace(base, fork_sensitivity=n), "simplified_colordag")
    print(f"merged form, sensitivity={n}: {r.threshold:.4f}")
