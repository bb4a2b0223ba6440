"""
Revenue curve of a deviating miner on longest-chain consensus
=============================================================

Solves the optimal deviation at a range of power shares and shows where
it starts to beat honest mining.
"""

from forksec import ModelParams, honest_utility, optimal_revenue, security_threshold

# Rushing factor 0.5: half the honest network hears our block first in a tie.
gamma = 0.5

print(f"{'alpha':>6}  {'honest':>9}  {'optimal':>9}  {'edge':>9}")
for pct in range(5, 50, 5):
    alpha = pct / 100
    params = ModelParams(alpha=alpha, gamma=gamma)
    revenue = optimal_revenue(params, "bitcoin_fee").ratio
    fair = honest_utility(params)
    print(f"{alpha:>6.2f}  {fair:>9.5f}  {revenue:>9.5f}  {revenue - fair:>9.5f}")

# The edge column is zero until the security threshold, then grows.
# Bisection finds the crossing point without scanning.
result = security_threshold(ModelParams(alpha=0.5, gamma=gamma), "bitcoin_fee")
print(f"\nthreshold at gamma={gamma}: {result.threshold:.4f} "
      f"(bracket {result.bracket:.4f})")

# With gamma=0.5 the classic answer is one quarter. Rushing the whole
# network (gamma=1) pulls it down to zero; no rushing pushes it up.
for g in (0.0, 1.0):
    r = security_threshold(ModelParams(alpha=0.5, gamma=g), "bitcoin_fee")
    print(f"threshold at gamma={g}: {r.threshold:.4f}")
