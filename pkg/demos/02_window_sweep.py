"""Longer communication windows on heterogeneous clients.

Eight clients each own whole Gaussian clusters, so their local problems
disagree. We train CODA+ (plain local SGDA with averaging) and CODASCA
(local steps corrected by control variates) with windows of 1 and 64
local steps and the same iteration budget, then look at held-out AUC,
the number of communication rounds and the duality gap of the final
proximal subproblem.

Takes about a minute.
"""

import numpy as np

from fedmax import (
    RunConfig,
    ScorerSpec,
    SynthSpec,
    generate_synthetic,
    partition_heterogeneous,
    practical_schedule,
    run_coda_plus,
    run_codasca,
    train_test_split,
)

spec = SynthSpec(n=4000, d=20, imratio=0.1, cluster_count=8, separation=4.0, cluster_spread=4.0)

print(f"{'algorithm':<10}{'I':>4}{'seed':>6}{'AUC':>9}{'rounds':>8}{'gap':>11}")
for name, runner in (("CODA+", run_coda_plus), ("CODASCA", run_codasca)):
    for window in (1, 64):
        for seed in range(3):
            train, test = train_test_split(generate_synthetic(spec, seed), 0.2, seed)
            shards = partition_heterogeneous(train, 8, seed)
            sched = practical_schedule(0.0125, 2000, 3, window, 5000, prox_coeff=0.001, batch_m=16)
            cfg = RunConfig(ScorerSpec.linear(20), seed=seed, eval_every=10**9, codasca_output="last")
            final = runner(shards, sched, cfg, test).trace.final
            print(f"{name:<10}{window:>4}{seed:>6}{final.test_auc:>9.4f}{final.cum_comm_rounds:>8}"
                  f"{final.duality_gap:>11.2e}")

# With a 64-step window both reach roughly the same AUC using about 60 times
# fewer rounds. The gap column shows where CODA+ pays for client drift: its
# averaged iterate sits much further from the subproblem's saddle point.
