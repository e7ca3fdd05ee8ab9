"""First passage times on a small interval, exactly and by simulation.

One particle sits on each site of [-3, 3]. The exact law of the first
passage times up to time 3 is enumerated, then compared with engine
frequencies over independent replicas.
"""

from frogmodel import FiniteConfig, enumerate_outcomes, run

config = FiniteConfig.interval(-3, 3)
law = enumerate_outcomes(config, 3)
print(f"enumerated {law.leaves} weighted outcomes")

replicas = 4000
spec = config.to_spec(master_seed=0)
hits = {y: 0 for y in law.passage}
for r in range(replicas):
    rec = run(spec.for_replica(r), None, 3)
    for y, t in rec.first_passage.items():
        hits[y] += t <= 2

print(" site   exact P[T <= 2]   simulated")
for y in sorted(law.passage):
    p = law.prob_within(y, 2)
    print(f"{y[0]:5d}   {str(p):>7} = {float(p):.4f}   {hits[y] / replicas:.4f}")
