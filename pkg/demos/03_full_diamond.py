"""Heavy-tailed initial configurations fill the whole diamond.

Seed-paired replicas under P[eta >= n] ~ (log n)^(-delta), delta < d, are
compared with a one-particle-per-site baseline of the same occupation
probability. Coverage is |xi_n inside D_n| / |D_n|.
"""

from frogmodel.experiments import execute

manifest = {"kind": "full_diamond", "spec": {"dimension": 2, "master_seed": 0}, "tail_delta": 1.5,
            "n_schedule": [25, 50, 100], "replicas": 8}
rep = execute(manifest, write=False)
for line in rep.lines:
    print(line)
