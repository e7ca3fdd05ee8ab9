"""Pathwise properties that hold for every realisation.

Passage times are subadditive, adding a particle never shrinks the visited
set, and no site is reached faster than its L1 distance.
"""

from frogmodel import InitialConfigSpec, check_record, eta_at, passage_time, run
from frogmodel.experiments import monotone_suite, subadditivity_suite

spec = InitialConfigSpec.bernoulli(2, 0.5, master_seed=0)

# the origin is occupied by conditioning; y must be occupied too, or T(y, .) is infinite
x, z = (0, 0), (6, 4)
y = next((i, -1) for i in range(3, 50) if eta_at(spec, (i, -1)) >= 1)
t_xz, t_xy, t_yz = (passage_time(spec, a, b, 500).value for a, b in ((x, z), (x, y), (y, z)))
print(f"y = {y}: T(x,z) = {t_xz} <= T(x,y) + T(y,z) = {t_xy} + {t_yz}")

print("random triples:", subadditivity_suite(spec, 200, 500)["verdicts"])
mono = monotone_suite(spec, 20, 100)
print(f"extra origin particle: visited sets contained in {mono['contained']}/{mono['pairs']} pairs")

rec = run(spec, None, 100)
check_record(rec)
print(f"{len(rec)} sites visited by time 100; speed bound and conservation hold")
