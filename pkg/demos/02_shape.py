"""Time constant and limit shape for one particle per site in two dimensions.

Estimates mu along the axis and the diagonal, builds the symmetrised shape
{mu <= 1}, and draws the rescaled visited set of one run next to it.
"""

from pathlib import Path

from frogmodel import InitialConfigSpec, estimate_mu_many, metrics, rescale, run, shape_from_mu, shape_svg

spec = InitialConfigSpec.constant(2, 1, master_seed=0)
estimates = estimate_mu_many(spec, [(1, 0), (0, 1), (1, 1)], [25, 50, 100], replicas=10, horizon=1000)
for e in estimates:
    print(f"mu{e.direction} = {e.point:.4f}  95% CI [{e.ci_low:.4f}, {e.ci_high:.4f}]")

shape = shape_from_mu(estimates)
print("shape vertices:")
for v in shape.vertices:
    print(f"  ({v[0]:+.4f}, {v[1]:+.4f})")

rec = run(spec, None, 150)
rs = rescale(rec, 150)
m = metrics(rs)
print(f"n=150: coverage {m.coverage:.3f}, symmetry defect {m.symmetry_defect:.3f}, "
      f"convexity defect {m.convexity_defect:.3f}")

out = Path("out/demos")
out.mkdir(parents=True, exist_ok=True)
(out / "shape_n150.svg").write_text(shape_svg(rs, shape))
print(f"wrote {out / 'shape_n150.svg'}")
