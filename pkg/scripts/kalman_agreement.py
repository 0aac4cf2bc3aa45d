"""Filter estimates vs the Kalman-Bucy mean over independent scenarios."""

from _common import parse

from hofilter.bench import run_filter

cfg, threads = parse("kalman", __doc__, quick={"N": 20000, "scenarios": 5})
rows = run_filter(cfg, threads)
inside = sum(abs(r["kalman_z"]) <= 3 for r in rows)
print(f"{'scenario':>8} {'pi':>10} {'kalman':>10} {'z':>7}")
for r in rows:
    print(f"{r['scenario']:>8} {r['pi']:>10.5f} {r['kalman_mean']:>10.5f} {r['kalman_z']:>7.2f}")
print(f"{inside}/{len(rows)} within 3 standard errors")
