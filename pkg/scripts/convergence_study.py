"""Convergence order of the discretised filter against a high-resolution reference."""

from _common import parse

from hofilter.bench import run_convergence

cfg, threads = parse("convergence", __doc__, quick={"N": 20000, "replications": 4})
rep = run_convergence(cfg, threads)
print(f"{'n':>4} {'m':>2} {'delta':>9} {'L2 err':>11} {'se':>10} {'mc se':>10} {'pi err':>11}")
for r in rep.rows:
    print(f"{r['n']:>4} {r['m']:>2} {r['delta']:>9.5f} {r['l2_error']:>11.3e} {r['l2_se']:>10.2e}"
          f" {r['mc_se']:>10.2e} {r['pi_l2_error']:>11.3e}")
for m, s in rep.slopes.items():
    print(f"m={m}: slope {s['slope']:.3f}  95% CI [{s['ci_low']:.3f}, {s['ci_high']:.3f}]"
          f"  pi slope {s['pi_slope']:.3f}  noise-dominated={s['noise_dominated']}")
ref = rep.reference
print(f"reference error {ref['ref_error']:.2e} vs smallest error {ref['min_error']:.2e}:"
      f" budget {'ok' if ref['budget_ok'] else 'VIOLATED'}")
