"""Stochastic-integral vs pathwise filter on shared randomness across fine resolutions."""

from _common import parse

from hofilter.bench import run_ibp_check

cfg, threads = parse("ibp_check", __doc__, quick={"N": 2000, "k_levels": [32, 64, 128, 256]})
rep = run_ibp_check(cfg, threads)
print(f"{'k':>5} {'m':>2} {'rel diff':>10} {'rms dlogw':>10} {'identical':>9}")
for r in rep.rows:
    print(f"{r['k']:>5} {r['m']:>2} {r['rel_diff']:>10.2e} {r['rms_log_weight']:>10.2e}"
          f" {str(r['identical']):>9}")
for m, s in rep.slopes.items():
    print(f"m={m}: log-weight gap decay {s['rms_decay']}, F gap decay {s['rel_decay']}")
