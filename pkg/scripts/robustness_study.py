"""Lipschitz ratios of the pathwise filter over random observation-path pairs."""

from _common import parse

from hofilter.bench import run_robustness

cfg, threads = parse("robustness", __doc__, quick={"pairs": 30, "N": 4000})
rep = run_robustness(cfg, threads)
for m, per in rep.summary.items():
    print(f"m={m}")
    for label in ("base", "N2", "k2"):
        e = per[label]
        print(f"  {label:>4}: max {e['max']:.4f}  q50 {e['q50']:.4f}  q90 {e['q90']:.4f}"
              f"  finite={e['all_finite']}")
    b, st = per["base"], per["stability"]
    print(f"  phi=1 exact: {b['phi_one_exact']}  bump half ratio: {b.get('bump_half_ratio')}")
    print(f"  N doubling {st['N_doubling']:.3f}  k doubling {st['k_doubling']:.3f}")
