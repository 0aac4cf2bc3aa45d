"""Experiment runners behind the CLI.

Each runner validates nothing itself (the config already did), computes,
writes a JSON summary plus CSV tables into ``cfg.out`` and returns the
summary object. Outputs carry the config, its hash and the seed and contain
no timestamps, so a replay with the same config is byte-identical.
"""

import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .. import streams
from ..likelihood import (estimate_filter, filter_log_weights, make_functional,
                          shared_log_weights, weighted_estimate)
from ..oracle import kalman_bucy
from ..paths import (FineGrid, ObservationRecord, Partition, read_path, simulate_scenario,
                     uniform_grid, write_path)
from ..robust import ObservationPath, RobustBank, robust_log_weights, sup_distance

# ---------------------------------------------------------------------------
# output helpers


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


class _Sink:
    def __init__(self, cfg):
        self.cfg = cfg
        self.dir = Path(cfg.out)
        try:
            self.dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise OSError(f"cannot create output directory {self.dir}: {exc.strerror}") from None
        self.comments = [f"config_hash={cfg.hash}", f"seed={cfg.seed}"]
        self.files = []

    def path(self, name):
        self.files.append(name)
        return self.dir / name

    def csv(self, name, header, rows):
        with open(self.path(name), "w", newline="") as fh:
            for c in self.comments:
                fh.write(f"# {c}\n")
            w = csv.writer(fh)
            w.writerow(header)
            for row in rows:
                w.writerow([_cell(v) for v in row])

    def json(self, results):
        config = self.cfg.to_dict()
        config.pop("out")  # artifacts do not depend on where they are written
        doc = {"kind": self.cfg.kind, "config": config, "config_hash": self.cfg.hash,
               "seed": self.cfg.seed, "files": sorted(self.files), "results": results}
        name = f"{self.cfg.kind}.json"
        with open(self.dir / name, "w") as fh:
            json.dump(_jsonable(doc), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return self.dir / name


def _grid(cfg, n=None, k=None):
    if cfg.partition_times is not None and n is None:
        return FineGrid(Partition(cfg.partition_times), k or cfg.k_fine)
    return uniform_grid(cfg.t, n or max(cfg.n), k or cfg.k_fine)


def _partitions(cfg):
    if cfg.partition_times is not None:
        return [Partition(cfg.partition_times)]
    return sorted(set(cfg.n))


def _fit_slope(x, y):
    x, y = np.log(np.asarray(x, dtype=float)), np.asarray(y, dtype=float)
    if np.any(~np.isfinite(y)) or np.any(y <= 0):
        return float("nan")
    return float(np.polyfit(x, np.log(y), 1)[0])


# ---------------------------------------------------------------------------
# simulate / filter


def run_simulate(cfg, threads=1):
    model = cfg.build_model()
    grid = _grid(cfg)
    sink = _Sink(cfg)
    summary = []
    for i in range(cfg.scenarios):
        idx = cfg.scenario_index + i
        signal, obs, bm = simulate_scenario(model, grid, cfg.seed, idx)
        for label, record in (("observation", obs), ("signal", signal), ("brownian", bm)):
            write_path(record, sink.path(f"{label}_{idx}.csv"), sink.comments)
        summary.append({"scenario": idx, "x_t": signal.X[-1], "y_t": obs.Y[-1]})
    sink.csv("scenarios.csv", ["scenario", "x_t", "y_t"],
             [[s["scenario"], *s["x_t"], *s["y_t"]] for s in summary])
    sink.json({"scenarios": summary, "n_steps": grid.n_steps})
    return summary


def _observations(cfg, model):
    if cfg.observation is not None:
        return [(cfg.scenario_index, read_path(cfg.observation))]
    grid = _grid(cfg)
    return [(idx, simulate_scenario(model, grid, cfg.seed, idx)[1])
            for idx in range(cfg.scenario_index, cfg.scenario_index + cfg.scenarios)]


def run_filter(cfg, threads=1):
    """Filter estimates for every (scenario, partition, m).

    Scenario ``i`` is weighted with bank ``i``, so scenarios are independent.
    Linear-Gaussian models also get the Kalman-Bucy solution on the same
    observation and, for a coordinate functional, the z-score against it.
    """
    model = cfg.build_model()
    phi = make_functional(cfg.phi)
    sink = _Sink(cfg)
    rows, estimates = [], []
    for idx, obs in _observations(cfg, model):
        kalman = None
        if model.linear_gaussian_params is not None:
            kalman = kalman_bucy(model, obs).final
        for partition in _partitions(cfg):
            for m in cfg.m:
                e = estimate_filter(model, obs, partition, m, phi, cfg.N, cfg.seed, bank=idx,
                                    threads=threads)
                delta = obs.grid.with_partition(partition).base.meshsize
                ref = z = None
                if kalman is not None and phi.name == "coordinate":
                    ref = float(kalman.mean[phi.index])
                    z = (e.pi - ref) / e.pi_se
                estimates.append({**e.to_json(), "scenario": idx, "delta": delta,
                                  "kalman_mean": ref, "kalman_z": z})
                rows.append([idx, e.n_intervals, m, delta, e.rho, e.rho_se, e.pi, e.pi_se, e.ess,
                             ref, z])
    sink.csv("filter.csv", ["scenario", "n", "m", "delta", "rho", "rho_se", "pi", "pi_se", "ess",
                            "kalman_mean", "kalman_z"], rows)
    sink.json({"estimates": estimates})
    return estimates


# ---------------------------------------------------------------------------
# convergence


@dataclass
class ConvergenceReport:
    rows: list
    slopes: dict
    reference: dict
    replications: int

    def to_json(self):
        return _jsonable(asdict(self))

    def slope(self, m):
        return self.slopes[str(m)]["slope"]


def _replicate(model, cfg, grid, specs, phi, r, threads):
    _, obs, _ = simulate_scenario(model, grid, cfg.seed, cfg.scenario_index + r)
    log_ws, vals = shared_log_weights(model, obs, specs, phi, cfg.N, cfg.seed, bank=r,
                                      threads=threads)
    shift = max(float(lw.max()) for lw in log_ws)
    scale = math.exp(shift)
    ws = [np.exp(lw - shift) for lw in log_ws]
    wv = [w * vals for w in ws]
    rho = np.array([scale * np.mean(a) for a in wv])
    pi = np.array([np.sum(a) / np.sum(w) for a, w in zip(wv, ws)])
    ref = wv[-1]
    mc = np.array([scale * np.std(a - ref, ddof=1) / math.sqrt(cfg.N) for a in wv])
    return rho, pi, mc


def run_convergence(cfg, threads=1):
    """L2 error of rho against a high-resolution same-method reference.

    Every replication draws a fresh observation scenario and bank, and all
    meshes within a replication share that bank (common random numbers). The
    reference error is estimated by Richardson extrapolation from the
    reference and its half-resolution companion and must stay below 10% of
    the smallest measured error.
    """
    model = cfg.build_model()
    phi = make_functional(cfg.phi)
    grid = uniform_grid(cfg.t, cfg.n_ref, cfg.k_fine)
    ns = sorted(set(cfg.n))
    study = [(n, m) for m in cfg.m for n in ns]
    half = (cfg.n_ref // 2, cfg.m_ref)
    specs = study + [half, (cfg.n_ref, cfg.m_ref)]
    R = cfg.replications

    rho = np.empty((R, len(specs)))
    pi = np.empty((R, len(specs)))
    mc = np.empty((R, len(specs)))
    for r in range(R):
        rho[r], pi[r], mc[r] = _replicate(model, cfg, grid, specs, phi, r, threads)
    err = rho[:, :-1] - rho[:, -1:]
    pi_err = pi[:, :-1] - pi[:, -1:]

    def l2(e):
        return np.sqrt(np.mean(e * e, axis=0))

    L2, pi_L2 = l2(err), l2(pi_err)
    with np.errstate(invalid="ignore", divide="ignore"):
        L2_se = np.std(err * err, axis=0, ddof=1) / (2 * L2 * math.sqrt(R))
    mc_rms = np.sqrt(np.mean(mc[:, :-1] ** 2, axis=0))

    rows, slopes = [], {}
    for s, (n, m) in enumerate(study):
        rows.append({"n": n, "m": m, "delta": cfg.t / n, "l2_error": L2[s], "l2_se": L2_se[s],
                     "mc_se": mc_rms[s], "pi_l2_error": pi_L2[s]})
    boot = np.random.default_rng([cfg.seed, 0xB007])
    draws = [boot.integers(0, R, R) for _ in range(cfg.bootstrap)]
    deltas = [cfg.t / n for n in ns]
    for m in cfg.m:
        cols = [study.index((n, m)) for n in ns]
        slope = _fit_slope(deltas, L2[cols])
        boots = [_fit_slope(deltas, l2(err[idx][:, cols])) for idx in draws]
        boots = np.array([b for b in boots if math.isfinite(b)])
        lo, hi = (np.percentile(boots, [2.5, 97.5]) if len(boots) else (float("nan"),) * 2)
        noisy = (not math.isfinite(slope)) or bool(np.all(L2[cols] <= 3 * mc_rms[cols]))
        slopes[str(m)] = {"slope": slope, "ci_low": lo, "ci_high": hi,
                          "pi_slope": _fit_slope(deltas, pi_L2[cols]), "noise_dominated": noisy,
                          "meshes": ns}

    ref_error = float(l2(rho[:, specs.index(half)] - rho[:, -1])) / (2 ** cfg.m_ref - 1)
    min_error = float(np.min(L2[:len(study)]))
    reference = {"n_ref": cfg.n_ref, "m_ref": cfg.m_ref, "k_fine": cfg.k_fine, "N": cfg.N,
                 "fine_steps": grid.n_steps, "method": "same-method high-resolution estimate",
                 "ref_error": ref_error, "min_error": min_error,
                 "budget_ok": bool(ref_error <= 0.1 * min_error)}
    report = ConvergenceReport(rows, slopes, reference, R)

    sink = _Sink(cfg)
    header = ["n", "m", "delta", "l2_error", "l2_se", "mc_se", "pi_l2_error"]
    sink.csv("convergence.csv", header, [[row[h] for h in header] for row in rows])
    rep_rows = []
    for r in range(R):
        for s, (n, m) in enumerate(specs):
            rep_rows.append([r, n, m, cfg.t / n, rho[r, s], pi[r, s], mc[r, s]])
    sink.csv("convergence_replications.csv", ["replication", "n", "m", "delta", "rho", "pi", "mc_se"],
             rep_rows)
    sink.json(report.to_json())
    return report


# ---------------------------------------------------------------------------
# robustness


def brownian_polyline(seed, index, times, d_Y, R):
    """A Brownian path on ``times`` from the probe stream, clipped to [-R, R]."""
    z = streams.normals(seed, streams.PROBE, index, streams.LANE_W, (len(times) - 1, d_Y))
    incr = z * np.sqrt(np.diff(times))[:, None]
    vals = np.vstack([np.zeros((1, d_Y)), np.cumsum(incr, axis=0)])
    return ObservationPath(times, np.clip(vals, -R, R))


def perturb(cfg, family, y1, pair, d_Y, scale=1.0):
    """Second path of a probe pair; ``scale`` multiplies the perturbation amplitude."""
    gen = streams.generator(cfg.seed, streams.PROBE, pair, streams.LANE_PERTURB)
    amp = cfg.amplitude * scale
    s = y1.times
    if family == "zero":
        return y1
    if family == "shift":
        c = gen.uniform(-1.0, 1.0, d_Y) * amp
        return ObservationPath(s, np.clip(y1.values + c, -cfg.R, cfg.R))
    if family == "bump":
        centre = gen.uniform(0.2, 0.8) * cfg.t
        sign = gen.choice([-1.0, 1.0], size=d_Y)
        width = 0.05 * cfg.t
        bump = np.exp(-((s - centre) / width) ** 2)[:, None] * sign * amp
        return ObservationPath(s, np.clip(y1.values + bump, -cfg.R, cfg.R))
    if family == "resample":
        return brownian_polyline(cfg.seed, 2 * pair + 1, s, d_Y, cfg.R)
    raise ValueError(family)


@dataclass
class RobustnessReport:
    summary: dict
    rows: list

    def to_json(self):
        return _jsonable(asdict(self))


def _quantiles(v):
    v = np.asarray(v, dtype=float)
    return {"max": float(v.max()), "q50": float(np.quantile(v, 0.5)),
            "q90": float(np.quantile(v, 0.9)), "q99": float(np.quantile(v, 0.99))}


def run_robustness(cfg, threads=1):
    """Lipschitz ratios |F(y1) - F(y2)| / ||y1 - y2|| on shared sample banks.

    Each pair is scored on three banks: the base one, one with twice the
    samples and one with twice the fine resolution.
    """
    model = cfg.build_model()
    d_Y = model.d_Y
    times = np.linspace(0.0, cfg.t, cfg.path_knots + 1)
    n = max(cfg.n)
    fams = list(cfg.families)
    pairs = []
    for p in range(cfg.pairs):
        fam = fams[p % len(fams)]
        y1 = brownian_polyline(cfg.seed, 2 * p, times, d_Y, cfg.R)
        pairs.append((p, fam, y1, perturb(cfg, fam, y1, p, d_Y)))
    dists = [sup_distance(y1, y2, cfg.t) for _, _, y1, y2 in pairs]
    configs = {"base": (cfg.N, cfg.k_fine), "N2": (2 * cfg.N, cfg.k_fine),
               "k2": (cfg.N, 2 * cfg.k_fine)}

    rows, summary = [], {}
    for m in cfg.m:
        per = {}
        for label, (N, k) in configs.items():
            bank = RobustBank(model, uniform_grid(cfg.t, n, k), m, N, cfg.seed, cfg.riemann_k,
                              threads=threads)
            ratios, diffs = [], []
            for (p, fam, y1, y2), dist in zip(pairs, dists):
                dF = abs(bank.estimate(y1, cfg.phi).F - bank.estimate(y2, cfg.phi).F)
                ratio = dF / dist if dist > 0 else 0.0
                ratios.append(ratio)
                diffs.append(dF)
                rows.append([m, label, p, fam, dF, dist, ratio])
            entry = {"all_finite": bool(np.all(np.isfinite(ratios))), **_quantiles(ratios)}
            if label == "base":
                ones = [bank.estimate(y, "one").F for _, _, y1, y2 in pairs for y in (y1, y2)]
                entry["phi_one_exact"] = all(v == 1.0 for v in ones)
                entry["zero_pairs_zero"] = all(d == 0.0 for d, (_, f, _, _) in zip(diffs, pairs)
                                               if f == "zero")
                bumps = [(p, y1, d) for (p, f, y1, _), d in zip(pairs, diffs) if f == "bump"]
                if bumps:
                    half = [abs(bank.estimate(y1, cfg.phi).F
                                - bank.estimate(perturb(cfg, "bump", y1, p, d_Y, 0.5), cfg.phi).F)
                            for p, y1, _ in bumps]
                    full = np.median([d for _, _, d in bumps])
                    entry["bump_half_ratio"] = float(np.median(half) / full) if full > 0 else None
            per[label] = entry
        base = per["base"]["max"]
        per["stability"] = {
            "N_doubling": per["N2"]["max"] / base if base > 0 else None,
            "k_doubling": per["k2"]["max"] / base if base > 0 else None,
        }
        per["stability"]["within_factor_2"] = all(
            v is not None and 0.5 <= v <= 2.0
            for v in (per["stability"]["N_doubling"], per["stability"]["k_doubling"]))
        summary[str(m)] = per

    report = RobustnessReport(summary, rows)
    sink = _Sink(cfg)
    sink.csv("robustness.csv", ["m", "bank", "pair", "family", "dF", "dist", "ratio"], rows)
    sink.json({"summary": summary, "R": cfg.R, "pairs": cfg.pairs, "families": fams})
    return report


# ---------------------------------------------------------------------------
# integration-by-parts check


@dataclass
class IBPReport:
    rows: list
    slopes: dict

    def to_json(self):
        return _jsonable(asdict(self))


def run_ibp_check(cfg, threads=1):
    """Stochastic-integral vs pathwise form on one scenario at several fine resolutions.

    The scenario is simulated at the finest level and subsampled for the
    coarser ones. ``rms_log_weight`` is the per-sample RMS of the log-weight
    discrepancy; its decay in k is the reported slope.
    """
    model = cfg.build_model()
    n = max(cfg.n)
    levels = sorted(set(cfg.k_levels))
    top = levels[-1]
    _, fine, _ = simulate_scenario(model, uniform_grid(cfg.t, n, top), cfg.seed,
                                   cfg.scenario_index)
    rows = []
    for k in levels:
        obs = ObservationRecord(uniform_grid(cfg.t, n, k), fine.Y[::top // k])
        for m in cfg.m:
            lw_f, v = filter_log_weights(model, obs, n, m, cfg.phi, cfg.N, cfg.seed,
                                         threads=threads)
            lw_r, _, _ = robust_log_weights(model, obs, n, m, cfg.phi, cfg.N, cfg.seed,
                                            threads=threads)
            pi_f = weighted_estimate(lw_f, v)[2]
            pi_r = weighted_estimate(lw_r, v)[2]
            gap = lw_f - lw_r
            rows.append({"k": k, "m": m, "pi_filter": pi_f, "F_robust": pi_r,
                         "rel_diff": abs(pi_f - pi_r) / abs(pi_f),
                         "rms_log_weight": float(np.sqrt(np.mean(gap * gap))),
                         "max_log_weight": float(np.max(np.abs(gap))),
                         "identical": bool(np.array_equal(lw_f, lw_r))})
    slopes = {}
    for m in cfg.m:
        sel = [r for r in rows if r["m"] == m]
        ks = [r["k"] for r in sel]
        slopes[str(m)] = {"rms_decay": -_fit_slope(ks, [r["rms_log_weight"] for r in sel]),
                          "rel_decay": -_fit_slope(ks, [r["rel_diff"] for r in sel])}
    report = IBPReport(rows, slopes)
    sink = _Sink(cfg)
    header = ["k", "m", "pi_filter", "F_robust", "rel_diff", "rms_log_weight", "max_log_weight",
              "identical"]
    sink.csv("ibp_check.csv", header, [[r[h] for h in header] for r in rows])
    sink.json(report.to_json())
    return report


RUNNERS = {"simulate": run_simulate, "filter": run_filter, "convergence": run_convergence,
           "robustness": run_robustness, "ibp-check": run_ibp_check}


def run(cfg, threads=1):
    return RUNNERS[cfg.kind](cfg, threads=threads)
