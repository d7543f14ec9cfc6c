"""Experiment execution with checkpoint and resume.

Every experiment is cut into independent units (pair ranges, replicates,
validation cases).  A unit's result depends only on the configuration and its
index, so the artifact is a pure function of the configuration: worker count,
interruptions and resumption never change a byte of it.  A checkpoint holds
the results of the completed units; arrays go to a sidecar ``.npz``.
"""
import io
import json
import logging
import math
import os
import time
from dataclasses import dataclass

import numpy as np

from . import __version__, pathspace, splitting, survival, walks
from .config import MIN_BASE_RADIUS, ExperimentConfig
from .errors import DataError

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = 1
RUIN_SIZES = (2, 4, 8, 16)
BALL_DEPTHS = (1, 2)
RUIN_TRIAL_FACTOR = 10


@dataclass
class Outcome:
    status: str          # "complete" or "interrupted"
    artifact: str = None
    checkpoint: str = None


class Interrupted(Exception):
    pass


# -- helpers -------------------------------------------------------------------------

def _plain(x):
    """JSON-ready copy: numpy scalars and arrays to Python, non-finite floats to None."""
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


def dumps(obj):
    return json.dumps(_plain(obj), indent=1, sort_keys=True) + "\n"


def _atomic_write(path, data):
    tmp = path + ".tmp"
    mode = "wb" if isinstance(data, bytes) else "w"
    with open(tmp, mode) as fh:
        fh.write(data)
    os.replace(tmp, path)


def shell_config(cfg):
    return walks.ShellConfig(float(cfg.base_radius), min_base_radius=MIN_BASE_RADIUS)


def make_initial(cfg, which=1):
    kind = cfg.initial if which == 1 else cfg.initial2
    gap = cfg.gap if which == 1 else cfg.gap2
    extra = {"gap": gap} if kind == "angular-gap" else {}
    return pathspace.initial_pair(kind, shell_config(cfg), **extra)


def _header(cfg):
    return {"program": "intersect3d", "version": __version__, "kind": cfg.kind,
            "config": cfg.science()}


# -- experiment plans -------------------------------------------------------------------
# A plan has ``units`` (count), ``unit(i) -> (json_result, arrays)`` and
# ``finish(results, arrays) -> (file name, text)``.

class _SurvivalPlan:
    def __init__(self, cfg):
        self.cfg = cfg
        survival._validate(cfg.pairs, cfg.max_steps, cfg.checkpoints)
        if cfg.kind == "survival":
            self.m, self.n = 1, 1
        else:
            self.m, self.n = cfg.m, cfg.n
        self.units = math.ceil(cfg.pairs / cfg.chunk)

    def unit(self, i):
        c = self.cfg
        a, b = i * c.chunk, min(c.pairs, (i + 1) * c.chunk)
        counts = survival.count_range(c.seed, a, b, c.max_steps, c.checkpoints, self.m, self.n,
                                      c.threads)
        return counts.tolist(), {}

    def finish(self, results, arrays):
        c = self.cfg
        counts = np.sum(np.array(results, dtype=np.int64), axis=0)
        table = survival.SurvivalTable(c.pairs, c.checkpoints, counts.tolist(), c.h_lag)
        return f"{c.kind}.csv", survival_csv(table, c)


def _fmt(v):
    return "" if v is None else repr(float(v))


def survival_csv(table, cfg):
    out = io.StringIO()
    out.write(f"# intersect3d {__version__} {cfg.kind}\n")
    out.write("# config: " + json.dumps(cfg.science(), sort_keys=True) + "\n")
    out.write(f"# M={table.M} m={cfg.m if cfg.kind == 'tuple' else 1} "
              f"n={cfg.n if cfg.kind == 'tuple' else 1} h_lag={table.h_lag}\n")
    out.write("n,M(n),k(n),se_k,h(n),se_h\n")
    for n, c, k, sk, h, sh in table.rows():
        out.write(f"{n},{c},{_fmt(k)},{_fmt(sk)},{_fmt(h)},{_fmt(sh)}\n")
    return out.getvalue()


class _ValidatePlan:
    def __init__(self, cfg):
        self.cfg = cfg
        self.cases = [("ruin", n) for n in RUIN_SIZES] + [("ball", k) for k in BALL_DEPTHS]
        self.units = len(self.cases)

    def unit(self, i):
        kind, p = self.cases[i]
        c = self.cfg
        if kind == "ruin":
            trials = RUIN_TRIAL_FACTOR * c.trials
            hits = walks.gamblers_ruin_successes(c.seed, trials, p)
            exact = 1 / p
            se = math.sqrt(exact * (1 - exact) / trials)
            z = (hits / trials - exact) / se
            res = {"case": "gamblers-ruin", "n": p, "trials": trials, "successes": hits,
                   "estimate": hits / trials, "exact": exact, "z": z, "pass": abs(z) <= 3}
        else:
            hits = walks.ball_hitting_successes(c.seed, c.trials, p, sigma=c.sigma)
            est = hits / c.trials
            exact = math.exp(-p)
            res = {"case": "ball-hitting", "k": p, "trials": c.trials, "successes": hits,
                   "estimate": est, "exact": exact,
                   "truncated_law": walks.ball_truncation_law(p, math.exp(5)),
                   "error": est - exact, "pass": abs(est - exact) <= 0.01}
        return res, {}

    def finish(self, results, arrays):
        doc = _header(self.cfg)
        doc["cases"] = results
        doc["pass"] = all(r["pass"] for r in results)
        return "validate.json", dumps(doc)


class _PathspacePlan:
    def __init__(self, cfg):
        self.cfg = cfg
        self.initial = make_initial(cfg)
        self.units = math.ceil(cfg.trials / cfg.chunk)

    def unit(self, i):
        c = self.cfg
        a, b = i * c.chunk, min(c.trials, (i + 1) * c.chunk)
        alive, sep = splitting.direct_survival(self.initial, c.shells, c.seed, a, b)
        return {"alive": alive.tolist(), "sep": sep.tolist()}, {}

    def finish(self, results, arrays):
        c = self.cfg
        alive = np.sum([r["alive"] for r in results], axis=0)
        sep = np.sum([r["sep"] for r in results], axis=0)
        rows = []
        for j in range(c.shells):
            lo, hi = survival.wilson_interval(int(alive[j]), c.trials)
            row = {"shell": j + 1, "alive": alive[j], "q": alive[j] / c.trials,
                   "q_low": lo, "q_high": hi, "sep": sep[j]}
            if alive[j] > 0:
                row["sep_given_alive"] = sep[j] / alive[j]
                row["sep_low"], row["sep_high"] = survival.wilson_interval(int(sep[j]),
                                                                           int(alive[j]))
            rows.append(row)
        doc = _header(c)
        doc.update(trials=c.trials, shells=rows)
        return "pathspace.json", dumps(doc)


def _history_result(hist):
    return {"fractions": [h.fraction for h in hist], "alive": [h.survivors for h in hist],
            "sep": [h.sep_count for h in hist], "ess": [h.ess for h in hist],
            "distinct": [h.distinct_ancestors for h in hist]}


def _splitting_summary(results, particles, seed, window):
    fr = np.array([r["fractions"] for r in results])
    run = splitting.SplittingRun(fr, np.array([r["alive"] for r in results]),
                                 np.array([r["sep"] for r in results]), {}, particles, seed)
    qs = [splitting.estimate_q(run, n) for n in range(run.shells + 1)]
    xi = splitting.estimate_xi(run, *window)
    qseq = splitting.q_ratio_convergence(run)
    rho = splitting.estimate_rho1(run)
    return {
        "replicates": run.replicates,
        "particles": particles,
        "seed": seed,
        "fractions": fr,
        "alive": run.alive,
        "sep": run.sep,
        "ess": [r["ess"] for r in results],
        "distinct": [r["distinct"] for r in results],
        "q": [{"n": n, "value": q.value, "se": q.se, "low": q.low, "high": q.high}
              for n, q in enumerate(qs)],
        "xi": {"window": window, "value": xi.value, "se": xi.se, "low": xi.low,
               "high": xi.high},
        "q_sequence": {"xi_ref": qseq.xi_ref, "q_scaled": qseq.q_scaled,
                       "ratios": qseq.ratios, "ratio_se": qseq.ratio_se,
                       "increments": qseq.increments, "spearman_rho": qseq.spearman_rho,
                       "spearman_p": qseq.spearman_p, "decreasing": qseq.decreasing},
        "rho1": [{"shell": j + 1, "value": r.value, "se": r.se, "low": r.low, "high": r.high}
                 for j, r in enumerate(rho)],
    }


class _SplittingPlan:
    def __init__(self, cfg):
        self.cfg = cfg
        self.initial = make_initial(cfg)
        self.units = cfg.replicates

    def unit(self, i):
        c = self.cfg
        ens = splitting.run_replicate(self.initial, c.shells, c.particles, c.seed, i,
                                      c.threads, ())
        return _history_result(ens.history), {}

    def finish(self, results, arrays):
        c = self.cfg
        doc = _header(c)
        doc.update(_splitting_summary(results, c.particles, c.seed, c.effective_window()))
        return "splitting.json", dumps(doc)


class _MixingPlan:
    def __init__(self, cfg):
        self.cfg = cfg
        self.initials = (make_initial(cfg, 1), make_initial(cfg, 2))
        self.seeds = (cfg.seed, cfg.seed2)
        self.units = 2 * cfg.replicates

    def unit(self, i):
        c = self.cfg
        which, rep = divmod(i, c.replicates)
        ens = splitting.run_replicate(self.initials[which], c.shells, c.particles,
                                      self.seeds[which], rep, c.threads, (c.functional,))
        arrays = {f"s{j + 1}": h.functionals[c.functional] for j, h in enumerate(ens.history)}
        return _history_result(ens.history), arrays

    def finish(self, results, arrays):
        c = self.cfg
        R = c.replicates
        runs = []
        for which in range(2):
            vals = [[arrays[which * R + r][f"s{j + 1}"] for j in range(c.shells)]
                    for r in range(R)]
            res = results[which * R:(which + 1) * R]
            runs.append(splitting.SplittingRun(
                np.array([x["fractions"] for x in res]), np.array([x["alive"] for x in res]),
                np.array([x["sep"] for x in res]), {c.functional: vals}, c.particles,
                self.seeds[which]))
        n0, n1 = c.effective_window()
        diag = splitting.mixing_from_runs(runs[0], runs[1], c.functional, range(n0, n1 + 1))
        doc = _header(c)
        doc["mixing"] = {"functional": diag.functional, "shells": diag.ns.astype(int),
                         "D": diag.distances, "sizes": diag.sizes, "beta": diag.beta,
                         "slope_p": diag.slope_p, "residuals": diag.residuals,
                         "critical": diag.critical, "saturated": diag.saturated,
                         "pass": diag.passed}
        doc["runs"] = [_splitting_summary(results[w * R:(w + 1) * R], c.particles,
                                          self.seeds[w], [n0, n1]) for w in range(2)]
        return "mixing.json", dumps(doc)


class _ConePlan:
    def __init__(self, cfg):
        self.cfg = cfg
        self.cone = walks.ConeSpec((1.0, 0.0, 0.0), cfg.half_angle)
        self.units = cfg.replicates

    def unit(self, i):
        c = self.cfg
        fr = splitting.cone_fractions(self.cone, c.shells, c.particles, i, c.seed, c.sigma)
        return fr.tolist(), {}

    def finish(self, results, arrays):
        c = self.cfg
        fr = np.array(results)
        q = np.cumprod(fr, axis=1).mean(axis=0)
        alpha = splitting.cone_exponent_from_fractions(fr)
        doc = _header(c)
        doc.update(fractions=fr, q=q, alpha={"value": alpha.value, "se": alpha.se,
                                             "low": alpha.low, "high": alpha.high})
        return "cone.json", dumps(doc)


PLANS = {"survival": _SurvivalPlan, "tuple": _SurvivalPlan, "validate": _ValidatePlan,
         "pathspace": _PathspacePlan, "splitting": _SplittingPlan, "mixing": _MixingPlan,
         "cone": _ConePlan}


# -- checkpoints ---------------------------------------------------------------------------

def checkpoint_path(cfg):
    return os.path.join(cfg.out, f"{cfg.kind}.checkpoint.json")


def _arrays_path(path):
    return path[: -len(".json")] + ".npz"


def save_checkpoint(path, cfg, results, arrays):
    doc = {"format": CHECKPOINT_FORMAT, "digest": cfg.digest(), "config": cfg.to_dict(),
           "done": len(results), "results": results}
    flat = {f"u{i}/{k}": v for i, a in enumerate(arrays) for k, v in a.items()}
    if flat:
        buf = io.BytesIO()
        np.savez(buf, **flat)
        _atomic_write(_arrays_path(path), buf.getvalue())
    _atomic_write(path, dumps(doc))


def load_checkpoint(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataError("checkpoint", f"not valid JSON: {exc}") from None
    for key in ("format", "digest", "config", "done", "results"):
        if key not in doc:
            raise DataError(key, "missing from checkpoint")
    if doc["format"] != CHECKPOINT_FORMAT:
        raise DataError("format", f"unsupported checkpoint format {doc['format']}")
    cfg = ExperimentConfig.from_dict(doc["config"])
    if cfg.digest() != doc["digest"]:
        raise DataError("digest", "checkpoint does not match its embedded config")
    results = doc["results"]
    if len(results) != doc["done"]:
        raise DataError("results", "count does not match 'done'")
    arrays = [{} for _ in results]
    apath = _arrays_path(path)
    if os.path.exists(apath):
        with np.load(apath) as z:
            for key in z.files:
                u, name = key.split("/", 1)
                i = int(u[1:])
                if i < len(arrays):
                    arrays[i][name] = z[key]
    return cfg, results, arrays


# -- driver ------------------------------------------------------------------------------

def run(cfg, results=None, arrays=None, stop_after=None, clock=time.monotonic):
    """Run (or continue) the experiment described by ``cfg``.

    ``stop_after`` interrupts after that many newly completed units, leaving a
    checkpoint; it exists for tests and for time-boxed runs.
    """
    plan = PLANS[cfg.kind](cfg)
    os.makedirs(cfg.out, exist_ok=True)
    results = list(results or [])
    arrays = list(arrays or [{} for _ in results])
    ckpt = checkpoint_path(cfg)
    last = clock()
    fresh = 0
    try:
        for i in range(len(results), plan.units):
            if stop_after is not None and fresh >= stop_after:
                raise Interrupted
            res, arr = plan.unit(i)
            results.append(_plain(res))
            arrays.append(arr)
            fresh += 1
            log.info("%s: unit %d/%d done", cfg.kind, i + 1, plan.units)
            if cfg.checkpoint_every > 0 and clock() - last >= cfg.checkpoint_every:
                save_checkpoint(ckpt, cfg, results, arrays)
                last = clock()
    except (Interrupted, KeyboardInterrupt):
        save_checkpoint(ckpt, cfg, results, arrays)
        return Outcome("interrupted", checkpoint=ckpt)
    name, text = plan.finish(results, arrays)
    path = os.path.join(cfg.out, name)
    _atomic_write(path, text)
    for p in (ckpt, _arrays_path(ckpt)):
        if os.path.exists(p):
            os.remove(p)
    return Outcome("complete", artifact=path)


def resume(path, threads=None, out=None, stop_after=None):
    cfg, results, arrays = load_checkpoint(path)
    changes = {}
    if threads is not None:
        changes["threads"] = threads
    if out is not None:
        changes["out"] = out
    if changes:
        cfg = cfg.replace(**changes)
    return run(cfg, results, arrays, stop_after=stop_after)
