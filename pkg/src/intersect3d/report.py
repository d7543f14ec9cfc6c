"""Human-readable tables, two-column plot data and figures from artifacts."""
import csv
import io
import json
import os

import numpy as np

from .errors import DataError

SURVIVAL_COLUMNS = ["n", "M(n)", "k(n)", "se_k", "h(n)", "se_h"]


def _num(field, text, cast=float):
    if text == "":
        return None
    try:
        return cast(text)
    except ValueError:
        raise DataError(field, f"cannot parse {text!r}") from None


def parse_survival_csv(text):
    """Return (meta lines, config dict, rows); rows are dicts keyed by column."""
    lines = text.splitlines()
    comments = [ln for ln in lines if ln.startswith("#")]
    body = [ln for ln in lines if ln and not ln.startswith("#")]
    config = None
    for ln in comments:
        if ln.startswith("# config: "):
            try:
                config = json.loads(ln[len("# config: "):])
            except json.JSONDecodeError:
                raise DataError("config", "embedded config is not valid JSON") from None
    if config is None:
        raise DataError("config", "missing embedded config line")
    if not body:
        raise DataError("header", "missing column header")
    reader = csv.reader(io.StringIO("\n".join(body)))
    header = next(reader)
    if header != SURVIVAL_COLUMNS:
        raise DataError("header", f"expected columns {','.join(SURVIVAL_COLUMNS)}")
    rows = []
    for rec in reader:
        if len(rec) != len(header):
            raise DataError("row", f"expected {len(header)} fields, got {len(rec)}")
        row = {"n": _num("n", rec[0], int), "M(n)": _num("M(n)", rec[1], int)}
        for name, val in zip(header[2:], rec[2:]):
            row[name] = _num(name, val)
        if row["n"] is None or row["M(n)"] is None:
            raise DataError("n" if row["n"] is None else "M(n)", "empty value")
        rows.append(row)
    if not rows:
        raise DataError("checkpoints", "artifact has no checkpoint rows")
    return comments, config, rows


def load_artifact(path):
    """(kind, document) for a CSV or JSON artifact."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise DataError("path", str(exc)) from None
    if path.endswith(".csv"):
        _, config, rows = parse_survival_csv(text)
        return config.get("kind", "survival"), {"config": config, "rows": rows}
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError("json", f"not valid JSON: {exc}") from None
    if not isinstance(doc, dict) or "kind" not in doc:
        raise DataError("kind", "missing experiment kind")
    if "config" not in doc:
        raise DataError("config", "missing embedded config")
    return doc["kind"], doc


def _require(doc, *keys):
    cur = doc
    path = []
    for k in keys:
        path.append(str(k))
        if not isinstance(cur, dict) or k not in cur:
            raise DataError(".".join(path), "missing")
        cur = cur[k]
    return cur


def write_dat(path, xs, ys, header):
    with open(path, "w") as fh:
        fh.write(f"# {header}\n")
        for x, y in zip(xs, ys):
            fh.write(f"{x!r} {'nan' if y is None else repr(float(y))}\n")
    return path


def _figure(path, draw):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 3.2))
    draw(ax)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def _fmt(v, spec=".4f"):
    return "--" if v is None else format(v, spec)


# -- per-kind renderers ---------------------------------------------------------------

def _survival(doc, stem):
    rows = doc["rows"]
    lines = [f"{'n':>10} {'M(n)':>10} {'k(n)':>8} {'h(n)':>8}"]
    for r in rows:
        lines.append(f"{r['n']:>10,} {r['M(n)']:>10,} {_fmt(r['k(n)']):>8} {_fmt(r['h(n)']):>8}")
    ns = [r["n"] for r in rows]
    M = doc["config"]["pairs"]
    files = [write_dat(stem + "_k.dat", ns, [r["k(n)"] for r in rows], "n k(n)"),
             write_dat(stem + "_h.dat", ns, [r["h(n)"] for r in rows], "n h(n)"),
             write_dat(stem + "_survival.dat", ns, [r["M(n)"] / M for r in rows], "n M(n)/M")]

    def draw(ax):
        pts = [(r["n"], r["k(n)"], r["se_k"]) for r in rows if r["k(n)"] is not None]
        if pts:
            x, y, e = zip(*pts)
            ax.errorbar(x, y, yerr=e, fmt="o-", ms=3, lw=1, capsize=2, label="k(n)")
        hp = [(r["n"], r["h(n)"]) for r in rows if r["h(n)"] is not None]
        if hp:
            ax.plot(*zip(*hp), "s--", ms=3, lw=1, label="h(n)")
        ax.set_xlabel("n (steps)")
        ax.set_ylabel("exponent estimate")
        ax.legend(frameon=False)

    files.append(_figure(stem + "_k.png", draw))
    return "\n".join(lines), files


def _validate(doc, stem):
    cases = _require(doc, "cases")
    lines = [f"{'case':<14} {'param':>5} {'estimate':>10} {'exact':>10} {'pass':>5}"]
    for c in cases:
        p = c.get("n", c.get("k"))
        lines.append(f"{c['case']:<14} {p:>5} {c['estimate']:>10.5f} {c['exact']:>10.5f} "
                     f"{'yes' if c['pass'] else 'NO':>5}")
    est = [c["estimate"] for c in cases]
    exact = [c["exact"] for c in cases]
    files = [write_dat(stem + "_oracles.dat", exact, est, "exact estimate")]

    def draw(ax):
        ax.loglog(exact, est, "o", ms=4)
        lim = [min(exact) * 0.8, 1.0]
        ax.plot(lim, lim, "k-", lw=0.5)
        ax.set_xlabel("exact probability")
        ax.set_ylabel("Monte Carlo estimate")

    files.append(_figure(stem + "_oracles.png", draw))
    return "\n".join(lines), files


def _pathspace(doc, stem):
    rows = _require(doc, "shells")
    lines = [f"{'shell':>5} {'alive':>8} {'q':>9} {'95% CI':>21} {'P(SEP|alive)':>13}"]
    for r in rows:
        lines.append(f"{r['shell']:>5} {r['alive']:>8} {r['q']:>9.5f} "
                     f"[{r['q_low']:.5f}, {r['q_high']:.5f}] "
                     f"{_fmt(r.get('sep_given_alive'), '.5f'):>13}")
    ns = [r["shell"] for r in rows]
    files = [write_dat(stem + "_q.dat", ns, [r["q"] for r in rows], "shell q"),
             write_dat(stem + "_sep.dat", ns, [r.get("sep_given_alive") for r in rows],
                       "shell P(SEP|alive)")]

    def draw(ax):
        q = [r["q"] for r in rows if r["q"] > 0]
        ax.semilogy(ns[: len(q)], q, "o-", ms=3, lw=1)
        ax.set_xlabel("shell")
        ax.set_ylabel("direct survival q")

    files.append(_figure(stem + "_q.png", draw))
    return "\n".join(lines), files


def _splitting_lines(run, label=""):
    q = run["q"]
    rho = run["rho1"]
    fr = np.array(run["fractions"], dtype=float)
    lines = [f"{label}{'shell':>5} {'mean p':>8} {'q':>11} {'se':>10} {'P(SEP|alive)':>13}"]
    for j in range(fr.shape[1]):
        lines.append(f"{label}{j + 1:>5} {fr[:, j].mean():>8.4f} {q[j + 1]['value']:>11.4e} "
                     f"{q[j + 1]['se']:>10.2e} {rho[j]['value']:>13.5f}")
    xi = run["xi"]
    lines.append(f"{label}xi over shells {xi['window'][0]}..{xi['window'][1]}: "
                 f"{xi['value']:.4f} [{xi['low']:.4f}, {xi['high']:.4f}]")
    qs = run["q_sequence"]
    lines.append(f"{label}ratio increments Spearman rho={qs['spearman_rho']:.3f} "
                 f"p={qs['spearman_p']:.3g}")
    return lines


def _splitting(doc, stem):
    for key in ("q", "rho1", "fractions", "xi", "q_sequence"):
        _require(doc, key)
    lines = _splitting_lines(doc)
    ns = [e["n"] for e in doc["q"]]
    qv = [e["value"] for e in doc["q"]]
    files = [write_dat(stem + "_q.dat", ns, qv, "shell q"),
             write_dat(stem + "_ratios.dat", ns[1:], doc["q_sequence"]["ratios"],
                       "shell q(n)/q(n-1)"),
             write_dat(stem + "_rho1.dat", ns[1:], [r["value"] for r in doc["rho1"]],
                       "shell P(SEP|alive)")]

    def draw(ax):
        ax.semilogy(ns, qv, "o-", ms=3, lw=1)
        ax.set_xlabel("shell n")
        ax.set_ylabel("q(n) by splitting")

    files.append(_figure(stem + "_q.png", draw))
    return "\n".join(lines), files


def _mixing(doc, stem):
    mix = _require(doc, "mixing")
    for key in ("shells", "D", "critical", "beta", "slope_p"):
        _require(doc, "mixing", key)
    ns, D = mix["shells"], mix["D"]
    lines = [f"{'shell':>5} {'D_n':>10}"]
    lines += [f"{n:>5} {d:>10.5f}" for n, d in zip(ns, D)]
    lines.append(f"fitted decay rate {mix['beta']:.4f} (one-sided p={mix['slope_p']:.3g}); "
                 f"1% critical value {mix['critical']:.5f}; "
                 f"{'PASS' if mix.get('pass') else 'FAIL'}"
                 f"{' (saturated)' if mix.get('saturated') else ''}")
    for w, run in enumerate(doc.get("runs", [])):
        lines += _splitting_lines(run, label=f"[{w + 1}] ")
    files = [write_dat(stem + "_D.dat", ns, D, "shell D_n")]

    def draw(ax):
        ax.semilogy(ns, D, "o", ms=4, label="$D_n$")
        if not mix.get("saturated") and len(ns) > 1:
            x = np.array(ns, dtype=float)
            resid = np.array(mix["residuals"], dtype=float)
            fit = np.log(np.array(D)) - resid
            ax.semilogy(x, np.exp(fit), "-", lw=1, label="fit")
        ax.axhline(mix["critical"], color="k", lw=0.6, ls=":", label="1% critical")
        ax.set_xlabel("shell n")
        ax.set_ylabel("KS distance")
        ax.legend(frameon=False)

    files.append(_figure(stem + "_D.png", draw))
    return "\n".join(lines), files


def _cone(doc, stem):
    fr = np.array(_require(doc, "fractions"), dtype=float)
    alpha = _require(doc, "alpha")
    q = np.array(_require(doc, "q"), dtype=float)
    ns = list(range(1, fr.shape[1] + 1))
    lines = [f"{'shell':>5} {'mean p':>8} {'q':>11}"]
    lines += [f"{n:>5} {fr[:, n - 1].mean():>8.4f} {q[n - 1]:>11.4e}" for n in ns]
    lines.append(f"cone exponent {alpha['value']:.4f} [{alpha['low']:.4f}, {alpha['high']:.4f}]")
    files = [write_dat(stem + "_q.dat", ns, q.tolist(), "shell q")]

    def draw(ax):
        ax.semilogy(ns, q, "o-", ms=3, lw=1)
        ax.set_xlabel("shell n")
        ax.set_ylabel("cone survival")

    files.append(_figure(stem + "_q.png", draw))
    return "\n".join(lines), files


RENDERERS = {"survival": _survival, "tuple": _survival, "validate": _validate,
             "pathspace": _pathspace, "splitting": _splitting, "mixing": _mixing,
             "cone": _cone}


def report(path, out_dir=None):
    """Render an artifact; returns (table text, list of files written)."""
    kind, doc = load_artifact(path)
    if kind not in RENDERERS:
        raise DataError("kind", f"unknown experiment kind {kind!r}")
    out_dir = out_dir or os.path.dirname(os.path.abspath(path))
    os.makedirs(out_dir, exist_ok=True)
    stem = os.path.join(out_dir, os.path.splitext(os.path.basename(path))[0])
    try:
        return RENDERERS[kind](doc, stem)
    except (KeyError, TypeError, IndexError) as exc:
        raise DataError(str(exc).strip("'"), "missing or malformed") from None
