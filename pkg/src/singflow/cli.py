"""
Command-line entry point.

Every subcommand reads an optional YAML config (``-c``), applies
``--set path=value`` overrides, writes CSV data (``-o``, default stdout) and
a JSON metadata file (``--meta``, default ``<output>.json``).  CSV numbers
carry 17 significant digits and no timestamps, so identical configs give
identical bytes for any thread count.

Exit status: 0 success, 2 tolerance verdict failed, 1 error.
"""

import argparse
import csv
import hashlib
import io
import json
import math
import sys

import numpy as np
from scipy.stats import qmc

from . import __version__
from .angular import AharonovBohm2D, FreeN
from .config import canonical_json, load_config
from .decay import fit_decay, kernel_sup_scan
from .errors import ResolutionError, SingflowError
from .kernel import KernelEvaluator, free_kernel, kernel_eval
from .parallel import THREADS_ENV, chunked_map, thread_count
from .propagator import channel_l2_norm, propagate

__all__ = ["main", "run", "CSV_COLUMNS"]

EXIT_OK, EXIT_ERROR, EXIT_TOLERANCE = 0, 1, 2

# column schemas; {x}/{y} expand to one column per coordinate
CSV_COLUMNS = {
    "spectrum": ["k", "mu_k", "alpha_k", "beta_k", "channel"],
    "kernel-eval": ["{x}", "{y}", "re_K", "im_K", "abs_K", "tail_bound", "terms_used", "ok"],
    "kernel-scan": ["r", "{angle}", "re_K", "im_K", "abs_K", "tail_bound", "terms_used"],
    "propagate": ["t", "{x}", "re_u", "im_u", "abs_u"],
    "decay-fit": ["t", "norm"],
    "validate-free": ["{x}", "{y}", "r", "re_series", "im_series", "re_closed", "im_closed", "abs_err", "tail_bound", "terms_used"],
}


def fmt(v):
    """Fixed text form of a CSV cell."""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _label(lab):
    return "%d:%d" % lab if isinstance(lab, tuple) else str(lab)


def _columns(cmd, dim, angle="angle"):
    cols = []
    for c in CSV_COLUMNS[cmd]:
        if c in ("{x}", "{y}"):
            cols += ["%s%d" % (c[1], i + 1) for i in range(dim)]
        elif c == "{angle}":
            cols.append(angle)
        else:
            cols.append(c)
    return cols


class Result:
    """CSV header and rows plus metadata and a verdict (None, True or False)."""

    def __init__(self, header, rows, meta, verdict=None):
        self.header = header
        self.rows = rows
        self.meta = meta
        self.verdict = verdict

    def csv_text(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header)
        for row in self.rows:
            w.writerow([fmt(v) for v in row])
        return buf.getvalue()


# ----------------------------------------------------------------------------
# subcommands
# ----------------------------------------------------------------------------


def cmd_spectrum(cfg, threads):
    model = cfg.model
    k_max = cfg.section("spectrum")["k_max"]
    rows = [(p.k, p.mu, p.alpha, p.beta, _label(p.label)) for p in model.eigenpairs(k_max)]
    return Result(_columns("spectrum", model.dim), rows, {"k_max": k_max})


def _evaluator(cfg, series=False):
    k = cfg.section("kernel")
    return KernelEvaluator(cfg.model, k_max=k["k_max"], tail_tol=k["tail_tol"], series=series or k["series"])


def cmd_kernel_eval(cfg, threads):
    model = cfg.model
    ev = _evaluator(cfg)
    pairs = cfg.section("kernel_eval")["points"]
    x = np.array([p[0] for p in pairs], dtype=float)
    y = np.array([p[1] for p in pairs], dtype=float)
    parts = chunked_map(lambda s: kernel_eval(ev, x[s], y[s], full_output=True, raise_on_fail=False), len(x), 16, threads)
    val = np.concatenate([np.atleast_1d(p.value) for p in parts])
    tail = np.concatenate([np.atleast_1d(p.tail_bound) for p in parts])
    terms = np.concatenate([np.atleast_1d(p.terms_used) for p in parts])
    ok = np.concatenate([np.atleast_1d(p.ok) for p in parts])
    rows = [(*x[i], *y[i], val[i].real, val[i].imag, abs(val[i]), tail[i], int(terms[i]), bool(ok[i])) for i in range(len(x))]
    meta = {"budgets": {"tail_tol": ev.tail_tol, "max_tail_bound": float(tail.max()), "k_max": ev.k_max}, "failed": int((~ok).sum())}
    return Result(_columns("kernel-eval", model.dim), rows, meta, bool(ok.all()))


def cmd_kernel_scan(cfg, threads):
    model = cfg.model
    ev = _evaluator(cfg)
    s = cfg.section("scan")
    r = cfg.scan_grid()
    if isinstance(model, AharonovBohm2D):
        ang, name = np.linspace(0.0, 2.0 * math.pi, s["n_angles"], endpoint=False), "s"
    else:
        ang, name = np.linspace(-1.0, 1.0, max(s["n_angles"], 2)), "cos_angle"
    scan = kernel_sup_scan(ev, r, ang, threads=threads)
    summary = {
        "sup": scan.sup,
        "weighted_sup": scan.weighted_sup,
        "trend": scan.trend,
        "failed": scan.failed,
    }
    if r.max() > 2.0:
        q, lim = scan.saturation()
        summary["saturation_ratio"], summary["saturation_limit"] = q, lim
    try:
        summary["small_r_exponent"] = scan.small_r_exponent()
        summary["alpha1"] = model.alpha1
    except ResolutionError:
        pass
    verdict = scan.failed == 0 and math.isfinite(scan.sup)
    meta = {"summary": summary, "budgets": {"tail_tol": ev.tail_tol, "k_max": ev.k_max, "max_tail_bound": float(np.nanmax(scan.tail_bound))}}
    return Result(_columns("kernel-scan", model.dim, name), list(scan.rows()), meta, verdict)


def _prop_options(pr):
    if pr["method"] == "eigen":
        return {"m_max": pr["m_max"]}
    if pr["method"] == "channel":
        return {"rel_tol": pr["rel_tol"]}
    return {}


def cmd_propagate(cfg, threads):
    model = cfg.model
    pr = cfg.section("propagate")
    g = pr["grid"]
    datum = cfg.datum()
    d = np.array(g["direction"], dtype=float)
    d = d / np.linalg.norm(d)
    r = np.linspace(g["r_min"], g["r_max"], g["n"])
    pts = r[:, None] * d[None, :]
    opts = _prop_options(pr)
    n0 = math.sqrt(datum.norm2())
    rows, per_time = [], []
    ok = True
    # chunk size matches the channel solver's internal blocks
    for t in pr["times"]:
        parts = chunked_map(lambda s: propagate(datum, t, pts[s], pr["method"], **opts), len(pts), 256, threads)
        vals = np.concatenate([p.values for p in parts])
        for i in range(len(pts)):
            rows.append((t, *pts[i], vals[i].real, vals[i].imag, abs(vals[i])))
        info = {"t": t}
        if pr["method"] in ("eigen", "channel"):
            nt = channel_l2_norm(datum, t, None, pr["method"], **opts)
            info["l2_norm"] = nt
            info["isometry_drift"] = abs(nt - n0) / n0
            ok = ok and info["isometry_drift"] <= pr["iso_tol"]
        first = parts[0].meta
        for key in ("captured_mass", "warning", "quadrature"):
            if first.get(key) is not None:
                info[key] = first[key]
        if first.get("warning"):
            ok = False
        per_time.append(info)
    meta = {"datum_l2_norm": n0, "datum": datum.meta, "times": per_time, "budgets": {"iso_tol": pr["iso_tol"], **opts}}
    return Result(_columns("propagate", model.dim), rows, meta, ok)


def cmd_decay_fit(cfg, threads):
    dc = cfg.section("decay")
    rep = fit_decay(cfg.model, cfg.datum(), cfg.decay_times(), p=cfg.decay_p, weighted=dc["weighted"], m_max=dc["m_max"])
    rows = list(zip(rep.times, rep.values))
    summary = rep.as_dict()
    summary["constant"] = rep.constant
    summary["slope_tol"] = dc["slope_tol"]
    verdict = rep.within(dc["slope_tol"])
    meta = {"summary": summary, "budgets": {"slope_tol": dc["slope_tol"], "m_max": dc["m_max"]}}
    return Result(["t", "norm"], rows, meta, verdict)


def free_sample_pairs(dim, n, r_max):
    """Deterministic pairs with ``|x||y| <= r_max`` from an unscrambled Halton sequence."""
    u = qmc.Halton(d=2 + 2 * (dim - 1), scramble=False).random(n + 1)[1:]
    prod = r_max * u[:, 0]
    # split |x||y| between the two factors by a ratio in [1/4, 4]
    ratio = 4.0 ** (2.0 * u[:, 1] - 1.0)
    rx, ry = np.sqrt(prod * ratio), np.sqrt(prod / ratio)

    def direction(a):
        if dim == 2:
            ph = 2.0 * math.pi * a[:, 0]
            return np.stack([np.cos(ph), np.sin(ph)], axis=1)
        z = 2.0 * a[:, 0] - 1.0
        ph = 2.0 * math.pi * a[:, 1]
        s = np.sqrt(1.0 - z * z)
        return np.stack([s * np.cos(ph), s * np.sin(ph), z], axis=1)

    k = dim - 1
    x = rx[:, None] * direction(u[:, 2 : 2 + k])
    y = ry[:, None] * direction(u[:, 2 + k : 2 + 2 * k])
    return x, y


def cmd_validate_free(cfg, threads):
    vf = cfg.section("validate_free")
    dim = vf["N"]
    model = FreeN(dim)
    k_max = (vf["l_max"] + 1) ** 2 if dim == 3 else 2 * vf["l_max"] + 1
    ev = KernelEvaluator(model, k_max=k_max, tail_tol=cfg.section("kernel")["tail_tol"], series=True)
    x, y = free_sample_pairs(dim, vf["n_pairs"], vf["r_max"])
    parts = chunked_map(lambda s: kernel_eval(ev, x[s], y[s], full_output=True, raise_on_fail=False), len(x), 16, threads)
    val = np.concatenate([p.value for p in parts])
    tail = np.concatenate([p.tail_bound for p in parts])
    terms = np.concatenate([p.terms_used for p in parts])
    ok = np.concatenate([p.ok for p in parts])
    exact = free_kernel(x, y, dim)
    err = np.abs(val - exact)
    r = np.linalg.norm(x, axis=1) * np.linalg.norm(y, axis=1)
    rows = [
        (*x[i], *y[i], r[i], val[i].real, val[i].imag, exact[i].real, exact[i].imag, err[i], tail[i], int(terms[i]))
        for i in range(len(x))
    ]
    max_err = float(err.max())
    verdict = bool(ok.all()) and max_err <= vf["tol"]
    summary = {"max_abs_error": max_err, "tol": vf["tol"], "l_max": vf["l_max"], "failed": int((~ok).sum())}
    meta = {"summary": summary, "budgets": {"tail_tol": ev.tail_tol, "max_tail_bound": float(tail.max())}}
    return Result(_columns("validate-free", dim), rows, meta, verdict)


COMMANDS = {
    "spectrum": (cmd_spectrum, "angular eigenvalues and exponents"),
    "kernel-eval": (cmd_kernel_eval, "kernel at configured point pairs"),
    "kernel-scan": (cmd_kernel_scan, "|K| over an (r, angle) grid with boundedness summary"),
    "propagate": (cmd_propagate, "solution along a ray at the configured times"),
    "decay-fit": (cmd_decay_fit, "norm decay exponent over a time range"),
    "validate-free": (cmd_validate_free, "free kernel series against its closed form"),
}


def run(command, cfg, threads=None):
    """Run one subcommand on a validated config; returns a :class:`Result`."""
    fn = COMMANDS[command][0]
    res = fn(cfg, thread_count(threads))
    csv_hash = hashlib.sha256(res.csv_text().encode()).hexdigest()
    res.meta = {
        "tool": "singflow",
        "version": __version__,
        "command": command,
        "config_hash": cfg.hash(),
        "config": cfg.canonical(),
        "csv_sha256": csv_hash,
        "verdict": None if res.verdict is None else ("pass" if res.verdict else "fail"),
        **res.meta,
    }
    return res


def _parser():
    ap = argparse.ArgumentParser(prog="singflow", description=__doc__.strip().splitlines()[0])
    ap.add_argument("--version", action="version", version="singflow " + __version__)
    sub = ap.add_subparsers(dest="command", required=True, metavar="command")
    for name, (_, help_) in COMMANDS.items():
        p = sub.add_parser(name, help=help_, description=help_)
        p.add_argument("-c", "--config", help="YAML config file (defaults for anything missing)")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="PATH=VALUE", help="override a config field, e.g. --set spectrum.k_max=5")
        p.add_argument("-o", "--output", help="CSV output path (default: stdout)")
        p.add_argument("--meta", help="JSON metadata path (default: <output>.json; none for stdout)")
        p.add_argument("--threads", type=int, help="worker threads (default: $%s or 1)" % THREADS_ENV)
        p.add_argument("--dump-config", action="store_true", help="print the canonical config and exit")
    return ap


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.overrides)
        if args.dump_config:
            sys.stdout.write(cfg.to_yaml())
            return EXIT_OK
        res = run(args.command, cfg, args.threads)
        text = res.csv_text()
        if args.output:
            with open(args.output, "w", newline="") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
        meta_path = args.meta or (args.output + ".json" if args.output else None)
        if meta_path:
            with open(meta_path, "w") as fh:
                fh.write(json.dumps(json.loads(canonical_json(res.meta)), indent=2, sort_keys=True) + "\n")
    except (SingflowError, ValueError, OSError) as exc:
        print("singflow: error: %s" % exc, file=sys.stderr)
        return EXIT_ERROR
    if res.verdict is False:
        print("singflow: tolerance verdict failed for %s" % args.command, file=sys.stderr)
        return EXIT_TOLERANCE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
