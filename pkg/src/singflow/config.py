"""
Run configuration: YAML in, validated canonical form out.

A config is a mapping with optional sections; each subcommand reads the
sections it needs and fills in defaults.  Validation errors name the field
path and, when the value came from a file, its line.
"""

import copy
import hashlib
import json
import math
import re

import numpy as np
import yaml

from .angular import model_from_spec
from .datum import datum_from_spec
from .errors import ConfigError, DomainError

__all__ = ["RunConfig", "load_config", "DEFAULTS", "canonical_json"]

DEFAULTS = {
    "model": {"kind": "free", "N": 3},
    "datum": {"shape": "natural-gaussian", "width": 0.5},
    "spectrum": {"k_max": 10},
    "kernel": {"k_max": 5000, "tail_tol": 1e-10, "series": False},
    "kernel_eval": {"points": None},
    "scan": {"r_min": 1e-6, "r_max": 50.0, "n_log": 60, "n_lin": 500, "n_angles": 72},
    "propagate": {
        "method": "eigen",
        "times": [0.5, 1.0, 2.0],
        "grid": {"r_min": 0.0, "r_max": 8.0, "n": 81, "direction": None},
        "m_max": 64,
        "rel_tol": 1e-10,
        "iso_tol": 1e-4,
    },
    "decay": {"times": {"start": 1.0, "stop": 100.0, "num": 9}, "p": "inf", "weighted": False, "m_max": 64, "slope_tol": 0.05},
    "validate_free": {"N": 3, "n_pairs": 200, "r_max": 8.0, "l_max": 60, "tol": 1e-6},
}

_SECTIONS = set(DEFAULTS) | {"output"}


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k not in ("model", "datum"):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _plain(obj):
    """Turn numpy scalars, tuples and infinities into JSON-safe values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        if math.isnan(x):
            return "nan"
        return x
    return obj


def canonical_json(obj):
    """Sorted, compact JSON; floats are written with round-trip precision."""
    return json.dumps(_plain(obj), sort_keys=True, separators=(",", ":"), allow_nan=False)


class _Loader(yaml.SafeLoader):
    """Safe loader that also reads ``1e-9`` (no dot) as a float."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(
        r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
        |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
        |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
        |[-+]?\.(?:inf|Inf|INF)
        |\.(?:nan|NaN|NAN))$""",
        re.X,
    ),
    list("-+0123456789."),
)


def _line_map(text):
    """Map dotted field paths to 1-based line numbers in a YAML document."""
    lines = {}

    def walk(node, path):
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                p = path + (str(k.value),)
                lines[".".join(p)] = k.start_mark.line + 1
                walk(v, p)
        elif isinstance(node, yaml.SequenceNode):
            for i, v in enumerate(node.value):
                p = path + (str(i),)
                lines[".".join(p)] = v.start_mark.line + 1
                walk(v, p)

    try:
        root = yaml.compose(text, Loader=_Loader)
    except yaml.YAMLError:
        return lines
    if root is not None:
        walk(root, ())
    return lines


def _default_pairs(dim):
    x = [1.0] + [0.0] * (dim - 1)
    ys = [[0.5, 0.5] + [0.0] * (dim - 2), [-2.0] + [0.0] * (dim - 1), [0.0] * (dim - 1) + [3.0]]
    return [[x, y] for y in ys]


class RunConfig:
    """Validated run configuration.

    Parameters
    ----------
    data : dict
        Raw mapping (as loaded from YAML).  Missing sections take
        :data:`DEFAULTS`.
    lines : dict, optional
        Field path to source line, used in error messages.
    """

    def __init__(self, data=None, lines=None, source=None):
        data = {} if data is None else data
        self._lines = lines or {}
        self.source = source
        if not isinstance(data, dict):
            raise ConfigError(self._where("", "config must be a mapping, got %s" % type(data).__name__))
        unknown = sorted(set(data) - _SECTIONS)
        if unknown:
            raise ConfigError(self._where(unknown[0], "unknown section %r" % unknown[0]))
        self.raw = copy.deepcopy(data)
        self.data = _merge(DEFAULTS, data)
        self._validate()

    # diagnostics --------------------------------------------------------

    def _where(self, path, msg):
        src = self.source or "<config>"
        line = self._lines.get(path)
        if line is None:
            # fall back to the nearest enclosing field with a known line
            parts = path.split(".")
            while parts and line is None:
                parts.pop()
                line = self._lines.get(".".join(parts))
        loc = "%s:%d" % (src, line) if line else src
        return "%s: field '%s': %s" % (loc, path, msg) if path else "%s: %s" % (loc, msg)

    def _fail(self, path, msg):
        raise ConfigError(self._where(path, msg))

    def _num(self, path, lo=None, hi=None, integer=False, strict_lo=False):
        parent, key = self.data, None
        node = self.data
        for part in path.split("."):
            parent, key = node, (int(part) if isinstance(node, list) else part)
            node = parent[key]
        if isinstance(node, bool) or not isinstance(node, (int, float)):
            self._fail(path, "expected a number, got %r" % (node,))
        if integer and int(node) != node:
            self._fail(path, "expected an integer, got %r" % (node,))
        if not math.isfinite(node):
            self._fail(path, "must be finite")
        if lo is not None and (node <= lo if strict_lo else node < lo):
            self._fail(path, "must be %s %g (got %r)" % (">" if strict_lo else ">=", lo, node))
        if hi is not None and node > hi:
            self._fail(path, "must be <= %g (got %r)" % (hi, node))
        parent[key] = int(node) if integer else float(node)
        return parent[key]

    # validation ---------------------------------------------------------

    def _validate(self):
        d = self.data
        try:
            self.model = model_from_spec(d["model"])
        except (DomainError, ValueError, TypeError) as exc:
            self._fail("model", str(exc))
        try:
            self._datum_spec = dict(d["datum"])
            datum_from_spec(self.model, self._datum_spec)
        except (DomainError, ValueError, TypeError) as exc:
            self._fail("datum", str(exc))
        self._num("spectrum.k_max", 1, integer=True)
        self._num("kernel.k_max", 1, integer=True)
        self._num("kernel.tail_tol", 0.0, strict_lo=True)
        if not isinstance(d["kernel"]["series"], bool):
            self._fail("kernel.series", "expected true or false")
        pts = d["kernel_eval"]["points"]
        if pts is None:
            pts = d["kernel_eval"]["points"] = _default_pairs(self.model.dim)
        if not isinstance(pts, list) or not pts:
            self._fail("kernel_eval.points", "expected a non-empty list of [x, y] pairs")
        for i, pair in enumerate(pts):
            ok = isinstance(pair, list) and len(pair) == 2 and all(
                isinstance(v, list) and len(v) == self.model.dim and all(isinstance(c, (int, float)) and not isinstance(c, bool) for c in v)
                for v in pair
            )
            if not ok:
                self._fail("kernel_eval.points.%d" % i, "expected [x, y] with %d coordinates each" % self.model.dim)
        r_min = self._num("scan.r_min", 0.0, strict_lo=True)
        r_max = self._num("scan.r_max", 0.0, strict_lo=True)
        if r_max <= r_min:
            self._fail("scan.r_max", "degenerate grid: r_max must exceed r_min")
        self._num("scan.n_log", 0, integer=True)
        self._num("scan.n_lin", 0, integer=True)
        if d["scan"]["n_log"] + d["scan"]["n_lin"] < 2:
            self._fail("scan.n_lin", "degenerate grid: need at least two radii")
        self._num("scan.n_angles", 1, integer=True)

        pr = d["propagate"]
        if pr["method"] not in ("eigen", "channel", "kernel"):
            self._fail("propagate.method", "must be one of eigen, channel, kernel")
        times = pr["times"]
        if not isinstance(times, list) or not times:
            self._fail("propagate.times", "expected a non-empty list")
        for i in range(len(times)):
            t = self._num("propagate.times.%d" % i)
            if t == 0.0:
                self._fail("propagate.times.%d" % i, "time must be nonzero")
        g0 = self._num("propagate.grid.r_min", 0.0)
        g1 = self._num("propagate.grid.r_max", 0.0, strict_lo=True)
        if g1 <= g0:
            self._fail("propagate.grid.r_max", "degenerate grid: r_max must exceed r_min")
        self._num("propagate.grid.n", 2, integer=True)
        g = pr["grid"]
        if g["direction"] is None:
            g["direction"] = [0.0] * (self.model.dim - 1) + [1.0]
        if not isinstance(g["direction"], list) or len(g["direction"]) != self.model.dim:
            self._fail("propagate.grid.direction", "expected a list of %d numbers" % self.model.dim)
        for i in range(self.model.dim):
            self._num("propagate.grid.direction.%d" % i)
        if not any(g["direction"]):
            self._fail("propagate.grid.direction", "degenerate grid: direction must be nonzero")
        self._num("propagate.m_max", 0, integer=True)
        self._num("propagate.rel_tol", 0.0, strict_lo=True)
        self._num("propagate.iso_tol", 0.0, strict_lo=True)

        dc = d["decay"]
        t0 = self._num("decay.times.start", 0.0, strict_lo=True)
        t1 = self._num("decay.times.stop", 0.0, strict_lo=True)
        if t1 < 10.0 * t0:
            self._fail("decay.times.stop", "degenerate grid: need at least one decade of times")
        self._num("decay.times.num", 3, integer=True)
        p = dc["p"]
        if p in ("inf", float("inf")):
            dc["p"] = "inf"
        else:
            self._num("decay.p", 1.0)
        if not isinstance(dc["weighted"], bool):
            self._fail("decay.weighted", "expected true or false")
        self._num("decay.m_max", 0, integer=True)
        self._num("decay.slope_tol", 0.0, strict_lo=True)

        vf = d["validate_free"]
        self._num("validate_free.N", 2, integer=True)
        if vf["N"] > 3:
            self._fail("validate_free.N", "the series route supports N = 2 and N = 3")
        self._num("validate_free.n_pairs", 1, integer=True)
        self._num("validate_free.r_max", 0.0, strict_lo=True)
        self._num("validate_free.l_max", 0, integer=True)
        self._num("validate_free.tol", 0.0, strict_lo=True)

    # accessors ----------------------------------------------------------

    def section(self, name):
        return self.data[name]

    def datum(self):
        return datum_from_spec(self.model, self._datum_spec)

    @property
    def decay_p(self):
        p = self.data["decay"]["p"]
        return math.inf if p == "inf" else float(p)

    def scan_grid(self):
        s = self.data["scan"]
        parts = []
        if s["n_log"]:
            parts.append(np.geomspace(s["r_min"], min(1.0, s["r_max"]), s["n_log"]))
        if s["n_lin"]:
            parts.append(np.linspace(max(1.0, s["r_min"]) if s["r_max"] > 1.0 else s["r_min"], s["r_max"], s["n_lin"]))
        return np.unique(np.concatenate(parts))

    def decay_times(self):
        t = self.data["decay"]["times"]
        return np.geomspace(t["start"], t["stop"], t["num"])

    # canonical form -----------------------------------------------------

    def canonical(self):
        """Semantic content as a plain dict (``output`` paths excluded)."""
        return json.loads(canonical_json({k: v for k, v in self.data.items() if k != "output"}))

    def to_json(self):
        return canonical_json(self.canonical())

    def to_yaml(self):
        return _dump_yaml(self.canonical())

    def hash(self):
        """SHA-256 of the canonical JSON form."""
        return hashlib.sha256(self.to_json().encode()).hexdigest()

    def __eq__(self, other):
        return isinstance(other, RunConfig) and self.to_json() == other.to_json()

    def __repr__(self):
        return "RunConfig(%s, hash=%s)" % (self.model, self.hash()[:12])

    @classmethod
    def from_yaml(cls, text, source=None):
        try:
            data = yaml.load(text, Loader=_Loader)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            loc = "%s:%d" % (source or "<config>", mark.line + 1) if mark else (source or "<config>")
            raise ConfigError("%s: YAML parse error: %s" % (loc, getattr(exc, "problem", exc))) from None
        return cls(data, _line_map(text), source)

    def with_overrides(self, assignments):
        """New config with ``path=value`` assignments applied (values parsed as YAML)."""
        data = copy.deepcopy(self.raw)
        for item in assignments:
            if "=" not in item:
                raise ConfigError("override %r is not of the form path=value" % item)
            path, raw = item.split("=", 1)
            try:
                value = yaml.load(raw, Loader=_Loader)
            except yaml.YAMLError:
                raise ConfigError("override %r: cannot parse value" % item) from None
            keys = path.strip().split(".")
            node = data
            for k in keys[:-1]:
                node = node.setdefault(k, {})
                if not isinstance(node, dict):
                    raise ConfigError("override %r: %s is not a section" % (item, k))
            node[keys[-1]] = value
        return RunConfig(data, self._lines, self.source)


class _Dumper(yaml.SafeDumper):
    pass


def _float_repr(dumper, value):
    if math.isinf(value):
        text = ".inf" if value > 0 else "-.inf"
    elif math.isnan(value):
        text = ".nan"
    else:
        text = repr(value)
        mant, _, exp = text.partition("e")
        if "." not in mant:
            mant += ".0"
        text = mant + ("e" + exp if exp else "")
    return dumper.represent_scalar("tag:yaml.org,2002:float", text)


_Dumper.add_representer(float, _float_repr)


def _dump_yaml(obj):
    return yaml.dump(obj, Dumper=_Dumper, sort_keys=True, default_flow_style=None)


def load_config(path=None, overrides=()):
    """Read a YAML config file (or defaults when ``path`` is None)."""
    if path is None:
        cfg = RunConfig({})
    else:
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError("cannot read config %s: %s" % (path, exc.strerror)) from None
        cfg = RunConfig.from_yaml(text, source=str(path))
    return cfg.with_overrides(overrides) if overrides else cfg
