"""Command line front end.

    tracephase fixed-points --word "B^-1 A" --level -0.25
    tracephase hessian      --word "B^-1 A" --level -0.25
    tracephase expand       --model quartic-1d --out runs/
    tracephase model-trace  --angle 1.5707963267948966 --k-min 20 --k-max 400

Each command prints a JSON report on stdout. With ``--out DIR`` the
report, and any sweep CSV, is also written to DIR. Flags override values
from ``--config FILE`` (a single JSON object with the RunConfig field
names). Exit codes: 0 ok, 1 numerical failure, 2 non-isolated fixed set,
3 structural check failed, 64 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import math
import os
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import charvar as cv
from . import models as md
from . import oscint as oi
from . import phase as ph
from .errors import ConfigError, IdentityWordError, TracephaseError

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_NON_ISOLATED = 2
EXIT_STRUCTURE = 3
EXIT_USAGE = 64

COMMANDS = ("fixed-points", "hessian", "expand", "model-trace")


@dataclass
class RunConfig:
    command: str
    word: str | None = None
    word_file: str | None = None
    level: float | None = None
    model_id: str | None = None
    angle: float | None = None
    k_min: float | None = None
    k_max: float | None = None
    points_per_decade: int = 16
    tolerances: dict = field(default_factory=dict)
    output_path: str | None = None
    cache_dir: str | None = None

    def validate(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        for name, v in self.tolerances.items():
            if name not in ("solver", "quad", "fit"):
                raise ConfigError(f"unknown tolerance {name!r}")
            if not (isinstance(v, (int, float)) and v > 0 and math.isfinite(v)):
                raise ConfigError(f"tolerance {name} must be positive, got {v!r}")
        if self.k_min is not None and self.k_max is not None and not self.k_min < self.k_max:
            raise ConfigError("k_min must be smaller than k_max")
        if self.k_min is not None and self.k_min <= 0:
            raise ConfigError("k_min must be positive")
        if int(self.points_per_decade) < 1:
            raise ConfigError("points_per_decade must be positive")
        if self.command in ("fixed-points", "hessian"):
            if self.word is None and self.word_file is None:
                raise ConfigError("--word or --word-file is required")
            if self.level is None:
                raise ConfigError("--level is required")
        if self.command == "expand" and self.model_id not in md.GOLDEN_IDS:
            raise ConfigError(f"unknown model {self.model_id!r}; choose from {', '.join(md.GOLDEN_IDS)}")
        if self.command == "model-trace":
            if self.angle is None:
                raise ConfigError("--angle is required")
            if abs(math.remainder(float(self.angle), 2 * math.pi)) < 1e-12:
                raise ConfigError("angle must not be 0 mod 2 pi")
        return self


_FIELDS = {f.name for f in dataclasses.fields(RunConfig)}


def load_config(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    extra = set(data) - _FIELDS
    if extra:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(extra))}")
    return data


# ---------------------------------------------------------------- output


def _fmt(x: float) -> str:
    if math.isnan(x) or math.isinf(x):
        return "null"
    s = format(x, ".17g")
    if s.lstrip("-").isdigit():
        s += ".0"
    return s


def dumps(obj, indent=2, _level=0) -> str:
    """JSON with floats at 17 significant digits and insertion-ordered keys."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        if all(isinstance(v, (int, float, np.number)) and not isinstance(v, bool) for v in seq):
            return "[" + ", ".join(dumps(v) for v in seq) + "]"
        return "[\n" + ",\n".join(pad + dumps(v, indent, _level + 1) for v in seq) + "\n" + end + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def sweep_csv(rows) -> str:
    buf = io.StringIO()
    buf.write("k,re,im,err\n")
    for k, v, e in rows:
        buf.write(f"{_fmt(k)},{_fmt(v.real)},{_fmt(v.imag)},{_fmt(e)}\n")
    return buf.getvalue()


def read_sweep_csv(text: str):
    rows = list(csv.DictReader(io.StringIO(text)))
    return [(float(r["k"]), complex(float(r["re"]), float(r["im"])), float(r["err"])) for r in rows]


def _write(out_dir, name, text):
    if out_dir is None:
        return
    d = Path(out_dir)
    d.mkdir(parents=True, exist_ok=True)
    with open(d / name, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


# ---------------------------------------------------------------- cache


def cache_key(payload: dict) -> str:
    versions = {"package": __version__, "charvar": cv.ALGORITHM_VERSION,
                "phase": ph.ALGORITHM_VERSION, "oscint": oi.ALGORITHM_VERSION,
                "models": md.ALGORITHM_VERSION}
    blob = dumps({"versions": versions, **payload}, indent=0)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def cached_sweep(cache_dir, payload, compute):
    """Rows (k, value, err) from DIR/<sha256>.csv, computing and storing them on a miss."""
    if cache_dir is None:
        return compute(), False
    path = Path(cache_dir) / f"{cache_key(payload)}.csv"
    if path.exists():
        return read_sweep_csv(path.read_text(encoding="utf-8")), True
    rows = compute()
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    tmp.write_text(sweep_csv(rows), encoding="utf-8", newline="\n")
    os.replace(tmp, path)
    # use the serialised values so warm and cold runs are identical
    return read_sweep_csv(path.read_text(encoding="utf-8")), False


# ---------------------------------------------------------------- commands


def _words(cfg):
    if cfg.word_file:
        return cv.load_words(cfg.word_file)
    return [cv.parse_word(cfg.word)]


def cmd_fixed_points(cfg: RunConfig):
    reports, code = [], EXIT_OK
    kw = {}
    if "solver" in cfg.tolerances:
        kw["tol"] = float(cfg.tolerances["solver"])
    for w in _words(cfg):
        rep = {"word": str(w), "level": float(cfg.level)}
        try:
            census = cv.fixed_points(w, cfg.level, **kw)
        except IdentityWordError:
            rep.update(status="NON_ISOLATED", reason="identity word", records=[])
            code = max(code, EXIT_NON_ISOLATED)
            reports.append(rep)
            continue
        if census.non_isolated:
            rep.update(status="NON_ISOLATED", reason="fixed set is not a finite set of points", records=[])
            code = max(code, EXIT_NON_ISOLATED)
        else:
            rep.update(status="ok", records=[r.to_dict() for r in census])
            rep["kernel_dims"] = [int(r.kernel_dim) for r in census]
        rep["seeds"] = {"total": census.n_seeds, "converged": census.converged_seeds,
                        "failed": census.failed_seeds}
        if census.converged_seeds == 0:
            rep["status"] = "solver-failure"
            code = max(code, EXIT_FAILURE)
        reports.append(rep)
    return {"command": "fixed-points", "results": reports}, code


def cmd_hessian(cfg: RunConfig):
    """Radical of the phase Hessian at each fixed point against Ker(dphi - I)."""
    rng = np.random.default_rng(0)
    out, code = [], EXIT_OK
    for w in _words(cfg):
        try:
            census = cv.fixed_points(w, cfg.level)
        except IdentityWordError:
            out.append({"word": str(w), "status": "NON_ISOLATED", "points": []})
            code = max(code, EXIT_NON_ISOLATED)
            continue
        if census.non_isolated:
            out.append({"word": str(w), "status": "NON_ISOLATED", "points": []})
            code = max(code, EXIT_NON_ISOLATED)
            continue
        pts = []
        for r in census:
            M = np.asarray(r.reduced_map, dtype=float)
            b = ph.decompose_linear(M)
            h = ph.hessian_P(b)
            ok, ang = ph.radical_matches_kernel(M)
            neg = ph.negativity_check(h, b, 16, rng)
            pts.append({"xyz": [r.point.x, r.point.y, r.point.z],
                        "kernel_dim": int(r.kernel_dim), "radical_dim": int(h.radical_dim),
                        "max_angle": float(ang), "negativity_ok": bool(neg.ok),
                        "negativity_max_rel_error": float(neg.max_rel_error),
                        "symplectic": bool(b.is_symplectic(1e-9))})
            if not (ok and neg.ok and h.radical_dim == r.kernel_dim):
                code = max(code, EXIT_STRUCTURE)
        out.append({"word": str(w), "status": "ok", "points": pts})
    return {"command": "hessian", "level": float(cfg.level), "results": out}, code


def cmd_expand(cfg: RunConfig):
    g = md.golden(cfg.model_id)
    k_min = cfg.k_min if cfg.k_min is not None else g.k_range[0]
    k_max = cfg.k_max if cfg.k_max is not None else g.k_range[1]
    if not k_min < k_max:
        raise ConfigError("k_min must be smaller than k_max")
    ks = oi.k_grid(k_min, k_max, int(cfg.points_per_decade))
    tol_q = float(cfg.tolerances.get("quad", oi.QUAD_TOL))
    prune = float(cfg.tolerances.get("fit", oi.PRUNE))

    def compute():
        s = oi.run_sweep(lambda k: g.integral(k, tol=tol_q), ks, g.fp)
        return list(s.rows())

    payload = {"command": "expand", "model": g.id, "k": [float(k) for k in ks],
               "tolerances": {"quad": tol_q, "fit": prune}}
    rows, hit = cached_sweep(cfg.cache_dir, payload, compute)
    s = oi.KSweep([r[0] for r in rows], [r[1] for r in rows], [r[2] for r in rows], g.fp)
    series = oi.fit_series(s, g.lattice_floats(), g.max_log, prune=prune)
    rec = g.record()
    rep = oi.verify_structure(series, rec, n_real=g.dim, m=g.m, k_ref=float(ks[-1]))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        est = oi.detect_exponent(s)
    report = {
        "command": "expand",
        "model": g.id,
        "condition": rec.condition.value,
        "radical_dim": rec.kernel_dim,
        "m": g.m,
        "log_bound_q": g.log_bound_q,
        "k_min": float(ks[0]), "k_max": float(ks[-1]), "points": len(ks),
        "series": series.to_dict(),
        "exponent_estimate": {"alpha": est.alpha, "log_flag": est.log_flag, "beta": est.beta},
        "structure": rep.to_dict(),
        "low_confidence": int(np.sum(s.low_confidence)),
    }
    _write(cfg.output_path, f"{g.id}-sweep.csv", sweep_csv(rows))
    _write(cfg.output_path, f"{g.id}-series.json", dumps(series.to_dict()) + "\n")
    return report, (EXIT_OK if rep.ok else EXIT_STRUCTURE)


def cmd_model_trace(cfg: RunConfig):
    m = md.CP1Model(float(cfg.angle))
    k_min = int(cfg.k_min) if cfg.k_min is not None else 20
    k_max = int(cfg.k_max) if cfg.k_max is not None else 400
    if k_min < 1 or not k_min < k_max:
        raise ConfigError("need 1 <= k_min < k_max")
    ks = np.unique(np.rint(oi.k_grid(k_min, k_max, int(cfg.points_per_decade))).astype(int))
    tol_q = float(cfg.tolerances.get("quad", oi.QUAD_TOL))

    def compute():
        rows = []
        for k in ks:
            r = md.trace_quadrature(m, int(k), tol=tol_q)
            rows.append((float(k), r.value, r.error))
        return rows

    payload = {"command": "model-trace", "angle": float(cfg.angle), "k": [int(k) for k in ks],
               "tolerances": {"quad": tol_q}}
    rows, hit = cached_sweep(cfg.cache_dir, payload, compute)
    keep = [(k, v) for k, v, _ in rows if abs(md.character_oracle(m, int(k))) >= 1e-8]
    skipped = [int(k) for k, _, _ in rows if abs(md.character_oracle(m, int(k))) < 1e-8]
    kk = np.array([k for k, _ in keep])
    ch = np.array([md.character_oracle(m, int(k)) for k in kk])
    raw = np.array([v for _, v in keep]) / ch
    gamma = md.calibrate(kk, raw)
    ratio = raw / gamma
    dev = np.abs(ratio - 1)
    C = kk * dev
    spread = float(C.max() / C.min()) if len(C) and C.min() > 0 else math.inf
    decays = bool(len(C) >= 3 and spread <= 1.2)
    per_k = []
    for (k, v, e) in rows:
        c = md.character_oracle(m, int(k))
        item = {"k": int(k), "trace_re": v.real, "trace_im": v.imag,
                "character_re": c.real, "character_im": c.imag, "err": e}
        if int(k) not in skipped:
            i = int(np.flatnonzero(kk == k)[0])
            item.update(ratio_re=ratio[i].real, ratio_im=ratio[i].imag, deviation=float(dev[i]))
        per_k.append(item)
    report = {
        "command": "model-trace",
        "angle": float(cfg.angle),
        "gamma": {"re": gamma.real, "im": gamma.imag},
        "scaled_deviation": {"min": float(C.min()) if len(C) else None,
                             "max": float(C.max()) if len(C) else None},
        "decays_like_1_over_k": decays,
        "skipped_k": skipped,
        "fixed_points": [{"label": r.label, "condition": r.condition.value,
                          "kernel_dim": r.kernel_dim, "theta": r.theta}
                         for r in m.fixed_point_records()],
        "values": per_k,
    }
    _write(cfg.output_path, "model-trace.csv", sweep_csv(rows))
    return report, (EXIT_OK if decays else EXIT_STRUCTURE)


HANDLERS = {"fixed-points": cmd_fixed_points, "hessian": cmd_hessian,
            "expand": cmd_expand, "model-trace": cmd_model_trace}


# ---------------------------------------------------------------- parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tracephase", description="Fixed points, phase Hessians and trace asymptotics.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", help="JSON config file; flags override it")
        sp.add_argument("--out", dest="output_path", help="directory for report files")
        sp.add_argument("--cache", dest="cache_dir", help="sweep cache directory")
        sp.add_argument("--tol-solver", type=float)
        sp.add_argument("--tol-quad", type=float)
        sp.add_argument("--tol-fit", type=float)

    for name in ("fixed-points", "hessian"):
        sp = sub.add_parser(name)
        sp.add_argument("--word")
        sp.add_argument("--word-file")
        sp.add_argument("--level", type=float)
        common(sp)
    sp = sub.add_parser("expand")
    sp.add_argument("--model", dest="model_id")
    sp.add_argument("--k-min", type=float)
    sp.add_argument("--k-max", type=float)
    sp.add_argument("--ppd", dest="points_per_decade", type=int)
    common(sp)
    sp = sub.add_parser("model-trace")
    sp.add_argument("--angle", type=float)
    sp.add_argument("--k-min", type=float)
    sp.add_argument("--k-max", type=float)
    sp.add_argument("--ppd", dest="points_per_decade", type=int)
    common(sp)
    return p


def make_config(args: argparse.Namespace) -> RunConfig:
    data = load_config(args.config) if getattr(args, "config", None) else {}
    data = dict(data)
    data.pop("command", None)
    tols = dict(data.pop("tolerances", {}) or {})
    for name in ("solver", "quad", "fit"):
        v = getattr(args, f"tol_{name}", None)
        if v is not None:
            tols[name] = v
    for key in _FIELDS - {"command", "tolerances"}:
        v = getattr(args, key, None)
        if v is not None:
            data[key] = v
    try:
        cfg = RunConfig(command=args.command, tolerances=tols, **data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg.validate()


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = make_config(args)
        report, code = HANDLERS[cfg.command](cfg)
    except ConfigError as exc:
        print(f"tracephase: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, KeyError) as exc:
        # word syntax, level range and similar input errors
        print(f"tracephase: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TracephaseError as exc:
        print(f"tracephase: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    text = dumps(report) + "\n"
    sys.stdout.write(text)
    _write(cfg.output_path, f"{cfg.command}.json", text)
    return code


if __name__ == "__main__":
    sys.exit(main())
