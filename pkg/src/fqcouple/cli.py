"""Command-line entry point: config parsing, dispatch and result files."""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .channels import ChannelFamily, param_from_entropy
from .coupled import coupled_bp_threshold, coupled_de, coupled_potential
from .de import DEConfig, bp_threshold_single, forward_de, h_fp_upper, potential_single
from .distance import OptConfig, alpha_lower_bound, growth_coupled, zero_coupled
from .ensembles import coupled_spec
from .sim import fer_curve

COMMANDS = ("growth", "zeros", "de-trace", "threshold", "hfp", "coupled", "potential", "fer")


class ConfigError(ValueError):
    pass


# key -> (section, type, default); None default means required
SCHEMA = {
    "command": ("run", str, None),
    "seed": ("run", int, None),
    "workers": ("run", int, 1),
    "out_dir": ("run", str, "out"),
    "q": ("ensemble", int, 4),
    "d_l": ("ensemble", int, 3),
    "d_r": ("ensemble", int, 6),
    "w": ("ensemble", int, 3),
    "L": ("ensemble", int, 6),
    "kind": ("ensemble", str, "standard"),
    "distance_kind": ("ensemble", str, "weight"),
    "family": ("channel", str, "QSC"),
    "h": ("channel", float, 0.5),
    "h_list": ("channel", str, "0.3,0.4"),
    "starts": ("budget", int, 64),
    "max_iter": ("budget", int, 500),
    "alpha_min": ("budget", float, 0.005),
    "alpha_max": ("budget", float, 0.05),
    "alpha_step": ("budget", float, 0.005),
    "N": ("budget", int, 20000),
    "iters": ("budget", int, 2000),
    "tol": ("budget", float, 2e-6),
    "eps_dec": ("budget", float, 1e-4),
    "bisect_tol": ("budget", float, 1e-3),
    "fp_tol": ("budget", float, 2e-3),
    "rx_points": ("budget", int, 32),
    "refit_period": ("budget", int, 0),
    "mixture_K": ("budget", int, 3),
    "n_pos": ("budget", int, 5000),
    "coupled_threshold": ("budget", int, 0),
    "n": ("budget", int, 60),
    "trials": ("budget", int, 100),
    "bp_iters": ("budget", int, 100),
}
POSITIVE = {"workers", "starts", "max_iter", "N", "iters", "tol", "eps_dec", "bisect_tol", "fp_tol",
            "mixture_K", "n_pos", "n", "trials", "bp_iters", "alpha_step", "q", "d_l", "d_r", "w", "L"}


@dataclass
class RunConfig:
    values: dict = field(default_factory=dict)

    def __getattr__(self, k):
        try:
            return self.values[k]
        except KeyError:
            raise AttributeError(k) from None

    def to_ini(self) -> str:
        cp = configparser.ConfigParser()
        cp.optionxform = str
        for k, (sec, _, _) in SCHEMA.items():
            if not cp.has_section(sec):
                cp.add_section(sec)
            cp.set(sec, k, repr(self.values[k]) if isinstance(self.values[k], float) else str(self.values[k]))
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()


def _coerce(k, raw):
    typ = SCHEMA[k][1]
    try:
        return typ(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"{k}: cannot parse {raw!r} as {typ.__name__}") from None


def parse_config(path=None, flags: dict | None = None, text: str | None = None) -> RunConfig:
    """Merge defaults, an optional INI file and flag overrides; validate the result."""
    raw = {}
    if path is not None or text is not None:
        cp = configparser.ConfigParser()
        cp.optionxform = str
        try:
            if text is not None:
                cp.read_string(text)
            elif not cp.read(path):
                raise ConfigError(f"cannot read config file {path}")
        except configparser.Error as exc:
            raise ConfigError(f"malformed config: {exc}") from None
        for sec in cp.sections():
            for k, v in cp.items(sec):
                if k not in SCHEMA:
                    raise ConfigError(f"{sec}.{k}: unknown key")
                if SCHEMA[k][0] != sec:
                    raise ConfigError(f"{sec}.{k}: key belongs in section [{SCHEMA[k][0]}]")
                raw[k] = v
    for k, v in (flags or {}).items():
        if v is not None:
            if k not in SCHEMA:
                raise ConfigError(f"{k}: unknown key")
            raw[k] = v
    vals = {}
    for k, (_, _, default) in SCHEMA.items():
        if k in raw:
            vals[k] = _coerce(k, raw[k])
        elif default is None:
            raise ConfigError(f"{k}: required")
        else:
            vals[k] = default
    if vals["command"] not in COMMANDS:
        raise ConfigError(f"command: must be one of {', '.join(COMMANDS)}")
    for k in POSITIVE:
        if vals[k] <= 0:
            raise ConfigError(f"{k}: must be positive")
    if vals["kind"] not in ("standard", "improved", "single_L"):
        raise ConfigError("kind: must be standard, improved or single_L")
    if vals["distance_kind"] not in ("weight", "stopping"):
        raise ConfigError("distance_kind: must be weight or stopping")
    if vals["family"] not in ("QSC", "QPEC2"):
        raise ConfigError("family: must be QSC or QPEC2")
    return RunConfig(vals)


def _spec(c):
    return coupled_spec(c.q, c.d_l, c.d_r, c.w, c.L, c.kind)


def _de_cfg(c):
    return DEConfig(N=c.N, max_iters=c.iters, tol=c.tol, eps_dec=c.eps_dec, bisect_tol=c.bisect_tol,
                    fp_tol=c.fp_tol, rx_points=c.rx_points, refit_period=c.refit_period,
                    mixture_K=c.mixture_K, seed=c.seed)


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for r in rows:
            wr.writerow([repr(r[h]) if isinstance(r[h], float) else r[h] for h in header])


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if hasattr(x, "item"):
        return x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return x


def run(c: RunConfig) -> dict:
    out = Path(c.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fam = ChannelFamily(c.family, c.q)
    res: dict = {}
    if c.command == "growth":
        spec = _spec(c)
        opt = OptConfig(starts=c.starts, max_iter=c.max_iter, seed=c.seed)
        rows = []
        a = c.alpha_min
        while a <= c.alpha_max + 1e-12:
            ev = growth_coupled(spec, a, c.distance_kind, opt)
            rows.append({"alpha": round(a, 12), "g_value": ev.value, "n_starts": ev.starts, "gap": ev.gap})
            a += c.alpha_step
        _write_csv(out / "growth.csv", ["alpha", "g_value", "n_starts", "gap"], rows)
        res = {"rows": len(rows)}
    elif c.command == "zeros":
        spec = _spec(c)
        opt = OptConfig(starts=c.starts, max_iter=c.max_iter, seed=c.seed)
        res = {"spec": spec.as_dict(), "alpha_star": zero_coupled(spec, c.distance_kind, opt),
               "alpha_lb": alpha_lower_bound(spec, c.distance_kind), "kind": c.distance_kind}
    elif c.command == "de-trace":
        rec, rows = forward_de(c.d_l, c.d_r, param_from_entropy(fam, c.h), _de_cfg(c))
        _write_csv(out / "de_trace.csv", ["iter", "H", "B", "P", "E", "Q"], rows)
        res = {"h": c.h, "iterations": rec.iterations, "decoded": rec.decoded, "functionals": rec.functionals,
               "residuals": rec.residuals}
    elif c.command == "threshold":
        res = bp_threshold_single(c.d_l, c.d_r, fam, _de_cfg(c)).to_dict()
    elif c.command == "hfp":
        r = h_fp_upper(c.d_l, c.d_r, fam, _de_cfg(c)).to_dict()
        r["diagnostics"]["shannon"] = c.d_l / c.d_r * fam.max_entropy
        res = r
    elif c.command == "coupled":
        spec = _spec(c)
        cfg = _de_cfg(c)
        st, decoded, iters, rows = coupled_de(spec, param_from_entropy(fam, c.h), cfg, n_pos=c.n_pos, trace=True)
        _write_csv(out / "coupled.csv", ["iter", "position", "H", "E"], rows)
        res = {"h": c.h, "decoded": decoded, "iterations": iters}
        if c.coupled_threshold:
            res["threshold"] = coupled_bp_threshold(spec, fam, cfg, n_pos=c.n_pos).to_dict()
    elif c.command == "potential":
        cfg = _de_cfg(c)
        ch = param_from_entropy(fam, c.h)
        rec, _ = forward_de(c.d_l, c.d_r, ch, cfg, trace=False)
        U, se = potential_single(rec.population, ch, c.d_l, c.d_r, cfg)
        res = {"h": c.h, "U_s": U, "std_error": se, "forward_decoded": rec.decoded}
        spec = _spec(c)
        st, _, _, _ = coupled_de(spec, ch, cfg, n_pos=c.n_pos)
        Uc, sec = coupled_potential(st, spec, ch, cfg)
        res.update(U_c=Uc, U_c_std_error=sec)
    elif c.command == "fer":
        hs = [float(x) for x in c.h_list.split(",") if x.strip()]
        spec = _spec(c)
        rows = fer_curve(spec, spec.feasible_n(c.n), fam, hs, c.trials, c.seed, c.bp_iters, workers=c.workers)
        _write_csv(out / "fer.csv", ["h", "trials", "FER", "SER", "ci_lo", "ci_hi"], rows)
        res = {"n": spec.feasible_n(c.n), "rows": len(rows)}
    return res


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fqcouple", description=__doc__)
    ap.add_argument("command", nargs="?", choices=COMMANDS)
    ap.add_argument("--config")
    for k, (_, typ, _) in SCHEMA.items():
        if k != "command":
            ap.add_argument("--" + k.replace("_", "-"), dest=k, type=str, default=None)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    flags = {k: v for k, v in vars(args).items() if k != "config"}
    t0 = time.time()
    try:
        cfg = parse_config(args.config, flags)
        res = run(cfg)
    except Exception as exc:  # report every failure in machine-readable form
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 2
    out = Path(cfg.out_dir)
    (out / "effective_config.ini").write_text(cfg.to_ini())
    payload = {"tool": "fqcouple", "version": __version__, "command": cfg.command, "seed": cfg.seed,
               "config": cfg.values, "wall_clock_s": round(time.time() - t0, 3), "result": _jsonable(res)}
    (out / "results.json").write_text(json.dumps(payload, indent=2, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
