"""Command-line front end: ``svlab <command> [flags]``.

Tables are written as CSV (comma separated, header row, ``\\n`` line ends)
or JSON, with every float printed to 17 significant digits so that output
is byte-stable and re-parses to identical values.  Exit status: 0 on full
success, 2 when some rows failed, 1 on configuration errors.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import os
import sys
import warnings
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from typing import Any, Sequence

from .asymptotics import WeylWindow, action_S0, m_plus, regime, t1_lower_bound
from .errors import DomainError, SvlabError
from .experiments import (
    DiscPolicy,
    overlap_estimate,
    resolvent_experiment,
    scaling_check,
    tunneling_experiment,
    weyl_experiment,
)
from .model import ModelSpec, Problem

__all__ = ["ConfigError", "RunConfig", "main", "run", "parse_args", "format_number", "to_csv", "to_json"]

COMMANDS = ("tunneling", "overlap", "scaling", "resolvent", "weyl", "predict")
TUNNELING_COLUMNS = ("xi", "h", "t0_numeric", "t0_predicted", "ratio", "t1_numeric", "t1_predicted", "regime")
ENV_CONFIG = "SVLAB_CONFIG"
_BOOL_FLAGS = {"normalize-sqrt-h"}


class ConfigError(SvlabError):
    """Invalid command line or configuration file."""


@dataclass
class RunConfig:
    """Validated settings of one CLI invocation."""

    command: str
    model: ModelSpec = ModelSpec.CUBIC
    xi_spec: tuple = ()
    h_spec: tuple = ()
    window: WeylWindow | None = None
    precision: str = "auto"
    mode: str = "numeric"
    normalize_sqrt_h: bool = False
    n_modes: int | None = None
    grid_points: int | None = None
    half_width: float | None = None
    jobs: int = 1
    output_format: str = "csv"
    output_path: str | None = None

    def policy(self) -> DiscPolicy:
        kw: dict[str, Any] = dict(
            precision=self.precision, n_modes=self.n_modes, points=self.grid_points, half_width=self.half_width
        )
        if self.command == "weyl":
            kw["c_modes"] = 4.0
        return DiscPolicy(**kw)


# ------------------------------------------------------------------ formats


def format_number(x: Any) -> str:
    """Deterministic text for a table cell."""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, int):
        return str(x)
    if isinstance(x, float):
        if math.isnan(x):
            return "NaN"
        if math.isinf(x):
            return "Infinity" if x > 0 else "-Infinity"
        return format(x, ".17g")
    return "" if x is None else str(x)


def to_csv(columns: Sequence[str], rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    buf.write(",".join(columns) + "\n")
    for r in rows:
        cells = []
        for c in columns:
            s = format_number(r.get(c))
            if any(ch in s for ch in ',"\n'):
                s = '"' + s.replace('"', '""') + '"'
            cells.append(s)
        buf.write(",".join(cells) + "\n")
    return buf.getvalue()


def _json_value(v: Any) -> str:
    if isinstance(v, float) or isinstance(v, bool) or isinstance(v, int):
        return format_number(v)
    if v is None:
        return "null"
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_json_value(x)}" for k, x in v.items()) + "}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_json_value(x) for x in v) + "]"
    return json.dumps(str(v))


def to_json(obj: Any) -> str:
    """JSON with 17-digit floats; ``NaN``/``Infinity`` as Python's json reads them."""
    return _json_value(obj) + "\n"


# ------------------------------------------------------------------ parsing


def _decimal(text: str, flag: str) -> float:
    try:
        d = Decimal(text.strip())
    except InvalidOperation:
        raise ConfigError(f"--{flag}: not a decimal number: {text!r}") from None
    if not d.is_finite():
        raise ConfigError(f"--{flag}: not finite: {text!r}")
    return float(d)


def parse_values(text: str, flag: str) -> tuple[float, ...]:
    """Parse ``v1,v2,...`` or an inclusive range ``start:stop:step``."""
    text = text.strip()
    if not text:
        raise ConfigError(f"--{flag}: empty value")
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError(f"--{flag}: range must be start:stop:step, got {text!r}")
        for p in parts:
            _decimal(p, flag)
        a, b, s = (Decimal(p.strip()) for p in parts)
        if s == 0 or (b - a) * s < 0:
            raise ConfigError(f"--{flag}: range {text!r} is empty")
        n = int((b - a) / s)
        return tuple(float(a + i * s) for i in range(n + 1))
    return tuple(_decimal(p, flag) for p in text.split(",") if p.strip() or _raise_empty(flag))


def _raise_empty(flag: str) -> bool:
    raise ConfigError(f"--{flag}: empty list entry")


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse exits 2 by default; 2 means partial failure here
        raise ConfigError(message)


def _build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="svlab", description="Singular values of semiclassical fiber operators.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--model", choices=[m.value for m in ModelSpec])
    p.add_argument("--xi")
    p.add_argument("--h")
    p.add_argument("--a")
    p.add_argument("--b")
    p.add_argument("--n-modes", dest="n_modes")
    p.add_argument("--grid-points", dest="grid_points")
    p.add_argument("--half-width", dest="half_width")
    p.add_argument("--precision", choices=["auto", "standard", "extended"])
    p.add_argument("--mode", choices=["numeric", "predicted"])
    p.add_argument("--normalize-sqrt-h", dest="normalize_sqrt_h", action="store_true", default=None)
    p.add_argument("--jobs")
    p.add_argument("--format", dest="output_format", choices=["csv", "json"])
    p.add_argument("--out", dest="output_path")
    p.add_argument("--config")
    return p


_CONFIG_KEYS = {
    "command", "model", "xi", "h", "a", "b", "n-modes", "grid-points", "half-width", "precision",
    "mode", "normalize-sqrt-h", "jobs", "format", "out",
}


def read_config(path: str) -> dict[str, str]:
    """Flat ``key = value`` file; ``#`` starts a comment; keys are long flag names."""
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise ConfigError(f"--config: cannot read {path!r}: {exc.strerror}") from None
    out: dict[str, str] = {}
    for n, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"--config {path}:{n}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        key = key.lstrip("-")
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"--config {path}:{n}: unknown key {key!r}")
        out[key] = val
    return out


def _config_tokens(cfg: dict[str, str]) -> list[str]:
    toks: list[str] = []
    for k, v in cfg.items():
        if k == "command":
            continue
        if k in _BOOL_FLAGS:
            if v.lower() in ("1", "true", "yes", "on"):
                toks.append(f"--{k}")
            elif v.lower() not in ("0", "false", "no", "off"):
                raise ConfigError(f"--{k}: expected a boolean, got {v!r}")
        else:
            toks += [f"--{k}", v]
    return toks


_VALUE_FLAGS = {f"--{k}" for k in _CONFIG_KEYS - _BOOL_FLAGS - {"command"}} | {"--config"}


def _glue(tokens: Sequence[str]) -> list[str]:
    # "--xi -2:2:1" would read the range as a flag; pass it as "--xi=-2:2:1"
    out, it = [], iter(tokens)
    for t in it:
        if t in _VALUE_FLAGS:
            nxt = next(it, None)
            out.append(t if nxt is None else f"{t}={nxt}")
        else:
            out.append(t)
    return out


def _int(text: str | None, flag: str, minimum: int) -> int | None:
    if text is None:
        return None
    v = _decimal(text, flag)
    if v != int(v) or v < minimum:
        raise ConfigError(f"--{flag}: expected an integer >= {minimum}, got {text!r}")
    return int(v)


def parse_args(argv: Sequence[str], environ: dict | None = None) -> RunConfig:
    """Merge the config file (``--config`` or ``$SVLAB_CONFIG``) and flags."""
    environ = os.environ if environ is None else environ
    argv = list(argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    path = known.config or environ.get(ENV_CONFIG)
    cfg = read_config(path) if path else {}
    if argv and argv[0] in COMMANDS:
        cmd, rest = argv[0], argv[1:]
    elif "command" in cfg and not any(a in COMMANDS for a in argv if not a.startswith("-")):
        cmd, rest = cfg["command"], argv
    else:
        cmd, rest = (argv[0] if argv else ""), argv[1:]
    ns = _build_parser().parse_args([cmd, *_glue(_config_tokens(cfg)), *_glue(rest)])
    return _validate(ns)


def _validate(ns: argparse.Namespace) -> RunConfig:
    cfg = RunConfig(command=ns.command)
    cfg.model = ModelSpec.coerce(ns.model or "cubic")
    if ns.h is None:
        raise ConfigError("--h is required")
    cfg.h_spec = parse_values(ns.h, "h")
    for h in cfg.h_spec:
        if not 0.0 < h <= 1.0:
            raise ConfigError(f"--h: values must lie in ]0, 1], got {h}")
    if cfg.command == "weyl":
        if ns.a is None or ns.b is None:
            raise ConfigError("weyl needs --a and --b")
        if len(cfg.h_spec) != 1:
            raise ConfigError("--h: weyl takes a single value")
        a, b = _decimal(ns.a, "a"), _decimal(ns.b, "b")
        cfg.window = WeylWindow(a, b, cfg.h_spec[0])
        try:
            cfg.window.validate(cfg.model)
        except DomainError as exc:
            raise ConfigError(f"--a/--b: {exc}") from None
    else:
        if ns.xi is None:
            raise ConfigError("--xi is required")
        cfg.xi_spec = parse_values(ns.xi, "xi")
    cfg.precision = ns.precision or "auto"
    cfg.mode = {"predicted": "predicted_t0", None: "numeric"}.get(ns.mode, ns.mode)
    cfg.normalize_sqrt_h = bool(ns.normalize_sqrt_h)
    cfg.n_modes = _int(ns.n_modes, "n-modes", 1)
    cfg.grid_points = _int(ns.grid_points, "grid-points", 16)
    if ns.half_width is not None:
        cfg.half_width = _decimal(ns.half_width, "half-width")
        if cfg.half_width <= 0:
            raise ConfigError("--half-width must be > 0")
    cfg.jobs = _int(ns.jobs, "jobs", 1) or 1
    cfg.output_format = ns.output_format or ("json" if cfg.command == "weyl" else "csv")
    cfg.output_path = ns.output_path
    return cfg


# -------------------------------------------------------------------- run


def _err(exc: Exception) -> str:
    return f"{type(exc).__name__}: {exc}"


def _run_tunneling(cfg: RunConfig):
    rows = tunneling_experiment(cfg.model, cfg.xi_spec, cfg.h_spec, cfg.policy(), jobs=cfg.jobs)
    recs = [dict(zip(TUNNELING_COLUMNS, (r.xi, r.h, r.t0_numeric, r.t0_predicted, r.ratio, r.t1_numeric,
                                         r.t1_predicted, r.regime))) for r in rows]
    if cfg.output_format == "json":
        for rec, r in zip(recs, rows):
            rec["error"] = r.error
    failures = [f"xi={r.xi!r} h={r.h!r}: {r.error}" for r in rows if r.error]
    ok = [r for r in rows if r.error is None and r.ratio == r.ratio]
    summary = f"tunneling: {len(rows) - len(failures)}/{len(rows)} rows ok"
    if ok:
        summary += f"; ratio range [{min(r.ratio for r in ok):.6g}, {max(r.ratio for r in ok):.6g}]"
    return TUNNELING_COLUMNS, recs, failures, summary


def _run_overlap(cfg: RunConfig):
    cols = ("xi", "h", "overlap", "t0_predicted", "S0")
    recs, failures = [], []
    for xi in cfg.xi_spec:
        for h in cfg.h_spec:
            rec = dict(xi=xi, h=h, overlap=math.nan, t0_predicted=math.nan, S0=math.nan)
            try:
                P = Problem(cfg.model, xi, h)
                rec["S0"] = action_S0(cfg.model, xi)
                rec["t0_predicted"] = m_plus(P).value
                rec["overlap"] = overlap_estimate(P)
            except SvlabError as exc:
                failures.append(f"xi={xi!r} h={h!r}: {_err(exc)}")
            recs.append(rec)
    return cols, recs, failures, f"overlap: {len(recs) - len(failures)}/{len(recs)} rows ok"


def _run_scaling(cfg: RunConfig):
    cols = ("xi", "h", "max_rel_dev", "t0_lhs", "t0_rhs_scaled")
    recs, failures = [], []
    for xi in cfg.xi_spec:
        for h in cfg.h_spec:
            rec = dict(xi=xi, h=h, max_rel_dev=math.nan, t0_lhs=math.nan, t0_rhs_scaled=math.nan)
            try:
                rep = scaling_check(xi, h, cfg.policy())
                rec.update(max_rel_dev=rep.max_rel_dev, t0_lhs=rep.lhs.values[0], t0_rhs_scaled=rep.rhs_scaled[0])
            except SvlabError as exc:
                failures.append(f"xi={xi!r} h={h!r}: {_err(exc)}")
            recs.append(rec)
    devs = [r["max_rel_dev"] for r in recs if r["max_rel_dev"] == r["max_rel_dev"]]
    summary = f"scaling: {len(devs)}/{len(recs)} rows ok"
    if devs:
        summary += f"; max relative deviation {max(devs):.3g}"
    return cols, recs, failures, summary


def _run_resolvent(cfg: RunConfig):
    cols = ("xi", "h", "t0_numeric", "bound", "inverse_bound", "satisfies", "empirical_C")
    recs, failures, cmax = [], [], []
    for h in cfg.h_spec:
        rep = resolvent_experiment(h, cfg.xi_spec, cfg.policy(), model=cfg.model, jobs=cfg.jobs)
        for r in rep.rows:
            recs.append({c: getattr(r, c) for c in cols})
            if r.error:
                failures.append(f"xi={r.xi!r} h={r.h!r}: {r.error}")
        cmax.append(rep.max_empirical_C)
    return cols, recs, failures, f"resolvent: {len(recs) - len(failures)}/{len(recs)} rows ok; max C {max(cmax):.6g}"


def _run_weyl(cfg: RunConfig):
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        rep = weyl_experiment(
            cfg.model, cfg.window, cfg.mode, cfg.policy(), normalize_sqrt_h=cfg.normalize_sqrt_h, jobs=cfg.jobs
        )
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    rec = dict(
        counted=rep.counted, predicted=rep.predicted, discrepancy=rep.discrepancy, a=rep.window.a, b=rep.window.b,
        h=rep.window.h, mode=rep.mode, normalize_sqrt_h=rep.normalize_sqrt_h, xi_grid_size=rep.xi_grid_size,
        skipped=rep.skipped, ambiguous=rep.ambiguous, csv21_ok=rep.csv21_ok,
        fibers=[[x, t] for x, t in rep.fibers], failed=[[x, m] for x, m in rep.failed],
    )
    failures = [f"xi={x!r}: {m}" for x, m in rep.failed]
    cols = ("counted", "predicted", "discrepancy", "a", "b", "h", "mode", "xi_grid_size", "skipped", "ambiguous")
    summary = f"weyl: counted {rep.counted}, predicted {rep.predicted:.6g}, discrepancy {rep.discrepancy:.6g}"
    return cols, [rec], failures, summary


def _run_predict(cfg: RunConfig):
    cols = ("xi", "h", "S0", "t0_predicted", "t1_predicted", "regime")
    recs, failures = [], []
    for xi in cfg.xi_spec:
        for h in cfg.h_spec:
            rec = dict(xi=xi, h=h, S0=math.nan, t0_predicted=math.nan, t1_predicted=math.nan, regime="")
            try:
                P = Problem(cfg.model, xi, h)
                rec.update(regime=regime(P), t1_predicted=t1_lower_bound(P))
                rec["S0"] = action_S0(cfg.model, xi)
                rec["t0_predicted"] = m_plus(P).value
            except SvlabError as exc:
                failures.append(f"xi={xi!r} h={h!r}: {_err(exc)}")
            recs.append(rec)
    r0 = recs[0]
    summary = f"predict: m_plus = {format_number(r0['t0_predicted'])}, S0 = {format_number(r0['S0'])}"
    return cols, recs, failures, summary


_RUNNERS = dict(
    tunneling=_run_tunneling, overlap=_run_overlap, scaling=_run_scaling,
    resolvent=_run_resolvent, weyl=_run_weyl, predict=_run_predict,
)


def run(cfg: RunConfig, stdout=None, stderr=None) -> int:
    """Execute ``cfg``, write the table and a one-line summary; return the exit code."""
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    cols, recs, failures, summary = _RUNNERS[cfg.command](cfg)
    if cfg.output_format == "json":
        text = to_json(recs[0] if cfg.command == "weyl" else recs)
    else:
        text = to_csv(cols, recs)
    if cfg.output_path:
        with open(cfg.output_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        print(summary, file=stdout)
    else:
        stdout.write(text)
        print(summary, file=stderr)
    for f in failures:
        print(f"failed: {f}", file=stderr)
    return 2 if failures else 0


def main(argv: Sequence[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg = parse_args(argv)
    except ConfigError as exc:
        print(f"svlab: configuration error: {exc}", file=sys.stderr)
        return 1
    try:
        return run(cfg)
    except ConfigError as exc:
        print(f"svlab: configuration error: {exc}", file=sys.stderr)
        return 1
    except SvlabError as exc:
        print(f"svlab: {_err(exc)}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
