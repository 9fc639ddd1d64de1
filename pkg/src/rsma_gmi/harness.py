"""Monte Carlo sweeps over SNR and error variance.

Each trial draws one channel estimate from a seed derived from the master
seed and the trial index. That draw is shared by every scheme and SNR point
(and, rescaled, by every error variance), so scheme comparisons are paired.
Per-trial records are sorted before aggregation; the worker count never
changes the output.
"""

from __future__ import annotations

import configparser
import csv
import io
import json
import math
import os
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .baselines import ALL_SCHEMES, run_scheme
from .channel import draw_csi, trial_seed
from .errors import ConfigError, DomainError, OptimizationError
from .optimizer import INITS, OptimizerConfig, run

__all__ = [
    "CSV_HEADER",
    "WORKERS_ENV",
    "SchemeSpec",
    "ExperimentConfig",
    "SweepRow",
    "SweepResult",
    "run_sweep",
    "run_convergence_trace",
    "write_traces",
    "load_config",
    "parse_config",
    "default_config_path",
]

CSV_HEADER = "scheme,no_info,snr_db,sigma_e2,mean_sum_rate,stderr,mean_iters,failures,n_trials"
WORKERS_ENV = "RSMA_GMI_WORKERS"
SIGMA_N2 = 1.0


@dataclass(frozen=True)
class SchemeSpec:
    name: str
    no_info: bool = False

    def __post_init__(self):
        if self.name not in ALL_SCHEMES:
            raise DomainError(f"unknown scheme {self.name!r}; expected one of {ALL_SCHEMES}")

    @property
    def label(self) -> str:
        return f"{self.name}/no_info" if self.no_info else self.name


@dataclass(frozen=True)
class ExperimentConfig:
    nt: int
    k_users: int
    snr_db_list: tuple
    sigma_e2_list: tuple
    n_trials: int
    master_seed: int
    schemes: tuple
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    output_path: str | None = None
    output_format: str = "csv"
    workers: int | None = None
    converge_pairs: tuple = ((2, 2), (2, 3), (3, 2), (3, 3))
    converge_snr_db: float = 20.0
    converge_sigma_e2: float = 0.1

    def __post_init__(self):
        if self.nt < 1 or self.k_users < 1:
            raise DomainError("nt and k_users must be positive")
        if not self.snr_db_list or not self.sigma_e2_list or not self.schemes:
            raise DomainError("snr_db_list, sigma_e2_list and schemes must be nonempty")
        if self.n_trials < 1:
            raise DomainError("n_trials must be at least 1")
        for s in self.sigma_e2_list:
            if not 0.0 <= s < 1.0:
                raise DomainError(f"sigma_e2 values must lie in [0, 1), got {s}")
        if self.output_format not in ("csv", "jsonl"):
            raise DomainError(f"output format must be csv or jsonl, got {self.output_format!r}")

    def p_t(self, snr_db: float) -> float:
        return SIGMA_N2 * 10.0 ** (snr_db / 10.0)


@dataclass(frozen=True)
class SweepRow:
    scheme: str
    no_info: bool
    snr_db: float
    sigma_e2: float
    mean_sum_rate: float
    stderr: float
    mean_iters: float
    failures: int
    n_trials: int

    def fields(self) -> list[str]:
        return [
            self.scheme,
            "1" if self.no_info else "0",
            _fmt(self.snr_db),
            _fmt(self.sigma_e2),
            _fmt(self.mean_sum_rate),
            _fmt(self.stderr),
            _fmt(self.mean_iters),
            str(self.failures),
            str(self.n_trials),
        ]


@dataclass
class SweepResult:
    """Aggregated rows plus the per-trial sum-rates they were computed from.

    ``samples[(label, snr_db, sigma_e2)]`` is an array over trials with NaN
    marking failed trials.
    """

    rows: list
    samples: dict

    def row(self, scheme: str, snr_db: float, sigma_e2: float, no_info: bool = False) -> SweepRow:
        for r in self.rows:
            if (r.scheme, r.no_info, r.snr_db, r.sigma_e2) == (scheme, no_info, snr_db, sigma_e2):
                return r
        raise KeyError((scheme, no_info, snr_db, sigma_e2))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(CSV_HEADER + "\n")
        w = csv.writer(buf, lineterminator="\n")
        for r in self.rows:
            w.writerow(r.fields())
        return buf.getvalue()

    def to_jsonl(self) -> str:
        names = CSV_HEADER.split(",")
        lines = []
        for r in self.rows:
            rec = {}
            for name, raw in zip(names, r.fields()):
                if name == "scheme":
                    rec[name] = raw
                elif name == "no_info":
                    rec[name] = raw == "1"
                elif name in ("failures", "n_trials"):
                    rec[name] = int(raw)
                else:
                    rec[name] = float(raw)
            lines.append(json.dumps(rec, allow_nan=True))
        return "\n".join(lines) + "\n"


def _fmt(x: float) -> str:
    return f"{x:.9g}"


def _check_writable(path):
    if path is None:
        return
    with open(path, "w", encoding="utf-8"):
        pass


def _worker_count(cfg: ExperimentConfig) -> int:
    if cfg.workers is not None:
        return max(1, int(cfg.workers))
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def _trial_records(cfg: ExperimentConfig, trial: int) -> list[tuple]:
    """Run every (sigma_e2, snr, scheme) point of one trial."""
    seed = trial_seed(cfg.master_seed, trial)
    opt = replace(cfg.optimizer, rng_seed=trial_seed(cfg.master_seed, trial, 1))
    out = []
    for sigma_e2 in cfg.sigma_e2_list:
        csi = draw_csi(cfg.nt, cfg.k_users, sigma_e2, SIGMA_N2, seed)
        fp = csi.fingerprint()
        for snr_db in cfg.snr_db_list:
            for idx, spec in enumerate(cfg.schemes):
                try:
                    o = run_scheme(csi, cfg.p_t(snr_db), opt, spec.name, spec.no_info)
                    rate, iters = o.rates.r_sum, o.iterations
                except (OptimizationError, DomainError, np.linalg.LinAlgError):
                    rate, iters = math.nan, math.nan
                out.append((idx, snr_db, sigma_e2, trial, rate, iters, fp))
    return out


def _run_trials(n_workers, fn, payload, trials):
    if n_workers == 1 or len(trials) == 1:
        return [fn(payload, t) for t in trials]
    with ProcessPoolExecutor(max_workers=n_workers) as pool:
        return list(pool.map(fn, [payload] * len(trials), trials))


def run_sweep(cfg: ExperimentConfig) -> SweepResult:
    _check_writable(cfg.output_path)
    records = [r for chunk in _run_trials(_worker_count(cfg), _trial_records, cfg, list(range(cfg.n_trials))) for r in chunk]
    records.sort(key=lambda r: r[:4])

    shared = {}
    for idx, snr_db, sigma_e2, trial, _, _, fp in records:
        if shared.setdefault((trial, sigma_e2), fp) != fp:
            raise RuntimeError(f"trial {trial} used different channels across schemes")

    grouped = {}
    for idx, snr_db, sigma_e2, trial, rate, iters, _ in records:
        grouped.setdefault((idx, snr_db, sigma_e2), []).append((rate, iters))

    rows, samples = [], {}
    for idx, spec in enumerate(cfg.schemes):
        for snr_db in cfg.snr_db_list:
            for sigma_e2 in cfg.sigma_e2_list:
                vals = grouped[(idx, snr_db, sigma_e2)]
                rates = np.array([v[0] for v in vals], dtype=float)
                iters = np.array([v[1] for v in vals], dtype=float)
                ok = ~np.isnan(rates)
                n_ok = int(ok.sum())
                mean = float(np.mean(rates[ok])) if n_ok else math.nan
                se = float(np.std(rates[ok], ddof=1) / math.sqrt(n_ok)) if n_ok > 1 else 0.0
                mean_it = float(np.mean(iters[ok])) if n_ok else math.nan
                rows.append(
                    SweepRow(spec.name, spec.no_info, snr_db, sigma_e2, mean, se, mean_it, len(vals) - n_ok, len(vals))
                )
                samples[(spec.label, snr_db, sigma_e2)] = rates

    result = SweepResult(rows, samples)
    if cfg.output_path is not None:
        text = result.to_jsonl() if cfg.output_format == "jsonl" else result.to_csv()
        with open(cfg.output_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return result


def _trace_records(args, trial):
    cfg, pairs = args
    opt_seed = trial_seed(cfg.master_seed, trial, 1)
    p_t = cfg.p_t(cfg.converge_snr_db)
    out = []
    for nt, k in pairs:
        csi = draw_csi(nt, k, cfg.converge_sigma_e2, SIGMA_N2, trial_seed(cfg.master_seed, trial, nt, k))
        res = run(csi, p_t, replace(cfg.optimizer, rng_seed=opt_seed, scheme="RSMA"))
        out.append(((nt, k), trial, list(res.objective_trace), res.converged))
    return out


def run_convergence_trace(cfg: ExperimentConfig, nt_k_pairs=None) -> dict:
    """Per-iteration sub-problem values of the RSMA optimizer.

    Returns ``{(nt, k): [trace_trial_0, trace_trial_1, ...]}``; the SNR and
    error variance come from ``cfg.converge_snr_db`` and
    ``cfg.converge_sigma_e2``.
    """
    pairs = tuple(tuple(p) for p in (nt_k_pairs or cfg.converge_pairs))
    _check_writable(cfg.output_path)
    chunks = _run_trials(_worker_count(cfg), _trace_records, (cfg, pairs), list(range(cfg.n_trials)))
    traces = {p: [] for p in pairs}
    for chunk in chunks:
        for pair, _, trace, _ in chunk:
            traces[pair].append(trace)
    if cfg.output_path is not None:
        write_traces(traces, cfg.output_path, cfg.output_format)
    return traces


def write_traces(traces: dict, path: str, fmt: str = "csv"):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if fmt == "csv":
            fh.write("nt,k,trial,iteration,objective\n")
        for (nt, k), per_trial in traces.items():
            for trial, trace in enumerate(per_trial):
                for it, val in enumerate(trace, start=1):
                    if fmt == "csv":
                        fh.write(f"{nt},{k},{trial},{it},{_fmt(val)}\n")
                    else:
                        rec = dict(nt=nt, k=k, trial=trial, iteration=it, objective=float(_fmt(val)))
                        fh.write(json.dumps(rec) + "\n")


# --------------------------------------------------------------------------
# config files


def default_config_path() -> str:
    return os.path.join(os.path.dirname(__file__), "configs", "fig3.cfg")


def _locate(text: str, section: str, key: str):
    current = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        m = re.match(r"^\[(.+)\]$", s)
        if m:
            current = m.group(1).strip()
            continue
        if current == section and re.match(rf"^{re.escape(key)}\s*[=:]", s):
            return lineno
    return None


def _number_list(raw: str, conv):
    out = []
    for tok in raw.replace("\n", ",").split(","):
        tok = tok.strip()
        if not tok:
            continue
        if ":" in tok:
            start, stop, step = (float(x) for x in tok.split(":"))
            if step <= 0:
                raise ValueError("range step must be positive")
            n = int(math.floor((stop - start) / step + 1e-9)) + 1
            out.extend(conv(start + i * step) for i in range(n))
        else:
            out.append(conv(tok))
    if not out:
        raise ValueError("empty list")
    return tuple(out)


def _schemes(raw: str):
    specs = []
    for tok in raw.replace("\n", ",").split(","):
        tok = tok.strip()
        if not tok:
            continue
        name, _, flag = tok.partition("/")
        name, flag = name.strip().upper(), flag.strip().lower()
        if flag not in ("", "no_info"):
            raise ValueError(f"unknown scheme flag {flag!r} (only 'no_info' is allowed)")
        specs.append(SchemeSpec(name, flag == "no_info"))
    if not specs:
        raise ValueError("no schemes listed")
    return tuple(specs)


def _pairs(raw: str):
    out = []
    for tok in raw.replace("\n", ",").split(","):
        tok = tok.strip().lower()
        if tok:
            nt, _, k = tok.partition("x")
            out.append((int(nt), int(k)))
    if not out:
        raise ValueError("no (nt, k) pairs listed")
    return tuple(out)


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    """Build an :class:`ExperimentConfig` from INI-style text.

    Errors name the offending line and field.
    """
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(str(exc).splitlines()[0], line=getattr(exc, "lineno", None)) from exc
    if not cp.has_section("experiment"):
        raise ConfigError("missing [experiment] section")

    def get(section, key, conv, default=None, required=False):
        if not cp.has_option(section, key):
            if required:
                raise ConfigError("required field is missing", field=f"{section}.{key}")
            return default
        raw = cp.get(section, key)
        try:
            return conv(raw)
        except (ValueError, DomainError) as exc:
            raise ConfigError(
                f"bad value {raw!r}: {exc}", line=_locate(text, section, key), field=f"{section}.{key}"
            ) from exc

    def choice(options):
        def conv(raw):
            raw = raw.strip()
            if raw not in options:
                raise ValueError(f"expected one of {options}")
            return raw

        return conv

    def bounded(conv, lo, hi=None, closed_hi=False):
        def check(raw):
            vals = conv(raw)
            for v in vals if isinstance(vals, tuple) else (vals,):
                if v < lo or (hi is not None and (v > hi if closed_hi else v >= hi)):
                    raise ValueError(f"{v} out of range")
            return vals

        return check

    ex = "experiment"
    base = OptimizerConfig()
    opt_kwargs = dict(
        max_iters=get("optimizer", "max_iters", int, base.max_iters),
        eps=get("optimizer", "eps", float, base.eps),
        n_random=get("optimizer", "n_random", int, base.n_random),
        init=get("optimizer", "init", choice(INITS), base.init),
        tol=get("optimizer", "tol", float, base.tol),
    )
    try:
        optimizer = OptimizerConfig(**opt_kwargs)
    except DomainError as exc:
        raise ConfigError(str(exc), field="optimizer") from exc

    kwargs = dict(
        nt=get(ex, "nt", bounded(int, 1), required=True),
        k_users=get(ex, "k_users", bounded(int, 1), required=True),
        snr_db_list=get(ex, "snr_db", lambda r: _number_list(r, float), required=True),
        sigma_e2_list=get(ex, "sigma_e2", bounded(lambda r: _number_list(r, float), 0.0, 1.0), required=True),
        n_trials=get(ex, "n_trials", bounded(int, 1), required=True),
        master_seed=get(ex, "master_seed", int, 0),
        schemes=get(ex, "schemes", _schemes, required=True),
        workers=get(ex, "workers", int, None),
        optimizer=optimizer,
        output_path=get("output", "path", str.strip, None),
        output_format=get("output", "format", choice(("csv", "jsonl")), "csv"),
        converge_pairs=get("converge", "pairs", _pairs, ExperimentConfig.converge_pairs),
        converge_snr_db=get("converge", "snr_db", float, 20.0),
        converge_sigma_e2=get("converge", "sigma_e2", float, 0.1),
    )
    try:
        return ExperimentConfig(**kwargs)
    except DomainError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return parse_config(text, source=path)
