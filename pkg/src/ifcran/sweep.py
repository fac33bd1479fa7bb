"""
Sweep configuration, grid execution and CSV output.

A sweep is a base scenario, lists of fronthaul capacities and SNRs whose
Cartesian product forms the grid, and the scheme pairs evaluated at every
grid point. Configurations are JSON documents::

    {
      "scenario": {"K": 3, "L": 6, "csir": "global", "rho": 0.05,
                   "trials": 1000, "seed": 0},
      "sweep": {"c_sym": [1, 2, 3, 4, 5, 6], "snr_db": [25]},
      "pairs": ["bt+ml", {"source": "suc", "decoder": "mmse"}],
      "tol": 1e-6,
      "delta": 0.99
    }

``scenario.c_sym`` / ``scenario.snr_db`` may replace the corresponding sweep
list when only one value is wanted. ``output`` and ``threads`` are optional.
"""

from concurrent.futures import ProcessPoolExecutor
import csv
from dataclasses import dataclass, field
import io
import itertools
import json
import logging
import math

import numpy as np

from . import e2e
from .exceptions import ConfigError, ContractError
from .model import CSIR_MODES, Scenario

log = logging.getLogger(__name__)

CSV_SCHEMA_VERSION = 1
CSV_COLUMNS = ("K", "L", "snr_db", "c_sym", "csir", "source", "decoder", "rho", "rho_s", "N",
               "seed", "outage_rate_bits", "mean_rate_bits", "compression_outage_frac")
DEFAULT_TRIALS = 1000

_SCENARIO_KEYS = {"K", "L", "snr_db", "c_sym", "csir", "rho", "rho_s", "trials", "N", "seed"}
_TOP_KEYS = {"scenario", "sweep", "pairs", "output", "threads", "tol", "delta"}


@dataclass
class SweepConfig:
    """A validated sweep.

    ``scenario`` carries the first grid values of ``c_sym`` and ``snr_db``;
    the grid itself is ``c_sym_values x snr_db_values``.
    """

    scenario: Scenario
    c_sym_values: list
    snr_db_values: list
    pairs: list
    output: str | None = None
    threads: int | None = None
    settings: e2e.Settings = field(default_factory=e2e.Settings)

    def grid(self):
        """Scenarios of every grid point, SNR-major."""
        return [self.scenario.with_(snr_db=snr, c_sym=c)
                for snr, c in itertools.product(self.snr_db_values, self.c_sym_values)]

    def to_dict(self):
        s = self.scenario
        out = {
            "scenario": {"K": s.K, "L": s.L, "csir": s.csir, "rho": s.rho, "rho_s": s.rho_s,
                         "trials": s.trials, "seed": s.seed},
            "sweep": {"c_sym": list(self.c_sym_values), "snr_db": list(self.snr_db_values)},
            "pairs": [{"source": p.source, "decoder": p.decoder} for p in self.pairs],
            "tol": self.settings.tol,
            "delta": self.settings.delta,
        }
        if self.output is not None:
            out["output"] = self.output
        if self.threads is not None:
            out["threads"] = self.threads
        return out


def serialize_config(cfg):
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True)


def _number_list(value, path):
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        value = [value]
    if not isinstance(value, list) or not value:
        raise ConfigError(path, "must be a nonempty list of numbers")
    for i, v in enumerate(value):
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise ConfigError(f"{path}[{i}]", f"not a finite number: {v!r}")
    return [float(v) for v in value]


def _parse_pair(item, i, csir):
    path = f"pairs[{i}]"
    if isinstance(item, str):
        if item.count("+") != 1:
            raise ConfigError(path, f"expected 'source+decoder', got {item!r}")
        source, decoder = (t.strip() for t in item.split("+"))
        pair_csir = csir
    elif isinstance(item, dict):
        unknown = set(item) - {"source", "decoder", "csir"}
        if unknown:
            raise ConfigError(f"{path}.{sorted(unknown)[0]}", "unknown field")
        for key in ("source", "decoder"):
            if key not in item:
                raise ConfigError(f"{path}.{key}", "missing required field")
        source, decoder = item["source"], item["decoder"]
        pair_csir = item.get("csir", csir)
        if pair_csir != csir:
            raise ConfigError(f"{path}.csir", f"{pair_csir!r} differs from scenario csir {csir!r}")
    else:
        raise ConfigError(path, "must be a string or an object")
    if source not in e2e.SOURCES:
        raise ConfigError(f"{path}.source", f"unknown scheme {source!r}")
    if decoder not in e2e.DECODERS:
        raise ConfigError(f"{path}.decoder", f"unknown decoder {decoder!r}")
    try:
        return e2e.SchemePair(source, decoder, csir)
    except ContractError as exc:
        raise ConfigError(f"{path}.source", str(exc)) from None


def config_from_dict(doc):
    """Validate a decoded JSON document and fill defaults."""
    if not isinstance(doc, dict):
        raise ConfigError("$", "configuration must be a JSON object")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown field")
    scen = doc.get("scenario")
    if not isinstance(scen, dict):
        raise ConfigError("scenario", "missing required object")
    unknown = set(scen) - _SCENARIO_KEYS
    if unknown:
        raise ConfigError(f"scenario.{sorted(unknown)[0]}", "unknown field")
    for key in ("K", "L"):
        if key not in scen:
            raise ConfigError(f"scenario.{key}", "missing required field")
    sweep = doc.get("sweep", {})
    if not isinstance(sweep, dict):
        raise ConfigError("sweep", "must be an object")
    unknown = set(sweep) - {"c_sym", "snr_db"}
    if unknown:
        raise ConfigError(f"sweep.{sorted(unknown)[0]}", "unknown field")
    axes = {}
    for key in ("c_sym", "snr_db"):
        if key in sweep:
            axes[key] = _number_list(sweep[key], f"sweep.{key}")
        elif key in scen:
            axes[key] = _number_list(scen[key], f"scenario.{key}")
        else:
            raise ConfigError(f"sweep.{key}", "missing: give a sweep list or a scenario value")
    csir = scen.get("csir", "global")
    if csir not in CSIR_MODES:
        raise ConfigError("scenario.csir", f"must be one of {CSIR_MODES}, got {csir!r}")
    if "N" in scen and "trials" in scen:
        raise ConfigError("scenario.N", "give either N or trials")
    trials = scen.get("trials", scen.get("N", DEFAULT_TRIALS))
    for key, val in (("K", scen["K"]), ("L", scen["L"]), ("trials", trials),
                     ("seed", scen.get("seed", 0))):
        if isinstance(val, bool) or not isinstance(val, int):
            raise ConfigError(f"scenario.{key}", f"must be an integer, got {val!r}")
    try:
        scenario = Scenario(K=scen["K"], L=scen["L"], snr_db=axes["snr_db"][0],
                            c_sym=axes["c_sym"][0], csir=csir, rho=scen.get("rho", 0.05),
                            rho_s=scen.get("rho_s"), trials=trials, seed=scen.get("seed", 0))
        for c in axes["c_sym"]:
            scenario.with_(c_sym=c)
    except (ContractError, TypeError) as exc:
        raise ConfigError("scenario", str(exc)) from None
    pairs = doc.get("pairs")
    if not isinstance(pairs, list) or not pairs:
        raise ConfigError("pairs", "must be a nonempty list")
    pairs = [_parse_pair(p, i, csir) for i, p in enumerate(pairs)]
    if len(set(pairs)) != len(pairs):
        raise ConfigError("pairs", "duplicate scheme pair")
    threads = doc.get("threads")
    if threads is not None and (isinstance(threads, bool) or not isinstance(threads, int)
                                or threads < 1):
        raise ConfigError("threads", "must be a positive integer")
    output = doc.get("output")
    if output is not None and not isinstance(output, str):
        raise ConfigError("output", "must be a path string")
    try:
        settings = e2e.Settings(tol=float(doc.get("tol", e2e.DEFAULT_SETTINGS.tol)),
                                delta=float(doc.get("delta", e2e.DEFAULT_SETTINGS.delta)))
    except (ContractError, TypeError, ValueError) as exc:
        raise ConfigError("tol" if "tol" in str(exc) else "delta", str(exc)) from None
    return SweepConfig(scenario, axes["c_sym"], axes["snr_db"], pairs, output, threads,
                       settings)


def parse_config(text):
    """Parse and validate a JSON sweep configuration."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("$", f"invalid JSON: {exc}") from None
    return config_from_dict(doc)


def filter_pairs(cfg, labels):
    """Keep only the pairs named in ``labels`` (``"source+decoder"`` strings)."""
    wanted = [t.strip() for t in labels if t.strip()]
    known = {p.label: p for p in cfg.pairs}
    missing = [w for w in wanted if w not in known]
    if missing:
        raise ConfigError("pairs", f"filter names pairs not in the config: {', '.join(missing)}")
    cfg.pairs = [p for p in cfg.pairs if p.label in wanted]
    return cfg


def _fmt(x):
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".9g")


def run_sweep(cfg, workers=1):
    """Evaluate every (grid point, pair) and return rows sorted by grid then pair.

    Local-CSIR calibrations and trial chunks run as independent tasks; the
    result is identical for any ``workers``.
    """
    points = cfg.grid()
    pairs = sorted(cfg.pairs)
    settings = cfg.settings
    pool = ProcessPoolExecutor(workers) if workers > 1 else None
    try:
        run = pool.map if pool is not None else map
        sources = list(dict.fromkeys(p.source for p in pairs if p.needs_calibration))
        cal_jobs = [(i, src) for i in range(len(points)) for src in sources]
        d_t = [dict() for _ in points]
        results = list(run(e2e._star, [(e2e.calibrate_source, src, points[i], settings)
                                       for i, src in cal_jobs]))
        for (i, src), val in zip(cal_jobs, results):
            d_t[i][src] = val
        n_chunks = 4 * workers if workers > 1 else 1
        jobs, owners = [], []
        for i, s in enumerate(points):
            for chunk in e2e.trial_chunks(s.trials, n_chunks):
                jobs.append((e2e.evaluate_trials, s, pairs, chunk, d_t[i], settings))
                owners.append(i)
        parts = [[] for _ in points]
        for i, part in zip(owners, run(e2e._star, jobs)):
            parts[i].append(part)
    finally:
        if pool is not None:
            pool.shutdown()
    rows = []
    for i, s in enumerate(points):
        rates = np.concatenate([p[0] for p in parts[i]], axis=1)
        outage = np.concatenate([p[1] for p in parts[i]], axis=1)
        for pt in e2e.summarize(s, pairs, rates, outage, d_t[i]):
            rows.append(_row(pt))
            log.info("K=%d L=%d snr=%g c=%g %s: outage rate %.4f", s.K, s.L, s.snr_db, s.c_sym,
                     pt.pair.label, pt.outage_rate)
    rows.sort(key=lambda r: (r["K"], r["L"], r["snr_db"], r["c_sym"], r["csir"], r["source"],
                             r["decoder"]))
    return rows


def _row(pt):
    s = pt.scenario
    return {"K": s.K, "L": s.L, "snr_db": float(s.snr_db), "c_sym": float(s.c_sym),
            "csir": s.csir, "source": pt.pair.source, "decoder": pt.pair.decoder,
            "rho": float(s.rho), "rho_s": float(s.rho_s), "N": s.trials, "seed": s.seed,
            "outage_rate_bits": pt.outage_rate, "mean_rate_bits": pt.mean_rate,
            "compression_outage_frac": pt.compression_outage_frac}


def rows_to_csv(rows):
    """CSV text with the fixed header; numbers at 9 significant digits."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def read_csv(path_or_text):
    """Parse a sweep CSV into a list of dicts with numeric fields converted."""
    text = path_or_text
    if "\n" not in path_or_text:
        with open(path_or_text) as fh:
            text = fh.read()
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
        raise ConfigError("csv", "unexpected header")
    rows = []
    for r in reader:
        for key in ("K", "L", "N", "seed"):
            r[key] = int(r[key])
        for key in ("snr_db", "c_sym", "rho", "rho_s", "outage_rate_bits", "mean_rate_bits",
                    "compression_outage_frac"):
            r[key] = float(r[key])
        rows.append(r)
    return rows
