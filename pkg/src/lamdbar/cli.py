"""Command-line driver: ``lamdbar <command> [--config F] [--out D] [--seed S] [--threads T]``.

Every command writes a ``manifest.json`` next to its artifacts.  The manifest
carries the hash of the resolved configuration and the sha256 of every file
written, and each number in it names the module and operation it came from.
Thread counts are excluded from the hash and never change results.

Exit codes: 0 success, 1 invalid configuration, 2 failed numerical check,
3 internal error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np
import yaml
from threadpoolctl import threadpool_limits

from .exceptions import ConfigError, DomainError, NumericalCheckError

log = logging.getLogger("lamdbar")

COMMANDS = ("lemmas", "partition", "group", "solve", "sweep", "constants", "report")

EXIT_OK, EXIT_CONFIG, EXIT_CHECK, EXIT_INTERNAL = 0, 1, 2, 3

_DEFAULTS = {
    "seed": 0,
    "lemmas": {"samples": 100_000, "n_max": 10},
    "partition": {"n_min": 1, "n_max": 8, "points": 10_000, "regularity_samples": 50},
    "group": {"word_cap": 12, "n_cap": 8},
    "problem": {},
    "solve": {"t": 0.7, "equivariance_word": "a"},
    "sweep": {"t": 0.7, "lipschitz_steps": [0.2, 0.1, 0.05, 0.025], "derivative_steps": [0.1, 0.05, 0.02, 0.01]},
    "report": {"corpus_size": 20, "tail_from": 6},
}


@dataclass
class RunConfig:
    command: str
    seed: int = 0
    sections: dict = field(default_factory=dict)

    @classmethod
    def load(cls, command, path=None, seed=None):
        if command not in COMMANDS:
            raise ConfigError(f"unknown command {command!r}")
        raw = {}
        if path is not None:
            with open(path) as fh:
                text = fh.read()
            raw = (json.loads(text) if path.endswith(".json") else yaml.safe_load(text)) or {}
            if not isinstance(raw, dict):
                raise ConfigError("configuration must be a mapping")
        unknown = set(raw) - set(_DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
        sections = {}
        for key, default in _DEFAULTS.items():
            if key == "seed":
                continue
            merged = dict(default)
            merged.update(raw.get(key) or {})
            sections[key] = merged
        s = raw.get("seed", 0) if seed is None else seed
        if int(s) != s:
            raise ConfigError("seed must be an integer")
        cfg = cls(command, int(s), sections)
        cfg.validate()
        return cfg

    def problem(self):
        from .decksum import ProblemSpec

        params = dict(self.sections["problem"])
        params.setdefault("seed", self.seed)
        try:
            return ProblemSpec(**params)
        except TypeError as exc:
            raise ConfigError(f"bad problem parameters: {exc}") from None

    def validate(self):
        p = self.sections["partition"]
        if not 1 <= p["n_min"] <= p["n_max"]:
            raise ConfigError("partition needs 1 <= n_min <= n_max (rectangles exist for n >= 1)")
        if self.sections["lemmas"]["samples"] < 1:
            raise ConfigError("lemma sample count must be positive")
        spec = self.problem()
        if self.command == "sweep" and spec.action == "boundary" and not spec.s > 2 * (2 + 1):
            raise ConfigError(f"s <= 2(k+1) for boundary action (s={spec.s}, k=2)")
        for key in ("lipschitz_steps", "derivative_steps"):
            if any(d <= 0 for d in self.sections["sweep"][key]):
                raise ConfigError(f"{key} must be positive")

    def to_dict(self):
        return {"command": self.command, "seed": self.seed, **self.sections, "problem": self.problem().to_dict()}

    def hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, default=float).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


class Writer:
    """Collects artifacts and writes them with a manifest."""

    def __init__(self, out, cfg):
        self.out = out
        self.cfg = cfg
        self.files = {}
        self.values = {}
        os.makedirs(out, exist_ok=True)

    def _write(self, name, data):
        path = os.path.join(self.out, name)
        with open(path, "wb") as fh:
            fh.write(data)
        self.files[name] = hashlib.sha256(data).hexdigest()

    def json(self, name, obj):
        obj = {"config_hash": self.cfg.hash(), **obj}
        self._write(name, (json.dumps(_plain(obj), sort_keys=True, indent=2) + "\n").encode())

    def csv(self, name, rows):
        buf = io.StringIO()
        cols = ["config_hash"] + list(rows[0].keys()) if rows else ["config_hash"]
        w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({"config_hash": self.cfg.hash(), **{k: _fmt(v) for k, v in r.items()}})
        self._write(name, buf.getvalue().encode())

    def field(self, name, gf):
        self._write(name, gf.to_bytes({"config_hash": self.cfg.hash()}))

    def record(self, module, operation, values):
        self.values[f"{module}.{operation}"] = values

    def close(self, status):
        manifest = {
            "command": self.cfg.command,
            "config_hash": self.cfg.hash(),
            "config": self.cfg.to_dict(),
            "status": status,
            "artifacts": self.files,
            "values": self.values,
        }
        data = (json.dumps(_plain(manifest), sort_keys=True, indent=2) + "\n").encode()
        with open(os.path.join(self.out, "manifest.json"), "wb") as fh:
            fh.write(data)


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


# --------------------------------------------------------------------------
# commands


def cmd_lemmas(cfg, w, threads):
    from .hyperbolic import verify_disk_lemmas

    p = cfg.sections["lemmas"]
    rep = verify_disk_lemmas(sample_count=int(p["samples"]), seed=cfg.seed, n_max=int(p["n_max"]))
    d = rep.to_dict()
    w.json("lemmas.json", d)
    w.record("hyperbolic_disk", "verify_disk_lemmas", {k: v["n_violations"] for k, v in d["checks"].items()})
    if not rep.passed:
        rep.raise_for_violations()


def cmd_partition(cfg, w, threads):
    from .partition import partition_invariants

    p = cfg.sections["partition"]
    rows = partition_invariants(
        range(int(p["n_min"]), int(p["n_max"]) + 1), int(p["points"]), cfg.seed, int(p["regularity_samples"])
    )
    w.csv("partition.csv", rows)
    worst_sum = max(r["sum_error"] for r in rows)
    worst_overlap = max(r["max_overlap"] for r in rows)
    g = [r["gradient_ratio_max"] for r in rows] + [r["gradient_ratio_min"] for r in rows]
    w.record("partition", "invariants", {"sum_error": worst_sum, "max_overlap": worst_overlap, "gradient_band": max(g) / min(g)})
    if worst_sum > 1e-10 or worst_overlap > 4 or max(g) / min(g) > 4:
        raise NumericalCheckError("partition invariants violated", {"sum": worst_sum, "overlap": worst_overlap})


def cmd_group(cfg, w, threads):
    from .fuchsian import group_report

    p = cfg.sections["group"]
    spec = cfg.problem()
    rep = group_report(int(p["word_cap"]), int(p["n_cap"]), spec.action, cfg.seed)
    rows = [{"n": n, "count": rep["counts"][n], "ratio": rep["ratios"][n]} for n in rep["counts"]]
    w.csv("group_counts.csv", rows)
    w.json("group.json", rep)
    w.record("fuchsian_suspension", "enumerate_deck", {"elements": rep["elements"], "relation_residual": rep["relation_residual"]})
    if rep["relation_residual"] > 1e-10:
        raise NumericalCheckError("octagon relation residual too large", rep["relation_residual"])


def _solver(cfg, threads):
    from .decksum import DeckSumSolver

    return DeckSumSolver.from_spec(cfg.problem(), threads=threads).fit()


def cmd_solve(cfg, w, threads):
    solver = _solver(cfg, threads)
    p = cfg.sections["solve"]
    t = float(p["t"])
    consts = solver.measure_constants()
    leaf = solver.solve(t, constants=consts)
    word = p["equivariance_word"]
    defects = {}
    if solver.spec_.scale != 0:
        defects = {N: solver.equivariance_defect(t, word, N) for N in range(1, solver.spec_.n_max + 1)}
    w.field("u_t.gfld", leaf.u)
    w.field("v_t.gfld", solver.rhs(t))
    w.csv("annulus_norms.csv", [{"n": n, "norm": v} for n, v in sorted(leaf.annulus_norms.items())])
    w.json("solve.json", {"leaf": leaf.to_dict(), "equivariance_word": word, "equivariance_defects": defects})
    w.record("deck_sum_solver", "solve_leaf", {"residual": leaf.residual, "tail_bound": leaf.tail_bound})
    w.record("deck_sum_solver", "equivariance_check", defects)


def cmd_sweep(cfg, w, threads):
    solver = _solver(cfg, threads)
    p = cfg.sections["sweep"]
    t = float(p["t"])
    lip = [{"step": d, "lipschitz": solver.lipschitz_constant(t, t + d)} for d in p["lipschitz_steps"]]
    env = solver.lipschitz_profile(t, t + min(p["lipschitz_steps"]))
    defects, scale = solver.derivative_defects(t, p["derivative_steps"])
    steps = np.array(p["derivative_steps"], dtype=float)
    order = float(np.polyfit(np.log(steps), np.log(defects), 1)[0]) if np.all(defects > 0) else float("inf")
    w.csv("lipschitz.csv", lip)
    w.csv("lipschitz_envelope.csv", [{"n": n, "envelope": v} for n, v in sorted(env.items())])
    w.csv("derivative.csv", [{"step": float(d), "defect": float(e)} for d, e in zip(steps, defects)])
    w.json("sweep.json", {"derivative_norm": scale, "derivative_order": order})
    w.record("deck_sum_solver", "transversal_lipschitz", {"constants": [r["lipschitz"] for r in lip]})
    w.record("deck_sum_solver", "transversal_derivative_fd", {"order": order})


def cmd_constants(cfg, w, threads):
    solver = _solver(cfg, threads)
    rep = solver.measure_constants()
    w.json("constants.json", rep.to_dict())
    w.record("deck_sum_solver", "measure_constants", rep.to_dict())
    vals = [rep.c1, rep.c2, rep.c3, rep.c4]
    if not all(v > 0 and math.isfinite(v) for v in vals):
        raise NumericalCheckError("constants must be positive and finite", vals)


def cmd_report(cfg, w, threads):
    from .decksum import DeckSumSolver, corpus, fitted_ratio, measured_tail

    p = cfg.sections["report"]
    N = int(p["tail_from"])
    rows, norm_rows = [], []
    for i, (spec, t) in enumerate(corpus(int(p["corpus_size"]), cfg.seed)):
        solver = DeckSumSolver.from_spec(spec, threads=threads).fit()
        consts = solver.measure_constants()
        leaf = solver.solve(t, constants=consts)
        rows.append(
            {
                "instance": i,
                "t": t,
                "fitted_ratio": fitted_ratio(leaf.annulus_norms),
                "measured_tail": measured_tail(solver, t, N),
                "predicted_tail": consts.predicted_tail(N, spec.n_max),
                "residual": leaf.residual,
                "equivariance_defect": solver.equivariance_defect(t, "a"),
                "spec_hash": spec.config_hash(),
            }
        )
        for n, v in sorted(leaf.annulus_norms.items()):
            norm_rows.append({"instance": i, "n": n, "norm": v})
    w.csv("corpus.csv", rows)
    w.csv("corpus_annulus_norms.csv", norm_rows)
    w.record("deck_sum_solver", "report", {"worst_ratio": max(r["fitted_ratio"] for r in rows)})


_HANDLERS = {
    "lemmas": cmd_lemmas,
    "partition": cmd_partition,
    "group": cmd_group,
    "solve": cmd_solve,
    "sweep": cmd_sweep,
    "constants": cmd_constants,
    "report": cmd_report,
}


def run(command, config=None, out="out", seed=None, threads=1):
    """Run one command; returns the exit status."""
    try:
        cfg = RunConfig.load(command, config, seed)
    except (ConfigError, DomainError, OSError, yaml.YAMLError, json.JSONDecodeError) as exc:
        log.error("invalid configuration: %s", exc)
        return EXIT_CONFIG
    if threads < 1:
        log.error("invalid configuration: --threads must be >= 1")
        return EXIT_CONFIG
    w = Writer(out, cfg)
    try:
        with threadpool_limits(1):
            _HANDLERS[command](cfg, w, threads)
    except ConfigError as exc:
        log.error("invalid configuration: %s", exc)
        w.close("config-error")
        return EXIT_CONFIG
    except (NumericalCheckError, DomainError) as exc:
        log.error("numerical check failed: %s", exc)
        w.close("check-failed")
        return EXIT_CHECK
    except Exception as exc:  # pragma: no cover - defensive
        log.exception("internal error: %s", exc)
        w.close("internal-error")
        return EXIT_INTERNAL
    w.close("ok")
    return EXIT_OK


def main(argv=None):
    parser = argparse.ArgumentParser(prog="lamdbar", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", default=None, help="YAML or JSON configuration file")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--threads", type=int, default=1)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    return run(args.command, args.config, args.out, args.seed, args.threads)


if __name__ == "__main__":
    sys.exit(main())
