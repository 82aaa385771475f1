"""Flat ``key = value`` run configuration.

One line per setting, ``#`` starts a comment, no sections and no nesting;
a rendered config parses back to itself, so the manifest a command echoes
is sufficient to rerun it.  Unknown keys are rejected rather than ignored
(silent typos in experiment configs are worse than a hard stop).
"""

from __future__ import annotations

import math
from dataclasses import dataclass


class ConfigError(ValueError):
    pass


def _bool(s: str) -> bool:
    t = s.strip().lower()
    if t in ("true", "1", "yes"):
        return True
    if t in ("false", "0", "no"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


# key, type, default, doc
_SCHEMA = [
    ("seed", int, 0, "master seed; all random streams derive from it"),
    ("out", str, "runs/out", "output directory (the --out flag overrides)"),
    ("data.dir", str, "", "dataset directory; empty means the out directory"),
    ("grid.dim", int, 2, "spatial dimension (1, 2 or 3)"),
    ("grid.n", int, 32, "grid points per axis, power of two"),
    ("grf.omega", float, 10.0 / 3.0, "input covariance (omega I - rho Lap)^-tau"),
    ("grf.rho", float, 1.0 / 30.0, "input covariance Laplacian coefficient"),
    ("grf.tau", float, 2.0, "input covariance exponent, >= 2"),
    ("grf.cutoff", int, 0, "input band cutoff; 0 keeps the full resolved band"),
    ("data.operator", str, "toy", "forward operator: toy | pde"),
    ("toy.cutoff", int, 8, "band cutoff of the toy operator kernel"),
    ("pde.newton_tol", float, 1e-10, "Newton residual tolerance"),
    ("pde.max_newton", int, 50, "Newton iteration cap"),
    ("pde.lin_tol", float, 1e-12, "inner linear-solve tolerance"),
    ("pde.forcing_width", float, math.pi / 8.0, "bump forcing width"),
    ("pde.forcing_amp", float, 1.0, "bump forcing amplitude"),
    ("data.count_train", int, 64, "training sample count"),
    ("data.count_val", int, 16, "validation sample count"),
    ("data.count_test", int, 16, "test sample count"),
    ("data.jacobian", str, "none", "jacobian records: none | full | reduced | coarse"),
    ("data.coarse_n", int, 0, "basis grid for jacobian=coarse; 0 means half the canonical grid"),
    ("data.coarse_native", bool, False, "solve sensitivities on the coarse grid"),
    ("reduction.rank_in", int, 8, "input reduced-basis rank"),
    ("reduction.rank_out", int, 8, "output reduced-basis rank"),
    ("reduction.out_basis", str, "pod", "output basis: pod | kle"),
    ("fno.width", int, 16, "hidden channel count"),
    ("fno.depth", int, 3, "spectral layer count"),
    ("fno.modes", int, 8, "retained Fourier modes per axis"),
    ("fno.grid_n", int, 0, "canonical network grid; 0 means grid.n"),
    ("train.mode", str, "output", "output | reduced | full | mixed-res"),
    ("train.epochs", int, 100, "epoch count (first phase when finetuning)"),
    ("train.batch", int, 8, "minibatch size"),
    ("train.lr", float, 1e-3, "initial learning rate"),
    ("train.lr_decay", float, 0.1, "plateau decay factor"),
    ("train.patience", int, 25, "plateau patience in epochs"),
    ("train.plateau_rel", float, 1e-4, "relative improvement that resets patience"),
    ("train.weight", float, 1.0, "derivative-loss weight"),
    ("train.finetune", int, 0, "extra epochs of the joint phase after warm start"),
    ("train.partition", int, 0, "derivative-sweep block size; 0 = unpartitioned"),
    ("train.optimizer", str, "adam", "adam | lbfgs | gd"),
    ("train.sweep", str, "auto", "derivative accumulation: auto | forward | reverse"),
    ("eval.checkpoint", str, "", "checkpoint path; empty = <out>/checkpoint.difn"),
    ("inverse.forward", str, "fno", "forward map for inversion: fno | toy | pde"),
    ("inverse.method", str, "lbfgs", "optimizer: lbfgs | gd"),
    ("inverse.gtol", float, 1e-6, "gradient-norm stopping tolerance"),
    ("inverse.max_iter", int, 200, "iteration cap"),
    ("inverse.beta", float, 1e-3, "regularization strength"),
    ("inverse.obs_per_axis", int, 5, "observation lattice points per axis"),
    ("inverse.noise_pct", float, 0.01, "additive white-noise level (fraction of RMS)"),
    ("inverse.reg", str, "cm", "regularization norm: cm | l2"),
    ("inverse.warm_start", bool, False, "start from the data-generating field"),
    ("inverse.data", str, "", "observations container; empty = synthesize into out"),
    ("inverse.reference", str, "", "earlier inversion container to compare against"),
    ("report.history", str, "", "history CSV to plot; empty = <out>/history.csv"),
    ("report.metrics", str, "", "metrics CSV to plot, optional"),
    ("report.field", str, "", "container with a 'field' record to render"),
    ("verify.eps_c1", float, 1e-3, "C1 tolerance for clip/absval/identity lemmas"),
    ("verify.eps_regime", float, 1e-2, "regime tolerance for cutoff lemmas"),
    ("verify.radius", float, 2.0, "interval radius R for the lemma checks"),
]

_TYPES = {k: t for k, t, _, _ in _SCHEMA}
_DEFAULTS = {k: d for k, _, d, _ in _SCHEMA}
_DOCS = {k: doc for k, _, _, doc in _SCHEMA}


def _convert(key, raw):
    t = _TYPES[key]
    try:
        if t is bool:
            return _bool(raw)
        if t is int:
            return int(raw, 0) if isinstance(raw, str) else int(raw)
        return t(raw)
    except ValueError as e:
        raise ConfigError(f"bad value for {key}: {e}") from None


@dataclass
class RunConfig:
    values: dict

    def __getitem__(self, key):
        try:
            return self.values[key]
        except KeyError:
            raise ConfigError(f"unknown config key {key!r}") from None

    def set(self, key, value):
        if key not in _TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        self.values[key] = _convert(key, value) if isinstance(value, str) \
            else value

    def render(self) -> str:
        """Re-parseable echo of every resolved setting, schema order."""
        lines = ["# difno run configuration (resolved)"]
        for key, t, _, doc in _SCHEMA:
            v = self.values[key]
            if t is bool:
                s = "true" if v else "false"
            elif t is float:
                s = repr(float(v))
            else:
                s = str(v)
            lines.append(f"{key} = {s}  # {doc}")
        return "\n".join(lines) + "\n"


def default_config() -> RunConfig:
    return RunConfig(dict(_DEFAULTS))


def parse_config_text(text: str, source: str = "<config>") -> RunConfig:
    cfg = default_config()
    seen = set()
    for ln, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{source}:{ln}: expected 'key = value', got {line!r}")
        key, raw = body.split("=", 1)
        key = key.strip()
        raw = raw.strip()
        if key not in _TYPES:
            raise ConfigError(f"{source}:{ln}: unknown config key {key!r}")
        if key in seen:
            raise ConfigError(f"{source}:{ln}: duplicate key {key!r}")
        seen.add(key)
        cfg.values[key] = _convert(key, raw)
    return cfg


def load_config(path) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    return parse_config_text(text, source=str(path))


def describe() -> str:
    """Documentation block: every key with type and default."""
    rows = []
    for key, t, default, doc in _SCHEMA:
        rows.append(f"{key} ({t.__name__}, default {default!r}): {doc}")
    return "\n".join(rows)
