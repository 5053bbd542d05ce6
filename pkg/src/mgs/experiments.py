"""Desk-scale experiments behind the CLI subcommands.

Each experiment takes an :class:`ExperimentConfig` and returns
``(columns, rows)``.  Random draws come from :func:`mgs.parallel.stream_rng`
with fixed stream indices per sweep point, so rows do not depend on the
worker count.  Rows are sorted by the experiment's key columns.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Callable

import numpy as np

from . import tensorfile
from .accum import (INT_STRATEGIES, WideOverflowError, acc_range, make_int_strategy, mgs_fp8_dot,
                    relative_error, sum_kahan, sum_pairwise_fp8, sum_sequential_fp8)
from .data import IntDist, activation_dist, gaussian_fp8, weight_dist
from .fp8 import E4M3_VALUES, REFERENCE_SKIPPABLE, _fields, classify, product_table, skip_census
from .overflow_model import (CltParams, build_transition_matrix, clt_overflow_prob,
                             empirical_pmf, expected_steps_to_overflow,
                             monte_carlo_overflow_probs, product_pmf,
                             simulate_overflow_free_length)
from .parallel import map_chunks, stream_rng
from .quant import QuantParams, derive_params, quantize_array

EXPERIMENTS = ("error-curve", "overflow-prob", "markov-validate", "skip-census",
               "mlp-infer", "dump-table", "make-mlp")
FP8_STRATEGIES = ("sequential", "pairwise", "kahan", "mgs-narrow", "mgs")

# Stream indices at or above this offset are reserved for pmf calibration draws.
_PMF_STREAM = 1 << 30


class ConfigError(ValueError):
    """Invalid experiment configuration; raised before any computation."""


def _ints(v) -> tuple[int, ...]:
    if isinstance(v, str):
        out = []
        for part in v.split(","):
            part = part.strip()
            if ":" in part:
                a, b = part.split(":")
                out.extend(range(int(a), int(b) + 1))
            elif part:
                out.append(int(part))
        return tuple(out)
    return tuple(int(x) for x in v)


def _strs(v) -> tuple[str, ...]:
    if isinstance(v, str):
        return tuple(s.strip() for s in v.split(",") if s.strip())
    return tuple(v)


def _bool(v) -> bool:
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _opt_int(v):
    return None if v in (None, "", "none") else int(v)


def _opt_float(v):
    return None if v in (None, "", "none") else float(v)


_DEFAULT_TRIALS = {"error-curve": 100, "overflow-prob": 100_000, "markov-validate": 20_000}


@dataclass
class ExperimentConfig:
    """Settings shared by all experiments.

    Sequences accept comma lists and inclusive ``a:b`` ranges in config
    files (``acc_bits = 8:12``).  ``None`` fields take per-experiment
    defaults, resolved by :meth:`resolved`.
    """

    experiment: str
    seed: int = 0
    trials: int | None = None
    out: str | None = None
    strategies: tuple[str, ...] = ()
    narrow_bits: int | None = None
    wide_bits: int = 32
    skipping: bool = False
    lengths: tuple[int, ...] = (50, 100, 200, 500, 1000, 2000, 4000)
    ks: tuple[int, ...] = (1, 2, 5, 10, 20, 50, 100)
    acc_bits: tuple[int, ...] = ()
    weight_bits: int = 5
    act_bits: int = 7
    sigma_w: float | None = None
    sigma_x: float | None = None
    weight_point: int | None = None
    act_point: int | None = None
    samples: int = 1_000_000
    model: str | None = None
    hidden: int = 32
    inputs_dim: int = 784
    classes: int = 10
    n_inputs: int = 200

    _CONVERTERS = {
        "seed": int, "trials": _opt_int, "out": lambda v: v or None, "strategies": _strs,
        "narrow_bits": _opt_int, "wide_bits": int, "skipping": _bool, "lengths": _ints,
        "ks": _ints, "acc_bits": _ints, "weight_bits": int, "act_bits": int,
        "sigma_w": _opt_float, "sigma_x": _opt_float, "weight_point": _opt_int,
        "act_point": _opt_int, "samples": int, "model": lambda v: v or None,
        "hidden": int, "inputs_dim": int, "classes": int, "n_inputs": int,
    }

    @classmethod
    def from_mapping(cls, experiment: str, values: dict) -> ExperimentConfig:
        known = {f.name for f in fields(cls)} - {"experiment"}
        kw = {}
        for key, raw in values.items():
            name = key.replace("-", "_")
            if name not in known:
                raise ConfigError(f"unknown config key {key!r}")
            try:
                kw[name] = cls._CONVERTERS[name](raw)
            except (TypeError, ValueError) as e:
                raise ConfigError(f"bad value for {key}: {e}") from None
        cfg = cls(experiment, **kw)
        cfg.validate()
        return cfg

    def resolved(self) -> ExperimentConfig:
        c = ExperimentConfig(**{f.name: getattr(self, f.name) for f in fields(self)})
        if c.trials is None:
            c.trials = _DEFAULT_TRIALS.get(c.experiment, 1)
        if not c.acc_bits:
            c.acc_bits = (tuple(range(8, 19)) if c.experiment == "overflow-prob"
                          else tuple(range(8, 13)))
        if not c.strategies:
            c.strategies = {"error-curve": FP8_STRATEGIES,
                            "mlp-infer": ("wide", "mgs", "clip")}.get(c.experiment, ())
        if c.narrow_bits is None:
            c.narrow_bits = 12 if c.experiment == "mlp-infer" else 16
        return c

    def validate(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        c = self.resolved()
        if c.trials < 1:
            raise ConfigError("trials must be at least 1")
        if not c.lengths or min(c.lengths) < 1:
            raise ConfigError("lengths must be a nonempty list of positive integers")
        if not c.ks or min(c.ks) < 1:
            raise ConfigError("ks must be a nonempty list of positive integers")
        if min(c.acc_bits) < 2 or max(c.acc_bits) > 62:
            raise ConfigError("acc_bits must lie in [2, 62]")
        for name in ("weight_bits", "act_bits"):
            if not 2 <= getattr(c, name) <= 16:
                raise ConfigError(f"{name} must lie in [2, 16]")
        if not 2 <= c.narrow_bits <= 62 or not 2 <= c.wide_bits <= 64:
            raise ConfigError("narrow_bits must lie in [2, 62] and wide_bits in [2, 64]")
        for name in ("sigma_w", "sigma_x"):
            v = getattr(c, name)
            if v is not None and not (v > 0 and math.isfinite(v)):
                raise ConfigError(f"{name} must be positive")
        if c.samples < 1 or c.n_inputs < 1 or min(c.hidden, c.inputs_dim, c.classes) < 1:
            raise ConfigError("sizes must be positive")
        valid = {"error-curve": FP8_STRATEGIES, "mlp-infer": INT_STRATEGIES}.get(c.experiment)
        if valid is not None:
            bad = [s for s in c.strategies if s not in valid]
            if bad:
                raise ConfigError(f"unknown strategies {','.join(bad)}; expected from {','.join(valid)}")
        if c.experiment in ("mlp-infer", "make-mlp") and not c.model:
            raise ConfigError("model directory is required (--model)")
        if c.experiment == "mlp-infer" and "mgs" in c.strategies and c.wide_bits < c.narrow_bits + 8:
            raise ConfigError("wide_bits must be at least narrow_bits + 8 for mgs")

    def weight_distribution(self) -> IntDist:
        if self.weight_point is not None:
            return IntDist("point", self.weight_point, self.weight_point)
        return weight_dist(self.weight_bits, self.sigma_w)

    def activation_distribution(self, signed: bool = False) -> IntDist:
        if self.act_point is not None:
            return IntDist("point", self.act_point, self.act_point)
        if signed:
            return weight_dist(self.act_bits, self.sigma_x)
        return activation_dist(self.act_bits, self.sigma_x)


def read_config_file(path) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror}") from None
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected key=value")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


# ------------------------------------------------------------------ CSV

def format_cell(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    return str(v)


def to_csv(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([format_cell(r[c]) for c in columns])
    return buf.getvalue()


def _sorted(rows, keys):
    return sorted(rows, key=lambda r: tuple(r[k] for k in keys))


# ------------------------------------------------------------ error curve

def _error_curve_job(args):
    length, streams, seed, strategies, skipping = args
    prods = product_table()
    out = {s: [] for s in strategies}
    clips = {s: 0 for s in strategies}
    mismatches = {s: 0 for s in strategies}
    for idx in streams:
        rng = stream_rng(seed, idx)
        w, x = gaussian_fp8(rng, length), gaussian_fp8(rng, length)
        exact = math.fsum((E4M3_VALUES[w] * E4M3_VALUES[x]).tolist())
        terms = [prods[(a << 8) | b] for a, b in zip(w.tolist(), x.tolist())]
        pv = [t.value for t in terms]
        rounded = sum(t.fixed_point for t in terms)
        for s in strategies:
            c = 0
            if s == "sequential":
                r = sum_sequential_fp8(pv)
                v, c = r.value, r.clipped_count
            elif s == "pairwise":
                r = sum_pairwise_fp8(pv)
                v, c = r.value, r.clipped_count
            elif s == "kahan":
                v = sum_kahan(pv)
            else:
                r = mgs_fp8_dot(w, x, skipping=skipping, narrow_only=(s == "mgs-narrow"))
                v, c = r.value, r.clipped_count
            out[s].append(relative_error(v, exact).value)
            clips[s] += c
            mismatches[s] += v != rounded * 2.0**-9
    return length, out, clips, mismatches


def error_curve(cfg: ExperimentConfig):
    """Mean relative error (percent) of FP8 dot-product summation vs length."""
    c = cfg.resolved()
    jobs = [(L, range(i * c.trials, (i + 1) * c.trials), c.seed, c.strategies, c.skipping)
            for i, L in enumerate(c.lengths)]
    rows = []
    for length, errs, clips, mism in map_chunks(_error_curve_job, jobs):
        for s in c.strategies:
            e = np.asarray(errs[s])
            rows.append({"strategy": s, "length": length, "trials": c.trials,
                         "mean_error_pct": float(e.mean()),
                         "median_error_pct": float(np.median(e)),
                         "mean_clip_events": clips[s] / c.trials,
                         "rounded_sum_mismatches": mism[s]})
    cols = ["strategy", "length", "trials", "mean_error_pct", "median_error_pct",
            "mean_clip_events", "rounded_sum_mismatches"]
    return cols, _sorted(rows, ("strategy", "length"))


# ------------------------------------------------------- overflow probability

def overflow_prob(cfg: ExperimentConfig):
    """Normal-approximation overflow probability next to a direct Monte Carlo estimate."""
    c = cfg.resolved()
    wd, xd = c.weight_distribution(), c.activation_distribution(signed=True)
    sw = c.sigma_w if c.sigma_w is not None else wd.sigma
    sx = c.sigma_x if c.sigma_x is not None else xd.sigma
    rows = []
    for i, k in enumerate(c.ks):
        mc = monte_carlo_overflow_probs(wd, xd, k, c.acc_bits, c.trials,
                                        seed=_derive(c.seed, i))
        for a, p in zip(c.acc_bits, mc):
            rows.append({"k": k, "acc_bits": a, "sigma_w": float(sw), "sigma_x": float(sx),
                         "clt_prob": clt_overflow_prob(CltParams(sw, sx, k, a)),
                         "mc_prob": p, "trials": c.trials})
    cols = ["k", "acc_bits", "sigma_w", "sigma_x", "clt_prob", "mc_prob", "trials"]
    return cols, _sorted(rows, ("k", "acc_bits"))


def _derive(seed: int, i: int) -> int:
    # Independent master seed per sweep point: a 63-bit draw from stream i.
    return int(stream_rng(seed, _PMF_STREAM + 1024 + i).integers(0, 2**63))


# --------------------------------------------------------- Markov validation

def markov_validate(cfg: ExperimentConfig):
    """Chain-predicted vs simulated overflow-free dot-product length per accumulator width."""
    c = cfg.resolved()
    wd, xd = c.weight_distribution(), c.activation_distribution()
    pw = empirical_pmf(wd.sample(stream_rng(c.seed, _PMF_STREAM), c.samples), (wd.lo, wd.hi))
    px = empirical_pmf(xd.sample(stream_rng(c.seed, _PMF_STREAM + 1), c.samples), (xd.lo, xd.hi))
    step = product_pmf(pw, px)
    rows = []
    for i, a in enumerate(c.acc_bits):
        rng_ = acc_range(a)
        chain = expected_steps_to_overflow(build_transition_matrix(step, rng_), 0)
        sim = simulate_overflow_free_length(wd, xd, rng_, c.trials, seed=_derive(c.seed, i))
        rows.append({"acc_bits": a, "chain_length": chain, "simulated_length": sim,
                     "rel_diff": abs(chain - sim) / sim,
                     "naive_bits": c.weight_bits + c.act_bits + max(0, math.ceil(math.log2(chain))),
                     "trials": c.trials})
    cols = ["acc_bits", "chain_length", "simulated_length", "rel_diff", "naive_bits", "trials"]
    return cols, _sorted(rows, ("acc_bits",))


# ------------------------------------------------------------- skip census

def skip_census_rows(cfg: ExperimentConfig | None = None):
    rows = []
    for r in skip_census():
        rows.append({"convention": r.convention, "pairs": r.pairs, "skippable": r.skippable,
                     "reference": REFERENCE_SKIPPABLE, "deviation": r.skippable - REFERENCE_SKIPPABLE,
                     "note": r.note})
    cols = ["convention", "pairs", "skippable", "reference", "deviation", "note"]
    return cols, _sorted(rows, ("convention",))


# -------------------------------------------------------------- dump table

def dump_table(cfg: ExperimentConfig | None = None):
    rows = []
    for b in range(256):
        s, e, m = _fields(b)
        rows.append({"pattern": f"0x{b:02X}", "sign": s, "biased_exp": e, "mantissa": m,
                     "value": float(E4M3_VALUES[b]), "class": classify(b)})
    return ["pattern", "sign", "biased_exp", "mantissa", "value", "class"], rows


# -------------------------------------------------------------- tiny MLP

def make_mlp(cfg: ExperimentConfig):
    """Write a seeded synthetic MLP, inputs and teacher labels into ``cfg.model``.

    Weights are ``N(0, 1/fan_in)``, biases ``N(0, 0.1)``, inputs ``N(0, 1)``;
    labels are the argmax of the float network, so a perfect forward pass
    scores 100%.
    """
    c = cfg.resolved()
    rng = stream_rng(c.seed, 0)
    dims = [c.inputs_dim, c.hidden, c.classes]
    d = Path(c.model)
    d.mkdir(parents=True, exist_ok=True)
    layers = []
    for i, (fi, fo) in enumerate(zip(dims, dims[1:])):
        w = (rng.standard_normal((fo, fi)) / math.sqrt(fi)).astype(np.float32)
        b = (0.1 * rng.standard_normal(fo)).astype(np.float32)
        tensorfile.save(d / f"layer{i}_w.mgt", tensorfile.TensorFile("f32", w))
        tensorfile.save(d / f"layer{i}_b.mgt", tensorfile.TensorFile("f32", b))
        layers.append((w.astype(np.float64), b.astype(np.float64)))
    x = rng.standard_normal((c.n_inputs, c.inputs_dim)).astype(np.float32)
    tensorfile.save(d / "inputs.mgt", tensorfile.TensorFile("f32", x))
    labels = np.argmax(_float_forward(layers, x.astype(np.float64)), axis=1)
    (d / "labels.csv").write_text("index,label\r\n" + "".join(
        f"{i},{int(v)}\r\n" for i, v in enumerate(labels)))
    rows = [{"file": p.name, "bytes": p.stat().st_size} for p in sorted(d.iterdir())]
    return ["file", "bytes"], rows


def _float_forward(layers, x):
    for i, (w, b) in enumerate(layers):
        x = x @ w.T + b
        if i < len(layers) - 1:
            x = np.maximum(x, 0.0)
    return x


def load_mlp(model_dir):
    d = Path(model_dir)
    layers = []
    i = 0
    while (d / f"layer{i}_w.mgt").exists():
        w = tensorfile.load(d / f"layer{i}_w.mgt").data.astype(np.float64)
        b = tensorfile.load(d / f"layer{i}_b.mgt").data.astype(np.float64)
        if w.ndim != 2 or b.shape != (w.shape[0],):
            raise tensorfile.TensorFileError(f"layer {i}: bad weight/bias shapes {w.shape}, {b.shape}")
        if layers and layers[-1][0].shape[0] != w.shape[1]:
            raise tensorfile.TensorFileError(f"layer {i}: input width does not match previous layer")
        layers.append((w, b))
        i += 1
    if not layers:
        raise tensorfile.TensorFileError(f"no layer0_w.mgt in {d}")
    x = tensorfile.load(d / "inputs.mgt").data.astype(np.float64)
    if x.ndim != 2 or x.shape[1] != layers[0][0].shape[1]:
        raise tensorfile.TensorFileError(f"inputs shape {x.shape} does not match the first layer")
    labels = None
    if (d / "labels.csv").exists():
        with open(d / "labels.csv", newline="") as f:
            labels = np.array([int(r["label"]) for r in csv.DictReader(f)])
        if labels.size != x.shape[0]:
            raise tensorfile.TensorFileError("labels.csv row count does not match inputs")
    return layers, x, labels


@dataclass
class QuantMlp:
    """Per-tensor symmetric quantization of an MLP with calibrated activation scales."""

    weights: list[tuple[np.ndarray, QuantParams, np.ndarray]]
    act_params: list[QuantParams] = field(default_factory=list)

    @classmethod
    def build(cls, layers, x, weight_bits: int, act_bits: int) -> QuantMlp:
        ws = []
        for w, b in layers:
            p = derive_params(w, weight_bits, symmetric=True)
            ws.append((quantize_array(w, p), p, b))
        acts = []
        h = x
        for i, (w, b) in enumerate(layers):
            acts.append(derive_params(h, act_bits, symmetric=True))
            h = h @ w.T + b
            if i < len(layers) - 1:
                h = np.maximum(h, 0.0)
        return cls(ws, acts)

    def forward(self, x: np.ndarray, dot: Callable[[list[int]], object] | None):
        """Integer forward pass; ``dot=None`` accumulates exactly in float64 (the reference).

        Returns logits and the summed :class:`EventLog` of all dot products.
        """
        from .events import EventLog
        total = EventLog()
        dots = 0
        h = x
        n_layers = len(self.weights)
        for i, ((wq, pw, b), pa) in enumerate(zip(self.weights, self.act_params)):
            xq = quantize_array(h, pa)
            if dot is None:
                z = xq.astype(np.float64) @ wq.T.astype(np.float64)
            else:
                z = np.empty((xq.shape[0], wq.shape[0]))
                wl = wq.tolist()
                for r, row in enumerate(xq.tolist()):
                    for o, wrow in enumerate(wl):
                        res = dot([a * b_ for a, b_ in zip(wrow, row)])
                        z[r, o] = res.exact_fixed_point
                        total = total + res.events
                        dots += 1
            h = pw.scale * pa.scale * z + b
            if i < n_layers - 1:
                h = np.maximum(h, 0.0)
        return h, total, dots


def mlp_infer(cfg: ExperimentConfig):
    """Top-1 agreement of integer strategies with the exactly accumulated quantized network."""
    c = cfg.resolved()
    layers, x, labels = load_mlp(c.model)
    qm = QuantMlp.build(layers, x, c.weight_bits, c.act_bits)
    ref, _, _ = qm.forward(x, None)
    ref_top = np.argmax(ref, axis=1)
    float_top = np.argmax(_float_forward(layers, x), axis=1)
    wide_logits = None
    results = {}
    order = sorted(set(c.strategies) | {"wide"}, key=lambda s: s != "wide")
    for s in order:
        fn = make_int_strategy(s, c.narrow_bits, c.wide_bits)
        try:
            logits, ev, dots = qm.forward(x, fn)
        except (ValueError, WideOverflowError) as e:
            raise RuntimeError(f"strategy {s} failed: {e}") from None
        if s == "wide":
            wide_logits = logits
        results[s] = (logits, ev, dots)
    rows = []
    for s in c.strategies:
        logits, ev, dots = results[s]
        top = np.argmax(logits, axis=1)
        rows.append({
            "strategy": s, "narrow_bits": c.narrow_bits, "inputs": x.shape[0],
            "top1_agreement": float(np.mean(top == ref_top)),
            "float_model_agreement": float(np.mean(top == float_top)),
            "label_accuracy": float(np.mean(top == labels)) if labels is not None else float("nan"),
            "logits_equal_wide": float(np.mean(np.all(logits == wide_logits, axis=1))),
            "mean_narrow_adds": ev.narrow_adds / dots, "mean_wide_adds": ev.wide_adds / dots,
            "mean_flushes": ev.flushes / dots, "mean_clip_events": ev.clip_events / dots,
        })
    cols = ["strategy", "narrow_bits", "inputs", "top1_agreement", "float_model_agreement",
            "label_accuracy", "logits_equal_wide", "mean_narrow_adds", "mean_wide_adds",
            "mean_flushes", "mean_clip_events"]
    return cols, _sorted(rows, ("strategy",))


RUNNERS = {
    "error-curve": error_curve,
    "overflow-prob": overflow_prob,
    "markov-validate": markov_validate,
    "skip-census": skip_census_rows,
    "mlp-infer": mlp_infer,
    "dump-table": dump_table,
    "make-mlp": make_mlp,
}


def run(cfg: ExperimentConfig) -> str:
    cfg.validate()
    cols, rows = RUNNERS[cfg.experiment](cfg)
    return to_csv(cols, rows)
