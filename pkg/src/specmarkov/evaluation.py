"""Success-rate-versus-horizon evaluation of trained predictors.

For every sensing position ``t`` (the last sensed slot) and every horizon
``T`` the predictor's hard decision for slot ``t + T`` is compared with the
true state. ``rate(T)`` is the fraction of positions predicted correctly.
"""

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from . import kernels
from .errors import ConfigError, DataError
from .markov import MarkovModel, active_curves, fit, hard_decision
from .statespace import build_smart, code_pattern, encode

PREDICTORS = ("markov", "ft-markov", "mlp")
REPORT_HEADER = ["T", "success_rate", "n_positions"]


@dataclass(frozen=True)
class EvalSpec:
    predictor: str
    sensing: int
    t_max: int
    test_trace: object
    train_trace: object = None
    order: int = None
    stride: int = 1
    allow_same_trace: bool = False

    def __post_init__(self):
        if self.predictor not in PREDICTORS:
            raise ConfigError(f"unknown predictor {self.predictor!r}")
        if self.sensing < 1 or self.t_max < 1 or self.stride < 1:
            raise ConfigError("sensing, t_max and stride must be positive")


@dataclass
class EvalReport:
    name: str
    horizons: np.ndarray
    correct: np.ndarray
    n_positions: int
    brier: np.ndarray = None
    log_loss: np.ndarray = None
    metadata: dict = field(default_factory=dict)

    @property
    def success_rates(self):
        return np.asarray(self.correct, dtype=np.float64) / self.n_positions

    @property
    def mean_success(self):
        return float(self.success_rates.mean())

    def rate(self, horizon):
        return float(self.success_rates[list(self.horizons).index(horizon)])

    def to_csv(self, path=None):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(REPORT_HEADER)
        for T, rate in zip(self.horizons, self.success_rates):
            writer.writerow([int(T), repr(float(rate)), self.n_positions])
        return _emit(buf.getvalue(), path)

    def aux_csv(self, path=None):
        """Probability-quality metrics per horizon: ``T,brier,log_loss``."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["T", "brier", "log_loss"])
        for T, b, ll in zip(self.horizons, self.brier, self.log_loss):
            writer.writerow([int(T), repr(float(b)), repr(float(ll))])
        return _emit(buf.getvalue(), path)

    @classmethod
    def from_csv(cls, path, name=None):
        path = Path(path)
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or rows[0][:3] != REPORT_HEADER:
            raise DataError(f"{path}: not a report CSV (header {rows[0] if rows else None})")
        horizons, correct, n = [], [], None
        for lineno, row in enumerate(rows[1:], start=2):
            try:
                T, rate, count = int(row[0]), float(row[1]), int(row[2])
            except (ValueError, IndexError):
                raise DataError(f"{path}:{lineno}: malformed report row {row}") from None
            n = count
            horizons.append(T)
            correct.append(round(rate * count))
        return cls(name or path.stem, np.array(horizons), np.array(correct), n)


def _emit(text, path):
    if path is not None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    return text


def sensing_positions(n_slots, sensing, t_max, stride=1):
    """Indices of the last sensed slot for every admissible sensing position."""
    last = n_slots - 1 - t_max
    if last < sensing - 1:
        raise DataError(
            f"trace of {n_slots} slots is too short for sensing {sensing} and horizon {t_max}")
    return np.arange(sensing - 1, last + 1, stride)


def sensing_matrix(states, positions, sensing):
    """Rows of sensed vectors, most recent slot first."""
    offsets = np.arange(sensing)
    return np.asarray(states)[positions[:, None] - offsets[None, :]].astype(np.uint8)


def markov_probabilities(model, states, positions, sensing, t_max):
    """Active probabilities, shape ``(len(positions), t_max)``, for a Markov model."""
    if sensing > model.space.order:
        raise ConfigError(
            f"sensing length {sensing} exceeds the model order {model.space.order}")
    codes = kernels.window_codes(np.asarray(states, dtype=np.uint8), sensing)
    codes = codes[positions - (sensing - 1)]
    uniq, inverse = np.unique(codes, return_inverse=True)
    beliefs = np.array([encode(model.space, code_pattern(int(c), sensing)) for c in uniq])
    curves = active_curves(model, beliefs, t_max)
    return curves[inverse.ravel()]


def _same_trace(a, b):
    return a is b or (len(a) == len(b) and np.array_equal(a.states, b.states))


def evaluate(spec, model, name=None):
    """Per-horizon success rates of ``model`` on ``spec.test_trace``."""
    test = spec.test_trace
    if spec.train_trace is not None and not spec.allow_same_trace \
            and _same_trace(spec.train_trace, test):
        raise ConfigError("training and test traces coincide; set allow_same_trace to evaluate anyway")
    states = np.asarray(test.states)
    positions = sensing_positions(states.shape[0], spec.sensing, spec.t_max, spec.stride)

    if spec.predictor == "mlp":
        from .mlp import predict_proba
        probs = predict_proba(model, sensing_matrix(states, positions, spec.sensing), spec.t_max)
    else:
        if not isinstance(model, MarkovModel):
            raise ConfigError(f"predictor {spec.predictor!r} needs a Markov model")
        probs = markov_probabilities(model, states, positions, spec.sensing, spec.t_max)

    horizons = np.arange(1, spec.t_max + 1)
    truth = states[positions[:, None] + horizons[None, :]].astype(np.float64)
    hard = hard_decision(probs)
    correct = np.sum(hard == truth, axis=0).astype(np.int64)
    clipped = np.clip(probs, 1e-12, 1 - 1e-12)
    brier = np.mean((probs - truth) ** 2, axis=0)
    log_loss = -np.mean(truth * np.log(clipped) + (1 - truth) * np.log(1 - clipped), axis=0)
    meta = {
        "predictor": spec.predictor,
        "sensing": spec.sensing,
        "order": spec.order,
        "t_max": spec.t_max,
        "stride": spec.stride,
        "test_trace": getattr(test, "name", ""),
        "train_trace": getattr(spec.train_trace, "name", None),
        "backend": kernels.BACKEND,
    }
    if isinstance(model, MarkovModel):
        meta["model"] = model.meta
    return EvalReport(name or spec.predictor, horizons, correct, int(positions.size),
                      brier, log_loss, meta)


def sweep_L(train, test, order, caps, sensing=None, t_max=150, stride=1, path=None):
    """Rebuild the smart table under each cap in ``caps`` and evaluate.

    ``None`` in ``caps`` means no cap. Returns rows ``(cap, n_states, mean_success)``
    and writes ``L,n_states,mean_success`` CSV when ``path`` is given.
    """
    sensing = order if sensing is None else sensing
    rows = []
    for cap in caps:
        space = build_smart(train, order, cap)
        model = fit(space, train)
        spec = EvalSpec("markov", sensing, t_max, test, train, order=order, stride=stride)
        report = evaluate(spec, model)
        rows.append((cap, space.size, report.mean_success))
    if path is not None:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["L", "n_states", "mean_success"])
        for cap, size, mean in rows:
            writer.writerow(["unlimited" if cap is None else cap, size, repr(mean)])
        _emit(buf.getvalue(), path)
    return rows


def compare(reports, names=None, path=None):
    """Comparison CSV ``T,<name1>,<name2>,...`` of reports sharing horizons."""
    reports = list(reports)
    if not reports:
        raise DataError("nothing to compare")
    names = list(names) if names is not None else [r.name for r in reports]
    if len(names) != len(reports):
        raise DataError("one name per report is required")
    horizons = reports[0].horizons
    for r in reports[1:]:
        if not np.array_equal(r.horizons, horizons):
            raise DataError(f"report {r.name!r} has a different horizon range")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["T", *names])
    for k, T in enumerate(horizons):
        writer.writerow([int(T), *(repr(float(r.success_rates[k])) for r in reports)])
    return _emit(buf.getvalue(), path)


_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2"]


def render_svg(reports, names=None, path=None, title="Prediction success rate",
               width=640, height=400):
    """Self-contained SVG line chart of success rate against horizon."""
    reports = list(reports)
    names = list(names) if names is not None else [r.name for r in reports]
    left, right, top, bottom = 60, 150, 40, 50
    pw, ph = width - left - right, height - top - bottom
    t_lo = min(int(r.horizons.min()) for r in reports)
    t_hi = max(int(r.horizons.max()) for r in reports)
    span = max(t_hi - t_lo, 1)

    def x(T):
        return left + pw * (T - t_lo) / span

    def y(rate):
        return top + ph * (1.0 - rate)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
           f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
           f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>']
    for k in range(6):
        rate = k / 5
        out.append(f'<text x="{left - 6}" y="{y(rate) + 4:.1f}" text-anchor="end">{rate:.1f}</text>')
        out.append(f'<line x1="{left}" y1="{y(rate):.1f}" x2="{left + pw}" y2="{y(rate):.1f}" '
                   f'stroke="#dddddd"/>')
    for k in range(6):
        T = t_lo + span * k / 5
        out.append(f'<text x="{x(T):.1f}" y="{top + ph + 18}" text-anchor="middle">{T:.0f}</text>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{height - 10}" text-anchor="middle">'
               f'prediction horizon T</text>')
    out.append(f'<text x="15" y="{top + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 15 {top + ph / 2:.1f})">success rate</text>')
    for i, (r, name) in enumerate(zip(reports, names)):
        color = _COLORS[i % len(_COLORS)]
        pts = " ".join(f"{x(int(T)):.2f},{y(float(v)):.2f}"
                       for T, v in zip(r.horizons, r.success_rates))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        ly = top + 15 + 18 * i
        out.append(f'<line x1="{left + pw + 10}" y1="{ly}" x2="{left + pw + 30}" y2="{ly}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw + 35}" y="{ly + 4}">{escape(str(name))}</text>')
    out.append("</svg>")
    return _emit("\n".join(out) + "\n", path)
