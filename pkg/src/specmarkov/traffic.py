"""Binary primary-user traffic traces: synthesis, thresholding and file I/O.

A trace is a sequence of slot states, 1 for an active PU and 0 for idle.
Two newline-delimited text formats are supported:

``binary-lines``
    one ``0``/``1`` token per line.
``csv-energy``
    one decimal energy level per line (comma-separated cells are read in
    row-major order), turned into states by :func:`threshold_energy`.
"""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, TraceFormatError

FORMATS = ("binary-lines", "csv-energy")


@dataclass(frozen=True)
class Trace:
    """Immutable sequence of binary PU states.

    ``slot_duration_ms`` is carried as metadata only.
    """

    states: np.ndarray
    slot_duration_ms: float = 0.5
    name: str = ""

    def __post_init__(self):
        arr = np.array(self.states)
        if arr.ndim != 1 or arr.size == 0:
            raise DataError("a trace needs at least one state")
        if arr.dtype.kind == "f" and not np.all(np.isfinite(arr)):
            raise DataError("trace contains non-finite values")
        if not np.all((arr == 0) | (arr == 1)):
            raise DataError("trace states must be exactly 0 or 1")
        if not self.slot_duration_ms > 0:
            raise DataError("slot_duration_ms must be positive")
        arr = arr.astype(np.uint8)
        arr.setflags(write=False)
        object.__setattr__(self, "states", arr)

    def __len__(self):
        return self.states.shape[0]

    @property
    def activation_fraction(self):
        return float(self.states.mean())

    def window(self, t, length):
        """States ``q_t, q_{t-1}, ..., q_{t-length+1}`` (most recent first)."""
        if t - length + 1 < 0 or t >= len(self):
            raise IndexError(f"window of {length} ending at slot {t} is outside the trace")
        return self.states[t - length + 1:t + 1][::-1].copy()

    def segment(self, start, stop, name=None):
        return Trace(self.states[start:stop], self.slot_duration_ms,
                     self.name if name is None else name)


@dataclass(frozen=True)
class SyntheticSpec:
    block_size: int
    n_slots: int
    start_state: int = 1
    outlier_rate: float = 0.0
    rng_seed: int = 0


@dataclass(frozen=True)
class EnergyTrace:
    levels: np.ndarray
    threshold: float
    name: str = field(default="")


def periodic_states(block_size, n_slots, start_state=1):
    """Blocks of ``block_size`` identical states alternating from ``start_state``."""
    phase = (np.arange(n_slots) // block_size) % 2
    return np.where(phase == 0, start_state, 1 - start_state).astype(np.uint8)


def generate_synthetic(spec, name=None):
    """Periodic block traffic with optional i.i.d. per-slot flips.

    With ``outlier_rate == 0`` the result is exactly periodic with period
    ``2 * block_size``. Otherwise every slot is flipped independently with
    probability ``outlier_rate``, drawn from ``numpy.random.default_rng(rng_seed)``.
    """
    if spec.block_size < 1:
        raise DataError("block_size must be a positive integer")
    if spec.n_slots < 1:
        raise DataError("n_slots must be a positive integer")
    if spec.start_state not in (0, 1):
        raise DataError("start_state must be 0 or 1")
    if not 0.0 <= spec.outlier_rate <= 1.0:
        raise DataError("outlier_rate must lie in [0, 1]")
    states = periodic_states(spec.block_size, spec.n_slots, spec.start_state)
    if spec.outlier_rate > 0:
        rng = np.random.default_rng(spec.rng_seed)
        flips = rng.random(spec.n_slots) < spec.outlier_rate
        states = states ^ flips.astype(np.uint8)
    if name is None:
        name = f"synthetic-B{spec.block_size}-p{spec.outlier_rate:g}-s{spec.rng_seed}"
    return Trace(states, name=name)


def threshold_energy(energy, slot_duration_ms=0.5):
    """Map energy levels to states: active iff ``level > threshold``.

    A level exactly at the threshold is idle.
    """
    levels = np.asarray(energy.levels, dtype=np.float64)
    if levels.ndim != 1 or levels.size == 0:
        raise DataError("energy trace is empty")
    if not np.all(np.isfinite(levels)):
        bad = int(np.flatnonzero(~np.isfinite(levels))[0])
        raise DataError(f"non-finite energy level at slot {bad}")
    if not np.isfinite(energy.threshold):
        raise DataError("threshold must be finite")
    return Trace((levels > energy.threshold).astype(np.uint8),
                 slot_duration_ms=slot_duration_ms, name=energy.name)


def _read_binary_lines(path, lines):
    states = []
    for lineno, raw in enumerate(lines, start=1):
        token = raw.strip()
        if token == "" and lineno == len(lines):
            continue
        if token not in ("0", "1"):
            raise TraceFormatError(path, lineno, token, "expected a single 0 or 1")
        states.append(int(token))
    return states


def _read_energy(path, lines):
    levels = []
    for lineno, raw in enumerate(lines, start=1):
        if raw.strip() == "":
            continue
        for cell in raw.split(","):
            token = cell.strip()
            try:
                value = float(token)
            except ValueError:
                raise TraceFormatError(path, lineno, token, "not a decimal number") from None
            if not np.isfinite(value):
                raise TraceFormatError(path, lineno, token, "energy level is not finite")
            levels.append(value)
    return levels


def load_trace(path, format="binary-lines", threshold=None, name=None):
    """Read a trace file.

    ``format`` is ``"binary-lines"`` or ``"csv-energy"``; the latter needs a
    ``threshold``. Parse failures raise :class:`TraceFormatError` naming the
    line and offending token.
    """
    path = Path(path)
    if format not in FORMATS:
        raise DataError(f"unknown trace format {format!r}; expected one of {FORMATS}")
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from exc
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines = lines[:-1]
    name = path.stem if name is None else name
    if format == "binary-lines":
        states = _read_binary_lines(path, lines)
        if not states:
            raise DataError(f"{path}: no states found")
        return Trace(np.array(states, dtype=np.uint8), name=name)
    if threshold is None:
        raise DataError("csv-energy format requires a threshold")
    levels = _read_energy(path, lines)
    if not levels:
        raise DataError(f"{path}: no energy levels found")
    return threshold_energy(EnergyTrace(np.array(levels), float(threshold), name=name))


def save_trace(trace, path):
    """Write ``trace`` in binary-lines format."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join("1\n" if q else "0\n" for q in trace.states), encoding="utf-8")
    return path
