"""
Reference-frame transforms, waveform references, signal metrics and the
fixed-step integrator shared by the plant and the metrics layer.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence, TypeVar

import numpy as np

from src.errors import InsufficientCrossings, NeverSettles

SQRT3_2 = math.sqrt(3.0) / 2.0
TWO_PI = 2.0 * math.pi

State = TypeVar("State", float, np.ndarray)


@dataclass(frozen=True, slots=True)
class ThreePhase:
    """Phase-domain quantity (volts or amperes)"""
    a: float
    b: float
    c: float

    def __post_init__(self):
        if not all(math.isfinite(x) for x in (self.a, self.b, self.c)):
            raise ValueError(f"ThreePhase components must be finite: {self}")


@dataclass(frozen=True, slots=True)
class TwoAxis:
    """Stationary-frame (alpha, beta) quantity (volts or amperes)"""
    alpha: float
    beta: float

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and math.isfinite(self.beta)):
            raise ValueError(f"TwoAxis components must be finite: {self}")

    def __add__(self, other: "TwoAxis") -> "TwoAxis":
        return TwoAxis(self.alpha + other.alpha, self.beta + other.beta)

    def __sub__(self, other: "TwoAxis") -> "TwoAxis":
        return TwoAxis(self.alpha - other.alpha, self.beta - other.beta)

    def scaled(self, k: float) -> "TwoAxis":
        return TwoAxis(k * self.alpha, k * self.beta)

    def squared_norm(self) -> float:
        return self.alpha * self.alpha + self.beta * self.beta

    def magnitude(self) -> float:
        return math.hypot(self.alpha, self.beta)

    def to_array(self) -> np.ndarray:
        return np.array([self.alpha, self.beta], dtype=float)

    @staticmethod
    def from_array(values: Sequence[float]) -> "TwoAxis":
        return TwoAxis(float(values[0]), float(values[1]))

    @staticmethod
    def zero() -> "TwoAxis":
        return TwoAxis(0.0, 0.0)


@dataclass(frozen=True, slots=True)
class ReferenceOscillator:
    """Fixed-frequency voltage reference; the microgrid frequency is set here"""
    frequency_hz: float = 60.0
    amplitude: float = 311.0
    phase: float = 0.0

    def __post_init__(self):
        if self.frequency_hz <= 0:
            raise ValueError(f"frequency_hz must be positive, got {self.frequency_hz}")

    def advance(self, dt: float) -> "ReferenceOscillator":
        """Return the oscillator advanced by dt with the phase wrapped to [0, 2π)"""
        phase = math.fmod(self.phase + TWO_PI * self.frequency_hz * dt, TWO_PI)
        if phase < 0:
            phase += TWO_PI
        return ReferenceOscillator(self.frequency_hz, self.amplitude, phase)


def clarke_forward(x: ThreePhase) -> TwoAxis:
    """Amplitude-invariant Clarke transform (abc -> alpha beta)"""
    alpha = (2.0 / 3.0) * (x.a - x.b / 2.0 - x.c / 2.0)
    beta = (2.0 / 3.0) * (SQRT3_2 * (x.b - x.c))
    return TwoAxis(alpha, beta)


def clarke_inverse(x: TwoAxis) -> ThreePhase:
    """Inverse amplitude-invariant Clarke transform, zero-sequence assumed zero"""
    a = x.alpha
    b = -x.alpha / 2.0 + SQRT3_2 * x.beta
    c = -x.alpha / 2.0 - SQRT3_2 * x.beta
    return ThreePhase(a, b, c)


def oscillator_reference(osc: ReferenceOscillator, t: float) -> TwoAxis:
    angle = TWO_PI * osc.frequency_hz * t + osc.phase
    return TwoAxis(osc.amplitude * math.cos(angle), osc.amplitude * math.sin(angle))


def integrate_step(state: State, derivative: Callable[[State], State], dt: float) -> State:
    """Classic fourth-order Runge-Kutta step with inputs held constant over dt"""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    k1 = derivative(state)
    k2 = derivative(state + 0.5 * dt * k1)
    k3 = derivative(state + 0.5 * dt * k2)
    k4 = derivative(state + dt * k3)
    return state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rising_crossings(times: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Linearly interpolated instants where the signal crosses zero upward"""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    prev, curr = values[:-1], values[1:]
    idx = np.nonzero((prev < 0.0) & (curr >= 0.0))[0]
    if idx.size == 0:
        return np.empty(0)
    t0, t1 = times[idx], times[idx + 1]
    v0, v1 = prev[idx], curr[idx]
    return t0 + (t1 - t0) * (-v0) / (v1 - v0)


def estimate_frequency(times: Sequence[float], values: Sequence[float], window: float) -> float:
    """Frequency of the trailing `window` seconds from rising zero crossings"""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.size < 2:
        raise InsufficientCrossings("need at least two samples")
    mask = times >= times[-1] - window
    crossings = rising_crossings(times[mask], values[mask])
    if crossings.size < 2:
        raise InsufficientCrossings(
            f"found {crossings.size} rising crossing(s) in a {window:.4f} s window"
        )
    return (crossings.size - 1) / (crossings[-1] - crossings[0])


def settling_time(times: Sequence[float], values: Sequence[float],
                  step_time: float, band_pct: float = 2.0) -> float:
    """Time after step_time beyond which the signal stays within ±band_pct of its final value.

    The final value is the mean of the last 10% of the trace.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.size == 0 or times[-1] <= step_time:
        raise ValueError("trace must extend beyond step_time")
    tail = max(1, int(math.ceil(0.1 * times.size)))
    final = float(np.mean(values[-tail:]))
    band = abs(final) * band_pct / 100.0

    after = times >= step_time
    t_after = times[after]
    outside = np.abs(values[after] - final) > band
    if not outside.any():
        return 0.0
    last_out = int(np.nonzero(outside)[0][-1])
    if last_out == t_after.size - 1:
        raise NeverSettles(f"signal still outside the ±{band_pct}% band at the end of the trace")
    return float(t_after[last_out + 1] - step_time)


class LowPassFilter:
    """First-order low-pass filter with an exact discrete pole"""

    def __init__(self, cutoff_hz: float, dt: float, initial: float = 0.0):
        if cutoff_hz <= 0 or dt <= 0:
            raise ValueError("cutoff_hz and dt must be positive")
        self.alpha = 1.0 - math.exp(-TWO_PI * cutoff_hz * dt)
        self.value = initial

    def update(self, x: float) -> float:
        self.value += self.alpha * (x - self.value)
        return self.value


@dataclass
class FrequencyTracker:
    """Sliding-window zero-crossing frequency estimate over a sampled voltage"""
    window: float
    sample_period: float
    _times: np.ndarray = field(init=False, repr=False)
    _values: np.ndarray = field(init=False, repr=False)
    _count: int = field(default=0, init=False)
    _next: int = field(default=0, init=False)

    def __post_init__(self):
        size = int(math.ceil(self.window / self.sample_period)) + 2
        self._times = np.zeros(size)
        self._values = np.zeros(size)

    def push(self, t: float, value: float):
        self._times[self._next] = t
        self._values[self._next] = value
        self._next = (self._next + 1) % self._times.size
        self._count = min(self._count + 1, self._times.size)

    def frequency(self) -> float:
        """Current estimate, or nan while the window holds fewer than two rising crossings"""
        if self._count < self._times.size:
            times, values = self._times[:self._count], self._values[:self._count]
        else:
            times = np.concatenate((self._times[self._next:], self._times[:self._next]))
            values = np.concatenate((self._values[self._next:], self._values[:self._next]))
        try:
            return estimate_frequency(times, values, self.window)
        except InsufficientCrossings:
            return float("nan")


