"""Seismogram processing: band-pass filtering, spectra, response spectra
and Anderson-style goodness-of-fit scores.

Scores use S(p1, p2) = 10 exp(-((p1 - p2)/min(p1, p2))^2), evaluated on
five criteria: energy duration (5-75% of the normalized cumulative
integral of v^2), peak velocity, peak displacement, response-spectral
acceleration and Fourier amplitude spectrum, the last two averaged over
the analysis band.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import signal as sps
from scipy.integrate import cumulative_trapezoid

from .errors import ConfigError

CRITERIA = ("ED", "PGV", "PGU", "RS", "FAS")


@dataclass
class Trace:
    data: np.ndarray
    dt: float
    label: str = ""

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.dt <= 0:
            raise ConfigError(f"trace dt must be positive, got {self.dt}")
        if self.data.size < 2:
            raise ConfigError("trace needs at least 2 samples")

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.data)) * self.dt


def butterworth_bandpass(trace: Trace, f_lo: float, f_hi: float, order: int = 2,
                         zero_phase: bool = False) -> Trace:
    """Butterworth band-pass, causal single pass by default.

    zero_phase runs the filter forward and backward (squared magnitude
    response, no phase shift).
    """
    nyq = 0.5 / trace.dt
    if not 0 < f_lo < f_hi < nyq:
        raise ConfigError(f"invalid band [{f_lo}, {f_hi}] for Nyquist {nyq}")
    sos = sps.butter(order, [f_lo, f_hi], btype="bandpass", fs=1.0 / trace.dt, output="sos")
    if zero_phase:
        out = sps.sosfiltfilt(sos, trace.data)
    else:
        out = sps.sosfilt(sos, trace.data)
    return Trace(out, trace.dt, trace.label)


def bandpass_gain(f: float, f_lo: float, f_hi: float, dt: float, order: int = 2) -> float:
    """Magnitude response of the designed digital filter at frequency f."""
    sos = sps.butter(order, [f_lo, f_hi], btype="bandpass", fs=1.0 / dt, output="sos")
    _, h = sps.sosfreqz(sos, worN=[f], fs=1.0 / dt)
    return float(np.abs(h[0]))


def fourier_amplitude_spectrum(trace: Trace) -> tuple[np.ndarray, np.ndarray]:
    """One-sided DFT magnitude scaled by dt on the grid 0..Nyquist."""
    amp = np.abs(np.fft.rfft(trace.data)) * trace.dt
    freqs = np.fft.rfftfreq(len(trace.data), trace.dt)
    return freqs, amp


def response_spectrum(trace: Trace, periods: np.ndarray, damping: float = 0.05) -> np.ndarray:
    """Peak absolute acceleration of damped SDOF oscillators driven by the
    input acceleration trace (Newmark average-acceleration integration,
    internally resampled to at least 20 steps per period)."""
    periods = np.asarray(periods, dtype=float)
    out = np.empty(len(periods))
    for i, tp in enumerate(periods):
        dt = trace.dt
        ag = trace.data
        if dt > tp / 20.0:
            n = int(np.ceil(trace.dt * (len(ag) - 1) / (tp / 20.0))) + 1
            tt = np.linspace(0.0, trace.dt * (len(ag) - 1), n)
            ag = np.interp(tt, trace.times, ag)
            dt = tt[1] - tt[0]
        out[i] = _sdof_peak_abs_accel(ag, dt, 2.0 * np.pi / tp, damping)
    return out


def _sdof_peak_abs_accel(ag: np.ndarray, dt: float, omega: float, xi: float) -> float:
    # Newmark, gamma = 1/2, beta = 1/4 (unconditionally stable)
    k = omega * omega
    c = 2.0 * xi * omega
    a1 = 4.0 / dt**2 + 2.0 * c / dt + k
    u = v = 0.0
    a = -ag[0]
    peak = abs(a + ag[0]) * 0.0
    for n in range(1, len(ag)):
        p_eff = -ag[n] + (4.0 / dt**2) * u + (4.0 / dt) * v + a + c * ((2.0 / dt) * u + v)
        u_new = p_eff / a1
        v_new = (2.0 / dt) * (u_new - u) - v
        a_new = (4.0 / dt**2) * (u_new - u) - (4.0 / dt) * v - a
        u, v, a = u_new, v_new, a_new
        peak = max(peak, abs(-c * v - k * u))  # absolute acceleration
    return peak


def energy_duration(trace: Trace, lo: float = 0.05, hi: float = 0.75) -> float:
    """Length of the 5-75% interval of the normalized cumulative integral
    of v^2; 0.0 for a zero-energy trace."""
    cum = cumulative_trapezoid(trace.data**2, dx=trace.dt, initial=0.0)
    if cum[-1] <= 0.0:
        return 0.0
    cum = cum / cum[-1]
    t = trace.times
    return float(np.interp(hi, cum, t) - np.interp(lo, cum, t))


def gof_score(p1: float, p2: float) -> float:
    """Anderson score 10 exp(-((p1-p2)/min(p1,p2))^2), symmetric in p1, p2."""
    if p1 == p2:
        return 10.0
    m = min(p1, p2)
    if m <= 0.0:
        return 0.0
    return 10.0 * float(np.exp(-(((p1 - p2) / m) ** 2)))


def _grid_score(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(a.max(initial=0.0), b.max(initial=0.0))
    if scale <= 0.0:
        return 0.0
    mask = (a > 1e-14 * scale) & (b > 1e-14 * scale)
    if not np.any(mask):
        return 0.0
    m = np.minimum(a[mask], b[mask])
    return float(np.mean(10.0 * np.exp(-(((a[mask] - b[mask]) / m) ** 2))))


@dataclass
class GofRow:
    station: str
    component: str
    scores: dict[str, float]
    flagged: bool = False  # zero-energy trace encountered

    @property
    def mean(self) -> float:
        return float(np.mean([self.scores[c] for c in CRITERIA]))


@dataclass
class GofReport:
    station: str
    rows: list[GofRow] = field(default_factory=list)

    def component_mean(self) -> dict[str, float]:
        return {c: float(np.mean([r.scores[c] for r in self.rows])) for c in CRITERIA}

    @property
    def mean(self) -> float:
        return float(np.mean([r.mean for r in self.rows]))


def anderson_gof(synthetic: Trace, recorded: Trace, band: tuple[float, float],
                 n_periods: int = 15) -> tuple[dict[str, float], bool]:
    """Criterion scores for one velocity-trace pair already band-passed to
    `band` and sampled on a common grid.

    Displacement is integrated and acceleration differentiated from the
    velocities.  Returns (scores, flagged); a zero-energy input flags the
    pair and scores 0 on every criterion.
    """
    if abs(synthetic.dt - recorded.dt) > 1e-12 * recorded.dt or len(synthetic.data) != len(recorded.data):
        raise ConfigError("anderson_gof requires traces on a common time grid")
    e1 = float(np.sum(synthetic.data**2))
    e2 = float(np.sum(recorded.data**2))
    if e1 <= 0.0 or e2 <= 0.0:
        return {c: 0.0 for c in CRITERIA}, True
    f_lo, f_hi = band
    scores: dict[str, float] = {}
    scores["ED"] = gof_score(energy_duration(synthetic), energy_duration(recorded))
    scores["PGV"] = gof_score(float(np.abs(synthetic.data).max()), float(np.abs(recorded.data).max()))
    u1 = cumulative_trapezoid(synthetic.data, dx=synthetic.dt, initial=0.0)
    u2 = cumulative_trapezoid(recorded.data, dx=recorded.dt, initial=0.0)
    scores["PGU"] = gof_score(float(np.abs(u1).max()), float(np.abs(u2).max()))
    periods = np.geomspace(1.0 / f_hi, 1.0 / f_lo, n_periods)
    a1 = Trace(np.gradient(synthetic.data, synthetic.dt), synthetic.dt)
    a2 = Trace(np.gradient(recorded.data, recorded.dt), recorded.dt)
    scores["RS"] = _grid_score(response_spectrum(a1, periods), response_spectrum(a2, periods))
    fr, s1 = fourier_amplitude_spectrum(synthetic)
    _, s2 = fourier_amplitude_spectrum(recorded)
    m = (fr >= f_lo) & (fr <= f_hi)
    scores["FAS"] = _grid_score(s1[m], s2[m])
    return scores, False


def resample_to_common(a: Trace, b: Trace) -> tuple[Trace, Trace]:
    """Linear resampling of both traces onto the finer grid over the
    overlapping duration."""
    dt = min(a.dt, b.dt)
    tmax = min(a.dt * (len(a.data) - 1), b.dt * (len(b.data) - 1))
    t = np.arange(0.0, tmax + 0.5 * dt, dt)
    return (
        Trace(np.interp(t, a.times, a.data), dt, a.label),
        Trace(np.interp(t, b.times, b.data), dt, b.label),
    )
