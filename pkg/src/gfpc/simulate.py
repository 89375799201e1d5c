"""Nonlinear time-domain simulation of the converter against an infinite bus.

Both network representations integrate the same droop and virtual-impedance
filter states with a classical fixed-step 4th-order Runge-Kutta scheme. The
EMT variant keeps the phase-reactor current as a state; the RMS variant
solves the current algebraically each evaluation.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .errors import IncomparableRunsError, NumericalError, UnstableLoopError
from .plant import (
    ControlParams,
    ConverterParams,
    ModelKind,
    OperatingPoint,
    build_closed_loop_tf,
)
from .ratfun import poly_eval, poly_roots

# state magnitude (p.u.) beyond which a run is declared diverged and truncated
DIVERGENCE_LIMIT = 1e3

_EMT_MAX_DT = 1e-4  # resolves the 50 Hz network mode with >= 200 steps/period
_RMS_MAX_DT = 1e-3


@dataclass(frozen=True)
class SimConfig:
    """Fixed-step run description; the reference step is applied to P_ref only."""

    model: ModelKind = ModelKind.EMT
    t_end: float = 1.0
    dt: float = 1e-4
    step_time: float = 0.1
    step_size: float = 0.2
    record_decimation: int = 1

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ValueError("dt must be > 0")
        limit = _EMT_MAX_DT if self.model is ModelKind.EMT else _RMS_MAX_DT
        if self.dt > limit:
            raise ValueError(f"dt = {self.dt} too coarse for {self.model.value}, max {limit}")
        if not self.step_time < self.t_end:
            raise ValueError("step_time must be < t_end")
        if int(self.record_decimation) != self.record_decimation or self.record_decimation < 1:
            raise ValueError("record_decimation must be a positive integer")


@dataclass
class TimeSeries:
    """Sampled trajectories; parallel arrays with strictly increasing time."""

    t: np.ndarray
    p: np.ndarray
    omega_i: np.ndarray
    i_d: np.ndarray
    i_q: np.ndarray
    v_mag: np.ndarray
    delta_theta: np.ndarray
    diverged: bool = False
    t_blowup: float | None = None

    def __post_init__(self):
        n = len(self.t)
        for name in ("p", "omega_i", "i_d", "i_q", "v_mag", "delta_theta"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"channel {name} length mismatch")
        if n > 1 and not np.all(np.diff(self.t) > 0.0):
            raise ValueError("time axis must be strictly increasing")

    def window(self, t0: float, t1: float) -> "TimeSeries":
        """Sub-series with t0 <= t <= t1."""
        m = (self.t >= t0) & (self.t <= t1)
        return TimeSeries(
            t=self.t[m],
            p=self.p[m],
            omega_i=self.omega_i[m],
            i_d=self.i_d[m],
            i_q=self.i_q[m],
            v_mag=self.v_mag[m],
            delta_theta=self.delta_theta[m],
            diverged=self.diverged,
            t_blowup=self.t_blowup,
        )


@dataclass(frozen=True)
class MismatchMetrics:
    """Post-step comparison of two power trajectories."""

    max_abs_dp: float
    rms_dp: float
    settling_time_a: float
    settling_time_b: float


def simulate(params: ConverterParams, ctrl: ControlParams, op: OperatingPoint, cfg: SimConfig) -> TimeSeries:
    """Integrate the nonlinear model from the given operating point.

    EMT states: phase-reactor current (d, q), filter states (d, q), frame
    angle. RMS states: filter states and frame angle, with the current from
    the algebraic network equation
    i (r_c + j omega_i l_c + k_v) = v_set + k_v z - v_g e^{-j(theta_0+dtheta)}.
    A state magnitude beyond DIVERGENCE_LIMIT truncates the run and flags it
    as diverged rather than raising.
    """
    v_set, lc, rc = params.v_set, params.l_c, params.r_c
    w1, wb = params.omega_1, params.omega_b
    kp, kv, wv = ctrl.k_p, ctrl.k_v, ctrl.omega_v
    vg, th0, p0 = op.v_g, op.theta_0, op.p_0

    def p_ref(t):
        return p0 + (cfg.step_size if t >= cfg.step_time else 0.0)

    def terminal(i, z):
        v = v_set - kv * (i - z)
        return v, (v * i.conjugate()).real

    def rms_current(z, dth, wi_guess, pref):
        wi = wi_guess
        rhs = v_set + kv * z - vg * cmath.exp(-1j * (th0 + dth))
        for _ in range(100):
            den = complex(rc + kv, wi * lc)
            if abs(den) < 1e-12:
                raise NumericalError("algebraic network equation is singular", residual=abs(den))
            i = rhs / den
            _, p = terminal(i, z)
            wi_new = w1 + kp * (pref - p)
            if abs(wi_new - wi) <= 1e-13 * max(1.0, abs(wi)):
                return i, wi_new
            wi = wi_new
        raise NumericalError(
            "frequency/current fixed point did not converge", residual=abs(wi_new - wi)
        )

    emt = cfg.model is ModelKind.EMT

    def rhs_emt(t, y):
        i = complex(y[0], y[1])
        z = complex(y[2], y[3])
        v, p = terminal(i, z)
        wi = w1 + kp * (p_ref(t) - p)
        didt = (wb / lc) * (v - vg * cmath.exp(-1j * (th0 + y[4])) - complex(rc, wi * lc) * i)
        dz = wv * wb * (i - z)
        return np.array([didt.real, didt.imag, dz.real, dz.imag, (wi - w1) * wb])

    def rhs_rms(t, y):
        z = complex(y[0], y[1])
        i, wi = rms_current(z, y[2], w1, p_ref(t))
        dz = wv * wb * (i - z)
        return np.array([dz.real, dz.imag, (wi - w1) * wb])

    if emt:
        y = np.array([op.i_d0, op.i_q0, op.i_d0, op.i_q0, 0.0])
        rhs = rhs_emt
    else:
        y = np.array([op.i_d0, op.i_q0, 0.0])
        rhs = rhs_rms

    n_steps = int(round(cfg.t_end / cfg.dt))
    dec = int(cfg.record_decimation)
    rec_t, rec_p, rec_w, rec_id, rec_iq, rec_v, rec_th = [], [], [], [], [], [], []
    diverged = False
    t_blowup = None
    dt = cfg.dt

    for k in range(n_steps + 1):
        t = k * dt
        if np.max(np.abs(y)) > DIVERGENCE_LIMIT:
            diverged = True
            t_blowup = t
            break
        if k % dec == 0 or k == n_steps:
            if emt:
                i = complex(y[0], y[1])
                z = complex(y[2], y[3])
                dth = y[4]
            else:
                z = complex(y[0], y[1])
                dth = y[2]
                i, _ = rms_current(z, dth, w1, p_ref(t))
            v, p = terminal(i, z)
            wi = w1 + kp * (p_ref(t) - p)
            rec_t.append(t)
            rec_p.append(p)
            rec_w.append(wi)
            rec_id.append(i.real)
            rec_iq.append(i.imag)
            rec_v.append(abs(v))
            rec_th.append(dth)
        if k == n_steps:
            break
        k1 = rhs(t, y)
        k2 = rhs(t + 0.5 * dt, y + 0.5 * dt * k1)
        k3 = rhs(t + 0.5 * dt, y + 0.5 * dt * k2)
        k4 = rhs(t + dt, y + dt * k3)
        y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    return TimeSeries(
        t=np.array(rec_t),
        p=np.array(rec_p),
        omega_i=np.array(rec_w),
        i_d=np.array(rec_id),
        i_q=np.array(rec_iq),
        v_mag=np.array(rec_v),
        delta_theta=np.array(rec_th),
        diverged=diverged,
        t_blowup=t_blowup,
    )


def settling_time(series: TimeSeries, step_time: float = 0.0, band_fraction: float = 0.02, target: float | None = None) -> float:
    """Time after step_time when p last leaves the settling band.

    The band is band_fraction of the step magnitude (final value minus the
    pre-step value) around the final value; math.inf when still outside at
    the end of the record.
    """
    if target is None:
        target = float(series.p[-1])
    pre_mask = series.t <= step_time
    pre = float(series.p[pre_mask][-1]) if np.any(pre_mask) else float(series.p[0])
    band = max(band_fraction * abs(target - pre), 1e-9)
    outside = np.abs(series.p - target) > band
    outside &= series.t >= step_time
    if not np.any(outside):
        return 0.0
    last = int(np.where(outside)[0][-1])
    if last == len(series.t) - 1:
        return math.inf
    return float(series.t[last + 1] - step_time)


def compare_runs(a: TimeSeries, b: TimeSeries, step_time: float = 0.0) -> MismatchMetrics:
    """Power mismatch metrics over the common time range, post step_time.

    b is linearly resampled onto a's grid when the grids differ.
    """
    t_lo = max(a.t[0], b.t[0])
    t_hi = min(a.t[-1], b.t[-1])
    if t_hi <= t_lo:
        raise IncomparableRunsError("time ranges do not overlap")
    same = len(a.t) == len(b.t) and np.allclose(a.t, b.t, rtol=0.0, atol=1e-12)
    if same:
        ta, pa, pb = a.t, a.p, b.p
    else:
        mask = (a.t >= t_lo) & (a.t <= t_hi)
        ta, pa = a.t[mask], a.p[mask]
        pb = np.interp(ta, b.t, b.p)
    post = ta >= step_time
    dp = np.abs(pa - pb)[post]
    if dp.size == 0:
        raise IncomparableRunsError("no samples after step_time in the common range")
    return MismatchMetrics(
        max_abs_dp=float(np.max(dp)),
        rms_dp=float(np.sqrt(np.mean(dp**2))),
        settling_time_a=settling_time(a, step_time),
        settling_time_b=settling_time(b, step_time),
    )


def dominant_frequency(series: TimeSeries, channel: str = "p") -> float | None:
    """Dominant oscillation frequency (Hz) of the detrended channel.

    Zero-crossing counting cross-checked against the discrete spectral peak;
    None when the peak-to-trough amplitude is below 1e-6 p.u. or fewer than
    four periods are visible.
    """
    if channel != "p":
        raise ValueError(f"unsupported channel {channel!r}")
    y = np.asarray(series.p, dtype=float)
    t = np.asarray(series.t, dtype=float)
    if len(y) < 8 or np.ptp(y) < 1e-6:
        return None
    trend = np.polyval(np.polyfit(t, y, 1), t)
    r = y - trend
    span = t[-1] - t[0]
    crossings = int(np.sum(np.diff(np.sign(r)) != 0))
    if crossings < 8:  # fewer than four full periods
        return None
    f_zc = crossings / (2.0 * span)
    # spectral cross-check on the Hann-windowed residual
    dt = float(np.mean(np.diff(t)))
    spec = np.abs(np.fft.rfft(r * np.hanning(len(r))))
    freqs = np.fft.rfftfreq(len(r), dt)
    k = int(np.argmax(spec[1:]) + 1)
    f_sp = float(freqs[k])
    if f_sp > 0 and abs(f_zc - f_sp) > 0.15 * f_sp:
        return f_sp
    return float(f_zc)


def linearized_step_response(params: ConverterParams, ctrl: ControlParams, op: OperatingPoint, kind: ModelKind, cfg: SimConfig) -> TimeSeries:
    """Step response of the small-signal closed loop on the simulator grid.

    Partial-fraction expansion over the closed-loop poles; serves as the
    independent oracle for the nonlinear simulator at small step sizes. The
    current and voltage channels are not modeled here and carry NaN.
    """
    if ctrl.k_p <= 0.0:
        raise ValueError("linearized step response needs k_p > 0")
    cl = build_closed_loop_tf(params, ctrl, op, kind)
    poles = poly_roots(cl.den)
    scale = max(abs(z) for z in poles)
    if any(z.real >= -1e-12 * max(1.0, scale) for z in poles):
        raise UnstableLoopError(poles)
    for i, zi in enumerate(poles):
        for zj in poles[i + 1 :]:
            if abs(zi - zj) < 1e-8 * max(1.0, scale):
                raise NumericalError("repeated closed-loop poles, partial fractions invalid")
    dden = cl.den.derivative()
    residues = [poly_eval(cl.num, z) / (z * poly_eval(dden, z)) for z in poles]
    g0 = cl(0.0)

    n_steps = int(round(cfg.t_end / cfg.dt))
    dec = int(cfg.record_decimation)
    idx = np.unique(np.concatenate([np.arange(0, n_steps + 1, dec), [n_steps]]))
    t = idx * cfg.dt
    tau = np.maximum(t - cfg.step_time, 0.0)
    active = t >= cfg.step_time
    y = np.full(len(t), g0, dtype=complex)
    dth = np.zeros(len(t), dtype=complex)
    for z, r in zip(poles, residues):
        y += r * np.exp(z * params.omega_b * tau)
        dth += -ctrl.k_p * r * (np.exp(z * params.omega_b * tau) - 1.0) / z
    p = op.p_0 + np.where(active, cfg.step_size * y.real, 0.0)
    pref = op.p_0 + np.where(active, cfg.step_size, 0.0)
    omega_i = params.omega_1 + ctrl.k_p * (pref - p)
    nan = np.full(len(t), math.nan)
    return TimeSeries(
        t=t,
        p=p,
        omega_i=omega_i,
        i_d=nan.copy(),
        i_q=nan.copy(),
        v_mag=nan.copy(),
        delta_theta=np.where(active, cfg.step_size * dth.real, 0.0),
    )
