"""Gain/phase margins, crossover frequencies, and droop/damping tuning rules."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import (
    InfeasibleMarginError,
    InvalidOperatingPointError,
    NoCrossoverError,
    SelfCheckError,
    WrongRegimeError,
)
from .plant import (
    ControlParams,
    ConverterParams,
    ModelKind,
    OperatingPoint,
    build_loop_tf,
    build_mismatch_tf,
)
from .ratfun import Polynomial, RationalTF, freq_response, poly_eval, poly_roots

# crossover searches scan this logarithmic grid, then bisect the bracket
SCAN_LO = 1e-4
SCAN_HI = 1e3
SCAN_POINTS = 400

_PM_FLOORS = {80.0: 24.0, 45.0: 4.0}  # floor -> linear coefficient of the k_v rule


@dataclass(frozen=True)
class MarginReport:
    """Stability margins of one loop transfer function.

    gain_margin is math.inf when the Nyquist curve never intersects the
    negative real axis (omega_180 is then None).
    """

    gain_margin: float
    phase_margin_deg: float
    omega_180: float | None
    omega_c: float
    model: ModelKind


@dataclass(frozen=True)
class TuningResult:
    """Gains produced by the margin-based design rules, with measured margins."""

    k_v: float
    k_p: float
    target_gm: float
    phase_margin_floor_deg: float
    feasible: bool
    measured_gm: float = math.nan
    measured_pm_deg: float = math.nan


def _eval_loop(L: RationalTF, ws: np.ndarray) -> np.ndarray:
    """Raw loop samples; poles on the grid come back as inf rather than raising."""
    out = np.empty(len(ws), dtype=complex)
    for k, w in enumerate(ws):
        s = 1j * w
        den = poly_eval(L.den, s)
        if den == 0:
            out[k] = complex(math.inf, math.inf)
        else:
            out[k] = poly_eval(L.num, s) / den
    return out


def _scan_grid(n_points: int) -> np.ndarray:
    return np.logspace(math.log10(SCAN_LO), math.log10(SCAN_HI), n_points)


def _is_pure_integrator(L: RationalTF) -> bool:
    return L.num.degree == 0 and L.den.coeffs == (0.0, 1.0)


def phase_axis_crossing(L: RationalTF, n_points: int = SCAN_POINTS):
    """Lowest frequency where the Nyquist curve meets the negative real axis.

    Returns (omega_180, gain_margin); (None, inf) without a crossing. A sign
    change of Im L through an imaginary-axis pole counts as an intersection
    at infinite radius and yields gain margin 0 at the pole frequency.
    """
    if _is_pure_integrator(L):
        return None, math.inf
    ws = _scan_grid(n_points)
    vals = _eval_loop(L, ws)
    im = vals.imag
    finite = np.isfinite(vals.real) & np.isfinite(vals.imag)
    for k in range(len(ws) - 1):
        if not finite[k]:
            # grid sample sits on an imaginary-axis pole: if Im L flips sign
            # across it, the Nyquist curve wraps through the negative real
            # axis at infinite radius and the margin collapses to zero
            if 0 < k and finite[k - 1] and finite[k + 1] and im[k - 1] * im[k + 1] < 0.0:
                return float(ws[k]), 0.0
            continue
        if not finite[k + 1]:
            continue
        if im[k] == 0.0:
            w0 = ws[k]
        elif im[k] * im[k + 1] < 0.0:
            w0 = brentq(
                lambda w: (L(1j * w)).imag, ws[k], ws[k + 1], xtol=1e-300, rtol=8.9e-16
            )
        else:
            continue
        val = L(1j * w0)
        mag = abs(val)
        if not math.isfinite(mag) or mag > 1e10:
            return float(w0), 0.0  # crossing wraps through an axis pole
        if mag < 1e-15:
            continue  # Nyquist curve passes through the origin, not the axis
        if val.real < 0.0:
            return float(w0), 1.0 / mag
    return None, math.inf


def gain_crossover(L: RationalTF, n_points: int = SCAN_POINTS) -> float:
    """Lowest frequency with unit loop magnitude."""
    if _is_pure_integrator(L):
        return abs(L.num.coeffs[0])
    ws = _scan_grid(n_points)
    vals = _eval_loop(L, ws)
    mag = np.abs(vals)
    finite = np.isfinite(mag)
    logm = np.where(finite & (mag > 0.0), np.log(np.where(mag > 0.0, mag, 1.0)), np.nan)
    for k in range(len(ws) - 1):
        if not (np.isfinite(logm[k]) and np.isfinite(logm[k + 1])):
            continue
        if logm[k] == 0.0:
            return float(ws[k])
        if logm[k] * logm[k + 1] < 0.0:
            w0 = brentq(
                lambda w: math.log(abs(L(1j * w))), ws[k], ws[k + 1], xtol=1e-300, rtol=8.9e-16
            )
            return float(w0)
    raise NoCrossoverError("loop magnitude never crosses unity on the scan range")


def gain_margin(L: RationalTF, n_points: int = SCAN_POINTS) -> float:
    """1/|L(j omega_180)| at the lowest negative-real-axis intersection, inf if none."""
    return phase_axis_crossing(L, n_points)[1]


def phase_margin(L: RationalTF, n_points: int = SCAN_POINTS) -> float:
    """180 degrees plus the loop phase at the lowest unit-magnitude frequency.

    The phase is unwrapped from low frequency so loops with more than 180
    degrees of accumulated lag are handled correctly.
    """
    if _is_pure_integrator(L):
        return 90.0 if L.num.coeffs[0] > 0 else -90.0
    wc = gain_crossover(L, n_points)
    ws = _scan_grid(n_points)
    below = ws[ws < wc]
    track = np.concatenate([below, [wc]])
    phases = np.unwrap(np.angle(_eval_loop(L, track)))
    return float((math.pi + phases[-1]) / math.pi * 180.0)


def margin_report(L: RationalTF, model: ModelKind, n_points: int = SCAN_POINTS) -> MarginReport:
    omega_180, gm = phase_axis_crossing(L, n_points)
    wc = gain_crossover(L, n_points)
    pm = phase_margin(L, n_points)
    return MarginReport(
        gain_margin=gm, phase_margin_deg=pm, omega_180=omega_180, omega_c=wc, model=model
    )


def omega_180_emt(params: ConverterParams, ctrl: ControlParams) -> float:
    """Phase crossover of the dynamic-network loop: sqrt(k_v^2 + l_c^2 w1^2) / l_c."""
    if ctrl.omega_v != 0.0:
        raise WrongRegimeError("closed form requires omega_v = 0")
    return math.sqrt(ctrl.k_v**2 + params.l_c**2 * params.omega_1**2) / params.l_c


def _crossover_cubic(params: ConverterParams, ctrl: ControlParams, op: OperatingPoint) -> Polynomial:
    """Cubic in x = omega_c^2 from the unit-magnitude condition |L(j omega)| = 1."""
    w1, lc, v = params.omega_1, params.l_c, params.v_set
    kv, kp = ctrl.k_v, ctrl.k_p
    c = w1 * w1 + (kv / lc) ** 2
    amp = kp * w1 * (v * v - kv * kv * op.i_mag_sq) / lc
    return Polynomial([-amp * amp, c * c, 4.0 * kv * kv / (lc * lc) - 2.0 * c, 1.0])


def omega_c(params: ConverterParams, ctrl: ControlParams, op: OperatingPoint, kind: ModelKind, method: str = "closed_form") -> float:
    """Gain crossover frequency in the unity-power-factor, static-gain regime.

    closed_form and taylor give k_p l_c w1 (v^2 - k_v^2 i_0^2)/(k_v^2 + l_c^2 w1^2),
    exact for the phasor loop and a small-droop approximation for the dynamic
    one. cubic_exact solves the unit-magnitude cubic and keeps the smallest
    positive real root.
    """
    if op.i_q0 != 0.0:
        raise WrongRegimeError("crossover formulas assume i_q0 = 0")
    if ctrl.omega_v != 0.0:
        raise WrongRegimeError("crossover formulas assume omega_v = 0")
    if ctrl.k_p <= 0.0:
        raise ValueError("k_p must be > 0 for a gain crossover")
    if method not in ("closed_form", "taylor", "cubic_exact"):
        raise ValueError(f"unknown method {method!r}")
    w1, lc, v = params.omega_1, params.l_c, params.v_set
    kv = ctrl.k_v
    if method in ("closed_form", "taylor") or kind is ModelKind.RMS:
        return ctrl.k_p * lc * w1 * (v * v - kv * kv * op.i_mag_sq) / (kv * kv + lc * lc * w1 * w1)
    cubic = _crossover_cubic(params, ctrl, op)
    roots = poly_roots(cubic)
    positive = sorted(
        z.real for z in roots if abs(z.imag) <= 1e-9 * (1.0 + abs(z)) and z.real > 0.0
    )
    if not positive:
        raise NoCrossoverError("unit-magnitude cubic has no positive real root")
    return math.sqrt(positive[0])


def kp_max_for_gain_margin(params: ConverterParams, ctrl: ControlParams, op: OperatingPoint, target_gm: float) -> float:
    """Droop gain that sets the dynamic-network gain margin to target_gm."""
    if target_gm <= 0.0:
        raise ValueError("target gain margin must be > 0")
    w1, lc, v = params.omega_1, params.l_c, params.v_set
    kv = ctrl.k_v
    denom = v * v - op.i_mag_sq * kv * kv
    if denom <= 0.0:
        raise InvalidOperatingPointError(
            f"v_set^2 - |i_0|^2 k_v^2 = {denom} must be positive"
        )
    return 2.0 * kv * (lc * lc * w1 * w1 + kv * kv) / (target_gm * lc * lc * w1 * denom)


def gm_interval(floor_deg: float):
    """Admissible gain-margin targets of the damping rule for a phase floor."""
    if floor_deg not in _PM_FLOORS:
        raise ValueError("phase margin floor must be 80 or 45 degrees")
    coef = _PM_FLOORS[floor_deg]
    hi = 0.5 * (coef + math.sqrt(coef * coef + 16.0))
    lo = 2.0 if floor_deg == 80.0 else 0.0
    return lo, hi


def kv_for_phase_margin(params: ConverterParams, target_gm: float, floor_deg: float = 80.0) -> float:
    """Damping coefficient meeting the phase-margin floor at a given gain margin.

    Equality value of k_v >= sqrt(-g^2 l_c^2 w1^2 / (g^2 - coef g - 4)) with
    coef 24 for the 80 degree floor and 4 for the 45 degree floor.
    """
    lo, hi = gm_interval(floor_deg)
    if not (lo < target_gm < hi):
        raise InfeasibleMarginError(
            f"gain margin {target_gm} outside the admissible interval ({lo}, {hi:.4f}) "
            f"for a {floor_deg} degree floor"
        )
    coef = _PM_FLOORS[floor_deg]
    g = target_gm
    denom = g * g - coef * g - 4.0
    return math.sqrt(-g * g * params.l_c**2 * params.omega_1**2 / denom)


def _measure_emt_margins(params, op, kv, kp):
    loop = build_loop_tf(params, ControlParams(k_p=kp, k_v=kv), op, ModelKind.EMT)
    return gain_margin(loop), phase_margin(loop)


def tune(params: ConverterParams, op: OperatingPoint, target_gm: float, floor_deg: float = 80.0) -> TuningResult:
    """Damping and droop gains for a gain-margin target and phase-margin floor.

    k_v comes from the closed-form damping rule and k_p from the gain-margin
    relation. Because the rule rests on a small-droop approximation of the
    crossover, the measured phase margin can undershoot the floor by a
    fraction of a degree at low gain-margin targets; in that case k_v is
    bisected downward (k_p re-slaved) until the numerically measured margin
    meets the floor. Measured margins are verified before returning.
    """
    lo, hi = gm_interval(floor_deg)
    if not (lo < target_gm < hi):
        return TuningResult(
            k_v=math.nan,
            k_p=math.nan,
            target_gm=target_gm,
            phase_margin_floor_deg=floor_deg,
            feasible=False,
        )
    kv = kv_for_phase_margin(params, target_gm, floor_deg)
    kp = kp_max_for_gain_margin(params, ControlParams(k_v=kv), op, target_gm)
    gm_meas, pm_meas = _measure_emt_margins(params, op, kv, kp)
    if pm_meas < floor_deg:
        def shortfall(kv_try):
            _, pm = _measure_emt_margins(
                params, op, kv_try, kp_max_for_gain_margin(params, ControlParams(k_v=kv_try), op, target_gm)
            )
            return pm - floor_deg - 1e-9
        kv_lo = kv
        for factor in (0.75, 0.5, 0.25, 0.1, 0.02):
            kv_lo = kv * factor
            if shortfall(kv_lo) > 0.0:
                break
        else:
            raise SelfCheckError(
                f"no damping below {kv} reaches the {floor_deg} degree floor",
                measured_gm=gm_meas,
                measured_pm_deg=pm_meas,
            )
        kv = brentq(shortfall, kv_lo, kv, xtol=1e-13, rtol=8.9e-16)
        kp = kp_max_for_gain_margin(params, ControlParams(k_v=kv), op, target_gm)
        gm_meas, pm_meas = _measure_emt_margins(params, op, kv, kp)
    if abs(gm_meas - target_gm) > 0.02 * target_gm or pm_meas < floor_deg:
        raise SelfCheckError(
            f"tuning verification failed: measured gm {gm_meas}, pm {pm_meas} deg "
            f"against target gm {target_gm}, floor {floor_deg} deg",
            measured_gm=gm_meas,
            measured_pm_deg=pm_meas,
        )
    return TuningResult(
        k_v=kv,
        k_p=kp,
        target_gm=target_gm,
        phase_margin_floor_deg=floor_deg,
        feasible=True,
        measured_gm=gm_meas,
        measured_pm_deg=pm_meas,
    )


def mismatch_profile(params: ConverterParams, ctrl: ControlParams, op: OperatingPoint, omega_grid):
    """Samples of |e(j omega)|, the phasor-model estimation error magnitude."""
    e = build_mismatch_tf(params, ctrl, op)
    mags = np.abs(freq_response(e, list(omega_grid)))
    return [(float(w), float(m)) for w, m in zip(omega_grid, mags)]
