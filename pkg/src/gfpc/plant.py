"""Grid-forming converter model: parameters, operating point, transfer functions.

A single voltage source converter behind an RL phase reactor feeds an
infinite bus. The converter sets its terminal voltage magnitude through a
virtual-impedance high-pass filter and its frequency through an active-power
droop. Everything here is per-unit; omega_b converts to rad/s.
"""

from __future__ import annotations

import enum
import cmath
import math
import warnings
from dataclasses import dataclass, replace

from .errors import (
    InvalidOperatingPointError,
    NumericalError,
    PowerAngleLimitError,
    WrongRegimeError,
)
from .ratfun import Polynomial, RationalTF, S, poly_eval, rat_arith, rat_feedback, zero_tf

OMEGA_BASE_50HZ = 100.0 * math.pi


@dataclass(frozen=True)
class ConverterParams:
    """Circuit constants.

    l_c: phase reactor plus transformer inductance (p.u.)
    r_c: series resistance (p.u.); analysis neglects it, simulators accept it
    v_set: terminal voltage set-point (p.u.)
    omega_1: reference angular speed (p.u., nominally 1.0)
    omega_b: base angular speed (rad/s, nominally 100*pi)
    """

    l_c: float = 0.2
    r_c: float = 0.0
    v_set: float = 1.0
    omega_1: float = 1.0
    omega_b: float = OMEGA_BASE_50HZ

    def __post_init__(self):
        if self.l_c <= 0.0:
            raise ValueError(f"l_c must be > 0, got {self.l_c}")
        if self.r_c < 0.0:
            raise ValueError(f"r_c must be >= 0, got {self.r_c}")
        if self.v_set <= 0.0:
            raise ValueError(f"v_set must be > 0, got {self.v_set}")
        if self.omega_1 <= 0.0 or self.omega_b <= 0.0:
            raise ValueError("omega_1 and omega_b must be > 0")


@dataclass(frozen=True)
class ControlParams:
    """Controller gains.

    k_p: frequency droop (p.u. frequency per p.u. power)
    k_v: virtual-impedance damping coefficient (p.u.)
    omega_v: high-pass cut-off (p.u.); 0 selects the static-gain analysis mode
    """

    k_p: float = 0.0
    k_v: float = 0.0
    omega_v: float = 0.0

    def __post_init__(self):
        if self.k_p < 0.0 or self.k_v < 0.0 or self.omega_v < 0.0:
            raise ValueError("k_p, k_v and omega_v must all be >= 0")


class ModelKind(enum.Enum):
    """Network representation: dynamic phase reactor (EMT) or algebraic (RMS)."""

    EMT = "emt"
    RMS = "rms"

    @classmethod
    def parse(cls, text: str) -> "ModelKind":
        try:
            return cls(text.strip().lower())
        except ValueError:
            raise ValueError(f"unknown model kind {text!r}, expected 'emt' or 'rms'") from None


@dataclass(frozen=True)
class OperatingPoint:
    """Steady-state phasor state in the converter dq frame (d axis on v).

    theta_0 is the lead of the converter frame over the grid frame, v_g the
    grid voltage magnitude, p_0 the delivered terminal power.
    """

    i_d0: float
    i_q0: float
    theta_0: float
    v_g: float
    p_0: float

    @property
    def i_0(self) -> complex:
        return complex(self.i_d0, self.i_q0)

    @property
    def i_mag_sq(self) -> float:
        return self.i_d0 * self.i_d0 + self.i_q0 * self.i_q0


@dataclass(frozen=True)
class LinearizationConstants:
    """Constants entering the angle-to-power transfer functions.

    a is dimensionless; b_tf is the frequency-dependent correction produced
    by the virtual impedance (identically zero when k_v = 0).
    """

    a: float
    b_tf: RationalTF


def check_operating_point(params: ConverterParams, op: OperatingPoint, tol=1e-8) -> None:
    """Verify the steady-state identity and the terminal-power consistency."""
    resid = abs(
        params.v_set
        - 1j * params.omega_1 * params.l_c * op.i_0
        - op.v_g * cmath.exp(-1j * op.theta_0)
    )
    if resid >= tol:
        raise InvalidOperatingPointError(
            f"steady-state identity violated, residual {resid:.3e}"
        )
    p = (params.v_set * op.i_0.conjugate()).real
    if abs(p - op.p_0) >= tol:
        raise InvalidOperatingPointError(
            f"terminal power inconsistent: {p!r} vs stored {op.p_0!r}"
        )


def solve_operating_point(params: ConverterParams, p_ref: float, v_g: float = 1.0) -> OperatingPoint:
    """Steady state delivering p_ref at nominal frequency into grid voltage v_g.

    Resistance is neglected, so the power-angle relation
    p = v_set * v_g * sin(theta_0) / (omega_1 * l_c) applies; the current
    follows from the phasor identity v_set - j omega_1 l_c i_0 = v_g e^{-j theta_0}.
    """
    if v_g <= 0.0:
        raise ValueError(f"v_g must be > 0, got {v_g}")
    x = p_ref * params.omega_1 * params.l_c / (params.v_set * v_g)
    if abs(x) > 1.0:
        raise PowerAngleLimitError(
            f"power transfer {p_ref} p.u. exceeds the power-angle limit "
            f"{params.v_set * v_g / (params.omega_1 * params.l_c):.4f} p.u."
        )
    theta_0 = math.asin(x)
    wl = params.omega_1 * params.l_c
    i_d0 = v_g * math.sin(theta_0) / wl
    i_q0 = -(params.v_set - v_g * math.cos(theta_0)) / wl
    op = OperatingPoint(i_d0=i_d0, i_q0=i_q0, theta_0=theta_0, v_g=v_g, p_0=p_ref)
    try:
        check_operating_point(params, op)
    except InvalidOperatingPointError as exc:  # pragma: no cover - closed form
        raise NumericalError(f"operating-point solve failed self-check: {exc}") from exc
    return op


def operating_point_with_active_current(params: ConverterParams, i_d0: float) -> OperatingPoint:
    """Steady state with purely active current (i_q0 = 0).

    The grid voltage magnitude and angle follow from the phasor identity;
    this is the unity-power-factor regime the crossover formulas assume.
    """
    vg_phasor = params.v_set - 1j * params.omega_1 * params.l_c * complex(i_d0, 0.0)
    v_g = abs(vg_phasor)
    theta_0 = -cmath.phase(vg_phasor / v_g)
    op = OperatingPoint(
        i_d0=i_d0, i_q0=0.0, theta_0=theta_0, v_g=v_g, p_0=params.v_set * i_d0
    )
    check_operating_point(params, op)
    return op


def build_hp_filter(ctrl: ControlParams) -> RationalTF:
    """Virtual-impedance filter k_v s / (s + omega_v).

    With omega_v = 0 the filter degenerates to the constant k_v (the
    static-gain mode in which all closed-form conditions hold).
    """
    if ctrl.k_v == 0.0:
        return zero_tf()
    if ctrl.omega_v == 0.0:
        return RationalTF(Polynomial([ctrl.k_v]))
    return RationalTF(Polynomial([0.0, ctrl.k_v]), Polynomial([ctrl.omega_v, 1.0]))


def linearization_constants(params: ConverterParams, ctrl: ControlParams, op: OperatingPoint) -> LinearizationConstants:
    """a = omega_1 l_c i_q0 / v_set and b(s) = -H^2/v_set (i_q0/(omega_1 l_c) + |i_0|^2/v_set)."""
    a = params.omega_1 * params.l_c * op.i_q0 / params.v_set
    h = build_hp_filter(ctrl)
    beta = (op.i_q0 / (params.omega_1 * params.l_c) + op.i_mag_sq / params.v_set) / params.v_set
    b_tf = RationalTF(h.num * h.num * (-beta), h.den * h.den)
    return LinearizationConstants(a=a, b_tf=b_tf)


def build_open_loop_tf(params: ConverterParams, ctrl: ControlParams, op: OperatingPoint, kind: ModelKind) -> RationalTF:
    """Angle-to-power transfer function for the requested network model.

    EMT keeps the phase-reactor dynamics (second-order denominator in s);
    RMS treats the network algebraically. When omega_v > 0 the filter and
    b(s) enter as rational functions and the result is expanded to a single
    canonical fraction without spurious common factors.
    """
    check_operating_point(params, op)
    lin = linearization_constants(params, ctrl, op)
    hp = build_hp_filter(ctrl)
    h, g = hp.num, hp.den
    w1, lc, v = params.omega_1, params.l_c, params.v_set
    gg = g * g
    hh = h * h
    beta = (op.i_q0 / (w1 * lc) + op.i_mag_sq / v) / v
    # numerator common to both kinds: (1 + a) g^2 - beta h^2, all over g^2
    static_num = (1.0 + lin.a) * gg - beta * hh
    if kind is ModelKind.EMT:
        num = lin.a * (S * S * gg) + (w1 * w1) * static_num
        den = (S * S) * gg + (2.0 / lc) * (S * h * g) + (w1 * w1) * gg + (1.0 / (lc * lc)) * hh
        return RationalTF(num * (v * v / (w1 * lc)), den)
    if kind is ModelKind.RMS:
        num = static_num
        den = (w1 * w1) * gg + (1.0 / (lc * lc)) * hh
        return RationalTF(num * (v * v * w1 / lc), den)
    raise ValueError(f"unknown model kind {kind!r}")


def build_loop_tf(params: ConverterParams, ctrl: ControlParams, op: OperatingPoint, kind: ModelKind) -> RationalTF:
    """Loop gain L(s) = C(s) G(s) with the droop controller C(s) = k_p / s."""
    g = build_open_loop_tf(params, ctrl, op, kind)
    c = RationalTF(Polynomial([ctrl.k_p]), S)
    return rat_arith(c, g, "mul")


def build_closed_loop_tf(params: ConverterParams, ctrl: ControlParams, op: OperatingPoint, kind: ModelKind) -> RationalTF:
    """Reference-to-power closed loop L/(1+L).

    k_p = 0 leaves the loop open; the zero transfer function is returned and
    a warning is emitted.
    """
    if ctrl.k_p == 0.0:
        warnings.warn("k_p = 0: active-power loop is open, returning the zero transfer function")
        return zero_tf()
    return rat_feedback(build_loop_tf(params, ctrl, op, kind))


def closed_loop_char_poly(params: ConverterParams, ctrl: ControlParams, op: OperatingPoint, kind: ModelKind) -> Polynomial:
    """Closed-loop characteristic polynomial including the integrator pole.

    Valid for any k_p >= 0 (unlike build_closed_loop_tf, which warns at 0).
    """
    g = build_open_loop_tf(params, ctrl, op, kind)
    return S * g.den + ctrl.k_p * g.num


def emt_char_cubic(params: ConverterParams, ctrl: ControlParams, op: OperatingPoint):
    """Cubic coefficients (a0, a1, a2, a3) of the EMT closed loop, static-gain mode.

    a0 s^3 + a1 s^2 + a2 s + a3 with
      a1 = 2 k_v / l_c + v_set^2 k_p a / (omega_1 l_c)
      a2 = omega_1^2 + (k_v / l_c)^2
      a3 = k_p v_set^2 omega_1 (1 + a + b) / l_c
    """
    if ctrl.omega_v != 0.0:
        raise WrongRegimeError("closed-form cubic requires omega_v = 0")
    w1, lc, v = params.omega_1, params.l_c, params.v_set
    kv, kp = ctrl.k_v, ctrl.k_p
    a = w1 * lc * op.i_q0 / v
    b = -(kv * kv / v) * (op.i_q0 / (w1 * lc) + op.i_mag_sq / v)
    a0 = 1.0
    a1 = 2.0 * kv / lc + v * v * kp * a / (w1 * lc)
    a2 = w1 * w1 + (kv / lc) ** 2
    a3 = kp * v * v * w1 * (1.0 + a + b) / lc
    return a0, a1, a2, a3


def rms_char_linear(params: ConverterParams, ctrl: ControlParams, op: OperatingPoint):
    """Coefficients (c1, c0) of the RMS closed-loop denominator c1 s + c0, static-gain mode."""
    if ctrl.omega_v != 0.0:
        raise WrongRegimeError("closed-form pole requires omega_v = 0")
    w1, lc, v = params.omega_1, params.l_c, params.v_set
    kv, kp = ctrl.k_v, ctrl.k_p
    a = w1 * lc * op.i_q0 / v
    b = -(kv * kv / v) * (op.i_q0 / (w1 * lc) + op.i_mag_sq / v)
    c1 = w1 * w1 + (kv / lc) ** 2
    c0 = kp * v * v * w1 * (1.0 + a + b) / lc
    return c1, c0


def build_mismatch_tf(params: ConverterParams, ctrl: ControlParams, op: OperatingPoint) -> RationalTF:
    """Phasor-approximation estimation error e(s), the EMT/RMS closed-loop difference."""
    emt = build_closed_loop_tf(params, ctrl, op, ModelKind.EMT)
    rms = build_closed_loop_tf(params, ctrl, op, ModelKind.RMS)
    return rat_arith(emt, rms, "sub")


def rms_angle_power_response(params: ConverterParams, ctrl: ControlParams, op: OperatingPoint, omega: float) -> complex:
    """Pointwise angle-to-power response of the algebraic-network model.

    Independent construction from the current-coupling relation
    delta_i = j (v_set - j omega_1 l_c i_0) / (H(s) + j omega_1 l_c) * delta_theta
    and delta_p = Re(v_set delta_i* + i_0* delta_v); used to cross-check the
    rational builder. The real-part extraction of a complex-envelope response
    G is (G + G_conj)/2 with conjugated coefficients.
    """
    s = 1j * omega
    hp = build_hp_filter(ctrl)
    h = poly_eval(hp.num, s) / poly_eval(hp.den, s)
    wl = params.omega_1 * params.l_c
    c = params.v_set - 1j * wl * op.i_0
    g = 1j * c / (h + 1j * wl)
    g_bar = -1j * c.conjugate() / (h - 1j * wl)
    i0 = op.i_0
    return 0.5 * (params.v_set * (g + g_bar) - h * (i0.conjugate() * g + i0 * g_bar))


def with_droop(ctrl: ControlParams, k_p: float) -> ControlParams:
    """Copy of ctrl with a different droop gain."""
    return replace(ctrl, k_p=k_p)
