"""Routh-Hurwitz conditions, closed-loop eigenvalues, and root-locus sweeps."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import DegenerateOrderError, NumericalError, WrongRegimeError
from .plant import (
    ControlParams,
    ConverterParams,
    ModelKind,
    OperatingPoint,
    closed_loop_char_poly,
    emt_char_cubic,
    rms_char_linear,
    with_droop,
)
from .ratfun import poly_roots

# absolute tolerance deciding when a Routh quantity counts as exactly zero
MARGINAL_ATOL = 1e-12


@dataclass(frozen=True)
class StabilityVerdict:
    """Tri-state Routh verdict: stable, marginal (boundary), or unstable.

    margin is the value of a1*a2 - a0*a3 for cubic checks (the binding
    quantity of the criterion); binding_condition names the inequality that
    failed or sits on the boundary.
    """

    stable: bool
    marginal: bool
    margin: float
    binding_condition: str

    @property
    def unstable(self) -> bool:
        return not self.stable and not self.marginal


@dataclass(frozen=True)
class RootLocus:
    """Pole branches over a droop-gain grid, continuation-ordered."""

    gains: np.ndarray
    branches: np.ndarray  # complex, shape (len(gains), n_poles)


def routh_cubic(a0: float, a1: float, a2: float, a3: float, atol: float = MARGINAL_ATOL) -> StabilityVerdict:
    """Routh-Hurwitz verdict for a0 s^3 + a1 s^2 + a2 s + a3.

    After normalizing a0 to +1, all roots lie strictly in the left half
    plane iff a1 > 0, a3 > 0 and a1*a2 > a0*a3.
    """
    if a0 == 0.0:
        raise DegenerateOrderError("leading coefficient a0 must be nonzero")
    if a0 < 0.0:
        a0, a1, a2, a3 = 1.0, a1 / a0, a2 / a0, a3 / a0
    elif a0 != 1.0:
        a1, a2, a3 = a1 / a0, a2 / a0, a3 / a0
        a0 = 1.0
    margin = a1 * a2 - a0 * a3
    checks = [("a1 > 0", a1), ("a3 > 0", a3), ("a1*a2 > a0*a3", margin)]
    violated = [(name, v) for name, v in checks if v < -atol]
    if violated:
        return StabilityVerdict(False, False, margin, violated[0][0])
    boundary = [(name, v) for name, v in checks if abs(v) <= atol]
    if boundary:
        return StabilityVerdict(False, True, margin, boundary[0][0])
    return StabilityVerdict(True, False, margin, "a1*a2 > a0*a3")


def condition_no_virtual_impedance(params: ConverterParams, ctrl: ControlParams) -> StabilityVerdict:
    """EMT verdict with the virtual impedance disabled (k_v = 0).

    The Routh margin reduces to -k_p v_set^2 omega_1 / l_c independently of
    the operating point, so the loop is unstable for every k_p > 0 and sits
    on the boundary (pole pair at +-j omega_1) at k_p = 0.
    """
    if ctrl.k_v != 0.0:
        raise WrongRegimeError("condition derived for k_v = 0 only")
    margin = -ctrl.k_p * params.v_set**2 * params.omega_1 / params.l_c
    if ctrl.k_p == 0.0:
        return StabilityVerdict(
            False, True, 0.0, f"k_p = 0: poles at +-j {params.omega_1} p.u."
        )
    return StabilityVerdict(False, False, margin, "a1*a2 > a0*a3 fails for any k_p > 0")


def eq15_margin_printed(params: ConverterParams, ctrl: ControlParams, op: OperatingPoint) -> float:
    """Literal transcription of the published stability inequality (LHS > 0).

    Kept as an independent oracle against the coefficient route; the two
    agree algebraically and are compared at runtime.
    """
    w1, lc, v = params.omega_1, params.l_c, params.v_set
    kv, kp = ctrl.k_v, ctrl.k_p
    i0_sq = op.i_mag_sq
    term1 = (kv**2 / lc**2 + w1**2) * (op.i_q0 * kp * v + 2.0 * kv / lc)
    inner = -(kv**2 * (i0_sq / v + op.i_q0 / (lc * w1))) / v + op.i_q0 * lc * w1 / v + 1.0
    term2 = kp * v**2 * w1 * inner / lc
    return term1 - term2


def kp_routh_bound(params: ConverterParams, ctrl: ControlParams) -> float:
    """Largest stabilizable droop at zero current: 2 k_v (k_v^2 + l_c^2 w1^2) / (l_c^2 v^2 w1)."""
    w1, lc, v = params.omega_1, params.l_c, params.v_set
    return 2.0 * ctrl.k_v * (ctrl.k_v**2 + lc**2 * w1**2) / (lc**2 * v**2 * w1)


def condition_with_virtual_impedance(params: ConverterParams, ctrl: ControlParams, op: OperatingPoint) -> StabilityVerdict:
    """EMT Routh verdict in the static-gain mode, k_v > 0.

    Evaluates the full load-dependent inequality as the margin and reports
    the simplified droop bound when the converter carries no current.
    """
    if ctrl.k_v <= 0.0:
        raise WrongRegimeError("condition derived for k_v > 0; use condition_no_virtual_impedance")
    if ctrl.omega_v != 0.0:
        raise WrongRegimeError("condition derived in the static-gain mode (omega_v = 0)")
    a0, a1, a2, a3 = emt_char_cubic(params, ctrl, op)
    verdict = routh_cubic(a0, a1, a2, a3)
    printed = eq15_margin_printed(params, ctrl, op)
    scale = max(1.0, abs(verdict.margin), abs(printed))
    if abs(verdict.margin - printed) > 1e-9 * scale:
        raise NumericalError(
            "published inequality disagrees with the coefficient route "
            f"({printed} vs {verdict.margin})",
            residual=abs(verdict.margin - printed),
        )
    if op.i_d0 == 0.0 and op.i_q0 == 0.0:
        bound = kp_routh_bound(params, ctrl)
        label = f"{verdict.binding_condition} (k_p bound {bound:.6g})"
        return StabilityVerdict(verdict.stable, verdict.marginal, verdict.margin, label)
    return verdict


def rms_closed_loop_pole(params: ConverterParams, ctrl: ControlParams, op: OperatingPoint) -> float:
    """The single real eigenvalue of the phasor closed loop, static-gain mode."""
    if ctrl.omega_v != 0.0:
        raise WrongRegimeError("closed-form pole requires omega_v = 0")
    w1, lc, v = params.omega_1, params.l_c, params.v_set
    kv = ctrl.k_v
    a = w1 * lc * op.i_q0 / v
    b = -(kv * kv / v) * (op.i_q0 / (w1 * lc) + op.i_mag_sq / v)
    return -ctrl.k_p * lc * v**2 * w1 * (1.0 + a + b) / (kv**2 + lc**2 * w1**2)


def _match_branches(prev: np.ndarray, new: list) -> np.ndarray:
    """Order new poles onto the previous branches (nearest-neighbor continuation)."""
    cost = np.abs(prev[:, None] - np.asarray(new)[None, :])
    # break exact ties in favor of matching imaginary-part signs
    sign_prev = np.sign(prev.imag)[:, None]
    sign_new = np.sign(np.asarray(new).imag)[None, :]
    cost = cost + 1e-15 * (sign_prev != sign_new)
    rows, cols = linear_sum_assignment(cost)
    ordered = np.empty(len(new), dtype=complex)
    ordered[rows] = np.asarray(new)[cols]
    return ordered


def root_locus(params: ConverterParams, ctrl: ControlParams, op: OperatingPoint, kind: ModelKind, kp_grid) -> RootLocus:
    """Closed-loop poles per droop gain with branches matched across gains."""
    gains = np.asarray(list(kp_grid), dtype=float)
    if gains.size == 0:
        raise ValueError("kp_grid must be nonempty")
    if np.any(gains < 0.0):
        raise ValueError("kp_grid entries must be >= 0")
    if np.any(np.diff(gains) < 0.0):
        raise ValueError("kp_grid must be sorted ascending")
    rows = []
    for kp in gains:
        char = closed_loop_char_poly(params, with_droop(ctrl, float(kp)), op, kind)
        roots = poly_roots(char)
        if rows and len(roots) != rows[-1].size:
            raise NumericalError(
                f"branch count changed from {rows[-1].size} to {len(roots)} at k_p = {kp}"
            )
        if not rows:
            rows.append(np.array(sorted(roots, key=lambda z: (z.real, z.imag))))
        else:
            rows.append(_match_branches(rows[-1], roots))
    return RootLocus(gains=gains, branches=np.vstack(rows))
