"""Real-coefficient polynomial and rational transfer-function algebra.

All polynomials live in the per-unit Laplace variable s (omega_1 = 1 p.u.
corresponds to the base angular speed omega_b in rad/s). Coefficients are
stored in ascending degree order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateLoopError, InvalidDegreeError, PoleOnGridError

# Relative tolerance for coefficient comparison and trimming. Callers may
# override per call; this is the package-wide default.
COEFF_RTOL = 1e-9


def _trim(coeffs, rtol):
    c = [float(x) for x in coeffs]
    if not c:
        return (0.0,)
    scale = max(abs(x) for x in c)
    if scale == 0.0:
        return (0.0,)
    while len(c) > 1 and abs(c[-1]) <= rtol * scale:
        c.pop()
    return tuple(c)


@dataclass(frozen=True)
class Polynomial:
    """Real polynomial sum(coeffs[k] * s**k) with trimmed leading zeros."""

    coeffs: tuple

    def __init__(self, coeffs, rtol=None):
        object.__setattr__(self, "coeffs", _trim(coeffs, COEFF_RTOL if rtol is None else rtol))

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @property
    def is_zero(self) -> bool:
        return self.coeffs == (0.0,)

    def __call__(self, s):
        return poly_eval(self, s)

    def __add__(self, other):
        other = _as_poly(other)
        n = max(len(self.coeffs), len(other.coeffs))
        a = list(self.coeffs) + [0.0] * (n - len(self.coeffs))
        b = list(other.coeffs) + [0.0] * (n - len(other.coeffs))
        return Polynomial([x + y for x, y in zip(a, b)])

    def __sub__(self, other):
        return self + (_as_poly(other) * -1.0)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return Polynomial([c * other for c in self.coeffs])
        other = _as_poly(other)
        if self.is_zero or other.is_zero:
            return Polynomial([0.0])
        return Polynomial(np.convolve(self.coeffs, other.coeffs))

    __rmul__ = __mul__
    __radd__ = __add__

    def derivative(self) -> "Polynomial":
        if self.degree == 0:
            return Polynomial([0.0])
        return Polynomial([k * c for k, c in enumerate(self.coeffs)][1:])

    def monic(self) -> "Polynomial":
        lead = self.coeffs[-1]
        if lead == 0.0:
            return self
        return Polynomial([c / lead for c in self.coeffs])

    def approx_equal(self, other, rtol=None) -> bool:
        rtol = COEFF_RTOL if rtol is None else rtol
        other = _as_poly(other)
        if len(self.coeffs) != len(other.coeffs):
            return False
        scale = max(max(abs(c) for c in self.coeffs), max(abs(c) for c in other.coeffs), 1e-300)
        return all(abs(a - b) <= rtol * scale for a, b in zip(self.coeffs, other.coeffs))


def _as_poly(x) -> Polynomial:
    if isinstance(x, Polynomial):
        return x
    if isinstance(x, (int, float)):
        return Polynomial([float(x)])
    return Polynomial(x)


S = Polynomial([0.0, 1.0])  # the Laplace variable itself


def poly_eval(p: Polynomial, s) -> complex:
    """Evaluate p at a (possibly complex) point with Horner accumulation."""
    acc = 0.0 + 0.0j
    for c in reversed(p.coeffs):
        acc = acc * s + c
    return acc


def poly_from_roots(roots, leading=1.0) -> Polynomial:
    """Monic-product reconstruction; imaginary residue of real coefficients is dropped."""
    acc = np.array([1.0 + 0.0j])
    for r in roots:
        acc = np.convolve(acc, np.array([-r, 1.0 + 0.0j]))
    return Polynomial([float(c.real) * leading for c in acc])


def _newton_polish(p: Polynomial, dp: Polynomial, root, scale, steps=4):
    r = complex(root)
    for _ in range(steps):
        val = poly_eval(p, r)
        if abs(val) <= 1e-14 * scale:
            break
        der = poly_eval(dp, r)
        if abs(der) < 1e-30:
            break
        r = r - val / der
    return r


def _roots_cubic(c0, c1, c2, c3):
    # c3 s^3 + c2 s^2 + c1 s + c0, depressed via s = t - c2/(3 c3)
    b, c, d = c2 / c3, c1 / c3, c0 / c3
    shift = b / 3.0
    p = c - b * b / 3.0
    q = 2.0 * b**3 / 27.0 - b * c / 3.0 + d
    eps = 1e-14 * max(1.0, abs(p) ** 1.5, abs(q))
    if abs(p) <= eps and abs(q) <= eps:
        t = [0.0 + 0.0j] * 3
    else:
        disc = (q / 2.0) ** 2 + (p / 3.0) ** 3
        if disc <= 0.0:
            # three real roots: trigonometric form (p < 0 here)
            m = 2.0 * math.sqrt(-p / 3.0)
            arg = 3.0 * q / (p * m)
            arg = min(1.0, max(-1.0, arg))
            phi = math.acos(arg)
            t = [complex(m * math.cos((phi - 2.0 * math.pi * k) / 3.0)) for k in range(3)]
        else:
            # one real root, conjugate pair: Cardano with sign-safe cube root
            sq = math.sqrt(disc)
            u = -q / 2.0 + sq
            v = -q / 2.0 - sq
            a_ = math.copysign(abs(u) ** (1.0 / 3.0), u)
            b_ = math.copysign(abs(v) ** (1.0 / 3.0), v)
            t_real = a_ + b_
            re = -t_real / 2.0
            im = math.sqrt(3.0) / 2.0 * (a_ - b_)
            t = [complex(t_real), complex(re, im), complex(re, -im)]
    return [ti - shift for ti in t]


def _symmetrize_conjugates(roots, scale_im):
    """Snap near-real roots to the axis and force exact conjugate pairing."""
    out = []
    pool = sorted(roots, key=lambda z: (round(z.real / max(scale_im, 1e-300), 6), abs(z.imag)))
    used = [False] * len(pool)
    for i, z in enumerate(pool):
        if used[i]:
            continue
        if abs(z.imag) <= 1e-9 * max(1.0, abs(z)):
            out.append(complex(z.real, 0.0))
            used[i] = True
            continue
        best, best_d = None, None
        for j in range(i + 1, len(pool)):
            if used[j]:
                continue
            d = abs(pool[j] - z.conjugate())
            if best_d is None or d < best_d:
                best, best_d = j, d
        if best is not None and best_d <= 1e-9 * max(1.0, abs(z)):
            used[i] = used[best] = True
            re = 0.5 * (z.real + pool[best].real)
            im = 0.5 * (abs(z.imag) + abs(pool[best].imag))
            out.append(complex(re, im))
            out.append(complex(re, -im))
        else:
            used[i] = True
            out.append(z)
    return out


def poly_roots(p: Polynomial, rtol=None):
    """All deg(p) roots with multiplicity, sorted by (real, imag).

    Degrees 1..3 use closed forms (the cubic via the discriminant-based
    solution); higher degrees go through the companion-matrix eigenvalues of
    numpy.roots followed by Newton polishing.
    """
    if p.is_zero or p.degree == 0:
        raise InvalidDegreeError("root finding needs degree >= 1")
    c = p.coeffs
    if p.degree == 1:
        roots = [complex(-c[0] / c[1])]
    elif p.degree == 2:
        a, b, cc = c[2], c[1], c[0]
        disc = b * b - 4.0 * a * cc
        if disc >= 0.0:
            sq = math.sqrt(disc)
            if b == 0.0:
                r = sq / (2.0 * a)
                roots = [complex(-r), complex(r)]
            else:
                # cancellation-free pairing q/a, c/q
                q = -0.5 * (b + math.copysign(sq, b))
                roots = [complex(q / a), complex(cc / q)]
        else:
            sq = math.sqrt(-disc)
            roots = [complex(-b / (2 * a), sq / (2 * a)), complex(-b / (2 * a), -sq / (2 * a))]
    elif p.degree == 3:
        roots = _roots_cubic(*c)
    else:
        roots = [complex(z) for z in np.roots(list(reversed(c)))]
    dp = p.derivative()
    scale = max(abs(x) for x in c)
    roots = [_newton_polish(p, dp, r, scale) for r in roots]
    scale_root = max((abs(r) for r in roots), default=1.0)
    roots = _symmetrize_conjugates(roots, scale_root)
    return sorted(roots, key=lambda z: (z.real, z.imag))


@dataclass(frozen=True)
class RationalTF:
    """Rational function num/den with the denominator scaled monic."""

    num: Polynomial
    den: Polynomial

    def __init__(self, num, den=(1.0,)):
        num = _as_poly(num)
        den = _as_poly(den)
        if den.is_zero:
            raise ZeroDivisionError("rational function with zero denominator")
        lead = den.coeffs[-1]
        object.__setattr__(self, "num", num * (1.0 / lead))
        object.__setattr__(self, "den", den * (1.0 / lead))

    @property
    def is_zero(self) -> bool:
        return self.num.is_zero

    def __call__(self, s) -> complex:
        return poly_eval(self.num, s) / poly_eval(self.den, s)

    def __add__(self, other):
        return rat_arith(self, other, "add")

    def __sub__(self, other):
        return rat_arith(self, other, "sub")

    def __mul__(self, other):
        return rat_arith(self, other, "mul")

    def approx_equal(self, other, rtol=None) -> bool:
        other = _as_tf(other)
        return self.num.approx_equal(other.num, rtol) and self.den.approx_equal(other.den, rtol)


def _as_tf(x) -> RationalTF:
    if isinstance(x, RationalTF):
        return x
    if isinstance(x, Polynomial):
        return RationalTF(x)
    return RationalTF(_as_poly(x))


def rat_arith(a: RationalTF, b, op: str) -> RationalTF:
    """Cross-multiplication arithmetic; no implicit pole-zero cancellation."""
    a, b = _as_tf(a), _as_tf(b)
    if op == "add":
        return RationalTF(a.num * b.den + b.num * a.den, a.den * b.den)
    if op == "sub":
        return RationalTF(a.num * b.den - b.num * a.den, a.den * b.den)
    if op == "mul":
        return RationalTF(a.num * b.num, a.den * b.den)
    raise ValueError(f"unknown op {op!r}")


def rat_feedback(L: RationalTF) -> RationalTF:
    """Unit negative feedback L / (1 + L)."""
    char = L.num + L.den
    if char.is_zero:
        raise DegenerateLoopError("1 + L is identically zero")
    return RationalTF(L.num, char)


def freq_response(tf: RationalTF, omegas, pole_rtol=1e-9):
    """Evaluate tf at s = j*omega for every sample.

    Raises PoleOnGridError when a sample sits on an imaginary-axis pole,
    detected as |den(j w)| below pole_rtol times the coefficient scale.
    """
    out = np.empty(len(omegas), dtype=complex)
    for k, w in enumerate(omegas):
        s = 1j * float(w)
        den = poly_eval(tf.den, s)
        scale = sum(abs(c) * abs(w) ** i for i, c in enumerate(tf.den.coeffs))
        if abs(den) <= pole_rtol * max(scale, 1e-300):
            raise PoleOnGridError(float(w))
        out[k] = poly_eval(tf.num, s) / den
    return out


def zero_tf() -> RationalTF:
    return RationalTF(Polynomial([0.0]), Polynomial([1.0]))
