"""Well-posedness classifier for degenerate third-order model problems.

A problem is described by a :class:`DegeneracyProfile`: the leading
coefficient vanishes like ``t**ell`` at ``t = 0`` while the lower-order
coefficients carry time factors ``t**k`` / ``t**kprime`` and spatial decay
``<x>**-sigma2`` / ``<x>**-sigma1``.  Two growth indices ``q2`` and ``q1``
are computed from these parameters; the classifier turns them into one of
four answers: well-posed in L2, in H-infinity, in a Gevrey-type scale with
a finite supremum ``theta_sup`` of admissible indices, or out of scope of
the theory.

All arithmetic in this module is polymorphic: feed ``fractions.Fraction``
parameters and every comparison and result is exact rational arithmetic,
feed floats and you get floats.

Everything here is a pure function of its arguments; reentrant and safe
for unrestricted concurrent use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Union

Real = Union[int, float, "fractions.Fraction"]  # noqa: F821  (duck-typed)


class Kind(Enum):
    """Well-posedness space of a classified problem."""

    L2 = "L2"
    HINFINITY = "HInfinity"
    GEVREY_HINFINITY = "GevreyHInfinity"
    OUT_OF_SCOPE = "OutOfScope"


class WrongKindError(ValueError):
    """Raised when an operation needs a Gevrey-type class and got another."""


def _require_positive(**kwargs):
    for name, value in kwargs.items():
        if not value > 0:
            raise ValueError(f"{name} must be strictly positive, got {value}")


@dataclass(frozen=True)
class DegeneracyProfile:
    """Parameter tuple of a model problem plus its coefficient constants.

    ``ell`` is the vanishing order of the leading coefficient, ``k`` and
    ``kprime`` the time powers of the order-2/order-1 coefficients,
    ``sigma2`` and ``sigma1`` their spatial decay rates, ``T`` the time
    horizon.  ``c_a3 <= C_a3`` bound the leading coefficient from below and
    above; ``C_a2``, ``C_a1``, ``C_a0`` bound the lower-order ones.
    """

    ell: Real
    k: Real
    kprime: Real
    sigma1: Real
    sigma2: Real
    T: Real = 1.0
    c_a3: Real = 1.0
    C_a3: Real = 1.0
    C_a2: Real = 1.0
    C_a1: Real = 1.0
    C_a0: Real = 1.0

    def __post_init__(self):
        _require_positive(
            ell=self.ell, k=self.k, kprime=self.kprime,
            sigma1=self.sigma1, sigma2=self.sigma2, T=self.T,
            c_a3=self.c_a3, C_a3=self.C_a3,
            C_a2=self.C_a2, C_a1=self.C_a1, C_a0=self.C_a0,
        )
        if self.c_a3 > self.C_a3:
            raise ValueError(
                f"c_a3 ={self.c_a3} must not exceed C_a3 ={self.C_a3}")


@dataclass(frozen=True)
class WellPosednessClass:
    """Classifier output.

    ``theta_sup`` is present only for the Gevrey kind and satisfies
    ``theta_sup = 1/q`` with ``q = max(q2, q1)`` in ``(0, 1)``.  ``q1`` is
    stored clamped at zero; the raw value appears in ``trace``.
    ``regime`` tags the parameter regime and bullet that fired, and ``trace``
    is the ordered list of condition checks that led there.
    """

    kind: Kind
    q2: Real
    q1: Real
    q: Real
    regime: str
    trace: tuple[str, ...] = field(default_factory=tuple)
    theta_sup: Real | None = None

    def __post_init__(self):
        if self.kind is Kind.GEVREY_HINFINITY:
            if self.theta_sup is None or not (self.theta_sup > 1):
                raise ValueError("Gevrey class needs theta_sup > 1")
            if math.isinf(self.theta_sup):
                raise ValueError("Gevrey class must have finite theta_sup")
        elif self.theta_sup is not None:
            raise ValueError(f"theta_sup is meaningless for kind {self.kind}")


def compute_q2(ell: Real, k: Real, sigma2: Real) -> Real:
    """Level-2 growth index.

    For ``sigma2 < 1`` this balances the time gap ``ell - k`` against the
    spatial decay; for ``sigma2 >= 1`` only the gap matters.  The value may
    be negative when ``ell < k``; such profiles are handled by the
    no-gap branches of :func:`classify`, which use the decay-only indices.
    """
    _require_positive(ell=ell, k=k, sigma2=sigma2)
    if sigma2 >= 1:
        return 2 * (ell - k) / (ell + 1)
    return 2 * (1 - sigma2 * (k + 1) / (sigma2 * (ell - k) + (k + 1)))


def compute_q1(ell: Real, kprime: Real, sigma1: Real) -> Real:
    """Level-1 growth index, returned raw (un-clamped).

    Negative values mean the order-1 coefficient costs nothing; the
    classifier clamps them to zero but keeps the raw value in its trace.
    """
    _require_positive(ell=ell, kprime=kprime, sigma1=sigma1)
    if sigma1 >= 1:
        return (ell - 2 * kprime - 1) / (ell + 1)
    return 1 - 2 * sigma1 * (kprime + 1) / (sigma1 * (ell - kprime) + (kprime + 1))


def theta_range(wp: WellPosednessClass) -> tuple[Real, Real]:
    """Open interval (1, theta_sup) of admissible Gevrey indices."""
    if wp.kind is not Kind.GEVREY_HINFINITY:
        raise WrongKindError(f"theta_range undefined for kind {wp.kind.value}")
    assert wp.theta_sup is not None and not math.isinf(wp.theta_sup)
    return (1, wp.theta_sup)


def _fmt(x) -> str:
    return str(x) if not isinstance(x, float) else f"{x:.6g}"


def classify(profile: DegeneracyProfile) -> WellPosednessClass:
    """Apply the full decision tree to a profile.

    Dispatch is on the ordering of ``ell`` against ``k`` and ``kprime``:

    * ``ell > k``: level-2 degeneracy gap.  Requires ``ell < 2k+1`` and a
      strict lower bound on ``sigma2``; always Gevrey when admissible.
    * ``k >= ell > kprime``: gap only at level 1.
    * ``ell <= min(k, kprime)``: no gap; only the decay rates matter.

    Every positive-parameter profile maps to a class; OutOfScope is a valid
    answer carrying the violated hypothesis in its trace, never an error.
    """
    ell, k, kp = profile.ell, profile.k, profile.kprime
    s2, s1 = profile.sigma2, profile.sigma1
    trace: list[str] = []

    if ell > k:
        return _classify_gap2(ell, k, kp, s2, s1, trace)
    trace.append(f"ell={_fmt(ell)} <= k={_fmt(k)}: no gap at level 2")
    if ell > kp:
        return _classify_gap1(ell, kp, s2, s1, trace)
    trace.append(f"ell={_fmt(ell)} <= kprime={_fmt(kp)}: no gap at level 1")
    return _classify_no_gap(s2, s1, trace)


def _out_of_scope(q2, q1, branch, trace, violated):
    trace.append("violated: " + violated)
    return WellPosednessClass(
        kind=Kind.OUT_OF_SCOPE, q2=q2, q1=q1, q=max(q2, q1),
        regime=branch, trace=tuple(trace))


def _gevrey(q2, q1, branch, trace):
    q = max(q2, q1)
    trace.append(f"theta range: 1 < theta < 1/q = {_fmt(1 / q)}")
    return WellPosednessClass(
        kind=Kind.GEVREY_HINFINITY, q2=q2, q1=q1, q=q,
        regime=branch, trace=tuple(trace), theta_sup=1 / q)


def _clamp_q1(ell, kp, s1, trace):
    q1_raw = compute_q1(ell, kp, s1)
    if q1_raw > 0:
        trace.append(f"q1 = {_fmt(q1_raw)} > 0")
        return q1_raw
    trace.append(f"q1 raw = {_fmt(q1_raw)} <= 0: clamped to 0, 1/q1 = inf")
    return 0 * q1_raw + 0  # zero of the input arithmetic, never -0.0


def _classify_gap2(ell, k, kp, s2, s1, trace):
    """Level-2 gap regime: gap at the order-2 coefficient."""
    branch = "gap2"
    trace.append(f"ell={_fmt(ell)} > k={_fmt(k)}: level-2 degeneracy gap")
    if not ell < 2 * k + 1:
        return _out_of_scope(
            0, 0, branch + ".out_of_scope.gap_too_large", trace,
            f"ell < 2k+1 required, got ell={_fmt(ell)} >= {_fmt(2 * k + 1)}"
            " (q2 >= 1 for every sigma2 > 0)")
    trace.append(f"ell={_fmt(ell)} < 2k+1={_fmt(2 * k + 1)}: gap admissible")
    if s2 < 1:
        bound = (k + 1) / (2 + 3 * k - ell)
        if not s2 > bound:
            return _out_of_scope(
                0, 0, branch + ".out_of_scope.sigma2_low", trace,
                f"sigma2 > (k+1)/(2+3k-ell) required, got "
                f"sigma2={_fmt(s2)} <= {_fmt(bound)}")
        trace.append(
            f"sigma2={_fmt(s2)} > (k+1)/(2+3k-ell)={_fmt(bound)}: q2 < 1")
    else:
        trace.append(f"sigma2={_fmt(s2)} >= 1: decay threshold automatic")
    q2 = compute_q2(ell, k, s2)
    trace.append(f"q2 = {_fmt(q2)}")
    q1 = _clamp_q1(ell, kp, s1, trace)
    return _gevrey(q2, q1, branch, trace)


def _classify_gap1(ell, kp, s2, s1, trace):
    """Level-1 gap regime: k >= ell > kprime."""
    branch = "gap1"
    trace.append(f"ell={_fmt(ell)} > kprime={_fmt(kp)}: level-1 gap")
    if 2 * s2 <= 1:
        return _out_of_scope(
            0, 0, branch + ".out_of_scope.sigma2_low", trace,
            f"sigma2 > 1/2 required, got sigma2={_fmt(s2)}")
    q1 = _clamp_q1(ell, kp, s1, trace)
    if s2 < 1:
        q2 = 2 * (1 - s2)
        trace.append(f"sigma2={_fmt(s2)} in (1/2,1): level-2 index 2(1-sigma2)"
                     f" = {_fmt(q2)}")
        return _gevrey(q2, q1, branch + ".sigma2_mid", trace)
    q2 = 0 * s2
    if q1 > 0:
        trace.append(f"sigma2={_fmt(s2)} >= 1 and q1 > 0")
        return _gevrey(q2, q1, branch + ".sigma2_ge1", trace)
    if s2 == 1:
        trace.append("sigma2 = 1 and q1 <= 0: H-infinity well-posed "
                     "(gap at level 1 harmless: ell < 3kprime+2)")
        return WellPosednessClass(
            kind=Kind.HINFINITY, q2=q2, q1=q1, q=q2,
            regime=branch + ".hinf", trace=tuple(trace))
    trace.append("sigma2 > 1 and q1 <= 0: L2 well-posed")
    return WellPosednessClass(
        kind=Kind.L2, q2=q2, q1=q1, q=q2,
        regime=branch + ".l2", trace=tuple(trace))


def _classify_no_gap(s2, s1, trace):
    """No-gap regime: only the spatial decay rates decide."""
    branch = "nogap"
    if 2 * s2 <= 1:
        return _out_of_scope(
            0, 0, branch + ".out_of_scope.sigma2_low", trace,
            f"sigma2 > 1/2 required, got sigma2={_fmt(s2)}")
    q2 = 2 * (1 - s2) if s2 < 1 else 0 * s2
    q1 = 1 - 2 * s1 if 2 * s1 < 1 else 0 * s1
    trace.append(f"decay-only indices: q2 = {_fmt(q2)}, q1 = {_fmt(q1)}")
    if q2 > 0 or q1 > 0:
        return _gevrey(q2, q1, branch, trace)
    if s2 == 1:
        trace.append("sigma2 = 1, sigma1 >= 1/2: H-infinity well-posed")
        return WellPosednessClass(
            kind=Kind.HINFINITY, q2=q2, q1=q1, q=q2,
            regime=branch + ".hinf", trace=tuple(trace))
    trace.append("sigma2 > 1, sigma1 >= 1/2: L2 well-posed")
    return WellPosednessClass(
        kind=Kind.L2, q2=q2, q1=q1, q=q2,
        regime=branch + ".l2", trace=tuple(trace))
