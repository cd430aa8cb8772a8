"""Discretization of symbols as linear operators on a periodic grid.

Symbols p(x, xi) act on grid functions through the standard left
quantization: forward DFT, pointwise multiplication by the dense evaluation
p(x_j, xi_m), and the inverse transform written as a direct double sum.
The reverse quantization evaluates the symbol at the integration variable
instead and coincides with the L2 adjoint for real symbols.  On top of
these the module builds the exponential conjugator exp(Lambda)(x, D), its
reverse, and the Neumann-series inverse, and probes how conjugation shifts
the frequency order of a symbol.

Everything here is dense O(N^2); exactness at grid resolution is preferred
over speed, and desk scale caps at N = 4096.  Quantizers and operator
handles are immutable after construction and safe to share across
concurrent evaluations; power iteration is internally sequential.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from gevolab.symbol_lab import SymbolField, xi_weight

EXP_ARG_LIMIT = 700.0  # largest exponent exp() survives in double precision

GridFunction = np.ndarray  # N complex samples on the spatial grid


class NotInvertible(RuntimeError):
    """Residual norm of the conjugator composition reached 1.

    Carries the measured norm; h below the invertibility threshold.
    """

    def __init__(self, residual_norm: float):
        super().__init__(
            f"exp(Lambda) not invertible at this h: residual norm "
            f"{residual_norm:.6g} >= 1")
        self.residual_norm = residual_norm


class OverflowGuardError(ValueError):
    """A requested exponential weight would overflow double precision."""


@dataclass(frozen=True)
class Quantizer:
    """Periodic grid turning symbols into linear actions.

    ``N`` grid points on ``x in [-L, L)``; the discrete frequencies are
    ``pi/L * {-N/2, ..., N/2 - 1}``.  ``h >= 1`` enters every shifted
    bracket ``<xi>_h``.  ``dealias_fraction`` marks the fraction of the
    spectrum kept when a caller asks for dealiased symbol application.
    """

    N: int
    L: float
    h: float = 1.0
    dealias_fraction: float = 1.0

    def __post_init__(self):
        if self.N < 16 or (self.N & (self.N - 1)) != 0:
            raise ValueError(f"N must be a power of two >= 16, got {self.N}")
        if self.L <= 0:
            raise ValueError("L must be positive")
        if self.h < 1:
            raise ValueError("h must satisfy h >= 1")
        if not 0.0 < self.dealias_fraction <= 1.0:
            raise ValueError("dealias_fraction must lie in (0, 1]")

    @property
    def x(self) -> np.ndarray:
        return -self.L + 2.0 * self.L * np.arange(self.N) / self.N

    @property
    def xi_grid(self) -> np.ndarray:
        """Frequencies in ascending order -N/2 .. N/2-1 (units pi/L)."""
        return math.pi / self.L * (np.arange(self.N) - self.N // 2)

    @property
    def xi_fft(self) -> np.ndarray:
        """Frequencies in FFT storage order."""
        return np.fft.ifftshift(self.xi_grid)

    @property
    def xi_max(self) -> float:
        return math.pi / self.L * (self.N // 2)

    def dealias_mask(self) -> np.ndarray:
        """Mask (FFT order) keeping |xi| <= dealias_fraction * xi_max."""
        return np.abs(self.xi_fft) <= self.dealias_fraction * self.xi_max


@dataclass
class OperatorHandle:
    """A linear action on grid functions with optional dense realization."""

    apply: Callable[[GridFunction], GridFunction]
    kind: str  # direct | reverse | multiplier | composed
    symbol_label: str
    quantizer: Quantizer
    _matrix_builder: Callable[[], np.ndarray] | None = field(default=None,
                                                             repr=False)
    _matrix: np.ndarray | None = field(default=None, repr=False)

    def matrix(self) -> np.ndarray:
        """Dense N x N matrix of the action (built once, cached)."""
        if self._matrix is None:
            if self._matrix_builder is not None:
                self._matrix = self._matrix_builder()
            else:
                eye = np.eye(self.quantizer.N, dtype=complex)
                self._matrix = np.column_stack(
                    [self.apply(eye[:, j]) for j in range(self.quantizer.N)])
        return self._matrix


def _symbol_table(q: Quantizer, sym: SymbolField, t: float,
                  dealias: bool) -> np.ndarray:
    """Dense evaluation p(x_j, xi_m) on the grid, frequencies in FFT order."""
    P = np.asarray(sym.eval(t, q.x[:, None], q.xi_fft[None, :]),
                   dtype=complex)
    P = np.broadcast_to(P, (q.N, q.N)).copy()
    if not np.all(np.isfinite(P)):
        raise ValueError(f"symbol {sym.label!r} not finite on the grid")
    if dealias and q.dealias_fraction < 1.0:
        P[:, ~q.dealias_mask()] = 0.0
    return P


def _phases(q: Quantizer) -> np.ndarray:
    """E[j, m] = exp(i x_j xi_m) in FFT frequency order.

    With x_j = -L + j dx and xi_m = pi m / L these reduce to the DFT
    twiddles exp(2 pi i j m / N) times (-1)^m; the same sign flip appears
    in the forward transform and the two cancel, so the plain circulant
    phases are exact here.
    """
    j = np.arange(q.N)
    return np.exp(2j * math.pi * np.outer(j, np.fft.ifftshift(
        np.arange(q.N) - q.N // 2)) / q.N)


def quantize(q: Quantizer, sym: SymbolField, t: float = 0.0,
             dealias: bool = False) -> OperatorHandle:
    """Left quantization: u -> (1/N) sum_m e^{i x_j xi_m} p(x_j, xi_m) u^(xi_m)."""
    P = _symbol_table(q, sym, t, dealias)
    E = _phases(q)
    W = P * E / q.N

    def apply(u: GridFunction) -> GridFunction:
        return W @ np.fft.fft(np.asarray(u, dtype=complex))

    def build() -> np.ndarray:
        return W @ E.conj().T

    return OperatorHandle(apply=apply, kind="direct", symbol_label=sym.label,
                          quantizer=q, _matrix_builder=build)


def quantize_reverse(q: Quantizer, sym: SymbolField, t: float = 0.0,
                     dealias: bool = False) -> OperatorHandle:
    """Reverse quantization: the symbol rides the integration variable.

    For real symbols this is exactly the conjugate transpose of
    :func:`quantize` at grid resolution, hence the discrete L2 adjoint.
    """
    P = _symbol_table(q, sym, t, dealias)
    E = _phases(q)
    V = P.T * E.conj().T / q.N  # V[m, j] = p(x_j, xi_m) e^{-i xi_m x_j} / N

    def apply(u: GridFunction) -> GridFunction:
        return E @ (V @ np.asarray(u, dtype=complex))

    def build() -> np.ndarray:
        return E @ V

    return OperatorHandle(apply=apply, kind="reverse", symbol_label=sym.label,
                          quantizer=q, _matrix_builder=build)


def multiplier(q: Quantizer, values_fft: np.ndarray,
               label: str) -> OperatorHandle:
    """Fourier multiplier from values on the FFT-ordered frequency grid."""
    values_fft = np.asarray(values_fft, dtype=complex)

    def apply(u: GridFunction) -> GridFunction:
        return np.fft.ifft(values_fft * np.fft.fft(np.asarray(u, complex)))

    def build() -> np.ndarray:
        E = _phases(q)
        return (E * values_fft[None, :]) @ E.conj().T / q.N

    return OperatorHandle(apply=apply, kind="multiplier", symbol_label=label,
                          quantizer=q, _matrix_builder=build)


def exp_weight(q: Quantizer, rho: float, theta: float) -> OperatorHandle:
    """Gevrey weight multiplier exp(rho <xi>_h^(1/theta))."""
    if theta <= 1:
        raise ValueError("theta must exceed 1")
    top = abs(rho) * xi_weight(q.xi_max, q.h) ** (1.0 / theta)
    if top > EXP_ARG_LIMIT:
        raise OverflowGuardError(
            f"exp weight overflows: rho={rho}, theta={theta}, "
            f"xi_max={q.xi_max:.6g} gives exponent {top:.6g} > {EXP_ARG_LIMIT}")
    vals = np.exp(rho * xi_weight(q.xi_fft, q.h) ** (1.0 / theta))
    return multiplier(q, vals, label=f"exp({rho:+.6g}<xi>_h^(1/{theta:g}))")


def spectral_norm(M: np.ndarray, rng: np.random.Generator,
                  tol: float = 1e-8, max_iters: int = 500) -> float:
    """Largest singular value by power iteration on M* M."""
    n = M.shape[0]
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    nv = np.linalg.norm(v)
    if nv == 0:
        v = np.ones(n, dtype=complex)
        nv = math.sqrt(n)
    v /= nv
    sigma = 0.0
    MH = M.conj().T
    for _ in range(max_iters):
        w = MH @ (M @ v)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        sigma_new = math.sqrt(nw)
        v = w / nw
        if abs(sigma_new - sigma) <= tol * max(sigma_new, 1e-300):
            return sigma_new
        sigma = sigma_new
    return sigma


@dataclass
class Conjugator:
    """Forward weight operator, its inverse, and inversion diagnostics."""

    E: OperatorHandle
    E_inv: OperatorHandle
    residual_norm: float
    inverse_check_norm: float
    neumann_terms: int
    h: float
    t: float
    lambda_sup: float


def build_conjugator(q: Quantizer, profile, consts, plan, cutoffs,
                     t: float | None = None,
                     rng: np.random.Generator | None = None,
                     neumann_tail: float = 1e-12,
                     max_neumann: int = 20000) -> Conjugator:
    """Build exp(Lambda)(x, D) at time t and invert it by Neumann series.

    The composition of the forward operator with the reverse of
    exp(-Lambda) is the identity plus a residual whose norm decays like a
    negative power of h; the caller is expected to raise h when
    :class:`NotInvertible` signals a residual at or above one.
    """
    from gevolab import symbol_lab as sl

    if t is None:
        t = float(profile.T)
    if rng is None:
        rng = np.random.default_rng(42)
    window = sl.box_window(q.L, cutoffs)
    lam_field = sl.Lambda_field(profile, consts, plan, cutoffs,
                                x_window=window)
    lam_vals = np.asarray(lam_field.eval(t, q.x[:, None], q.xi_fft[None, :]),
                          dtype=float)
    lam_sup = float(np.max(np.abs(lam_vals)))
    if lam_sup > EXP_ARG_LIMIT:
        raise OverflowGuardError(
            f"sup|Lambda| = {lam_sup:.6g} would overflow exp()")

    def make_field(sign):
        def eval_(t_, x_, xi_):
            return np.exp(sign * lam_field.eval(t_, x_, xi_))
        return SymbolField(eval=eval_, order_xi=0.0, weight_x=0.0,
                           time_power=0.0,
                           label=("exp(+Lambda)" if sign > 0 else "exp(-Lambda)"))

    E = quantize(q, make_field(+1.0), t)
    R = quantize_reverse(q, make_field(-1.0), t)
    eye = np.eye(q.N, dtype=complex)
    residual = E.matrix() @ R.matrix() - eye
    res_norm = spectral_norm(residual, rng)
    if res_norm >= 1.0:
        raise NotInvertible(res_norm)

    if res_norm < neumann_tail:
        terms = 0
    else:
        terms = max(0, math.ceil(math.log(neumann_tail)
                                 / math.log(res_norm)) - 1)
        terms = min(terms, max_neumann)
    # Horner form of sum_{j<=terms} (-residual)^j
    S = eye.copy()
    for _ in range(terms):
        S = eye - residual @ S
    inv_matrix = R.matrix() @ S

    E_inv = OperatorHandle(
        apply=lambda u, M=inv_matrix: M @ np.asarray(u, dtype=complex),
        kind="composed", symbol_label="exp(Lambda)^-1", quantizer=q,
        _matrix=inv_matrix)
    check = spectral_norm(E.matrix() @ inv_matrix - eye, rng)
    return Conjugator(E=E, E_inv=E_inv, residual_norm=res_norm,
                      inverse_check_norm=check, neumann_terms=terms,
                      h=consts.h, t=t, lambda_sup=lam_sup)


def band_test_functions(q: Quantizer, centers: np.ndarray,
                        width: float | None = None) -> list[GridFunction]:
    """Gaussian wave packets localized near each frequency center."""
    if width is None:
        width = q.L / 8.0
    x = q.x
    return [np.exp(1j * c * x - x ** 2 / (2.0 * width ** 2)) for c in centers]


@dataclass
class ConjugationRemainderReport:
    """Fitted frequency order of E p(x,D) E^-1 - p(x,D)."""

    centers: np.ndarray
    responses: np.ndarray
    fitted_order: float
    order_bound: float
    within_bound: bool


def conjugation_probe(q: Quantizer, conj: Conjugator, sym: SymbolField,
                      t: float, symbol_order: float, q_index: float,
                      centers: np.ndarray | None = None,
                      tolerance: float = 0.2) -> ConjugationRemainderReport:
    """Measure the order drop produced by conjugation.

    The remainder of conjugating a symbol of order m should sit at order
    m - (1 - q); its action on band-localized packets is fitted against
    <center>_h on a log-log scale and compared with the bound plus a
    discretization tolerance.
    """
    if centers is None:
        centers = np.geomspace(0.12 * q.xi_max, 0.6 * q.xi_max, 6)
    P = quantize(q, sym, t)
    remainder = conj.E.matrix() @ P.matrix() @ conj.E_inv.matrix() - P.matrix()
    responses = []
    for u in band_test_functions(q, centers):
        responses.append(np.linalg.norm(remainder @ u) / np.linalg.norm(u))
    responses = np.asarray(responses)
    logs = np.log(xi_weight(centers, q.h))
    slope = float(np.polyfit(logs, np.log(responses), 1)[0])
    bound = symbol_order - (1.0 - q_index) + tolerance
    return ConjugationRemainderReport(
        centers=centers, responses=responses, fitted_order=slope,
        order_bound=bound, within_bound=slope <= bound)
