"""Finite-M limit distributions.

``F_{M,p}`` for ``1/2 < p < 1`` is a contour integral of a Fredholm
determinant.  The operator is the Gaussian kernel

    K(z, z') = p / sqrt(2 pi) * exp(-(p^2 + q^2)(z^2 + z'^2)/4 + p q z z')

restricted to ``(-s, inf)``; it is discretized by Gauss-Legendre (Nystrom)
on ``(-s, -s + L)`` and the determinant ``det(I - lambda K)`` is evaluated
by LU with partial pivoting.  The outer integral runs over the circle
``|lambda| = r`` enclosing the poles ``(p/q)^k``, ``k < M``, with the
trapezoid rule.

For ``p = 1`` the law is that of the largest eigenvalue of an M x M GUE
matrix, evaluated exactly as a ratio of Hankel determinants of truncated
Gaussian moments (Andreief identity).  Monte Carlo samplers for the same
law (GUE via Jacobi rotations, Brownian last passage percolation) serve as
cross-checks.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import mpmath
import numpy as np

from .errors import ConfigurationError, NumericError, UsageError

SQRT_2PI = math.sqrt(2.0 * math.pi)

# exp(-_TRACE_TAIL) bounds the truncated diagonal of the kernel
_TRACE_TAIL = 36.0
_MIN_L = 12.0
_MIN_M = 64
_TWO_PI = 2.0 * math.pi


def _check_open_p(p: float) -> None:
    if not (0.5 < p < 1.0):
        raise UsageError(f"the contour formula needs 1/2 < p < 1, got {p!r}")


@dataclass(frozen=True)
class KernelSpec:
    p: float
    s: float = 0.0

    def __post_init__(self):
        if not (0.5 < self.p <= 1.0):
            raise UsageError(f"p must lie in (1/2, 1], got {self.p!r}")

    @property
    def q(self) -> float:
        return 1.0 - self.p


def kernel_eval(spec: KernelSpec, z, zp):
    """Kernel value; broadcasts over array arguments."""
    p, q = spec.p, spec.q
    z = np.asarray(z, dtype=float)
    zp = np.asarray(zp, dtype=float)
    out = p / SQRT_2PI * np.exp(-(p * p + q * q) * (z * z + zp * zp) / 4.0 + p * q * (z * zp))
    return float(out) if out.ndim == 0 else out


def default_length(p: float, s: float) -> float:
    """Truncation length so that the diagonal beyond ``-s + L`` is below ``exp(-36)``."""
    z_hi = math.sqrt(2.0 * _TRACE_TAIL) / (2.0 * p - 1.0)
    return max(_MIN_L, s + z_hi)


def default_nodes(p: float, L: float, M: int = 1) -> int:
    """Node count resolving the oscillations of the eigenfunctions that matter.

    Eigenvalues are ``(q/p)^k``; the Hermite functions up to ``k ~ 36/log(p/q) + M``
    oscillate on the scale ``1/(c sqrt(2k))`` with ``c = sqrt((p - q)/2)``.
    """
    q = 1.0 - p
    c = math.sqrt((p - q) / 2.0)
    k_max = _TRACE_TAIL / math.log(p / q) + M
    m = int(math.ceil(0.75 * L * c * math.sqrt(2.0 * k_max))) + 16
    return max(_MIN_M, m)


class NystromOperator:
    """Symmetrized Gauss-Legendre discretization of the kernel on ``(-s, -s + L)``."""

    def __init__(self, p: float, s: float, m: Optional[int] = None, L: Optional[float] = None, M: int = 1):
        _check_open_p(p)
        if not math.isfinite(s):
            raise UsageError(f"s must be finite, got {s!r}")
        self.p = p
        self.s = float(s)
        self.L = float(default_length(p, s) if L is None else L)
        self.m = int(default_nodes(p, self.L, M) if m is None else m)
        if self.m < 1 or self.L <= 0:
            raise UsageError("need m >= 1 and L > 0")
        x, w = np.polynomial.legendre.leggauss(self.m)
        a = -self.s
        self.nodes = a + 0.5 * self.L * (x + 1.0)
        self.weights = 0.5 * self.L * w
        sw = np.sqrt(self.weights)
        k = kernel_eval(KernelSpec(p, s), self.nodes[:, None], self.nodes[None, :])
        self.matrix = sw[:, None] * k * sw[None, :]
        if not np.all(np.isfinite(self.matrix)):
            raise NumericError("non-finite kernel matrix", {"p": p, "s": s, "m": self.m, "L": self.L})

    def trace(self) -> float:
        return float(np.trace(self.matrix))

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)[::-1]

    def log_det(self, lams) -> np.ndarray:
        """``log det(I - lam A)`` for an array of complex ``lam`` (principal branch of the sign)."""
        lams = np.atleast_1d(np.asarray(lams, dtype=complex))
        eye = np.eye(self.m)
        mats = eye[None, :, :] - lams[:, None, None] * self.matrix[None, :, :]
        sign, logabs = np.linalg.slogdet(mats)
        return np.log(sign) + logabs


def fredholm_det(op: NystromOperator, lam: complex) -> complex:
    """``det(I - lam A)`` by LU factorization with partial pivoting."""
    lam = complex(lam)
    if not (math.isfinite(lam.real) and math.isfinite(lam.imag)):
        raise NumericError(f"non-finite lambda {lam!r}")
    if lam == 0:
        return 1.0 + 0.0j
    sign, logabs = np.linalg.slogdet(np.eye(op.m) - lam * op.matrix)
    val = complex(sign * np.exp(logabs))
    if not (math.isfinite(val.real) and math.isfinite(val.imag)):
        raise NumericError("non-finite determinant", {"lambda": lam, "m": op.m, "L": op.L})
    return val


def default_radius(M: int, p: float, factor: float = 1.5) -> float:
    q = 1.0 - p
    return factor * (p / q) ** (M - 1)


def _check_radius(M: int, p: float, r: float, tol: float = 1e-9) -> None:
    q = 1.0 - p
    for k in range(M):
        pole = (p / q) ** k
        if abs(r - pole) < tol * max(1.0, pole):
            raise ConfigurationError(f"contour radius {r} passes through the pole (p/q)^{k} = {pole}")
    if r <= (p / q) ** (M - 1):
        raise ConfigurationError(
            f"contour radius {r} must exceed (p/q)^(M-1) = {(p / q) ** (M - 1)} to enclose every pole"
        )


@dataclass
class LawValue:
    """One evaluation of ``F_{M,p}(s)`` with its diagnostics."""

    M: int
    p: float
    s: float
    raw: float
    imag: float
    m: Optional[int] = None
    L: Optional[float] = None
    r: Optional[float] = None
    n_lambda: Optional[int] = None
    refinement_delta: Optional[float] = None
    method: str = "contour"

    @property
    def value(self) -> float:
        return min(1.0, max(0.0, self.raw))


def contour_integral(op: NystromOperator, M: int, r: float, n_lambda: int = 256, symmetric: bool = True,
                     method: str = "lu"):
    """Trapezoid rule for the contour integral; returns ``(real part, imaginary part)``.

    ``method="lu"`` factors ``I - lambda A`` at every node; ``"eig"`` diagonalizes the
    symmetric ``A`` once and multiplies ``1 - lambda a_i``, which is much cheaper for tables.
    """
    if n_lambda < 2 or n_lambda % 2:
        raise UsageError(f"n_lambda must be a positive even number, got {n_lambda}")
    p = op.p
    ratio = (1.0 - p) / p
    if symmetric:
        j = np.arange(n_lambda // 2 + 1)
    else:
        j = np.arange(n_lambda)
    lams = r * np.exp(1j * _TWO_PI * j / n_lambda)
    if method == "lu":
        logd = op.log_det(lams)
    elif method == "eig":
        a = np.linalg.eigvalsh(op.matrix)
        logd = np.log(1.0 - lams[:, None] * a[None, :]).sum(axis=1)
    else:
        raise UsageError(f"unknown determinant method {method!r}")
    poles = np.zeros_like(lams)
    for k in range(M):
        poles += np.log(1.0 - lams * ratio**k)
    vals = np.exp(logd - poles)
    if not np.all(np.isfinite(vals)):
        raise NumericError("non-finite contour integrand", {"M": M, "p": p, "r": r})
    # d(lambda)/(2 pi i lambda) = d(theta)/(2 pi)
    if symmetric:
        total = vals[0] + vals[-1] + 2.0 * vals[1:-1].real.sum()
        imag = max(abs(vals[0].imag), abs(vals[-1].imag))
        return float(total.real) / n_lambda, float(imag)
    total = vals.sum() / n_lambda
    return float(total.real), float(abs(total.imag))


def f_mp_detail(
    M: int,
    p: float,
    s: float,
    m: Optional[int] = None,
    L: Optional[float] = None,
    r: Optional[float] = None,
    n_lambda: int = 256,
    refine: bool = False,
    tol: float = 1e-6,
    method: str = "lu",
) -> LawValue:
    """``F_{M,p}(s)`` with diagnostics; ``p = 1`` is routed to the GUE formula."""
    if M < 1:
        raise UsageError(f"M must be >= 1, got {M}")
    if not (0.5 < p <= 1.0):
        raise UsageError(f"p must lie in (1/2, 1], got {p!r}")
    if p == 1.0:
        return LawValue(M, p, s, f_m1_gram(M, s), 0.0, method="gram")
    r = default_radius(M, p) if r is None else float(r)
    _check_radius(M, p, r)
    op = NystromOperator(p, s, m=m, L=L, M=M)
    raw, imag = contour_integral(op, M, r, n_lambda, method=method)
    out = LawValue(M, p, s, raw, imag, op.m, op.L, r, n_lambda)
    if refine:
        fine = NystromOperator(p, s, m=2 * op.m, L=op.L + 4.0, M=M)
        raw2, _ = contour_integral(fine, M, r, 2 * n_lambda, method=method)
        out.refinement_delta = abs(raw2 - raw)
        if out.refinement_delta > tol:
            raise NumericError(
                f"F_(M={M},p={p})({s}) not converged: refinement changed it by {out.refinement_delta:.3g}",
                {"coarse": raw, "fine": raw2, "m": op.m, "L": op.L, "n_lambda": n_lambda, "tol": tol},
            )
    if not (-1e-6 <= raw <= 1.0 + 1e-6):
        raise NumericError(
            f"F_(M={M},p={p})({s}) = {raw} lies outside [0, 1]",
            {"raw": raw, "imag": imag, "m": op.m, "L": op.L, "r": r},
        )
    return out


@lru_cache(maxsize=4096)
def _f_cached(M, p, s, m, L, r, n_lambda):
    return f_mp_detail(M, p, s, m=m, L=L, r=r, n_lambda=n_lambda).value


def f_mp(M: int, p: float, s: float, m: Optional[int] = None, L: Optional[float] = None,
         r: Optional[float] = None, n_lambda: int = 256) -> float:
    """``F_{M,p}(s)`` clamped to [0, 1] (``p = 1`` uses :func:`f_m1_gram`)."""
    return _f_cached(int(M), float(p), float(s), m, L, r, int(n_lambda))


def limit_cdf(M: int, p: float):
    """Vectorized reference CDF ``s -> F_{M,p}(s)`` (tabulated and interpolated for p < 1)."""
    if p == 1.0:
        return lambda s: f_m1_gram_vec(M, s)
    table = reference_table(M, p)
    return table


@lru_cache(maxsize=64)
def reference_table(M: int, p: float, s_min: float = -8.0, s_max: float = 8.0, step: float = 0.025):
    """Dense table of ``F_{M,p}`` for interpolation (eigenvalue determinant, fixed numerics)."""
    n = int(round((s_max - s_min) / step)) + 1
    return build_table(M, p, np.linspace(s_min, s_max, n), refine=False, method="eig")


def residue_form(M: int, p: float, s: float, m: Optional[int] = None, L: Optional[float] = None) -> float:
    """Sum of residues of the contour integrand.

    ``1 - sum_k det(I - (p/q)^k K) / prod_{j != k} (1 - (q/p)^(j-k))``; for ``M = 1``
    this is ``1 - det(I - K)``.
    """
    _check_open_p(p)
    op = NystromOperator(p, s, m=m, L=L, M=M)
    q = 1.0 - p
    total = 1.0
    for k in range(M):
        lam_k = (p / q) ** k
        denom = 1.0
        for j in range(M):
            if j != k:
                denom *= 1.0 - (q / p) ** (j - k)
        total -= fredholm_det(op, lam_k).real / denom
    return total


# -- p = 1: GUE largest eigenvalue -----------------------------------------------------


def _truncated_moments(n: int, s) -> list:
    """``mu_k(s) = int_{-inf}^s x^k exp(-x^2/2) dx`` for ``k < n`` (mpmath numbers)."""
    g = mpmath.exp(-s * s / 2)
    mu = [mpmath.sqrt(2 * mpmath.pi) * mpmath.ncdf(s)]
    if n > 1:
        mu.append(-g)
    for k in range(2, n):
        mu.append((k - 1) * mu[k - 2] - s ** (k - 1) * g)
    return mu[:n]


def _full_moments(n: int) -> list:
    out = []
    for k in range(n):
        out.append(mpmath.mpf(0) if k % 2 else mpmath.sqrt(2 * mpmath.pi) * mpmath.fac2(k - 1))
    return out


def f_m1_gram(M: int, s: float, dps: int = 60, max_m: int = 12) -> float:
    """``P(largest eigenvalue of M x M GUE <= s)``, exact up to floating point."""
    if M < 1:
        raise UsageError(f"M must be >= 1, got {M}")
    if M > max_m:
        raise NumericError(
            f"Hankel moment determinant for M={M} exceeds the guard M <= {max_m}",
            {"M": M, "max_m": max_m},
        )
    if s == math.inf:
        return 1.0
    if s == -math.inf:
        return 0.0
    return _gram_cached(int(M), float(s), int(dps))


@lru_cache(maxsize=4096)
def _gram_cached(M: int, s: float, dps: int) -> float:
    with mpmath.workdps(dps):
        ms = mpmath.mpf(s)
        mu = _truncated_moments(2 * M - 1, ms)
        full = _full_moments(2 * M - 1)
        num = mpmath.det(mpmath.matrix([[mu[i + j] for j in range(M)] for i in range(M)]))
        den = mpmath.det(mpmath.matrix([[full[i + j] for j in range(M)] for i in range(M)]))
        val = num / den
    out = float(val)
    if not math.isfinite(out) or out < -1e-12 or out > 1 + 1e-12:
        raise NumericError(f"Gram ratio {out} out of range for M={M}, s={s}", {"M": M, "s": s, "dps": dps})
    return min(1.0, max(0.0, out))


def f_m1_gram_vec(M: int, s) -> np.ndarray:
    """Double-precision Gram ratio for an array of ``s`` (accurate to ~1e-12 for M <= 12)."""
    from scipy.special import ndtr

    if M < 1:
        raise UsageError(f"M must be >= 1, got {M}")
    s = np.asarray(s, dtype=float)
    with np.errstate(invalid="ignore", over="ignore"):
        g = np.exp(-s * s / 2.0)
        mu = [SQRT_2PI * ndtr(s)]
        if M > 1:
            mu.append(-g)
        for k in range(2, 2 * M - 1):
            mu.append((k - 1) * mu[k - 2] - np.where(g > 0, s ** (k - 1) * g, 0.0))
    mu = np.stack(mu, axis=-1)
    hankel = np.stack([mu[..., i:i + M] for i in range(M)], axis=-2)
    full = [float(v) for v in _full_moments(2 * M - 1)]
    norm = np.linalg.det(np.array([[full[i + j] for j in range(M)] for i in range(M)]))
    out = np.linalg.det(hankel) / norm
    out = np.where(np.isposinf(s), 1.0, np.where(np.isneginf(s), 0.0, out))
    return np.clip(out, 0.0, 1.0)


def gue_matrices(M: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` GUE matrices: N(0,1) diagonal, off-diagonal real and imaginary parts of variance 1/2."""
    re = rng.standard_normal((n, M, M)) * math.sqrt(0.5)
    im = rng.standard_normal((n, M, M)) * math.sqrt(0.5)
    upper = np.triu(re + 1j * im, 1)
    diag = rng.standard_normal((n, M))
    h = upper + np.conj(np.swapaxes(upper, 1, 2))
    idx = np.arange(M)
    h[:, idx, idx] = diag
    return h


def jacobi_eigvalsh(h: np.ndarray, tol: float = 1e-13, max_sweeps: int = 60) -> np.ndarray:
    """Eigenvalues of a stack of Hermitian matrices by cyclic complex Jacobi rotations.

    Each rotation first removes the phase of ``a_pq`` with a diagonal unitary and
    then applies the classical real rotation.  Returns ascending eigenvalues.
    """
    a = np.array(h, dtype=complex, copy=True)
    if a.ndim == 2:
        return jacobi_eigvalsh(a[None], tol, max_sweeps)[0]
    n, M, _ = a.shape
    if M == 1:
        return a[:, :, 0].real.copy()
    scale = np.sqrt(np.sum(np.abs(a) ** 2, axis=(1, 2))) + 1e-300
    offmask = ~np.eye(M, dtype=bool)
    for sweep in range(max_sweeps):
        off = np.sqrt(np.sum(np.abs(a[:, offmask]) ** 2, axis=1))
        if np.all(off <= tol * scale):
            break
        for i in range(M - 1):
            for j in range(i + 1, M):
                b = a[:, i, j]
                mag = np.abs(b)
                live = mag > 1e-300
                phase = np.where(live, b / np.where(live, mag, 1.0), 1.0)
                aii = a[:, i, i].real
                ajj = a[:, j, j].real
                tau = np.where(live, (ajj - aii) / (2.0 * np.where(live, mag, 1.0)), 0.0)
                t = np.where(live, np.sign(tau + (tau == 0)) / (np.abs(tau) + np.hypot(1.0, tau)), 0.0)
                c = 1.0 / np.sqrt(1.0 + t * t)
                sn = t * c
                # U = D J with D = diag(1, conj(phase)) on (i, j); columns then rows
                ui_i, ui_j = c, sn
                uj_i, uj_j = -sn * np.conj(phase), c * np.conj(phase)
                ci = a[:, :, i].copy()
                cj = a[:, :, j].copy()
                a[:, :, i] = ci * ui_i[:, None] + cj * uj_i[:, None]
                a[:, :, j] = ci * ui_j[:, None] + cj * uj_j[:, None]
                ri = a[:, i, :].copy()
                rj = a[:, j, :].copy()
                a[:, i, :] = np.conj(ui_i)[:, None] * ri + np.conj(uj_i)[:, None] * rj
                a[:, j, :] = np.conj(ui_j)[:, None] * ri + np.conj(uj_j)[:, None] * rj
                a[:, i, j] = 0.0
                a[:, j, i] = 0.0
    else:
        raise NumericError(f"Jacobi eigensolver did not converge in {max_sweeps} sweeps", {"M": M, "n": n})
    return np.sort(np.einsum("nii->ni", a).real, axis=1)


def gue_sample_max(M: int, rng: np.random.Generator) -> float:
    """Largest eigenvalue of one GUE sample (M = 1 gives a standard Gaussian)."""
    return float(gue_sample_max_batch(M, 1, rng)[0])


def gue_sample_max_batch(M: int, n: int, rng: np.random.Generator, chunk: int = 20000) -> np.ndarray:
    if M < 1 or n < 0:
        raise UsageError("need M >= 1 and n >= 0")
    out = np.empty(n)
    for start in range(0, n, chunk):
        k = min(chunk, n - start)
        h = gue_matrices(M, k, rng)
        out[start:start + k] = jacobi_eigvalsh(h)[:, -1]
    return out


def brownian_lpp_sample(M: int, n: int, rng: np.random.Generator, n_steps: int = 10_000, chunk: int = 500) -> np.ndarray:
    """Brownian last-passage value over ``[0, 1]`` with M levels on a grid of ``n_steps``.

    ``G_0 = B_0`` and ``G_i(t) = max_{u <= t}(G_{i-1}(u) - B_i(u)) + B_i(t)``.
    The discretization biases the maximum slightly downwards.
    """
    if M < 1 or n_steps < 1:
        raise UsageError("need M >= 1 and n_steps >= 1")
    out = np.empty(n)
    dt = 1.0 / n_steps
    for start in range(0, n, chunk):
        k = min(chunk, n - start)
        g = None
        for _ in range(M):
            b = np.zeros((k, n_steps + 1))
            np.cumsum(rng.standard_normal((k, n_steps)) * math.sqrt(dt), axis=1, out=b[:, 1:])
            if g is None:
                g = b
            else:
                g = np.maximum.accumulate(g - b, axis=1) + b
        out[start:start + k] = g[:, -1]
    return out


# -- product law and tables ----------------------------------------------------------------


def product_law(M: int, R: int, p: float, **numeric) -> float:
    """``F_{M,p}(0)`` for ``R >= M``, else ``F_{M,p}(0) F_{M-R,p}(0)``."""
    if M < 1:
        raise UsageError(f"M must be >= 1, got {M}")
    first = f_mp(M, p, 0.0, **numeric)
    if R >= M:
        return first
    return first * f_mp(M - R, p, 0.0, **numeric)


@dataclass
class DistributionTable:
    """Tabulated ``F_{M,p}`` on an s grid with the numeric parameters used."""

    M: int
    p: float
    s: np.ndarray
    F: np.ndarray
    m: Optional[int] = None
    L: Optional[float] = None
    r: Optional[float] = None
    n_lambda: Optional[int] = None
    refinement: Optional[np.ndarray] = field(default=None, repr=False)

    HEADER = ("M", "p", "m", "L", "r", "n_lambda")

    def __post_init__(self):
        self.s = np.asarray(self.s, dtype=float)
        self.F = np.asarray(self.F, dtype=float)
        if self.s.shape != self.F.shape:
            raise UsageError("s and F must have the same length")
        self._interp = None

    def __call__(self, s):
        """Monotone cubic interpolation; constant extrapolation beyond the grid."""
        from scipy.interpolate import PchipInterpolator

        if self._interp is None:
            self._interp = PchipInterpolator(self.s, self.F, extrapolate=False)
        s = np.asarray(s, dtype=float)
        out = self._interp(np.clip(s, self.s[0], self.s[-1]))
        return float(out) if out.ndim == 0 else out

    def monotonicity_defects(self, tol: float = 1e-6) -> list[tuple[float, float]]:
        """Grid intervals on which F decreases by more than ``tol``."""
        order = np.argsort(self.s)
        s, F = self.s[order], self.F[order]
        bad = np.nonzero(np.diff(F) < -tol)[0]
        return [(float(s[i]), float(s[i + 1])) for i in bad]

    def write_csv(self, path) -> None:
        def fmt(v):
            if v is None:
                return ""
            if isinstance(v, (int, np.integer)):
                return str(int(v))
            return repr(float(v))

        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.HEADER)
            w.writerow([fmt(self.M), fmt(self.p), fmt(self.m), fmt(self.L), fmt(self.r), fmt(self.n_lambda)])
            w.writerow(["s", "F"])
            for s, F in zip(self.s, self.F):
                w.writerow([repr(float(s)), repr(float(F))])

    @classmethod
    def read_csv(cls, path) -> "DistributionTable":
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r]
        if len(rows) < 3 or tuple(rows[0]) != cls.HEADER or rows[2] != ["s", "F"]:
            raise UsageError(f"{path}: not a distribution table")
        M, p, m, L, r, n_lambda = rows[1]

        def opt(v, kind):
            return None if v == "" else kind(v)

        data = np.array([[float(a), float(b)] for a, b in rows[3:]]).reshape(-1, 2)
        return cls(int(M), float(p), data[:, 0], data[:, 1], opt(m, int), opt(L, float),
                   opt(r, float), opt(n_lambda, int))


def build_table(
    M: int,
    p: float,
    s_grid: Sequence[float],
    m: Optional[int] = None,
    L: Optional[float] = None,
    n_lambda: int = 256,
    refine: bool = True,
    tol: float = 1e-6,
    method: str = "lu",
) -> DistributionTable:
    """Tabulate ``F_{M,p}`` with one set of numeric parameters for the whole grid."""
    s_grid = np.asarray(sorted(float(s) for s in s_grid))
    if p == 1.0:
        return DistributionTable(M, p, s_grid, f_m1_gram_vec(M, s_grid))
    _check_open_p(p)
    if L is None:
        L = max(default_length(p, s) for s in s_grid)
    if m is None:
        m = default_nodes(p, L, M)
    r = default_radius(M, p)
    F, deltas = [], []
    for s in s_grid:
        v = f_mp_detail(M, p, s, m=m, L=L, r=r, n_lambda=n_lambda, refine=refine, tol=tol, method=method)
        F.append(v.value)
        deltas.append(v.refinement_delta if v.refinement_delta is not None else np.nan)
    return DistributionTable(M, p, s_grid, np.array(F), m, L, r, n_lambda, np.array(deltas))
