"""Dense numerical kernels used by the moment engines and approximations.

Everything here works on small dense ``numpy`` arrays (a few hundred rows at
most).  The routines are written out explicitly rather than delegated to
LAPACK so that results are reproducible bit-for-bit across platforms; the
test-suite checks them against ``scipy`` and ``mpmath``.
"""

from __future__ import annotations

import math
from typing import Callable, Optional

import numpy as np

__all__ = [
    "SingularMatrixError",
    "ConvergenceError",
    "expm",
    "spectral_abscissa",
    "eigenvalues",
    "solve_linear",
    "integrate_linear_ode",
    "rk4_step_matrix",
    "std_normal_cdf",
    "bivariate_normal_cdf",
    "gauss_legendre",
]


class SingularMatrixError(np.linalg.LinAlgError):
    """Raised when elimination meets a pivot below the singularity threshold."""


class ConvergenceError(RuntimeError):
    """Raised when the QR iteration exhausts its iteration budget."""


def _as_square(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return a


# ---------------------------------------------------------------------------
# linear solves
# ---------------------------------------------------------------------------

def solve_linear(a, b) -> np.ndarray:
    """Solve ``a @ x = b`` by Gaussian elimination with partial pivoting.

    ``b`` may be a vector or a matrix of right-hand sides.

    Raises
    ------
    SingularMatrixError
        If a pivot falls below ``1e-14 * ||a||_inf``.
    """
    lu = _as_square(a)
    n = lu.shape[0]
    rhs = np.array(b, dtype=float)
    vector_rhs = rhs.ndim == 1
    if vector_rhs:
        rhs = rhs[:, None]
    if rhs.shape[0] != n:
        raise ValueError(f"dimension mismatch: a is {n}x{n}, b has {rhs.shape[0]} rows")
    scale = np.abs(lu).sum(axis=1).max() if n else 0.0
    tiny = 1e-14 * scale
    for k in range(n):
        p = k + int(np.argmax(np.abs(lu[k:, k])))
        if abs(lu[p, k]) <= tiny or lu[p, k] == 0.0:
            raise SingularMatrixError(
                f"matrix is singular to working precision (pivot {lu[p, k]:.3e} "
                f"at column {k}, threshold {tiny:.3e})"
            )
        if p != k:
            lu[[k, p]] = lu[[p, k]]
            rhs[[k, p]] = rhs[[p, k]]
        if k + 1 < n:
            factors = lu[k + 1:, k] / lu[k, k]
            lu[k + 1:, k + 1:] -= np.outer(factors, lu[k, k + 1:])
            rhs[k + 1:] -= np.outer(factors, rhs[k])
    x = np.empty_like(rhs)
    for k in range(n - 1, -1, -1):
        x[k] = (rhs[k] - lu[k, k + 1:] @ x[k + 1:]) / lu[k, k]
    return x[:, 0] if vector_rhs else x


# ---------------------------------------------------------------------------
# matrix exponential
# ---------------------------------------------------------------------------

_PADE_DEGREE = 8


def _pade_coefficients(q: int) -> list[float]:
    f = math.factorial
    return [f(2 * q - j) * f(q) / (f(2 * q) * f(j) * f(q - j)) for j in range(q + 1)]


_PADE_COEFFS = _pade_coefficients(_PADE_DEGREE)


def expm(a) -> np.ndarray:
    """Matrix exponential by scaling and squaring with a diagonal Pade approximant.

    The matrix is scaled by ``2**-s`` so that its infinity norm is at most 0.5,
    the degree-8 Pade approximant is evaluated, and the result squared ``s``
    times.
    """
    a = _as_square(a)
    n = a.shape[0]
    norm = np.abs(a).sum(axis=1).max() if n else 0.0
    s = 0
    if norm > 0.5:
        s = int(math.ceil(math.log2(norm / 0.5)))
    x = a / (2.0 ** s)
    eye = np.eye(n)
    num = _PADE_COEFFS[-1] * eye
    den = _PADE_COEFFS[-1] * eye
    # Horner in x for N(x) and in -x for D(x)
    for j in range(_PADE_DEGREE - 1, -1, -1):
        num = x @ num + _PADE_COEFFS[j] * eye
        den = -x @ den + _PADE_COEFFS[j] * eye
    e = solve_linear(den, num)
    for _ in range(s):
        e = e @ e
    return e


# ---------------------------------------------------------------------------
# eigenvalues / spectral abscissa
# ---------------------------------------------------------------------------

def _isolate(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split off eigenvalues exposed by permutation.

    Rows (columns) whose off-diagonal part vanishes within the active window
    are swapped to the bottom (top), which makes the matrix block triangular
    with their diagonal entries as exact eigenvalues.  Returns the isolated
    eigenvalues and the remaining core block.
    """
    lo, hi = 0, a.shape[0] - 1
    isolated = []
    found = True
    while found and lo <= hi:
        found = False
        for i in range(hi, lo - 1, -1):
            row = a[i, lo:hi + 1]
            if np.count_nonzero(row) - (row[i - lo] != 0) == 0:
                a[[i, hi]] = a[[hi, i]]
                a[:, [i, hi]] = a[:, [hi, i]]
                isolated.append(a[hi, hi])
                hi -= 1
                found = True
                break
        if found:
            continue
        for j in range(lo, hi + 1):
            col = a[lo:hi + 1, j]
            if np.count_nonzero(col) - (col[j - lo] != 0) == 0:
                a[[j, lo]] = a[[lo, j]]
                a[:, [j, lo]] = a[:, [lo, j]]
                isolated.append(a[lo, lo])
                lo += 1
                found = True
                break
    return np.array(isolated, dtype=complex), a[lo:hi + 1, lo:hi + 1].copy()


def _balance(a: np.ndarray) -> np.ndarray:
    radix = 2.0
    sqrdx = radix * radix
    n = a.shape[0]
    done = False
    while not done:
        done = True
        for i in range(n):
            c = np.abs(a[:, i]).sum() - abs(a[i, i])
            r = np.abs(a[i, :]).sum() - abs(a[i, i])
            if c == 0.0 or r == 0.0:
                continue
            g = r / radix
            f = 1.0
            total = c + r
            while c < g:
                f *= radix
                c *= sqrdx
            g = r * radix
            while c > g:
                f /= radix
                c /= sqrdx
            if (c + r) / f < 0.95 * total:
                done = False
                a[i, :] /= f
                a[:, i] *= f
    return a


def _hessenberg(a: np.ndarray) -> np.ndarray:
    n = a.shape[0]
    for k in range(n - 2):
        x = a[k + 1:, k]
        alpha = np.linalg.norm(x)
        if alpha == 0.0:
            continue
        v = x.copy()
        v[0] += math.copysign(alpha, x[0])
        v /= np.linalg.norm(v)
        a[k + 1:, k:] -= 2.0 * np.outer(v, v @ a[k + 1:, k:])
        a[:, k + 1:] -= 2.0 * np.outer(a[:, k + 1:] @ v, v)
        a[k + 2:, k] = 0.0
    return a


def _hqr(a: np.ndarray, max_iter: int) -> np.ndarray:
    """Eigenvalues of an upper Hessenberg matrix by Francis double-shift QR.

    Operates in place on ``a``.  ``max_iter`` bounds the total number of QR
    sweeps over all eigenvalues.
    """
    n = a.shape[0]
    wr = np.zeros(n)
    wi = np.zeros(n)
    anorm = sum(np.abs(a[i, max(i - 1, 0):]).sum() for i in range(n))
    nn = n - 1
    t = 0.0
    total = 0
    while nn >= 0:
        its = 0
        while True:
            l = 0
            for ll in range(nn, 0, -1):
                s = abs(a[ll - 1, ll - 1]) + abs(a[ll, ll])
                if s == 0.0:
                    s = anorm
                if abs(a[ll, ll - 1]) + s == s:
                    a[ll, ll - 1] = 0.0
                    l = ll
                    break
            x = a[nn, nn]
            if l == nn:
                wr[nn] = x + t
                wi[nn] = 0.0
                nn -= 1
            else:
                y = a[nn - 1, nn - 1]
                w = a[nn, nn - 1] * a[nn - 1, nn]
                if l == nn - 1:
                    p = 0.5 * (y - x)
                    q = p * p + w
                    z = math.sqrt(abs(q))
                    x += t
                    if q >= 0.0:
                        z = p + math.copysign(z, p)
                        wr[nn - 1] = wr[nn] = x + z
                        if z != 0.0:
                            wr[nn] = x - w / z
                        wi[nn - 1] = wi[nn] = 0.0
                    else:
                        wr[nn - 1] = wr[nn] = x + p
                        wi[nn - 1] = -z
                        wi[nn] = z
                    nn -= 2
                else:
                    if its == 60 or total >= max_iter:
                        raise ConvergenceError(
                            f"QR iteration did not converge within the budget of "
                            f"{max_iter} iterations"
                        )
                    if its in (10, 20, 40):
                        # exceptional shift
                        t += x
                        idx = np.arange(nn + 1)
                        a[idx, idx] -= x
                        s = abs(a[nn, nn - 1]) + abs(a[nn - 1, nn - 2])
                        y = x = 0.75 * s
                        w = -0.4375 * s * s
                    its += 1
                    total += 1
                    m = nn - 2
                    while m >= l:
                        z = a[m, m]
                        r = x - z
                        s = y - z
                        p = (r * s - w) / a[m + 1, m] + a[m, m + 1]
                        q = a[m + 1, m + 1] - z - r - s
                        r = a[m + 2, m + 1]
                        s = abs(p) + abs(q) + abs(r)
                        p /= s
                        q /= s
                        r /= s
                        if m == l:
                            break
                        u = abs(a[m, m - 1]) * (abs(q) + abs(r))
                        v = abs(p) * (abs(a[m - 1, m - 1]) + abs(z) + abs(a[m + 1, m + 1]))
                        if u + v == v:
                            break
                        m -= 1
                    for i in range(m + 2, nn + 1):
                        a[i, i - 2] = 0.0
                        if i != m + 2:
                            a[i, i - 3] = 0.0
                    for k in range(m, nn):
                        if k != m:
                            p = a[k, k - 1]
                            q = a[k + 1, k - 1]
                            r = a[k + 2, k - 1] if k != nn - 1 else 0.0
                            x = abs(p) + abs(q) + abs(r)
                            if x != 0.0:
                                p /= x
                                q /= x
                                r /= x
                        s = math.copysign(math.sqrt(p * p + q * q + r * r), p)
                        if s == 0.0:
                            continue
                        if k == m:
                            if l != m:
                                a[k, k - 1] = -a[k, k - 1]
                        else:
                            a[k, k - 1] = -s * x
                        p += s
                        x = p / s
                        y = q / s
                        z = r / s
                        q /= p
                        r /= p
                        # row modification
                        row = a[k, k:nn + 1] + q * a[k + 1, k:nn + 1]
                        if k != nn - 1:
                            row += r * a[k + 2, k:nn + 1]
                            a[k + 2, k:nn + 1] -= row * z
                        a[k + 1, k:nn + 1] -= row * y
                        a[k, k:nn + 1] -= row * x
                        # column modification
                        mmin = nn if nn < k + 3 else k + 3
                        col = x * a[l:mmin + 1, k] + y * a[l:mmin + 1, k + 1]
                        if k != nn - 1:
                            col += z * a[l:mmin + 1, k + 2]
                            a[l:mmin + 1, k + 2] -= col * r
                        a[l:mmin + 1, k + 1] -= col * q
                        a[l:mmin + 1, k] -= col
            if not l < nn - 1:
                break
    return wr + 1j * wi


def eigenvalues(a) -> np.ndarray:
    """All eigenvalues of a real square matrix (balance, Hessenberg, QR)."""
    a = _as_square(a)
    n = a.shape[0]
    if n == 0:
        return np.zeros(0, dtype=complex)
    if n == 1:
        return a[0].astype(complex)
    isolated, core = _isolate(a.copy())
    if core.shape[0] == 0:
        return isolated
    if core.shape[0] == 1:
        return np.concatenate([isolated, core[0].astype(complex)])
    h = _hessenberg(_balance(core))
    return np.concatenate([isolated, _hqr(h, max_iter=100 * n)])


def spectral_abscissa(a) -> float:
    """Largest real part over the eigenvalues of ``a``."""
    return float(np.max(eigenvalues(a).real))


# ---------------------------------------------------------------------------
# ODE integration
# ---------------------------------------------------------------------------

def _grid(t_end: float, h: float) -> tuple[int, float]:
    if h <= 0:
        raise ValueError("step size must be positive")
    if t_end < 0:
        raise ValueError("t_end must be non-negative")
    if t_end == 0:
        return 0, h
    n = max(1, int(math.ceil(t_end / h - 1e-9)))
    return n, t_end / n


def rk4_step_matrix(a, h: float) -> np.ndarray:
    """The matrix one classical RK4 step applies to ``y' = a y``.

    For an autonomous linear system the four stages collapse to the degree-4
    Taylor polynomial ``I + hA + (hA)^2/2 + (hA)^3/6 + (hA)^4/24``.
    """
    a = np.asarray(a, dtype=float)
    ha = h * a
    eye = np.eye(a.shape[0])
    p = eye + ha / 4.0
    p = eye + (ha / 3.0) @ p
    p = eye + (ha / 2.0) @ p
    return eye + ha @ p


def integrate_linear_ode(
    a,
    forcing: Optional[Callable[[float], np.ndarray]],
    y0,
    t_end: float,
    h: float,
    stride: int = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """Integrate ``y' = a y + forcing(t)`` with classical RK4 on a fixed grid.

    The grid has ``n = ceil(t_end / h)`` equal steps of size ``t_end / n``
    (so the effective step never exceeds ``h``).  Every ``stride``-th grid
    point is returned, and the final point always is.

    Returns
    -------
    times : ndarray, shape (n_out,)
    values : ndarray, shape (n_out, len(y0))
    """
    # non-finite states are reported explicitly below
    with np.errstate(over="ignore", invalid="ignore"):
        return _integrate(np.asarray(a, dtype=float), forcing, np.array(y0, dtype=float), t_end, h, stride)


def _integrate(a, forcing, y, t_end, h, stride):
    n, step = _grid(t_end, h)
    keep = [0] + [i for i in range(1, n + 1) if i % stride == 0 or i == n]
    times = np.empty(len(keep))
    out = np.empty((len(keep), y.size))
    times[0] = 0.0
    out[0] = y
    j = 1
    if forcing is None:
        stepper = rk4_step_matrix(a, step)
        for i in range(1, n + 1):
            y = stepper @ y
            if j < len(keep) and keep[j] == i:
                if not np.all(np.isfinite(y)):
                    raise FloatingPointError(f"non-finite state at t={i * step:g}")
                times[j] = i * step
                out[j] = y
                j += 1
        return times, out
    for i in range(1, n + 1):
        t = (i - 1) * step
        k1 = a @ y + forcing(t)
        k2 = a @ (y + 0.5 * step * k1) + forcing(t + 0.5 * step)
        k3 = a @ (y + 0.5 * step * k2) + forcing(t + 0.5 * step)
        k4 = a @ (y + step * k3) + forcing(t + step)
        y = y + step / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if j < len(keep) and keep[j] == i:
            if not np.all(np.isfinite(y)):
                raise FloatingPointError(f"non-finite state at t={i * step:g}")
            times[j] = i * step
            out[j] = y
            j += 1
    return times, out


# ---------------------------------------------------------------------------
# normal distribution
# ---------------------------------------------------------------------------

_SQRT2 = math.sqrt(2.0)


def std_normal_cdf(x):
    """Standard normal CDF, ``0.5 * erfc(-x / sqrt(2))``.  Accepts arrays."""
    if np.ndim(x) == 0:
        return 0.5 * math.erfc(-float(x) / _SQRT2)
    arr = np.asarray(x, dtype=float)
    return np.array([0.5 * math.erfc(-v / _SQRT2) for v in arr.ravel()]).reshape(arr.shape)


def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1]."""
    return np.polynomial.legendre.leggauss(n)


_GL20 = gauss_legendre(20)


def _upper_bvn(h: float, k: float, r: float) -> float:
    # P(X > h, Y > k); Genz's correlation-integral scheme with 20 GL nodes
    x, w = _GL20
    hk = h * k
    if abs(r) < 0.925:
        hs = 0.5 * (h * h + k * k)
        asr = math.asin(r)
        sn = np.sin(asr * (x + 1.0) / 2.0)
        bvn = float(np.sum(w * np.exp((sn * hk - hs) / (1.0 - sn * sn))))
        bvn = bvn * asr / (4.0 * math.pi)
        return bvn + std_normal_cdf(-h) * std_normal_cdf(-k)
    if r < 0:
        k = -k
        hk = -hk
    bvn = 0.0
    if abs(r) < 1.0:
        as_ = (1.0 - r) * (1.0 + r)
        a = math.sqrt(as_)
        bs = (h - k) ** 2
        c = (4.0 - hk) / 8.0
        d = (12.0 - hk) / 16.0
        asr = -(bs / as_ + hk) / 2.0
        if asr > -100.0:
            bvn = a * math.exp(asr) * (
                1.0 - c * (bs - as_) * (1.0 - d * bs / 5.0) / 3.0 + c * d * as_ * as_ / 5.0
            )
        if -hk < 100.0:
            b = math.sqrt(bs)
            bvn -= (
                math.exp(-hk / 2.0) * math.sqrt(2.0 * math.pi) * std_normal_cdf(-b / a) * b
                * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0)
            )
        a /= 2.0
        xs = (a * (x + 1.0)) ** 2
        rs = np.sqrt(1.0 - xs)
        asr = -(bs / xs + hk) / 2.0
        ok = asr > -100.0
        terms = a * w * np.exp(np.where(ok, asr, 0.0)) * (
            np.exp(-hk * xs / (2.0 * (1.0 + rs) ** 2)) / rs - (1.0 + c * xs * (1.0 + d * xs))
        )
        bvn += float(np.sum(np.where(ok, terms, 0.0)))
        bvn = -bvn / (2.0 * math.pi)
    if r > 0:
        bvn += std_normal_cdf(-max(h, k))
    else:
        bvn = -bvn
        if k > h:
            if h < 0:
                bvn += std_normal_cdf(k) - std_normal_cdf(h)
            else:
                bvn += std_normal_cdf(-h) - std_normal_cdf(-k)
    return bvn


def bivariate_normal_cdf(h: float, k: float, rho: float) -> float:
    """P(Z1 <= h, Z2 <= k) for standard normals with correlation ``rho``.

    Uses the correlation-integral representation evaluated with 20-point
    Gauss-Legendre quadrature (Genz's scheme, with the asymptotic split for
    ``|rho| >= 0.925``).
    """
    if not -1.0 < rho < 1.0:
        raise ValueError(f"correlation must lie strictly inside (-1, 1), got {rho}")
    value = _upper_bvn(-float(h), -float(k), float(rho))
    return min(1.0, max(0.0, value))
