"""Kernel distributions: exact sampling, characteristic functions, moments.

A kernel is a probability measure on R^d used as the smoothing distribution
of the predictive processes.  Multivariate kernels are products of iid
univariate coordinates, so characteristic functions factor exactly and box
probabilities reduce to products of coordinate CDFs.

Supported families:

* ``gaussian``    -- standard normal coordinates.
* ``half_normal`` -- coordinate-wise absolute value of a standard normal.
* ``student_t``   -- Student-t coordinates, ``dof > 1`` so the first absolute
  moment is finite.
* ``laplace``     -- standard Laplace coordinates (scale 1).
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb, pi, sqrt

import numpy as np
from scipy import integrate, special, stats

from .errors import MomentUndefined

FAMILIES = ("gaussian", "half_normal", "student_t", "laplace")

_SQRT_2_OVER_PI = sqrt(2.0 / pi)


@dataclass(frozen=True)
class KernelSpec:
    """Immutable description of a kernel distribution on R^d."""

    family: str
    dim: int = 1
    dof: float | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}; expected one of {FAMILIES}")
        if self.dim < 1:
            raise ValueError(f"dimension must be >= 1, got {self.dim}")
        if self.family == "student_t":
            if self.dof is None or not self.dof > 1:
                raise ValueError("student_t requires dof > 1 for a finite first moment")
        elif self.dof is not None:
            raise ValueError(f"dof only applies to student_t, not {self.family}")

    # ---------------------------------------------------------------- sampling

    def sample(self, rng, size: int | None = None) -> np.ndarray:
        """Draw from the kernel: shape ``(dim,)`` or ``(size, dim)``.

        ``rng`` only needs the numpy ``Generator`` drawing methods, so tests
        may inject a stub producing forced variates.
        """
        shape = (self.dim,) if size is None else (size, self.dim)
        if self.family == "gaussian":
            return np.asarray(rng.standard_normal(shape), dtype=float)
        if self.family == "half_normal":
            return np.abs(np.asarray(rng.standard_normal(shape), dtype=float))
        if self.family == "student_t":
            return np.asarray(rng.standard_t(self.dof, size=shape), dtype=float)
        return np.asarray(rng.laplace(0.0, 1.0, size=shape), dtype=float)

    # ------------------------------------------------- characteristic function

    def cf(self, t) -> complex:
        """Characteristic function E[exp(i t'Y)] at a single point t."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if t.shape != (self.dim,):
            raise ValueError(f"t must have shape ({self.dim},), got {t.shape}")
        return complex(np.prod(self._cf1(t)))

    def cf_scaled(self, t, scales) -> np.ndarray:
        """Vector of E[exp(i s t'Y)] over an array of scalar scales s.

        Exploits the product structure: phi(s*t) = prod_j phi_1(s*t_j).
        """
        t = np.atleast_1d(np.asarray(t, dtype=float))
        scales = np.asarray(scales, dtype=float)
        out = np.ones(scales.shape, dtype=complex)
        for tj in t:
            out *= self._cf1(scales * tj)
        return out

    def cf_scaled_minus_one(self, t, scales) -> np.ndarray:
        """E[exp(i s t'Y)] - 1 without cancellation, vectorized over scales.

        Needed by the product-correction tails, where the deviation from 1 can
        sit far below float resolution of the value itself.
        """
        t = np.atleast_1d(np.asarray(t, dtype=float))
        scales = np.asarray(scales, dtype=float)
        pm1 = np.zeros(scales.shape, dtype=complex)
        for tj in t:
            m1 = self._cf1_m1(scales * tj)
            pm1 = pm1 + m1 + pm1 * m1  # (1+pm1)(1+m1) - 1
        return pm1

    def _cf1(self, u: np.ndarray) -> np.ndarray:
        """Coordinate characteristic function, vectorized over real u."""
        return 1.0 + self._cf1_m1(u)

    def _cf1_m1(self, u: np.ndarray) -> np.ndarray:
        """Coordinate CF minus one, cancellation-free near zero."""
        u = np.asarray(u, dtype=float)
        if self.family == "gaussian":
            return np.expm1(-0.5 * u * u) + 0j
        if self.family == "laplace":
            return -u * u / (1.0 + u * u) + 0j
        if self.family == "half_normal":
            # E[exp(iu|Z|)] = exp(-u^2/2) + i * (2/sqrt(pi)) * dawsn(u/sqrt(2));
            # the Dawson form keeps the imaginary part stable for large |u|.
            return np.expm1(-0.5 * u * u) + 1j * (2.0 / sqrt(pi)) * special.dawsn(u / sqrt(2.0))
        return self._cf1_m1_student_t(u)

    def _cf1_m1_student_t(self, u: np.ndarray) -> np.ndarray:
        # Bessel-K representation in log space via the scaled kve.  Large
        # order with small argument overflows kve, so a moment series (and,
        # in the rare uncovered band, direct quadrature) takes over there.
        nu = float(self.dof)
        a = 0.5 * nu
        scalar = np.isscalar(u) or np.ndim(u) == 0
        z = np.atleast_1d(sqrt(nu) * np.abs(np.asarray(u, dtype=float)))
        out = np.zeros(z.shape, dtype=complex)

        live = z > 1e-12  # below this the deviation is < 1e-12 for any dof
        # kve representability: small-z magnitude estimate of log kv.
        with np.errstate(divide="ignore"):
            log_kv_est = special.gammaln(a) + a * np.log(2.0 / np.maximum(z, 1e-300))
        bessel = live & (log_kv_est < 690.0)
        zz = z[bessel]
        if zz.size:
            log_phi = (
                np.log(special.kve(a, zz))
                - zz
                + a * np.log(zz)
                - special.gammaln(a)
                - (a - 1.0) * np.log(2.0)
            )
            out[bessel] = np.expm1(log_phi)

        rest = live & ~bessel
        if np.any(rest):
            uu = z[rest] / sqrt(nu)
            m2 = nu / (nu - 2.0)
            m4 = 3.0 * nu * nu / ((nu - 2.0) * (nu - 4.0)) if nu > 4 else np.inf
            m6 = m4 * 5.0 * nu / (nu - 6.0) if nu > 6 else np.inf
            series_err = m6 * uu**6 / 720.0
            ok = series_err < 1e-11
            vals = np.empty(uu.shape, dtype=complex)
            vals[ok] = -0.5 * m2 * uu[ok] ** 2 + m4 * uu[ok] ** 4 / 24.0
            for i in np.flatnonzero(~ok):
                vals[i] = self._cf1_m1_student_t_quad(float(uu[i]))
            out[rest] = vals
        return out[0] if scalar else out

    def _cf1_m1_student_t_quad(self, u: float) -> float:
        val, _ = integrate.quad(
            lambda x: 2.0 * stats.t.pdf(x, self.dof) * (np.cos(u * x) - 1.0),
            0.0,
            np.inf,
            limit=400,
            epsabs=1e-12,
            epsrel=1e-12,
        )
        return float(val)

    @property
    def symmetric(self) -> bool:
        """True when the kernel is symmetric about the origin (real CF)."""
        return self.family != "half_normal"

    # -------------------------------------------------------------------- CDFs

    def cdf1(self, x) -> np.ndarray:
        """Coordinate CDF, vectorized; used for box probabilities of mixtures."""
        x = np.asarray(x, dtype=float)
        if self.family == "gaussian":
            return special.ndtr(x)
        if self.family == "half_normal":
            return np.where(x < 0.0, 0.0, special.erf(np.maximum(x, 0.0) / sqrt(2.0)))
        if self.family == "laplace":
            return np.where(x < 0.0, 0.5 * np.exp(np.minimum(x, 0.0)), 1.0 - 0.5 * np.exp(-np.maximum(x, 0.0)))
        return stats.t.cdf(x, self.dof)

    def norm_survival(self, r) -> np.ndarray:
        """P(||Y|| > r).  Closed forms exist for every family in d = 1 and for
        the normal-based families in any dimension (chi law of the norm)."""
        r = np.asarray(r, dtype=float)
        rp = np.maximum(r, 0.0)
        if self.family in ("gaussian", "half_normal"):
            # |(|Z_1|,...,|Z_d|)| equals |Z|, so both families share the chi law.
            out = stats.chi.sf(rp, df=self.dim)
        elif self.dim == 1 and self.family == "laplace":
            out = np.exp(-rp)
        elif self.dim == 1 and self.family == "student_t":
            out = 2.0 * stats.t.sf(rp, self.dof)
        else:
            raise ValueError(
                f"norm survival of {self.family} is only available in dimension 1"
            )
        return np.where(r < 0.0, 1.0, out)

    # ------------------------------------------------------------------ moments

    def mean_vector(self) -> np.ndarray:
        """E[Y]; zero for the symmetric families."""
        if self.family == "half_normal":
            return np.full(self.dim, _SQRT_2_OVER_PI)
        return np.zeros(self.dim)

    def abs_moment(self, p: float) -> float:
        """E[||Y||^p] for p > 0.

        Raises :class:`MomentUndefined` when the family lacks the moment
        (student_t with p >= dof).
        """
        if not p > 0:
            raise ValueError(f"moment order must be positive, got {p}")
        if self.family == "student_t" and p >= self.dof:
            raise MomentUndefined(
                f"student_t(dof={self.dof}) has no absolute moment of order {p}"
            )
        if self.family in ("gaussian", "half_normal"):
            # ||Y|| follows the chi distribution with `dim` degrees of freedom.
            return float(
                np.exp(
                    0.5 * p * np.log(2.0)
                    + special.gammaln(0.5 * (self.dim + p))
                    - special.gammaln(0.5 * self.dim)
                )
            )
        if self.dim == 1:
            if self.family == "laplace":
                return float(special.gamma(p + 1.0))
            nu = float(self.dof)
            return float(
                np.exp(
                    0.5 * p * np.log(nu)
                    + special.gammaln(0.5 * (p + 1.0))
                    + special.gammaln(0.5 * (nu - p))
                    - 0.5 * np.log(pi)
                    - special.gammaln(0.5 * nu)
                )
            )
        return self._norm_moment_multivariate(p)

    def _coord_even_moments(self, m: int) -> list[float]:
        """Raw moments E[Y_1^(2j)] for j = 1..m."""
        out = []
        for j in range(1, m + 1):
            if self.family == "laplace":
                out.append(float(special.gamma(2 * j + 1)))
            else:
                nu = float(self.dof)
                out.append(
                    float(
                        np.exp(
                            j * np.log(nu)
                            + special.gammaln(j + 0.5)
                            + special.gammaln(0.5 * nu - j)
                            - 0.5 * np.log(pi)
                            - special.gammaln(0.5 * nu)
                        )
                    )
                )
        return out

    def _norm_moment_multivariate(self, p: float) -> float:
        # Heavy-tailed multivariate norms: even orders by exact moment
        # convolution of the squared coordinates, fractional orders below 2 by
        # the Gamma-representation quadrature r^p = c_p * int (1-exp(-s r^2)).
        if p == int(p) and int(p) % 2 == 0:
            m = int(p) // 2
            sq = [1.0] + self._coord_even_moments(m)  # E[(Y_1^2)^j]
            acc = [1.0] + [0.0] * m
            for _ in range(self.dim):
                acc = [
                    sum(comb(r, j) * acc[j] * sq[r - j] for j in range(r + 1))
                    for r in range(m + 1)
                ]
            return float(acc[m])
        if not 0 < p < 2:
            raise ValueError(
                f"||Y||^{p} for {self.family} in dimension {self.dim} is only "
                "implemented for even integer orders and 0 < p < 2"
            )
        lap = self._squared_coord_laplace_transform
        q = 0.5 * p

        def integrand(s):
            return (1.0 - lap(s) ** self.dim) * s ** (-1.0 - q)

        i1, _ = integrate.quad(integrand, 0.0, 1.0, limit=200)
        i2, _ = integrate.quad(integrand, 1.0, np.inf, limit=200)
        return float(q / special.gamma(1.0 - q) * (i1 + i2))

    def _squared_coord_laplace_transform(self, s: float) -> float:
        """E[exp(-s Y_1^2)] for the heavy-tailed families."""
        if self.family == "laplace":
            if s <= 0:
                return 1.0
            x = 1.0 / (2.0 * sqrt(s))
            return float(0.5 * sqrt(pi / s) * special.erfcx(x))
        nu = float(self.dof)
        val, _ = integrate.quad(
            lambda y: 2.0 * stats.t.pdf(y, nu) * np.exp(-s * y * y), 0.0, np.inf, limit=200
        )
        return float(val)
