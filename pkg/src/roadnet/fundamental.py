"""Fundamental diagram (flux law) and the scalar Godunov numerical flux.

Densities may be scalars or numpy arrays; every function broadcasts.
Values outside ``[0, rho_max]`` by less than ``DOMAIN_SLACK`` are clamped
(explicit schemes drift by roundoff), anything further out raises.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

DOMAIN_SLACK = 1e-12


class DomainError(ValueError):
    """A density lies outside ``[0, rho_max]``."""


class ConfigurationError(ValueError):
    """A diagram or network description is unusable."""


def _sample_concave(flux, rho_max, n=401):
    rho = np.linspace(0.0, rho_max, n)
    f = np.asarray(flux(rho), dtype=float)
    second = f[:-2] - 2.0 * f[1:-1] + f[2:]
    scale = max(float(np.max(np.abs(f))), 1e-300)
    if np.any(second >= -1e-14 * scale):
        raise ConfigurationError("flux is not strictly concave on (0, rho_max)")


@dataclass(frozen=True, eq=False)
class FundamentalDiagram:
    """Concave flux law ``f`` on ``[0, rho_max]`` with ``f(0) = f(rho_max) = 0``.

    Build one with :meth:`parabola`, :meth:`polynomial`, :meth:`table` or
    :meth:`from_callable`; ``sigma`` (argmax of f) and ``max_char_speed``
    (sup of ``|f'|``) are computed once at construction.
    """

    rho_max: float
    kind: str
    params: dict
    _flux: Callable = field(repr=False)
    _deriv: Callable = field(repr=False)
    sigma: float = 0.0
    max_char_speed: float = 0.0

    # -- constructors -------------------------------------------------------

    @classmethod
    def parabola(cls, rho_max: float = 1.0, v_max: float = 1.0) -> "FundamentalDiagram":
        """Greenshields law ``f(rho) = v_max * rho * (1 - rho / rho_max)``."""
        if rho_max <= 0 or v_max <= 0:
            raise ConfigurationError("rho_max and v_max must be positive")

        def flux(rho):
            return v_max * rho * (1.0 - rho / rho_max)

        def deriv(rho):
            return v_max * (1.0 - 2.0 * rho / rho_max)

        return cls(
            rho_max=float(rho_max),
            kind="parabola",
            params={"rho_max": float(rho_max), "v_max": float(v_max)},
            _flux=flux,
            _deriv=deriv,
            sigma=0.5 * rho_max,
            max_char_speed=float(v_max),
        )

    @classmethod
    def polynomial(cls, coeffs: Sequence[float], rho_max: float = 1.0) -> "FundamentalDiagram":
        """Polynomial flux, ``coeffs`` in ascending powers of rho."""
        poly = np.polynomial.Polynomial([float(c) for c in coeffs])
        dpoly = poly.deriv()
        return cls._generic(
            poly,
            rho_max,
            kind="polynomial",
            params={"rho_max": float(rho_max), "coeffs": [float(c) for c in coeffs]},
            deriv=dpoly,
        )

    @classmethod
    def table(cls, rho: Sequence[float], f: Sequence[float]) -> "FundamentalDiagram":
        """Piecewise-linear flux through tabulated nodes.

        The node slopes must be strictly decreasing (concave table), the
        first node at density 0 and both end values zero.
        """
        r = np.asarray(rho, dtype=float)
        v = np.asarray(f, dtype=float)
        if r.ndim != 1 or r.shape != v.shape or r.size < 3:
            raise ConfigurationError("table needs matching rho/f arrays with at least 3 nodes")
        if r[0] != 0.0 or np.any(np.diff(r) <= 0):
            raise ConfigurationError("table densities must start at 0 and increase strictly")
        if v[0] != 0.0 or v[-1] != 0.0:
            raise ConfigurationError("table flux must vanish at both ends")
        slopes = np.diff(v) / np.diff(r)
        if np.any(np.diff(slopes) >= 0):
            raise ConfigurationError("flux is not strictly concave on (0, rho_max)")
        rho_max = float(r[-1])

        def flux(x):
            return np.interp(x, r, v)

        def deriv(x):
            idx = np.clip(np.searchsorted(r, x, side="right") - 1, 0, slopes.size - 1)
            return slopes[idx]

        k = int(np.argmax(v))
        return cls(
            rho_max=rho_max,
            kind="table",
            params={"rho": r.tolist(), "f": v.tolist()},
            _flux=flux,
            _deriv=deriv,
            sigma=float(r[k]),
            # max finite-difference slope stands in for sup |f'|
            max_char_speed=float(np.max(np.abs(slopes))),
        )

    @classmethod
    def from_callable(cls, flux: Callable, rho_max: float) -> "FundamentalDiagram":
        """Wrap a vectorised user function; derivatives by finite differences."""
        return cls._generic(flux, rho_max, kind="callable", params={"rho_max": float(rho_max)})

    @classmethod
    def _generic(cls, flux, rho_max, kind, params, deriv=None):
        rho_max = float(rho_max)
        if rho_max <= 0:
            raise ConfigurationError("rho_max must be positive")
        if abs(float(flux(0.0))) > 1e-12 or abs(float(flux(rho_max))) > 1e-12:
            raise ConfigurationError("flux must vanish at 0 and rho_max")
        _sample_concave(flux, rho_max)
        res = minimize_scalar(
            lambda x: -float(flux(x)),
            bounds=(0.0, rho_max),
            method="bounded",
            options={"xatol": 1e-12 * rho_max},
        )
        sigma = float(res.x)
        if deriv is None:
            h = 1e-6 * rho_max

            def deriv(x):
                x = np.asarray(x, dtype=float)
                lo = np.clip(x - h, 0.0, rho_max)
                hi = np.clip(x + h, 0.0, rho_max)
                return (flux(hi) - flux(lo)) / (hi - lo)

            # concave: |f'| peaks at an endpoint
            h0 = 1e-7 * rho_max
            speed = max(
                abs(float(flux(h0)) - float(flux(0.0))) / h0,
                abs(float(flux(rho_max)) - float(flux(rho_max - h0))) / h0,
            )
        else:
            speed = max(abs(float(deriv(0.0))), abs(float(deriv(rho_max))))
        return cls(
            rho_max=rho_max,
            kind=kind,
            params=params,
            _flux=flux,
            _deriv=deriv,
            sigma=sigma,
            max_char_speed=speed,
        )

    @classmethod
    def from_config(cls, cfg: dict) -> "FundamentalDiagram":
        kind = cfg.get("type", "parabola")
        if kind == "parabola":
            return cls.parabola(cfg.get("rho_max", 1.0), cfg.get("v_max", 1.0))
        if kind == "polynomial":
            return cls.polynomial(cfg["coeffs"], cfg.get("rho_max", 1.0))
        if kind == "table":
            return cls.table(cfg["rho"], cfg["f"])
        raise ConfigurationError(f"unknown diagram type {kind!r}")

    def to_config(self) -> dict:
        if self.kind == "callable":
            raise ConfigurationError("callable diagrams cannot be serialised")
        return {"type": self.kind, **self.params}

    def __eq__(self, other):
        if not isinstance(other, FundamentalDiagram):
            return NotImplemented
        return self.kind == other.kind and self.params == other.params

    def __hash__(self):
        return hash((self.kind, repr(self.params)))

    # -- evaluation ---------------------------------------------------------

    def check(self, rho):
        """Return ``rho`` clamped to the domain, raising on real violations."""
        arr = np.asarray(rho, dtype=float)
        lo, hi = -DOMAIN_SLACK, self.rho_max + DOMAIN_SLACK
        if np.any(arr < lo) or np.any(arr > hi) or np.any(np.isnan(arr)):
            bad = arr[(arr < lo) | (arr > hi) | np.isnan(arr)]
            raise DomainError(f"density {bad.flat[0]!r} outside [0, {self.rho_max}]")
        return np.clip(arr, 0.0, self.rho_max)

    def flux(self, rho):
        return _scalar(self._flux(self.check(rho)))

    def derivative(self, rho):
        return _scalar(self._deriv(self.check(rho)))

    @property
    def max_flux(self) -> float:
        return float(self._flux(self.sigma))


def _scalar(x):
    x = np.asarray(x, dtype=float)
    return float(x) if x.ndim == 0 else x


def flux(d: FundamentalDiagram, rho):
    return d.flux(rho)


def critical_density(d: FundamentalDiagram) -> float:
    return d.sigma


def godunov_flux(d: FundamentalDiagram, rho_minus, rho_plus):
    """Godunov interface flux for a concave law, by its four branches."""
    a = d.check(rho_minus)
    b = d.check(rho_plus)
    fa = d._flux(a)
    fb = d._flux(b)
    sigma = d.sigma
    out = np.where(
        a <= b,
        np.minimum(fa, fb),
        np.where(a < sigma, fa, np.where(b > sigma, fb, d.max_flux)),
    )
    return _scalar(out)


def sup_slope_estimate(d: FundamentalDiagram, n: int = 10001) -> float:
    """Sampled max of |f'| on a fine grid; cross-check for ``max_char_speed``."""
    rho = np.linspace(0.0, d.rho_max, n)
    return float(np.max(np.abs(np.diff(d._flux(rho)) / np.diff(rho))))


__all__ = [
    "DOMAIN_SLACK",
    "ConfigurationError",
    "DomainError",
    "FundamentalDiagram",
    "critical_density",
    "flux",
    "godunov_flux",
    "sup_slope_estimate",
]
