"""Compactly supported radial test profiles.

These are the deterministic functions paired with random fields in moment
and functional estimators.  All variants are radial around a center, have an
exact sup norm, and vanish identically outside ``radius``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .kernels import ball_volume, sphere_area
from .quadrature import radial_integral

_KINDS = ("bump", "ball", "tent")


@dataclass(frozen=True)
class BumpProfile:
    """A radial profile ``height * phi(|x - center| / radius)``.

    kind "bump" is the smooth compactly supported mollifier-style bump
    (normalized to peak value ``height``), "ball" the sharp indicator, and
    "tent" the linear cone.
    """

    kind: str
    dim: int
    radius: float
    height: float = 1.0
    center: tuple = ()

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown profile kind {self.kind!r}")
        if self.radius <= 0.0:
            raise ValueError("radius must be positive")
        if not self.center:
            object.__setattr__(self, "center", (0.0,) * self.dim)
        elif len(self.center) != self.dim:
            raise ValueError("center/dim mismatch")

    # -- evaluation ---------------------------------------------------------

    def _shape(self, u: np.ndarray) -> np.ndarray:
        inside = u < 1.0
        out = np.zeros_like(u)
        if self.kind == "bump":
            us = np.where(inside, u, 0.0)
            out[inside] = np.exp(1.0 - 1.0 / (1.0 - us[inside] ** 2))
        elif self.kind == "ball":
            out[inside] = 1.0
        else:  # tent
            out[inside] = 1.0 - u[inside]
        return out

    def __call__(self, pts):
        pts = np.asarray(pts, dtype=float)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        rho = np.linalg.norm(pts - np.asarray(self.center), axis=1)
        vals = self.height * self._shape(rho / self.radius)
        return float(vals[0]) if single else vals

    def radial(self, rho):
        """Profile as a function of the distance to the center."""
        rho = np.asarray(rho, dtype=float)
        return self.height * self._shape(rho / self.radius)

    # -- norms --------------------------------------------------------------

    @property
    def sup_norm(self) -> float:
        return abs(self.height)

    @property
    def l1_norm(self) -> float:
        h, R, d = abs(self.height), self.radius, self.dim
        if self.kind == "ball":
            return h * ball_volume(d, R)
        if self.kind == "tent":
            return h * sphere_area(d) * R**d / (d * (d + 1))
        res = radial_integral(
            lambda r: self._shape(r / R), R, d, tol=1e-12, rtol=1e-12
        )
        return h * float(res.value)

    def dilate(self, lam: float, amp: float = 1.0) -> "BumpProfile":
        """The profile ``amp * f(x / lam)`` (support radius scales by lam)."""
        return BumpProfile(
            self.kind, self.dim, self.radius * lam, self.height * amp, self.center
        )

    def translate(self, shift) -> "BumpProfile":
        c = tuple(np.asarray(self.center) + np.asarray(shift, dtype=float))
        return BumpProfile(self.kind, self.dim, self.radius, self.height, c)
