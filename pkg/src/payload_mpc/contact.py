"""Contact-stability conditions and a smooth wrench parametrization of their interior.

A planar unilateral contact on a rectangular patch is stable when the wrench
satisfies five conditions: positive normal force, Coulomb friction on the
tangential force, center of pressure inside the rectangle (both axes) and
bounded torsional moment.  Those conditions carve out an open set K of
admissible wrenches.

`parametrize` maps an unconstrained 6-vector xi smoothly onto (most of) the
interior of K:

    F_z = exp(xi3) + fz_min
    F_x = mu_c * tanh(xi1) * F_z / sqrt(1 + tanh(xi2)^2)
    F_y = mu_c * tanh(xi2) * F_z / sqrt(1 + tanh(xi1)^2)
    M_x = (delta_y * tanh(xi4) + delta_y0) * F_z
    M_y = (delta_x * tanh(xi5) + delta_x0) * F_z
    M_z = mu_z * tanh(xi6) * F_z

with the delta offsets derived from the rectangle bounds.  Every image point
satisfies the stability conditions strictly, which lets an optimizer search
over xi with no contact-stability constraints at all.  As xi -> 0 the wrench
tends to a pure normal force of magnitude 1 + fz_min through the rectangle
center.

`invert_parametrization` recovers xi for wrenches inside the image; targets
near the corners of the friction disc fall outside the image (the map covers
almost but not all of K) and raise `InversionError`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import Wrench
from .errors import ConfigurationError, InversionError, ParameterRangeError

# exp() overflows IEEE doubles just above 709; stay clear of it
XI3_LIMIT = 700.0

_INVERT_MAX_ITERATIONS = 100
_INVERT_TOLERANCE = 1e-6


@dataclass(frozen=True)
class ContactSurface:
    """Rectangular contact patch in its own frame plus friction limits.

    x/y bounds are the rectangle edges (m) around the contact frame origin,
    mu_c/mu_z the static and torsional friction coefficients, fz_min the
    minimum admissible normal force (N).
    """

    x_min: float
    x_max: float
    y_min: float
    y_max: float
    mu_c: float = 0.33
    mu_z: float = 0.1
    fz_min: float = 0.01

    def __post_init__(self):
        if not (self.x_min < self.x_max):
            raise ConfigurationError(f"surface x bounds invalid: x_min={self.x_min} >= x_max={self.x_max}")
        if not (self.y_min < self.y_max):
            raise ConfigurationError(f"surface y bounds invalid: y_min={self.y_min} >= y_max={self.y_max}")
        if not (self.mu_c > 0):
            raise ConfigurationError(f"mu_c must be positive, got {self.mu_c}")
        if not (self.mu_z > 0):
            raise ConfigurationError(f"mu_z must be positive, got {self.mu_z}")
        if not (self.fz_min >= 0):
            raise ConfigurationError(f"fz_min must be non-negative, got {self.fz_min}")

    def corner_offsets(self) -> np.ndarray:
        """The four rectangle corners in the contact frame (geometry bookkeeping only)."""
        return np.array(
            [
                [self.x_min, self.y_min, 0.0],
                [self.x_max, self.y_min, 0.0],
                [self.x_max, self.y_max, 0.0],
                [self.x_min, self.y_max, 0.0],
            ]
        )


@dataclass(frozen=True)
class SurfaceOffsets:
    """Half-extents and center offsets of the rectangle as used by the parametrization.

    Note the sign asymmetry: delta_x0 is the negated x-center, delta_y0 the
    plain y-center.  That is what makes M_y = -CoP_x * F_z and
    M_x = CoP_y * F_z land the center of pressure inside the rectangle.
    """

    delta_x: float
    delta_x0: float
    delta_y: float
    delta_y0: float


@dataclass(frozen=True)
class StabilityReport:
    """Outcome of the five stability conditions; positive margin = satisfied with slack."""

    satisfied: bool
    margins: np.ndarray  # (5,): normal force, friction, CoP-y, CoP-x, torsion

    def __post_init__(self):
        object.__setattr__(self, "margins", np.asarray(self.margins, dtype=float).reshape(5))


def surface_offsets(surface: ContactSurface) -> SurfaceOffsets:
    return SurfaceOffsets(
        delta_x=0.5 * (surface.x_max - surface.x_min),
        delta_x0=-0.5 * (surface.x_max + surface.x_min),
        delta_y=0.5 * (surface.y_max - surface.y_min),
        delta_y0=0.5 * (surface.y_max + surface.y_min),
    )


def parametrize_batch(xi: np.ndarray, surface: ContactSurface) -> np.ndarray:
    """Vectorized parametrization: xi (..., 6) -> wrench components (..., 6)."""
    xi = np.asarray(xi, dtype=float)
    if xi.shape[-1] != 6:
        raise ConfigurationError(f"xi must have 6 components, got shape {xi.shape}")
    if not np.all(np.isfinite(xi)):
        raise ParameterRangeError("xi must be finite")
    if np.abs(xi[..., 2]).max() > XI3_LIMIT:
        raise ParameterRangeError(f"|xi_3| exceeds the overflow guard {XI3_LIMIT}")
    d = surface_offsets(surface)
    t = np.tanh(xi)
    fz = np.exp(xi[..., 2]) + surface.fz_min
    out = np.empty_like(xi)
    out[..., 0] = surface.mu_c * t[..., 0] * fz / np.sqrt(1.0 + t[..., 1] ** 2)
    out[..., 1] = surface.mu_c * t[..., 1] * fz / np.sqrt(1.0 + t[..., 0] ** 2)
    out[..., 2] = fz
    out[..., 3] = (d.delta_y * t[..., 3] + d.delta_y0) * fz
    out[..., 4] = (d.delta_x * t[..., 4] + d.delta_x0) * fz
    out[..., 5] = surface.mu_z * t[..., 5] * fz
    return out


def parametrize(xi, surface: ContactSurface) -> Wrench:
    """Map a parameter 6-vector to a stability-satisfying contact wrench."""
    w = parametrize_batch(np.asarray(xi, dtype=float).reshape(6), surface)
    return Wrench.from_array(w)


def parametrization_jacobian_batch(xi: np.ndarray, surface: ContactSurface) -> np.ndarray:
    """Closed-form Jacobians of the parametrization: xi (..., 6) -> (..., 6, 6)."""
    xi = np.asarray(xi, dtype=float)
    d = surface_offsets(surface)
    t = np.tanh(xi)
    s = 1.0 - t**2  # sech^2
    e3 = np.exp(xi[..., 2])
    fz = e3 + surface.fz_min
    r1 = np.sqrt(1.0 + t[..., 0] ** 2)
    r2 = np.sqrt(1.0 + t[..., 1] ** 2)
    jac = np.zeros(xi.shape[:-1] + (6, 6))
    mu_c, mu_z = surface.mu_c, surface.mu_z
    jac[..., 0, 0] = mu_c * s[..., 0] * fz / r2
    jac[..., 0, 1] = -mu_c * t[..., 0] * fz * t[..., 1] * s[..., 1] / r2**3
    jac[..., 0, 2] = mu_c * t[..., 0] * e3 / r2
    jac[..., 1, 0] = -mu_c * t[..., 1] * fz * t[..., 0] * s[..., 0] / r1**3
    jac[..., 1, 1] = mu_c * s[..., 1] * fz / r1
    jac[..., 1, 2] = mu_c * t[..., 1] * e3 / r1
    jac[..., 2, 2] = e3
    jac[..., 3, 2] = (d.delta_y * t[..., 3] + d.delta_y0) * e3
    jac[..., 3, 3] = d.delta_y * s[..., 3] * fz
    jac[..., 4, 2] = (d.delta_x * t[..., 4] + d.delta_x0) * e3
    jac[..., 4, 4] = d.delta_x * s[..., 4] * fz
    jac[..., 5, 2] = mu_z * t[..., 5] * e3
    jac[..., 5, 5] = mu_z * s[..., 5] * fz
    return jac


def parametrization_jacobian(xi, surface: ContactSurface) -> np.ndarray:
    return parametrization_jacobian_batch(np.asarray(xi, dtype=float).reshape(6), surface)


def stability_margins(w: np.ndarray, surface: ContactSurface) -> np.ndarray:
    """Margins of the five stability conditions for wrench components (..., 6).

    Ratio-based margins (CoP and torsion) are only meaningful for positive
    normal force; they are reported as -inf whenever F_z <= 0 so that
    "all margins positive" remains equivalent to stability.
    """
    w = np.asarray(w, dtype=float)
    fx, fy, fz = w[..., 0], w[..., 1], w[..., 2]
    mx, my, mz = w[..., 3], w[..., 4], w[..., 5]
    margins = np.empty(w.shape[:-1] + (5,))
    margins[..., 0] = fz - surface.fz_min
    margins[..., 1] = surface.mu_c * fz - np.hypot(fx, fy)
    positive = fz > 0
    safe_fz = np.where(positive, fz, 1.0)
    cop_y = mx / safe_fz
    cop_x = -my / safe_fz
    margins[..., 2] = np.where(
        positive, np.minimum(cop_y - surface.y_min, surface.y_max - cop_y), -np.inf
    )
    margins[..., 3] = np.where(
        positive, np.minimum(cop_x - surface.x_min, surface.x_max - cop_x), -np.inf
    )
    margins[..., 4] = np.where(positive, surface.mu_z - np.abs(mz) / safe_fz, -np.inf)
    return margins


def is_contact_stable(w: Wrench, surface: ContactSurface) -> StabilityReport:
    """Check the five planar-contact stability conditions for a single wrench."""
    margins = stability_margins(w.as_array(), surface)
    return StabilityReport(satisfied=bool(np.all(margins > 0)), margins=margins)


def _closed_form_seed(w: np.ndarray, surface: ContactSurface) -> np.ndarray:
    """Algebraic inverse of the parametrization, exact on its image.

    Friction rows follow from t1 = a*sqrt(1+t2^2), t2 = b*sqrt(1+t1^2) with
    a, b the normalized tangential components; solving the pair gives
    t1^2 = a^2 (1+b^2) / (1 - a^2 b^2) and symmetrically for t2.  Ratios are
    clipped into the open unit interval so targets outside the image still
    produce a usable starting point.
    """
    d = surface_offsets(surface)
    fz = w[2]
    lim = 1.0 - 1e-12
    a = w[0] / (surface.mu_c * fz)
    b = w[1] / (surface.mu_c * fz)
    den = max(1.0 - (a * b) ** 2, 1e-12)
    t1 = np.sign(a) * np.sqrt(np.clip(a * a * (1.0 + b * b) / den, 0.0, lim))
    t2 = np.sign(b) * np.sqrt(np.clip(b * b * (1.0 + a * a) / den, 0.0, lim))
    return np.array(
        [
            np.arctanh(t1),
            np.arctanh(t2),
            np.log(max(fz - surface.fz_min, 1e-300)),
            np.arctanh(np.clip((w[3] / fz - d.delta_y0) / d.delta_y, -lim, lim)),
            np.arctanh(np.clip((w[4] / fz - d.delta_x0) / d.delta_x, -lim, lim)),
            np.arctanh(np.clip(w[5] / (surface.mu_z * fz), -lim, lim)),
        ]
    )


def invert_parametrization(w_target: Wrench, surface: ContactSurface, xi_init=None) -> np.ndarray:
    """Recover xi with parametrize(xi) ~= w_target for targets strictly inside K.

    Starts from the closed-form seed (or `xi_init` when provided) and refines
    with damped Gauss-Newton plus backtracking.  Raises `InversionError` when
    the target is not strictly stable or lies outside the parametrized image.
    """
    w = w_target.as_array()
    margins = stability_margins(w, surface)
    if not np.all(margins > 0):
        raise InversionError(f"target wrench is not strictly inside the stable set (margins {margins})")
    scale = max(1.0, float(np.linalg.norm(w)))
    xi = (
        np.asarray(xi_init, dtype=float).reshape(6).copy()
        if xi_init is not None
        else _closed_form_seed(w, surface)
    )
    xi[2] = np.clip(xi[2], -XI3_LIMIT, XI3_LIMIT)
    residual = parametrize_batch(xi, surface) - w
    err = np.linalg.norm(residual)
    for _ in range(_INVERT_MAX_ITERATIONS):
        if err <= _INVERT_TOLERANCE * scale:
            return xi
        jac = parametrization_jacobian_batch(xi, surface)
        jtj = jac.T @ jac
        step = np.linalg.solve(jtj + 1e-12 * np.trace(jtj) * np.eye(6), jac.T @ residual)
        alpha = 1.0
        for _ in range(30):
            candidate = xi - alpha * step
            candidate[2] = np.clip(candidate[2], -XI3_LIMIT, XI3_LIMIT)
            new_residual = parametrize_batch(candidate, surface) - w
            new_err = np.linalg.norm(new_residual)
            if new_err < err:
                xi, residual, err = candidate, new_residual, new_err
                break
            alpha *= 0.5
        else:
            break  # no descent possible
    if err <= _INVERT_TOLERANCE * scale:
        return xi
    raise InversionError(
        f"no parameter found for target {w} (residual {err:.3e}); "
        "the wrench likely lies outside the parametrized image"
    )
