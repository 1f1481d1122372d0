"""Concrete quasilinear problem definitions.

Every model exposes the same surface: ``assemble_A(u)`` produces the dense
generator matrix of the linearized evolution at state u, ``evaluate_f(u)``
the semilinear forcing, plus a base operator, an exponent book, and an
admissible ball radius measured in the low-order spectral norm.  Models are
immutable; both methods are pure and reentrant.

Shipped models:

* local-sensing chemotaxis: the signal v = (I - Laplacian)^{-1} u feeds the
  cell diffusivity a(v) and sensitivity chi(v),
      A(u) w = a(v) Lap w + (a - chi)'(v) (dv) (dw) - chi(v) v w,
      f(u)   = -chi(v) u^2,
  with the natural exponential family a(s) = exp(-delta s), chi = -a';
* reaction-diffusion with nonlocal coefficients: divergence-form diffusion
  a(x, l(u)) with a scalar functional l(u) = int m u, optional drift and
  zeroth-order terms, and a pointwise polynomial forcing with f(0) = f'(0) = 0;
* a linear test model (constant generator, zero forcing) for exactness checks.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Protocol, runtime_checkable

import numpy as np

from .errors import BallViolationError, ConfigurationError, ModelError
from .spatial import (
    BaseOperator,
    BoundaryKind,
    Grid1D,
    SobolevScale,
    assemble_laplacian,
    build_grid,
    first_difference,
    helmholtz_solve,
    sobolev_norm,
)


@dataclass(frozen=True)
class ExponentBook:
    """Exponent tuple of the well-posedness theory with its inequality chain."""

    beta: float
    alpha: float
    alpha0: float
    gamma: float
    xi: float
    mu: float
    rho: float
    ell: float

    def checks(self) -> list[tuple[str, bool]]:
        b = self
        return [
            ("0 <= beta < alpha < alpha0 <= 1", 0 <= b.beta < b.alpha < b.alpha0 <= 1),
            ("ell > 0", b.ell > 0),
            ("alpha0 < gamma <= 1", b.alpha0 < b.gamma <= 1),
            (
                "0 < xi < min(alpha + 1/(ell+1), 1)",
                0 < b.xi < min(b.alpha + 1.0 / (b.ell + 1.0), 1.0),
            ),
            (
                "max(xi - alpha, 0) < mu < 1/(ell+1)",
                max(b.xi - b.alpha, 0.0) < b.mu < 1.0 / (b.ell + 1.0),
            ),
            (
                "0 < 2 rho < min(2 (1 - mu (ell+1)), alpha - beta)",
                0 < 2 * b.rho < min(2.0 * (1.0 - b.mu * (b.ell + 1.0)), b.alpha - b.beta),
            ),
        ]

    def all_valid(self) -> bool:
        return all(ok for _, ok in self.checks())


@runtime_checkable
class QuasilinearModel(Protocol):
    """Interface every shipped model implements."""

    base: BaseOperator
    scale: SobolevScale
    exponents: ExponentBook
    ball_radius: float

    def assemble_A(self, u: np.ndarray, enforce_ball: bool = True) -> np.ndarray: ...

    def evaluate_f(self, u: np.ndarray) -> np.ndarray: ...


def _ball_norm(model, u: np.ndarray) -> float:
    return sobolev_norm(model.scale, u, 2.0 * model.exponents.beta)


def check_ball(model, u: np.ndarray, enforce: bool) -> float:
    norm = _ball_norm(model, u)
    if enforce and norm > model.ball_radius:
        raise BallViolationError(
            f"state leaves the admissible ball: |u| = {norm:.3e} > {model.ball_radius:.3e}",
            norm=norm,
            radius=model.ball_radius,
        )
    return norm


def chemotaxis_exponents(s: float, ell: float = 1.0) -> ExponentBook:
    """Admissible exponents for the chemotaxis model at data order s in (2, 5/2).

    alpha = s/2 - 1 and xi = s/4 are forced; the remaining exponents are
    placed inside their open constraint intervals.
    """
    alpha = s / 2.0 - 1.0
    xi = s / 4.0
    gamma = alpha + 0.8 * (0.25 - alpha)
    alpha0 = alpha + 0.4 * (0.25 - alpha)
    mu = 0.5 * (max(xi - alpha, 0.0) + 1.0 / (ell + 1.0))
    rho = 0.4 * min(2.0 * (1.0 - mu * (ell + 1.0)), alpha)
    return ExponentBook(
        beta=0.0, alpha=alpha, alpha0=alpha0, gamma=gamma, xi=xi, mu=mu, rho=rho, ell=ell
    )


@dataclass(frozen=True, eq=False)
class ChemotaxisModel:
    """Local-sensing chemotaxis on a Neumann grid."""

    base: BaseOperator
    scale: SobolevScale
    exponents: ExponentBook
    a_fn: Callable[[np.ndarray], np.ndarray]
    chi_fn: Callable[[np.ndarray], np.ndarray]
    drift_coeff_fn: Callable[[np.ndarray], np.ndarray]  # derivative of (a - chi)
    delta: float
    s: float
    ball_radius: float = 1.0
    diff1: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.base.grid.bc is not BoundaryKind.NEUMANN:
            raise ConfigurationError("the chemotaxis model requires a Neumann grid")
        if self.a_fn(np.zeros(1))[0] <= 0:
            raise ConfigurationError("cell diffusivity must satisfy a(0) > 0")
        if self.diff1 is None:
            object.__setattr__(self, "diff1", first_difference(self.base.grid))

    @classmethod
    def default(
        cls, grid: Grid1D, delta: float = 1.0, s: float = 2.25, ball_radius: float = 1.0
    ) -> "ChemotaxisModel":
        """Exponential family a(s) = exp(-delta s), chi = -a' = delta a."""
        base = assemble_laplacian(grid)

        def a_fn(v):
            return np.exp(-delta * v)

        def chi_fn(v):
            return delta * np.exp(-delta * v)

        def drift_coeff_fn(v):
            # (a - chi)' for the exponential family: -delta (1 - delta) e^{-delta v}
            return -delta * (1.0 - delta) * np.exp(-delta * v)

        return cls(
            base=base,
            scale=SobolevScale(base=base),
            exponents=chemotaxis_exponents(s),
            a_fn=a_fn,
            chi_fn=chi_fn,
            drift_coeff_fn=drift_coeff_fn,
            delta=delta,
            s=s,
            ball_radius=ball_radius,
        )

    def signal(self, u: np.ndarray) -> np.ndarray:
        return helmholtz_solve(self.base, u)

    def assemble_A(self, u: np.ndarray, enforce_ball: bool = True) -> np.ndarray:
        check_ball(self, u, enforce_ball)
        v = self.signal(u)
        dv = self.diff1 @ v
        return (
            self.a_fn(v)[:, None] * self.base.matrix
            + (self.drift_coeff_fn(v) * dv)[:, None] * self.diff1
            - np.diag(self.chi_fn(v) * v)
        )

    def evaluate_f(self, u: np.ndarray) -> np.ndarray:
        return -self.chi_fn(self.signal(u)) * u**2


def chemotaxis_signal(model: ChemotaxisModel, u: np.ndarray) -> np.ndarray:
    return model.signal(u)


def chemotaxis_A(model: ChemotaxisModel, u: np.ndarray, enforce_ball: bool = True) -> np.ndarray:
    return model.assemble_A(u, enforce_ball=enforce_ball)


def chemotaxis_f(model: ChemotaxisModel, u: np.ndarray) -> np.ndarray:
    return model.evaluate_f(u)


def rd_exponents(p: float = 4.0, ell: float = 2.0, delta: int = 1) -> ExponentBook:
    """Admissible exponents for the 1-D nonlocal reaction-diffusion model."""
    cap = min(1.0 / p, 0.5 * (delta + 1.0 / p))
    alpha = 0.4 * cap
    alpha0 = 0.8 * cap
    xi_lo = 1.0 / p
    xi_hi = min(alpha + 1.0 / (ell + 1.0), 1.0)
    xi = 0.5 * (xi_lo + xi_hi)
    gamma = 0.5 * (alpha0 + xi)
    mu = 0.5 * (max(xi - alpha, 0.0) + 1.0 / (ell + 1.0))
    rho = 0.4 * min(2.0 * (1.0 - mu * (ell + 1.0)), alpha)
    return ExponentBook(
        beta=0.0, alpha=alpha, alpha0=alpha0, gamma=gamma, xi=xi, mu=mu, rho=rho, ell=ell
    )


@dataclass(frozen=True, eq=False)
class NonlocalRDModel:
    """Divergence-form reaction-diffusion with nonlocal coefficient functionals.

    The diffusion coefficient a(x, l(u)) is evaluated at the flux-face
    coordinates, which keeps the matrix symmetric whenever drift and
    zeroth-order terms vanish.  The default functional is the linear integral
    l(u) = int m u dx; pass ``functional_fn`` for a nonlinear functional.
    Drift and zeroth-order coefficients share the same functional value.
    """

    base: BaseOperator
    scale: SobolevScale
    exponents: ExponentBook
    diff_fn: Callable[[np.ndarray, float], np.ndarray]
    poly_coeffs: tuple
    functional_weight: np.ndarray
    drift_fn: Callable[[np.ndarray, float], np.ndarray] | None = None
    react_fn: Callable[[np.ndarray, float], np.ndarray] | None = None
    functional_fn: Callable[[np.ndarray], float] | None = None
    ellipticity_floor: float = 1e-10
    p: float = 4.0
    ball_radius: float = 1.0
    diff1: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        coeffs = tuple(float(c) for c in self.poly_coeffs)
        if len(coeffs) < 3 or coeffs[0] != 0.0 or coeffs[1] != 0.0:
            raise ConfigurationError(
                "forcing polynomial must satisfy f(0) = f'(0) = 0 "
                "(zero constant and linear coefficients)"
            )
        object.__setattr__(self, "poly_coeffs", coeffs)
        m = np.asarray(self.functional_weight, dtype=float)
        if m.shape != (self.base.grid.n,):
            raise ConfigurationError("functional weight must be a nodal field")
        object.__setattr__(self, "functional_weight", m)
        faces0 = self.diff_fn(self.base.grid.face_coords, self.functional_value(np.zeros_like(m)))
        if np.min(faces0) < self.ellipticity_floor:
            raise ConfigurationError(
                f"diffusion coefficient at the zero state falls below the ellipticity "
                f"floor {self.ellipticity_floor}"
            )
        if self.diff1 is None:
            object.__setattr__(self, "diff1", first_difference(self.base.grid))

    @classmethod
    def default(
        cls,
        grid: Grid1D,
        poly_coeffs: tuple = (0.0, 0.0, 0.0, -1.0),
        p: float = 4.0,
        ball_radius: float = 1.0,
    ) -> "NonlocalRDModel":
        """a(x, s) = 1 + s^2 with l(u) = int u dx and f(r) = -r^3."""
        base = assemble_laplacian(grid)
        ell = max(len(poly_coeffs) - 2, 1)
        delta = 1 if grid.bc is BoundaryKind.NEUMANN else 0
        return cls(
            base=base,
            scale=SobolevScale(base=base),
            exponents=rd_exponents(p=p, ell=float(ell), delta=delta),
            diff_fn=lambda x, s: 1.0 + s**2 + 0.0 * x,
            poly_coeffs=poly_coeffs,
            functional_weight=np.ones(grid.n),
            p=p,
            ball_radius=ball_radius,
        )

    @property
    def ell(self) -> float:
        return self.exponents.ell

    def functional_value(self, u: np.ndarray) -> float:
        """l(u): the nonlinear override when given, else int m u dx on the grid."""
        if self.functional_fn is not None:
            return float(self.functional_fn(u))
        return float(self.base.grid.spacing * np.dot(self.functional_weight, u))

    def assemble_A(self, u: np.ndarray, enforce_ball: bool = True) -> np.ndarray:
        check_ball(self, u, enforce_ball)
        grid = self.base.grid
        n, h = grid.n, grid.spacing
        s_val = self.functional_value(u)
        faces = np.asarray(self.diff_fn(grid.face_coords, s_val), dtype=float)
        if np.min(faces) <= max(self.ellipticity_floor, 0.0):
            raise ModelError(
                f"ellipticity violated: min face coefficient {np.min(faces):.3e} at l(u)={s_val:.3e}"
            )
        mat = np.zeros((n, n))
        idx = np.arange(n)
        if grid.bc is BoundaryKind.NEUMANN:
            # faces[i] sits between nodes i and i+1; boundary faces carry no flux
            left = np.concatenate([[0.0], faces])
            right = np.concatenate([faces, [0.0]])
        else:
            # faces[i] sits left of node i, including the two boundary faces
            left = faces[:-1]
            right = faces[1:]
        mat[idx, idx] = -(left + right)
        mat[idx[:-1], idx[:-1] + 1] = right[:-1]
        mat[idx[1:], idx[1:] - 1] = left[1:]
        mat /= h * h
        if self.drift_fn is not None:
            mat = mat + np.asarray(self.drift_fn(grid.nodes, s_val))[:, None] * self.diff1
        if self.react_fn is not None:
            mat = mat + np.diag(np.asarray(self.react_fn(grid.nodes, s_val)))
        return mat

    def evaluate_f(self, u: np.ndarray) -> np.ndarray:
        return np.polynomial.polynomial.polyval(u, self.poly_coeffs)


def rd_A(model: NonlocalRDModel, u: np.ndarray, enforce_ball: bool = True) -> np.ndarray:
    return model.assemble_A(u, enforce_ball=enforce_ball)


def rd_f(model: NonlocalRDModel, u: np.ndarray) -> np.ndarray:
    return model.evaluate_f(u)


def generic_exponents(ell: float = 1.0) -> ExponentBook:
    return ExponentBook(
        beta=0.0, alpha=0.25, alpha0=0.3, gamma=0.5, xi=0.4, mu=0.3, rho=0.1, ell=ell
    )


@dataclass(frozen=True, eq=False)
class LinearTestModel:
    """Constant generator, zero forcing; recovery is exact for this model."""

    base: BaseOperator
    scale: SobolevScale
    exponents: ExponentBook
    matrix: np.ndarray
    ball_radius: float = float("inf")

    @classmethod
    def default(cls, grid: Grid1D, coefficient: float = 1.0) -> "LinearTestModel":
        base = assemble_laplacian(grid)
        return cls(
            base=base,
            scale=SobolevScale(base=base),
            exponents=generic_exponents(),
            matrix=coefficient * base.matrix,
        )

    def assemble_A(self, u: np.ndarray, enforce_ball: bool = True) -> np.ndarray:
        return self.matrix

    def evaluate_f(self, u: np.ndarray) -> np.ndarray:
        return np.zeros_like(u)


@dataclass(frozen=True)
class ExponentReport:
    entries: tuple  # (name, passed, detail)

    @property
    def all_passed(self) -> bool:
        return all(ok for _, ok, _ in self.entries)

    def failures(self) -> list[str]:
        return [name for name, ok, _ in self.entries if not ok]

    def to_dict(self) -> dict:
        return {
            "all_passed": self.all_passed,
            "entries": [
                {"name": name, "passed": ok, "detail": detail}
                for name, ok, detail in self.entries
            ],
        }


def validate_exponents(model) -> ExponentReport:
    """Check the model's exponent book against every inequality it must satisfy."""
    book = model.exponents
    entries = [(name, ok, "") for name, ok in book.checks()]
    if isinstance(model, ChemotaxisModel):
        s = model.s
        entries += [
            ("2 < s < 5/2", 2.0 < s < 2.5, f"s={s}"),
            ("alpha = s/2 - 1", abs(book.alpha - (s / 2 - 1)) < 1e-12, f"alpha={book.alpha}"),
            ("xi = s/4", abs(book.xi - s / 4) < 1e-12, f"xi={book.xi}"),
            ("gamma < 1/4", book.gamma < 0.25, f"gamma={book.gamma}"),
        ]
    if isinstance(model, NonlocalRDModel):
        n_dim = 1
        delta = 1 if model.base.grid.bc is BoundaryKind.NEUMANN else 0
        cap = min(n_dim / model.p, 0.5 * (delta + 1.0 / model.p))
        entries += [
            ("(ell + 1) n < p", (model.ell + 1) * n_dim < model.p, f"p={model.p}"),
            (
                "0 < alpha < alpha0 < min(n/p, (delta + 1/p)/2)",
                0 < book.alpha < book.alpha0 < cap,
                f"cap={cap}",
            ),
            (
                "n/p < xi < min(alpha + 1/(ell+1), 1)",
                n_dim / model.p < book.xi < min(book.alpha + 1 / (model.ell + 1), 1.0),
                f"xi={book.xi}",
            ),
            (
                "beta = 0 < alpha < alpha0 < gamma < xi",
                book.beta == 0 and book.alpha < book.alpha0 < book.gamma < book.xi,
                "",
            ),
        ]
    return ExponentReport(entries=tuple(entries))


def growth_estimate_probe(
    model, sample_count: int, radius: float, seed: int = 0
) -> float:
    """Empirical constant in the forcing growth estimate.

    Draws random pairs in the low-order ball and maximizes the gamma-norm
    increment of f over the stated right-hand side with unit constant.
    """
    if radius > model.ball_radius:
        raise ValueError(f"probe radius {radius} exceeds the model ball {model.ball_radius}")
    book = model.exponents
    rng = np.random.default_rng(seed)
    n = model.base.grid.n
    worst = 0.0
    for _ in range(sample_count):
        pair = []
        for _ in range(2):
            x = rng.standard_normal(n)
            norm = sobolev_norm(model.scale, x, 2 * book.beta)
            x *= radius * rng.uniform(0.05, 1.0) / norm
            pair.append(x)
        v, w = pair
        num = sobolev_norm(model.scale, model.evaluate_f(v) - model.evaluate_f(w), 2 * book.gamma)
        xi_v = sobolev_norm(model.scale, v, 2 * book.xi)
        xi_w = sobolev_norm(model.scale, w, 2 * book.xi)
        den = (xi_v**book.ell + xi_w**book.ell) * sobolev_norm(model.scale, v - w, 2 * book.xi)
        den += (xi_v ** (book.ell + 1) + xi_w ** (book.ell + 1)) * sobolev_norm(
            model.scale, v - w, 2 * book.beta
        )
        if den > 0:
            worst = max(worst, num / den)
    return worst


@dataclass(frozen=True, eq=False)
class ShiftedModel:
    """Model recentered at an equilibrium v*: A*(w) = A(w + v*),
    f*(w) = A(w + v*) v* + f(w + v*)."""

    inner: QuasilinearModel
    v_star: np.ndarray

    @property
    def base(self) -> BaseOperator:
        return self.inner.base

    @property
    def scale(self) -> SobolevScale:
        return self.inner.scale

    @property
    def exponents(self) -> ExponentBook:
        return self.inner.exponents

    @property
    def ball_radius(self) -> float:
        return self.inner.ball_radius

    def assemble_A(self, u: np.ndarray, enforce_ball: bool = True) -> np.ndarray:
        return self.inner.assemble_A(u + self.v_star, enforce_ball=enforce_ball)

    def evaluate_f(self, u: np.ndarray) -> np.ndarray:
        shifted = u + self.v_star
        return self.inner.assemble_A(shifted, enforce_ball=False) @ self.v_star + self.inner.evaluate_f(shifted)


def equilibrium_shift(model, v_star: np.ndarray, tol: float | None = None) -> ShiftedModel:
    """Shift the model to an equilibrium v* (A(v*)v* + f(v*) = 0 within tol)."""
    v_star = np.asarray(v_star, dtype=float)
    residual = np.linalg.norm(
        model.assemble_A(v_star, enforce_ball=False) @ v_star + model.evaluate_f(v_star)
    )
    if tol is None:
        tol = 1e-10 * (1.0 + np.linalg.norm(v_star))
    if residual > tol:
        raise ValueError(
            f"v* is not an equilibrium: residual {residual:.3e} exceeds tolerance {tol:.3e}"
        )
    return ShiftedModel(inner=model, v_star=v_star)
