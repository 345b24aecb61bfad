"""Statistical-CSI RIS optimization by Riemannian conjugate gradient.

The objective is the expected pairwise cross-correlation between users'
composite channels,

    f(Theta) = sum_{k<j} tr(R_k Theta^H G Theta R_j Theta^H G Theta),

minimized either over the unitary group (fully-connected, beyond-diagonal RIS)
or over unit-modulus diagonal matrices (conventional RIS). Both run the same
CG loop with a Polak-Ribiere direction update, Armijo backtracking and a
manifold retraction; only the projection/retraction pair differs.

The unitary-case tangent projection subtracts Theta * chdiag(Theta^H Z), which
zeroes the diagonal of Theta^H Z but does not make it skew-Hermitian, so the
closed-form retraction can drift off the manifold. The drift is tracked per
iterate and an optional polar re-unitarization (on by default) snaps the
iterate back whenever it exceeds 1e-8.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError

BEYOND_DIAGONAL = "beyond_diagonal"
DIAGONAL = "diagonal"

_UNITARY_TOL = 1e-8
_UNIT_MODULUS_TOL = 1e-10


@dataclass(frozen=True)
class RisMatrix:
    """RIS coefficient matrix tagged with its architecture."""

    theta: np.ndarray
    architecture: str

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=complex)
        object.__setattr__(self, "theta", theta)
        n = theta.shape[0]
        if theta.shape != (n, n):
            raise ValueError("RIS matrix must be square")
        if self.architecture == BEYOND_DIAGONAL:
            gap = np.linalg.norm(theta.conj().T @ theta - np.eye(n))
            if gap > _UNITARY_TOL:
                raise ValueError(f"beyond-diagonal matrix is not unitary (gap {gap:.2e})")
        elif self.architecture == DIAGONAL:
            off = theta - np.diag(np.diag(theta))
            if np.any(off != 0):
                raise ValueError("diagonal architecture requires exactly-zero off-diagonals")
            if np.max(np.abs(np.abs(np.diag(theta)) - 1.0)) > _UNIT_MODULUS_TOL:
                raise ValueError("diagonal entries must be unit modulus")
        else:
            raise ValueError(f"unknown architecture {self.architecture!r}")

    @property
    def dimension(self) -> int:
        return self.theta.shape[0]


def random_phase_diagonal(n: int, rng, architecture: str = DIAGONAL) -> RisMatrix:
    """Diagonal matrix with unit amplitude and i.i.d. uniform random phases."""
    rng = np.random.default_rng(rng)
    phases = rng.uniform(0.0, 2 * np.pi, size=n)
    return RisMatrix(np.diag(np.exp(1j * phases)), architecture)


def identity_ris(n: int, architecture: str = DIAGONAL) -> RisMatrix:
    return RisMatrix(np.eye(n, dtype=complex), architecture)


@dataclass(frozen=True)
class CostContext:
    """Cached gram matrix G = H^H H plus the per-user correlation matrices."""

    gram: np.ndarray
    correlations: tuple[np.ndarray, ...]

    def __post_init__(self):
        object.__setattr__(self, "gram", np.asarray(self.gram, dtype=complex))
        object.__setattr__(
            self, "correlations", tuple(np.asarray(r, dtype=complex) for r in self.correlations)
        )
        for name, m in [("gram", self.gram)] + [
            (f"R_{k}", r) for k, r in enumerate(self.correlations)
        ]:
            herm_gap = np.linalg.norm(m - m.conj().T)
            if herm_gap > 1e-9 * max(np.linalg.norm(m), 1e-300):
                raise ValueError(f"{name} is not Hermitian")

    @property
    def dimension(self) -> int:
        return self.gram.shape[0]

    @property
    def num_users(self) -> int:
        return len(self.correlations)


@dataclass
class OptimizerSettings:
    """Loop controls for the CG optimizer.

    gradient_tolerance None means scale-invariant stopping at 1e-6 times the
    initial Riemannian gradient norm; a float is an absolute threshold.
    """

    max_iterations: int = 1000
    gradient_tolerance: float | None = None
    armijo_initial_step: float = 1.0
    armijo_contraction: float = 0.5
    armijo_decrease: float = 1e-4
    armijo_max_halvings: int = 50
    safeguard_reunitarize: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.gradient_tolerance is not None and self.gradient_tolerance <= 0:
            raise ValueError("gradient_tolerance must be positive")
        if not 0 < self.armijo_contraction < 1:
            raise ValueError("armijo contraction must be in (0, 1)")
        if not 0 < self.armijo_decrease < 1:
            raise ValueError("armijo sufficient-decrease must be in (0, 1)")


@dataclass
class OptimizerTrace:
    """Per-iteration history; costs has one extra leading entry for the start point."""

    costs: list[float] = field(default_factory=list)
    gradient_norms: list[float] = field(default_factory=list)
    step_sizes: list[float] = field(default_factory=list)
    constraint_violations: list[float] = field(default_factory=list)
    converged: bool = False

    @property
    def iterations(self) -> int:
        return len(self.step_sizes)

    @property
    def final_cost(self) -> float:
        return self.costs[-1]


def _as_array(theta) -> np.ndarray:
    return theta.theta if isinstance(theta, RisMatrix) else np.asarray(theta)


def cost(theta, ctx: CostContext) -> float:
    """Expected pairwise composite-channel cross-correlation (real, >= 0)."""
    t = _as_array(theta)
    a = t.conj().T @ ctx.gram @ t
    ra = [r @ a for r in ctx.correlations]
    total = 0.0 + 0.0j
    k = len(ra)
    for i in range(k - 1):
        for j in range(i + 1, k):
            total += np.sum(ra[i] * ra[j].T)  # tr(R_i A R_j A)
    if abs(total.imag) > 1e-9 * max(abs(total.real), 1e-300):
        raise NumericError(f"cost has non-real value {total:.3e}")
    return float(total.real)


def euclidean_gradient(theta, ctx: CostContext) -> np.ndarray:
    """Ambient-space gradient: sum_{k<j} 2 (Y R_j X R_k + Y R_k X R_j).

    Y = G Theta and X = Theta^H Y; the convention is that the directional
    derivative along V equals Re tr(V^H grad).
    """
    t = _as_array(theta)
    y = ctx.gram @ t
    x = t.conj().T @ y
    yr = [y @ r for r in ctx.correlations]
    xr = [x @ r for r in ctx.correlations]
    grad = np.zeros_like(t)
    k = len(yr)
    for i in range(k - 1):
        for j in range(i + 1, k):
            grad += 2 * (yr[j] @ xr[i] + yr[i] @ xr[j])
    return grad


def chdiag(m: np.ndarray) -> np.ndarray:
    """Diagonal matrix holding the (complex) diagonal of the argument."""
    m = np.asarray(m)
    if m.shape[0] != m.shape[1]:
        raise ValueError("chdiag needs a square matrix")
    return np.diag(np.diag(m))


def project_tangent(theta, z: np.ndarray) -> np.ndarray:
    """Pseudo-projection Z - Theta chdiag(Theta^H Z); zeroes diag(Theta^H Z)."""
    t = _as_array(theta)
    return z - t @ chdiag(t.conj().T @ z)


def _pr_coefficient(
    current_grad: np.ndarray, previous_grad: np.ndarray, transported_prev: np.ndarray
) -> float:
    denom = float(np.vdot(previous_grad, previous_grad).real)
    if denom <= 0.0:
        return 0.0
    num = float(np.vdot(current_grad - transported_prev, current_grad).real)
    return num / denom


def polak_ribiere(current_grad: np.ndarray, previous_grad: np.ndarray, theta) -> float:
    """Riemannian Polak-Ribiere coefficient; 0 when the previous gradient vanished."""
    transported = project_tangent(theta, previous_grad)
    return _pr_coefficient(current_grad, previous_grad, transported)


def nearest_unitary(m: np.ndarray) -> np.ndarray:
    """Polar factor of m, the closest unitary in Frobenius norm."""
    try:
        u, _, vh = np.linalg.svd(m)
    except np.linalg.LinAlgError as exc:
        raise NumericError("SVD failed in polar re-unitarization") from exc
    return u @ vh


def _snap_to_unitary(m: np.ndarray) -> np.ndarray:
    """Polar factor via Newton-Schulz when already near the manifold, SVD otherwise."""
    eye = np.eye(m.shape[0])
    y = m
    for _ in range(12):
        gap_mat = y.conj().T @ y - eye
        gap = np.linalg.norm(gap_mat)
        if gap <= 1e-12:
            return y
        if gap > 0.9:
            break
        y = y - 0.5 * (y @ gap_mat)
    return nearest_unitary(m)


def unitarity_gap(t: np.ndarray) -> float:
    return float(np.linalg.norm(t.conj().T @ t - np.eye(t.shape[0])))


def retract(theta, direction: np.ndarray, step: float, safeguard: bool = True):
    """Move along `direction` and map back near the unitary manifold.

    Theta' = (Theta + step * xi) (I + step^2 xi^H xi)^{-1/2}; the inverse square
    root comes from a Hermitian eigendecomposition. When the direction is not
    exactly tangent the result drifts off the manifold; with `safeguard` the
    polar factor replaces it once the drift exceeds 1e-8.
    """
    t = _as_array(theta)
    if step < 0:
        raise ValueError("retraction step must be >= 0")
    xi = np.asarray(direction)
    moved = t + step * xi
    m = np.eye(t.shape[0]) + step**2 * (xi.conj().T @ xi)
    try:
        eigvals, eigvecs = np.linalg.eigh(m)
    except np.linalg.LinAlgError as exc:
        raise NumericError("eigendecomposition failed in retraction") from exc
    inv_sqrt = (eigvecs / np.sqrt(eigvals)) @ eigvecs.conj().T
    out = moved @ inv_sqrt
    if safeguard and unitarity_gap(out) > _UNITARY_TOL:
        out = nearest_unitary(out)
    if isinstance(theta, RisMatrix):
        return RisMatrix(out, theta.architecture)
    return out


class _UnitaryOps:
    """Manifold primitives for the full unitary (beyond-diagonal) case."""

    def __init__(self, safeguard: bool):
        self.safeguard = safeguard

    @staticmethod
    def project(x, z):
        return project_tangent(x, z)

    def retract(self, x, direction, step):
        return retract(x, direction, step, safeguard=self.safeguard)

    def line_retraction(self, x, xi):
        """Raw retraction along a fixed direction: the eigenbasis of xi^H xi does
        not depend on the step, so one decomposition serves the whole backtracking."""
        vals, vecs = np.linalg.eigh(xi.conj().T @ xi)
        vals = np.clip(vals, 0.0, None)

        def at(delta: float) -> np.ndarray:
            inv_sqrt = (vecs / np.sqrt(1.0 + delta**2 * vals)) @ vecs.conj().T
            return (x + delta * xi) @ inv_sqrt

        return at

    def finalize(self, x):
        """Safeguard hook applied to accepted iterates only."""
        if self.safeguard and unitarity_gap(x) > _UNITARY_TOL:
            return _snap_to_unitary(x)
        return x

    @staticmethod
    def feasibility_gap(x):
        return unitarity_gap(x)


class _CircleOps:
    """Manifold primitives for unit-modulus diagonal entries (vectors length N)."""

    safeguard = False

    @staticmethod
    def project(x, z):
        return z - (z * x.conj()).real * x

    @staticmethod
    def retract(x, direction, step):
        moved = x + step * direction
        mag = np.abs(moved)
        out = np.where(mag > 0, moved / np.where(mag > 0, mag, 1.0), x)
        return out

    def line_retraction(self, x, xi):
        return lambda delta: self.retract(x, xi, delta)

    @staticmethod
    def finalize(x):
        return x

    @staticmethod
    def feasibility_gap(x):
        return float(np.max(np.abs(np.abs(x) - 1.0)))


def _inner(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.vdot(a, b).real)


def backtracking_step(theta, direction, ctx, settings: OptimizerSettings) -> float:
    """Armijo step along `direction` from `theta` for the RIS cost.

    Falls back to the negative Riemannian gradient if the given direction is
    not a descent direction; returns 0 when 50 halvings find no decrease.
    """
    t = _as_array(theta)
    xi = np.asarray(direction)
    if not np.any(xi):
        return 0.0
    grad = euclidean_gradient(t, ctx)
    if _inner(xi, grad) >= 0:
        xi = -project_tangent(t, grad)
    ops = _UnitaryOps(settings.safeguard_reunitarize)
    step, _, _ = _armijo(lambda x: cost(x, ctx), ops, t, xi, cost(t, ctx),
                         _inner(xi, grad), settings)
    return step


def _armijo(cost_fn, ops, x, xi, f0, slope, settings: OptimizerSettings):
    """Largest step delta0 * c^m meeting the sufficient-decrease condition.

    Rejected candidates are evaluated on the raw retraction; the accepted one is
    safeguarded and re-checked, so the returned iterate really satisfies the
    decrease condition on the manifold.
    """
    xi_norm = float(np.linalg.norm(xi))
    if xi_norm == 0.0 or slope >= 0.0:
        return 0.0, f0, x
    retraction = ops.line_retraction(x, xi)
    delta = settings.armijo_initial_step / xi_norm
    for _ in range(settings.armijo_max_halvings + 1):
        cand = retraction(delta)
        f_new = cost_fn(cand)
        if f_new <= f0 + settings.armijo_decrease * delta * slope:
            snapped = ops.finalize(cand)
            if snapped is not cand:
                f_new = cost_fn(snapped)
                if f_new > f0 + settings.armijo_decrease * delta * slope:
                    delta *= settings.armijo_contraction
                    continue
                cand = snapped
            return delta, f_new, cand
        delta *= settings.armijo_contraction
    return 0.0, f0, x


def riemannian_cg(cost_fn, egrad_fn, x0: np.ndarray, ops, settings: OptimizerSettings):
    """Projection/retraction conjugate gradient on the manifold described by `ops`.

    Works on any array shape (matrices for the unitary manifold, vectors for the
    product of circles). Returns the final point and the iteration trace; the
    cost sequence over accepted iterates is non-increasing by construction.
    """
    x = x0
    f = cost_fn(x)
    grad = egrad_fn(x)
    z = ops.project(x, grad)
    z_norm = float(np.linalg.norm(z))
    tol = settings.gradient_tolerance
    if tol is None:
        tol = 1e-6 * z_norm
    trace = OptimizerTrace()
    trace.costs.append(f)
    trace.gradient_norms.append(z_norm)
    trace.constraint_violations.append(ops.feasibility_gap(x))
    xi = -z
    for _ in range(settings.max_iterations):
        if z_norm <= tol:
            trace.converged = True
            break
        slope = _inner(xi, grad)
        if slope >= 0.0:
            xi = -z  # CG direction went uphill: restart with steepest descent
            slope = _inner(xi, grad)
            if slope >= 0.0:
                trace.converged = True
                break
        step, f, x_new = _armijo(cost_fn, ops, x, xi, f, slope, settings)
        if step == 0.0:
            trace.converged = True
            break
        x = x_new
        grad = egrad_fn(x)
        z_new = ops.project(x, grad)
        mu = _pr_coefficient(z_new, z, ops.project(x, z))
        xi = -z_new + mu * ops.project(x, xi)
        z = z_new
        z_norm = float(np.linalg.norm(z))
        trace.costs.append(f)
        trace.gradient_norms.append(z_norm)
        trace.step_sizes.append(step)
        trace.constraint_violations.append(ops.feasibility_gap(x))
    return x, trace


def optimize(
    ctx: CostContext,
    architecture: str = BEYOND_DIAGONAL,
    settings: OptimizerSettings | None = None,
) -> tuple[RisMatrix, OptimizerTrace]:
    """Minimize the cross-correlation cost from a random-phase diagonal start."""
    settings = settings or OptimizerSettings()
    if architecture == DIAGONAL:
        return optimize_diagonal(ctx, settings)
    if architecture != BEYOND_DIAGONAL:
        raise ValueError(f"unknown architecture {architecture!r}")
    rng = np.random.default_rng(settings.seed)
    theta0 = random_phase_diagonal(ctx.dimension, rng).theta
    ops = _UnitaryOps(settings.safeguard_reunitarize)
    final, trace = riemannian_cg(
        lambda t: cost(t, ctx), lambda t: euclidean_gradient(t, ctx), theta0, ops, settings
    )
    # the returned matrix always satisfies the unitary contract; when the safeguard
    # was off the per-iterate drift stays visible in trace.constraint_violations
    if unitarity_gap(final) > _UNITARY_TOL:
        final = nearest_unitary(final)
    return RisMatrix(final, BEYOND_DIAGONAL), trace


def optimize_diagonal(
    ctx: CostContext, settings: OptimizerSettings | None = None
) -> tuple[RisMatrix, OptimizerTrace]:
    """Same CG loop restricted to diagonal unit-modulus matrices."""
    settings = settings or OptimizerSettings()
    rng = np.random.default_rng(settings.seed)
    diag0 = np.exp(1j * rng.uniform(0.0, 2 * np.pi, size=ctx.dimension))

    def diag_cost(d):
        return cost(np.diag(d), ctx)

    def diag_egrad(d):
        return np.diag(euclidean_gradient(np.diag(d), ctx)).copy()

    final, trace = riemannian_cg(diag_cost, diag_egrad, diag0, _CircleOps(), settings)
    final = final / np.abs(final)  # scrub rounding before tagging as diagonal
    return RisMatrix(np.diag(final), DIAGONAL), trace
