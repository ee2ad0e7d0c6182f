"""Pointwise Minkowski and Randers norm kernel.

A Randers norm on R^{m+1} is F(y) = sqrt(<y,y>) + beta(y) for a scalar
product a = <.,.> and a one-form beta with ||beta||_a < 1.  This module
evaluates, at a single point of a manifold (so for one fixed (a, beta)):

* the fundamental tensor g_y (closed form, plus a finite-difference path for
  arbitrary Minkowski norms given as callables),
* the Cartan torsion, mean Cartan torsion, distortion and angular form,
* the F-unit normal to a hyperplane with beta tangent to it, and the
  g-dual solve that inverts g(u, .) = <U, .> on that hyperplane.

All formulas assume y != 0.  The closed forms are positively 0-homogeneous
in y where they should be, which the test suite checks.
"""

from __future__ import annotations

import math

import numpy as np

EPS = np.finfo(float).eps
# Steps for the Richardson-extrapolated (4th order) central stencils below,
# balancing h^4 truncation against eps/h^2 resp. eps/h^3 roundoff; the 0.3
# factor absorbs the large high-order directional derivatives of sqrt forms.
FD_STEP_HESSIAN = 0.3 * EPS ** (1.0 / 6.0)
FD_STEP_THIRD = 0.5 * EPS ** (1.0 / 7.0)

DEFAULT_MARGIN = 1e-6
BETA_N_TOL = 1e-12


class ConvexityError(ValueError):
    """||beta||_a too close to 1: the norm loses strong convexity."""


def _sym_check(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"scalar product must be a square matrix, got {a.shape}")
    if not np.allclose(a, a.T, atol=1e-12 * (1 + np.abs(a).max())):
        raise ValueError("scalar product must be symmetric")
    try:
        np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise ValueError("scalar product must be positive definite") from exc
    return a


class RandersNorm:
    """One Randers structure (a, beta) on R^{m+1}, with closed-form kernels."""

    def __init__(self, a, beta, margin: float = DEFAULT_MARGIN):
        self.a = _sym_check(a)
        self.beta = np.asarray(beta, dtype=float)
        if self.beta.shape != (self.a.shape[0],):
            raise ValueError("one-form dimension does not match the scalar product")
        self.dim = self.a.shape[0]
        self.ainv = np.linalg.inv(self.a)
        self.beta_sharp = self.ainv @ self.beta
        norm2 = float(self.beta @ self.beta_sharp)
        self.margin = float(margin)
        if norm2 >= (1.0 - self.margin) ** 2:
            raise ConvexityError(
                f"||beta||_a = {math.sqrt(max(norm2, 0.0)):.6g} exceeds 1 - margin")
        self.beta_norm = math.sqrt(max(norm2, 0.0))
        self.c = math.sqrt(1.0 - norm2)

    # -- basic evaluations -------------------------------------------------
    def alpha(self, y) -> float:
        y = np.asarray(y, dtype=float)
        return math.sqrt(float(y @ self.a @ y))

    def F(self, y) -> float:
        y = np.asarray(y, dtype=float)
        return self.alpha(y) + float(self.beta @ y)

    def _check_nonzero(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if not np.any(y):
            raise ValueError("the norm kernels are undefined at y = 0")
        return y

    # -- fundamental tensor ------------------------------------------------
    def fundamental_tensor(self, y) -> np.ndarray:
        """g_y as a symmetric positive definite matrix.

        g_y(u,v) = (F/alpha)<u,v> + beta(u)beta(v)
                   - alpha^-3 beta(y) <y,u><y,v>
                   + alpha^-1 (beta(u)<y,v> + beta(v)<y,u>).
        """
        y = self._check_nonzero(y)
        al = self.alpha(y)
        ay = self.a @ y
        b = self.beta
        by = float(b @ y)
        g = ((al + by) / al) * self.a
        g += np.outer(b, b)
        g -= (by / al ** 3) * np.outer(ay, ay)
        g += (np.outer(b, ay) + np.outer(ay, b)) / al
        try:
            np.linalg.cholesky(g)
        except np.linalg.LinAlgError as exc:
            raise ConvexityError("fundamental tensor is not positive definite") from exc
        return g

    def fundamental_det_residual(self, y) -> float:
        """det g_y - (F/alpha)^{m+2} det a (zero in exact arithmetic)."""
        y = self._check_nonzero(y)
        g = self.fundamental_tensor(y)
        ratio = self.F(y) / self.alpha(y)
        return float(np.linalg.det(g) - ratio ** (self.dim + 1) * np.linalg.det(self.a))

    # -- Cartan torsion family ----------------------------------------------
    def _alpha_hessian(self, y, u, v) -> float:
        al = self.alpha(y)
        ay = self.a @ y
        return float((u @ self.a @ v) / al - (ay @ u) * (ay @ v) / al ** 3)

    def _alpha_third(self, y, u, v, w) -> float:
        al = self.alpha(y)
        ay = self.a @ y
        yu, yv, yw = float(ay @ u), float(ay @ v), float(ay @ w)
        uv = float(u @ self.a @ v)
        uw = float(u @ self.a @ w)
        vw = float(v @ self.a @ w)
        return (-(uv * yw + uw * yv + vw * yu) / al ** 3
                + 3.0 * yu * yv * yw / al ** 5)

    def cartan(self, y, u, v, w) -> float:
        """Cartan torsion C_y(u,v,w) = (1/4) d^3[F^2] in directions u,v,w.

        For F = alpha + beta only the alpha*beta cross term contributes:
        C = (beta(y) d^3alpha + sym(beta(u) d^2alpha(v,w))) / 2.
        """
        y = self._check_nonzero(y)
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        w = np.asarray(w, dtype=float)
        b = self.beta
        return 0.5 * (float(b @ y) * self._alpha_third(y, u, v, w)
                      + float(b @ u) * self._alpha_hessian(y, v, w)
                      + float(b @ v) * self._alpha_hessian(y, u, w)
                      + float(b @ w) * self._alpha_hessian(y, u, v))

    def cartan_matrix(self, y, w) -> np.ndarray:
        """The bilinear form C_y(., ., w) as a symmetric matrix."""
        y = self._check_nonzero(y)
        w = np.asarray(w, dtype=float)
        al = self.alpha(y)
        ay = self.a @ y
        b = self.beta
        by = float(b @ y)
        hess = self.a / al - np.outer(ay, ay) / al ** 3
        aw = self.a @ w
        yw = float(ay @ w)
        third = (-(self.a * yw + np.outer(aw, ay) + np.outer(ay, aw)) / al ** 3
                 + 3.0 * yw * np.outer(ay, ay) / al ** 5)
        bw = float(b @ w)
        return 0.5 * (by * third + np.outer(b, aw / al - yw * ay / al ** 3)
                      + np.outer(aw / al - yw * ay / al ** 3, b) + bw * hess)

    def mean_cartan(self, y, v) -> float:
        """Mean Cartan torsion I_y(v) = (m+2)/(2F) (beta(v) - <v,y> beta(y)/alpha^2)."""
        y = self._check_nonzero(y)
        v = np.asarray(v, dtype=float)
        al = self.alpha(y)
        return ((self.dim + 1) / (2.0 * self.F(y))
                * (float(self.beta @ v) - float(v @ self.a @ y) * float(self.beta @ y) / al ** 2))

    def mean_cartan_trace(self, y, v) -> float:
        """Oracle: trace g^{ij} C_{ijv} of the Cartan tensor against g_y^{-1}."""
        g = self.fundamental_tensor(y)
        c_form = self.cartan_matrix(y, np.asarray(v, dtype=float))
        return float(np.trace(np.linalg.solve(g, c_form)))

    # -- distortion and volume ---------------------------------------------
    def sigma_F(self) -> float:
        """Busemann-Hausdorff density factor c^{m+2} sqrt(det a)."""
        return self.c ** (self.dim + 1) * math.sqrt(float(np.linalg.det(self.a)))

    def distortion(self, y) -> float:
        """tau(y) = (m+2) log sqrt((1 + beta(y)/alpha(y)) / c^2)."""
        y = self._check_nonzero(y)
        ratio = self.F(y) / self.alpha(y)
        return 0.5 * (self.dim + 1) * math.log(ratio / self.c ** 2)

    def distortion_definitional(self, y) -> float:
        """Oracle: log(sqrt(det g_y) / sigma_F)."""
        g = self.fundamental_tensor(y)
        return 0.5 * math.log(float(np.linalg.det(g))) - math.log(self.sigma_F())

    # -- angular form --------------------------------------------------------
    def angular_form(self, y, u, v) -> float:
        """h_y(u,v) = g_y(u,v) - F^{-2} g_y(y,u) g_y(y,v)."""
        y = self._check_nonzero(y)
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        g = self.fundamental_tensor(y)
        f2 = self.F(y) ** 2
        return float(u @ g @ v - (y @ g @ u) * (y @ g @ v) / f2)

    def angular_form_normal(self, n, u, v) -> float:
        """Closed form at the a-unit F-normal n: c^2(<u,v> - <u,n><v,n>)."""
        n = np.asarray(n, dtype=float)
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        an = self.a @ n
        return self.c ** 2 * (float(u @ self.a @ v) - float(an @ u) * float(an @ v))

    # -- normals and the g-dual solve ----------------------------------------
    def f_normal(self, N):
        """F-unit normal data (n, nu, c) for a hyperplane with a-unit normal N.

        Requires beta(N) = 0 (the one-form tangent to the hyperplane); inputs
        violating that are rejected because every downstream formula assumes
        it.  n = c N - beta^sharp has alpha(n) = 1, nu = n / c^2 has F(nu) = 1.
        """
        N = np.asarray(N, dtype=float)
        nrm = math.sqrt(float(N @ self.a @ N))
        if nrm == 0.0:
            raise ValueError("normal direction must be nonzero")
        N = N / nrm
        bN = float(self.beta @ N)
        if abs(bN) > BETA_N_TOL:
            raise ValueError(
                f"beta(N) = {bN:.3e} but the Randers normal formulas assume beta(N) = 0 "
                "(one-form tangent to the hyperplane); refusing to project silently")
        n = self.c * N - self.beta_sharp
        nu = n / self.c ** 2
        return n, nu, self.c

    def general_normal_roots(self, N) -> tuple[float, float]:
        """Both roots c_hat = beta(N) +/- sqrt(beta(N)^2 + c^2) of the normal
        equation n + beta^sharp = c_hat N, without assuming beta(N) = 0."""
        N = np.asarray(N, dtype=float)
        bN = float(self.beta @ N)
        disc = math.sqrt(bN ** 2 + self.c ** 2)
        return bN + disc, bN - disc

    def g_dual_solve(self, N, U, tol: float = 1e-10):
        """Solve g(u, v) = <U, v> for all v in the hyperplane W, with u, U in W.

        Closed form c^2 u = U + c^{-2} beta(U) beta^sharp; implies
        beta(u) = c^{-4} beta(U).
        """
        N = np.asarray(N, dtype=float)
        U = np.asarray(U, dtype=float)
        _, _, _ = self.f_normal(N)  # validates beta(N) = 0 and normalizes
        nrm = math.sqrt(float(N @ self.a @ N))
        N = N / nrm
        if abs(float(U @ self.a @ N)) > tol * (1.0 + float(np.abs(U).max())):
            raise ValueError("U is not tangent to the hyperplane W")
        bU = float(self.beta @ U)
        return (U + bU / self.c ** 2 * self.beta_sharp) / self.c ** 2


class MinkowskiNorm:
    """General Minkowski norm given by an evaluator y -> F(y).

    Only the numerical-Hessian path is available: fundamental tensor and
    Cartan torsion come from central finite differences of F^2.
    """

    def __init__(self, func, dim: int):
        self.func = func
        self.dim = int(dim)

    def F(self, y) -> float:
        return float(self.func(np.asarray(y, dtype=float)))

    def _f2(self, y) -> float:
        val = self.F(y)
        return val * val

    def _mixed_second(self, y, ei, ej, h) -> float:
        def cross(step):
            return (self._f2(y + step * (ei + ej)) - self._f2(y + step * (ei - ej))
                    - self._f2(y - step * (ei - ej)) + self._f2(y - step * (ei + ej))
                    ) / (4.0 * step * step)
        # Richardson extrapolation of the 2nd-order cross stencil.
        return (4.0 * cross(h) - cross(2.0 * h)) / 3.0

    def fundamental_tensor(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if not np.any(y):
            raise ValueError("the norm kernels are undefined at y = 0")
        h = FD_STEP_HESSIAN * max(1.0, float(np.linalg.norm(y)))
        g = np.empty((self.dim, self.dim))
        for i in range(self.dim):
            ei = np.zeros(self.dim)
            ei[i] = 1.0
            for j in range(i, self.dim):
                ej = np.zeros(self.dim)
                ej[j] = 1.0
                val = 0.5 * self._mixed_second(y, ei, ej, h)
                g[i, j] = val
                g[j, i] = val
        try:
            np.linalg.cholesky(g)
        except np.linalg.LinAlgError as exc:
            raise ConvexityError("fundamental tensor is not positive definite "
                                 "(M3 fails at this y)") from exc
        return g

    def cartan(self, y, u, v, w) -> float:
        """C_y(u,v,w) = (1/4) d^3 F^2(y + ru + sv + tw) by central differences."""
        y = np.asarray(y, dtype=float)
        if not np.any(y):
            raise ValueError("the norm kernels are undefined at y = 0")
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        w = np.asarray(w, dtype=float)
        h = FD_STEP_THIRD * max(1.0, float(np.linalg.norm(y)))

        def mixed_third(step):
            total = 0.0
            for su in (1.0, -1.0):
                for sv in (1.0, -1.0):
                    for sw in (1.0, -1.0):
                        total += su * sv * sw * self._f2(
                            y + step * (su * u + sv * v + sw * w))
            return total / (8.0 * step ** 3)

        return (4.0 * mixed_third(h) - mixed_third(2.0 * h)) / 3.0 / 4.0


def randers_from_general(norm: RandersNorm) -> MinkowskiNorm:
    """Wrap a Randers norm behind the general finite-difference interface."""
    return MinkowskiNorm(norm.F, norm.dim)
