"""Field-level extrinsic geometry on foliated charts.

``FieldSet`` evaluates, lazily and vectorized over a batch of points, the
whole chain from the chart data (a, beta, f) to the Finsler shape operator:

    N (a-unit normal) -> c, n = cN - beta^sharp, nu = n/c^2
    bar A = -nabla^a N,  bar Z = nabla^a_N N,  Def_{beta^sharp}
    A^g (shape operator of g = g_n, from the closed conversion formula)
    C-sharp (Cartan dual along nabla_nu nu),  Z = nabla_nu nu,  A = A^g + C^sharp_nu

Operators are stored as full (dim x dim) matrices acting on chart coordinates
that kill the normal direction and map into the leaf distribution, so their
sigma_k agree with the leaf-restricted ones.  Independent oracles (the
Levi-Civita connection of the explicit g field, with finite-difference metric
derivatives) live alongside for cross-checks.
"""

from __future__ import annotations

from functools import cached_property

import numpy as np

from .charts import FoliatedChart

FD_STEP = 2e-3  # 4th-order stencil on analytically evaluated fields


def _outer(u, v):
    return np.einsum("pi,pj->pij", u, v)


def _apply(op, v):
    return np.einsum("pij,pj->pi", op, v)


def _mm(x, y):
    return np.einsum("pij,pjk->pik", x, y)


class FieldSet:
    """All derived geometric fields of one chart at one batch of points."""

    def __init__(self, chart: FoliatedChart, pts: np.ndarray):
        self.chart = chart
        self.pts = np.asarray(pts, dtype=float)
        self.npts = self.pts.shape[0]
        self.dim = chart.dim

    # -- primary fields ------------------------------------------------------
    @cached_property
    def a(self):
        return self.chart.eval_a(self.pts)

    @cached_property
    def ainv(self):
        return np.linalg.inv(self.a)

    @cached_property
    def da(self):
        return self.chart.eval_da(self.pts)

    @cached_property
    def dainv(self):
        return -np.einsum("pim,pmnk,pnj->pijk", self.ainv, self.da, self.ainv)

    @cached_property
    def b(self):
        return self.chart.eval_beta(self.pts)

    @cached_property
    def db(self):
        return self.chart.eval_dbeta(self.pts)

    @cached_property
    def fgrad(self):
        return self.chart.eval_df(self.pts)

    @cached_property
    def fhess(self):
        return self.chart.eval_d2f(self.pts)

    @cached_property
    def gamma_a(self):
        """Christoffel symbols of the chart metric, gamma[p,i,j,k] = Gamma^i_{jk}."""
        return christoffel_from(self.ainv, self.da)

    # -- unit normal and its derivative ---------------------------------------
    @cached_property
    def W(self):
        return _apply(self.ainv, self.fgrad)

    @cached_property
    def Wnorm(self):
        return np.sqrt(np.einsum("pi,pi->p", self.W, self.fgrad))

    @cached_property
    def N(self):
        return self.W / self.Wnorm[:, None]

    @cached_property
    def dW(self):
        return (np.einsum("pijk,pj->pik", self.dainv, self.fgrad)
                + np.einsum("pij,pjk->pik", self.ainv, self.fhess))

    @cached_property
    def dN(self):
        dwn = (np.einsum("pik,pi->pk", self.dW, self.fgrad)
               + np.einsum("pi,pik->pk", self.W, self.fhess)) / (2.0 * self.Wnorm[:, None])
        return (self.dW / self.Wnorm[:, None, None]
                - np.einsum("pi,pk->pik", self.W, dwn) / self.Wnorm[:, None, None] ** 2)

    @cached_property
    def covN(self):
        """nabla^a N as a matrix field, covN[p,i,k] = (nabla_k N)^i."""
        return self.dN + np.einsum("pikj,pj->pik", self.gamma_a, self.N)

    @cached_property
    def aN(self):
        return _apply(self.a, self.N)

    @cached_property
    def proj(self):
        """a-orthogonal projector onto the leaf distribution."""
        eye = np.broadcast_to(np.eye(self.dim), (self.npts, self.dim, self.dim))
        return eye - _outer(self.N, self.aN)

    @cached_property
    def Zbar(self):
        return _apply(self.covN, self.N)

    @cached_property
    def barA(self):
        """Shape operator of the leaves for the metric a, bar A(u) = -nabla_u N."""
        return -_mm(self.covN, self.proj)

    # -- one-form derived fields ----------------------------------------------
    @cached_property
    def bsharp(self):
        return _apply(self.ainv, self.b)

    @cached_property
    def dbsharp(self):
        return (np.einsum("pijk,pj->pik", self.dainv, self.b)
                + np.einsum("pij,pjk->pik", self.ainv, self.db))

    @cached_property
    def covBs(self):
        return self.dbsharp + np.einsum("pikj,pj->pik", self.gamma_a, self.bsharp)

    @cached_property
    def def_bsharp(self):
        """Deformation tensor of beta^sharp as a (1,1)-tensor for a."""
        transpose = np.einsum("pij,pkj,pkl->pil", self.ainv, self.covBs, self.a)
        return 0.5 * (self.covBs + transpose)

    @cached_property
    def c2(self):
        return 1.0 - np.einsum("pi,pi->p", self.b, self.bsharp)

    @cached_property
    def c(self):
        return np.sqrt(self.c2)

    @cached_property
    def dc(self):
        dc2 = -(np.einsum("pik,pi->pk", self.db, self.bsharp)
                + np.einsum("pi,pik->pk", self.b, self.dbsharp))
        return dc2 / (2.0 * self.c[:, None])

    @cached_property
    def gradc(self):
        return _apply(self.ainv, self.dc)

    @cached_property
    def gradc_T(self):
        return _apply(self.proj, self.gradc)

    @cached_property
    def n(self):
        return self.c[:, None] * self.N - self.bsharp

    @cached_property
    def dn(self):
        return (np.einsum("pk,pi->pik", self.dc, self.N)
                + self.c[:, None, None] * self.dN - self.dbsharp)

    @cached_property
    def nu(self):
        return self.n / self.c2[:, None]

    @cached_property
    def dnu(self):
        return (self.dn / self.c2[:, None, None]
                - 2.0 * np.einsum("pi,pk->pik", self.n, self.dc)
                / (self.c2 * self.c)[:, None, None])

    @cached_property
    def n_of_c(self):
        """Directional derivative of c along n."""
        return np.einsum("pk,pk->p", self.dc, self.n)

    @cached_property
    def bsharp_of_c(self):
        return np.einsum("pk,pk->p", self.dc, self.bsharp)

    @cached_property
    def beta_Zbar(self):
        return np.einsum("pi,pi->p", self.b, self.Zbar)

    @cached_property
    def Abs(self):
        return _apply(self.barA, self.bsharp)

    @cached_property
    def Abs_perp(self):
        """Projection of bar A(beta^sharp) orthogonally to beta^sharp (0 at beta = 0)."""
        bs_norm2 = 1.0 - self.c2
        inner = np.einsum("pi,pij,pj->p", self.Abs, self.a, self.bsharp)
        safe = np.where(bs_norm2 > 1e-14, bs_norm2, 1.0)
        coeff = np.where(bs_norm2 > 1e-14, inner / safe, 0.0)
        return self.Abs - coeff[:, None] * self.bsharp

    # -- shape operator of g ----------------------------------------------------
    @cached_property
    def covBs_X_T(self):
        """Tangential part of nabla_{N - beta^sharp/c} beta^sharp."""
        x = self.N - self.bsharp / self.c[:, None]
        return _apply(self.proj, _apply(self.covBs, x))

    @cached_property
    def def_bs_bs_T(self):
        """Tangential part of Def_{beta^sharp}(beta^sharp)."""
        return _apply(self.proj, _apply(self.def_bsharp, self.bsharp))

    @cached_property
    def U1(self):
        c = self.c[:, None]
        inside = (self.n_of_c[:, None] * self.bsharp
                  - 2.0 / c * self.def_bs_bs_T
                  - self.covBs_X_T
                  + c * self.Zbar
                  + (self.c * self.beta_Zbar)[:, None] * self.bsharp
                  - self.Abs_perp)
        return -0.5 / self.c2[:, None] * inside

    @cached_property
    def U2(self):
        return 0.5 * (self.covBs_X_T - self.c[:, None] * self.Zbar - self.Abs_perp)

    def shape_operator_g(self, path: str = "general"):
        """A^g(u) = -nabla^g_u nu from the closed conversion formula.

        ``path`` selects the general formula, the constant-||beta|| special
        case, or the Berwald fast path; on charts satisfying the respective
        hypotheses all paths agree.
        """
        c = self.c[:, None]
        cc = self.c[:, None, None]
        if path == "general":
            c_ag = (self.barA
                    - (self.n_of_c / self.c2)[:, None, None] * self.proj
                    + _mm(self.proj, _mm(self.def_bsharp, self.proj)) / cc
                    + _outer(self.bsharp, _apply(self.a, self.U1))
                    + _outer(self.U2, self.b))
        elif path == "const-c":
            u2 = 0.5 * (self.covBs_X_T - c * self.Zbar - self.Abs_perp)
            inner = (2.0 / c * self.def_bs_bs_T + self.covBs_X_T + self.Abs_perp
                     - c * self.Zbar - (self.c * self.beta_Zbar)[:, None] * self.bsharp)
            c_ag = (self.barA
                    + _mm(self.proj, _mm(self.def_bsharp, self.proj)) / cc
                    + _outer(u2, self.b)
                    + 0.5 / self.c2[:, None, None] * _outer(self.bsharp, _apply(self.a, inner)))
        elif path == "berwald":
            inner = (self.Abs_perp - c * self.Zbar
                     - (self.c * self.beta_Zbar)[:, None] * self.bsharp)
            c_ag = (self.barA
                    - 0.5 * _outer(self.Abs_perp + c * self.Zbar, self.b)
                    + 0.5 / self.c2[:, None, None] * _outer(self.bsharp, _apply(self.a, inner)))
        else:
            raise ValueError(f"unknown shape-operator path {path!r}")
        return c_ag / cc

    @cached_property
    def Ag(self):
        return self.shape_operator_g("general")

    # -- Cartan dual and curvature vector ----------------------------------------
    @cached_property
    def Cbar(self):
        """a-dual of the Cartan form C_n(., ., Z) on tangent vectors.

        For tangent u, v the Randers Cartan torsion at y = n contracts to
        2 C_n(u,v,Z) = c^2 (beta(Z)(<u,v> - 3 beta(u)beta(v))
                            + beta(v)<Z,u> + beta(u)<Z,v>);
        for constant ||beta|| this reduces to the Sym(beta otimes bar Z) +
        c^{-2} beta(bar Z)(I - beta otimes beta^sharp) combination.
        """
        eye = np.broadcast_to(np.eye(self.dim), (self.npts, self.dim, self.dim))
        beta_z = np.einsum("pi,pi->p", self.b, self.Z)
        mat = (beta_z[:, None, None] * (eye - 3.0 * _outer(self.bsharp, self.b))
               + _outer(self.Z, self.b)
               + _outer(self.bsharp, _apply(self.a, self.Z)))
        return 0.5 * self.c2[:, None, None] * _mm(mat, self.proj)

    @cached_property
    def Csharp_nu(self):
        """g-dual of C_nu(., ., nabla_nu nu); the correction A - A^g.

        Solving g(C^sharp(u), v) = C_nu(u, v, Z) = c^2 <Cbar(u), v> on the
        leaf distribution gives C^sharp_nu = Cbar + c^{-2}(beta o Cbar)
        otimes beta^sharp.
        """
        beta_cbar = np.einsum("pj,pji->pi", self.b, self.Cbar)
        return self.Cbar + _outer(self.bsharp, beta_cbar) / self.c2[:, None, None]

    @cached_property
    def Csharp_n(self):
        return self.c2[:, None, None] * self.Csharp_nu

    @cached_property
    def Z(self):
        """Curvature vector Z = nabla^g_nu nu from the closed formula."""
        beta_term = self.beta_Zbar - np.einsum("pi,pi->p", self.b, self.gradc_T) / self.c
        return (self.Zbar / self.c2[:, None]
                - self.gradc_T / (self.c2 * self.c)[:, None]
                + (beta_term / self.c2 ** 2)[:, None] * self.bsharp)

    @cached_property
    def A(self):
        """Finsler shape operator A = A^g + C^sharp_nu."""
        return self.Ag + self.Csharp_nu

    # -- mean Cartan torsion along nu ---------------------------------------------
    def mean_cartan_nu(self, v):
        """I_nu(v) for a batch of vectors v (F(nu) = 1 by construction)."""
        alpha2 = np.einsum("pi,pij,pj->p", self.nu, self.a, self.nu)
        b_nu = np.einsum("pi,pi->p", self.b, self.nu)
        va_nu = np.einsum("pi,pij,pj->p", v, self.a, self.nu)
        return 0.5 * (self.dim + 1) * (np.einsum("pi,pi->p", self.b, v)
                                       - va_nu * b_nu / alpha2)

    @cached_property
    def distortion_nu(self):
        """tau(nu); identically zero for beta(N) = 0 Randers structures."""
        alpha = np.sqrt(np.einsum("pi,pij,pj->p", self.nu, self.a, self.nu))
        f_nu = alpha + np.einsum("pi,pi->p", self.b, self.nu)
        return 0.5 * (self.dim + 1) * np.log(f_nu / (alpha * self.c2))

    # -- the metric g = g_n and its connection ---------------------------------------
    @cached_property
    def g(self):
        an = _apply(self.a, self.n)
        alpha = np.sqrt(np.einsum("pi,pi->p", self.n, an))
        s = np.einsum("pi,pi->p", self.b, self.n)
        r = (alpha + s) / alpha
        return (r[:, None, None] * self.a + _outer(self.b, self.b)
                - (s / alpha ** 3)[:, None, None] * _outer(an, an)
                + (_outer(self.b, an) + _outer(an, self.b)) / alpha[:, None, None])

    @cached_property
    def dg(self):
        a, da, b, db, n, dn = self.a, self.da, self.b, self.db, self.n, self.dn
        m = _apply(a, n)
        alpha = np.sqrt(np.einsum("pi,pi->p", n, m))
        s = np.einsum("pi,pi->p", b, n)
        dm = np.einsum("pijk,pj->pik", da, n) + np.einsum("pij,pjk->pik", a, dn)
        dalpha = (np.einsum("pi,pik->pk", m, dn)
                  + 0.5 * np.einsum("pi,pijk,pj->pk", n, da, n)) / alpha[:, None]
        ds = np.einsum("pik,pi->pk", db, n) + np.einsum("pi,pik->pk", b, dn)
        dr = ds / alpha[:, None] - (s / alpha ** 2)[:, None] * dalpha

        out = np.einsum("pk,pij->pijk", dr, a) + ((alpha + s) / alpha)[:, None, None, None] * da
        out += np.einsum("pik,pj->pijk", db, b) + np.einsum("pi,pjk->pijk", b, db)
        coeff = ds / alpha[:, None] ** 3 - 3.0 * (s / alpha ** 4)[:, None] * dalpha
        out -= np.einsum("pk,pij->pijk", coeff, _outer(m, m))
        out -= (s / alpha ** 3)[:, None, None, None] * (
            np.einsum("pik,pj->pijk", dm, m) + np.einsum("pi,pjk->pijk", m, dm))
        out += (np.einsum("pik,pj->pijk", db, m) + np.einsum("pi,pjk->pijk", b, dm)
                + np.einsum("pik,pj->pijk", dm, b) + np.einsum("pi,pjk->pijk", m, db)
                ) / alpha[:, None, None, None]
        out -= np.einsum("pk,pij->pijk", dalpha / alpha[:, None] ** 2,
                         _outer(self.b, m) + _outer(m, self.b))
        return out

    @cached_property
    def ginv(self):
        return np.linalg.inv(self.g)

    @cached_property
    def gamma_g(self):
        return christoffel_from(self.ginv, self.dg)

    @cached_property
    def proj_g(self):
        """g-orthogonal projector onto the leaves (same subspace as proj)."""
        gnu = _apply(self.g, self.nu)
        eye = np.broadcast_to(np.eye(self.dim), (self.npts, self.dim, self.dim))
        return eye - _outer(self.nu, gnu)

    # -- volume densities -----------------------------------------------------------
    @cached_property
    def dens_a(self):
        return np.sqrt(np.linalg.det(self.a))

    @cached_property
    def dens_g(self):
        return np.sqrt(np.linalg.det(self.g))

    @cached_property
    def dens_F(self):
        return self.c ** (self.dim + 1) * self.dens_a

    # -- leaf frames ------------------------------------------------------------------
    @cached_property
    def leaf_frame(self):
        """a-orthonormal tangent frame (P, dim, m), deterministic pivoting.

        Coordinate seeds are taken in increasing order of |<e_coord, N>_a|
        (the most normal-aligned coordinate is dropped), then Gram-Schmidt
        orthonormalized against N.
        """
        d, m = self.dim, self.dim - 1
        order = np.argsort(np.abs(self.aN), axis=1, kind="stable")
        frame = np.zeros((self.npts, d, m))
        basis = [self.N]
        for j in range(m):
            seed = np.zeros((self.npts, d))
            np.put_along_axis(seed, order[:, j][:, None], 1.0, axis=1)
            v = seed
            for w in basis:
                v = v - np.einsum("pi,pij,pj->p", v, self.a, w)[:, None] * w
            nrm = np.sqrt(np.einsum("pi,pij,pj->p", v, self.a, v))
            v = v / nrm[:, None]
            basis.append(v)
            frame[:, :, j] = v
        return frame

    def frame_matrix(self, op):
        """Leaf-frame matrix [<e_i, op(e_j)>_a] of a full-coordinates operator."""
        e = self.leaf_frame
        return np.einsum("pki,pkl,plm,pmj->pij", e, self.a, op, e)


def christoffel_from(ginv, dg):
    """Christoffel symbols Gamma^i_{jk} from an inverse metric and dg[p,i,j,k]=d_k g_ij."""
    dj_glk = np.einsum("plkj->pljk", dg)
    dk_glj = dg
    dl_gjk = np.einsum("pjkl->pljk", dg)
    return 0.5 * np.einsum("pil,pljk->pijk", ginv, dj_glk + dk_glj - dl_gjk)


def fd_field(chart: FoliatedChart, pts: np.ndarray, getter, h: float = FD_STEP):
    """4th-order central finite difference of a derived field along each axis.

    ``getter`` maps a FieldSet to an array of shape (P, ...); the result has
    one extra trailing axis for the coordinate direction.
    """
    pts = np.asarray(pts, dtype=float)
    slices = []
    for axis in range(chart.dim):
        e = np.zeros(chart.dim)
        e[axis] = 1.0
        vals = [getter(FieldSet(chart, pts + step * h * e)) for step in (2, 1, -1, -2)]
        slices.append((-vals[0] + 8.0 * vals[1] - 8.0 * vals[2] + vals[3]) / (12.0 * h))
    return np.stack(slices, axis=-1)


def g_field_fd_christoffel(chart: FoliatedChart, pts: np.ndarray, h: float = FD_STEP):
    """Christoffel symbols of g with metric derivatives by finite differences.

    This is the independent numeric Levi-Civita oracle: only the pointwise
    g-evaluator is shared with the production path.
    """
    fs = FieldSet(chart, pts)
    dg = fd_field(chart, pts, lambda s: s.g, h=h)
    return christoffel_from(fs.ginv, dg)


def shape_operator_g_oracle(chart: FoliatedChart, pts: np.ndarray, h: float = FD_STEP):
    """-nabla^g_u nu with the finite-difference connection of the explicit g field."""
    fs = FieldSet(chart, pts)
    gamma = g_field_fd_christoffel(chart, pts, h=h)
    cov_nu = fs.dnu + np.einsum("pikj,pj->pik", gamma, fs.nu)
    return -_mm(cov_nu, fs.proj)


def curvature_vector_oracle(chart: FoliatedChart, pts: np.ndarray, h: float = FD_STEP):
    """Z = nabla^g_nu nu with the finite-difference connection."""
    fs = FieldSet(chart, pts)
    gamma = g_field_fd_christoffel(chart, pts, h=h)
    cov_nu = fs.dnu + np.einsum("pikj,pj->pik", gamma, fs.nu)
    return _apply(cov_nu, fs.nu)


def csharp_oracle(chart: FoliatedChart, pts: np.ndarray, h: float = FD_STEP):
    """Definitional C^sharp_nu: g-dualize C_nu(.,.,Z) with Z from the oracle."""
    fs = FieldSet(chart, pts)
    z = curvature_vector_oracle(chart, pts, h=h)
    # closed-form Cartan bilinear form C_y(.,.,w) of the pointwise Randers norm
    y = fs.nu
    a, b = fs.a, fs.b
    ay = _apply(a, y)
    alpha = np.sqrt(np.einsum("pi,pi->p", y, ay))
    al3, al5 = alpha ** 3, alpha ** 5
    aw = _apply(a, z)
    yw = np.einsum("pi,pi->p", ay, z)
    by = np.einsum("pi,pi->p", b, y)
    bw = np.einsum("pi,pi->p", b, z)
    hess = a / alpha[:, None, None] - _outer(ay, ay) / al3[:, None, None]
    third = (-(a * yw[:, None, None] + _outer(aw, ay) + _outer(ay, aw)) / al3[:, None, None]
             + 3.0 * (yw / al5)[:, None, None] * _outer(ay, ay))
    vec = aw / alpha[:, None] - (yw / al3)[:, None] * ay
    c_form = 0.5 * (by[:, None, None] * third + _outer(b, vec) + _outer(vec, b)
                    + bw[:, None, None] * hess)
    csharp = np.einsum("pij,pjk->pik", fs.ginv, c_form)
    return _mm(_mm(fs.proj_g, csharp), fs.proj)


def deformation_operator(fs: FieldSet, u: np.ndarray, du: np.ndarray,
                         metric: str = "a") -> np.ndarray:
    """Deformation tensor of the field u as a (1,1)-tensor for a or g."""
    if metric == "a":
        gamma, met, metinv = fs.gamma_a, fs.a, fs.ainv
    else:
        gamma, met, metinv = fs.gamma_g, fs.g, fs.ginv
    cov = du + np.einsum("pikj,pj->pik", gamma, u)
    transpose = np.einsum("pij,pkj,pkl->pil", metinv, cov, met)
    return 0.5 * (cov + transpose)
