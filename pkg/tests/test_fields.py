import math

import numpy as np
import pytest

from folia.charts import FoliatedChart, PRESETS, chart_from_definition, chart_from_preset
from folia.fields import (
    FieldSet,
    csharp_oracle,
    curvature_vector_oracle,
    deformation_operator,
    fd_field,
    shape_operator_g_oracle,
)

SQ91 = math.sqrt(0.91)


@pytest.fixture(scope="module")
def flat_sin():
    return chart_from_preset("flat-sin")


@pytest.fixture(scope="module")
def tilted():
    return chart_from_preset("tilted")


def fieldset(chart, n=6):
    return FieldSet(chart, chart.grid(n))


def test_flat_linear_everything_vanishes():
    fs = fieldset(chart_from_preset("flat-linear"))
    assert np.allclose(fs.N, [0, 0, 1])
    assert np.allclose(fs.c, SQ91)
    assert np.abs(fs.barA).max() == 0.0
    assert np.abs(fs.Zbar).max() == 0.0
    assert np.abs(fs.Csharp_nu).max() <= 1e-15
    assert np.abs(fs.A).max() <= 1e-15
    assert np.allclose(fs.n, [0.0, -0.3, SQ91])
    assert np.allclose(fs.nu, np.array([0.0, -0.3, SQ91]) / 0.91)


def test_unit_normal_direction_flat_sin(flat_sin):
    fs = fieldset(flat_sin)
    x1 = fs.pts[:, 0]
    expected = np.stack([-0.2 * np.cos(x1), np.zeros_like(x1), np.ones_like(x1)], axis=1)
    expected /= np.linalg.norm(expected, axis=1)[:, None]
    assert np.abs(fs.N - expected).max() <= 1e-12
    assert np.abs(fs.c - SQ91).max() <= 1e-15
    # beta(N) = 0 and ||N||_a = 1
    assert np.abs(np.einsum("pi,pi->p", fs.b, fs.N)).max() == 0.0
    assert np.abs(np.einsum("pi,pij,pj->p", fs.N, fs.a, fs.N) - 1.0).max() <= 1e-12


def test_flat_sin_spot_values(flat_sin):
    pts = np.array([[math.pi / 2, 0.0, 0.0]])
    fs = FieldSet(flat_sin, pts)
    assert np.allclose(fs.N[0], [0, 0, 1], atol=1e-14)
    frame_a = fs.frame_matrix(fs.barA)[0]
    assert np.allclose(sorted(np.diag(frame_a)), [-0.2, 0.0], atol=1e-13)
    assert np.abs(fs.Zbar[0]).max() <= 1e-14
    assert np.abs(fs.Csharp_nu[0]).max() <= 1e-14
    frame_ag = fs.frame_matrix(fs.Ag)[0]
    assert np.allclose(sorted(np.diag(frame_ag)), [-0.2 / SQ91, 0.0], atol=1e-13)


def test_warped_torus_closed_forms():
    fs = fieldset(chart_from_preset("warped-torus"), n=9)
    x1 = fs.pts[:, 0]
    w = 1 + 0.3 * np.cos(x1)
    wprime = -0.3 * np.sin(x1)
    # bar A(u) = -nabla_u N gives the single frame entry -w'/w
    frame_a = fs.frame_matrix(fs.barA)[:, 0, 0]
    assert np.abs(frame_a - (-wprime / w)).max() <= 1e-12
    assert np.abs(fs.Zbar).max() <= 1e-13
    assert np.abs(fs.c - math.sqrt(1 - 0.09)).max() <= 1e-14


def test_leaf_frame_orthonormal(tilted):
    fs = fieldset(tilted)
    e = fs.leaf_frame
    gram = np.einsum("pki,pkl,plj->pij", e, fs.a, e)
    assert np.abs(gram - np.eye(2)).max() <= 1e-12
    against_n = np.einsum("pki,pkl,pl->pi", e, fs.a, fs.N)
    assert np.abs(against_n).max() <= 1e-12


def test_deformation_tensor_constant_form_vanishes(flat_sin):
    fs = fieldset(flat_sin)
    assert np.abs(fs.def_bsharp).max() == 0.0  # Berwald


def test_deformation_tensor_sinusoidal_example():
    chart = FoliatedChart({"dimension": 3, "f": "x1", "beta_2": "0.3*sin(x3)"})
    fs = fieldset(chart)
    x3 = fs.pts[:, 2]
    expected = np.zeros_like(fs.def_bsharp)
    expected[:, 1, 2] = 0.15 * np.cos(x3)
    expected[:, 2, 1] = 0.15 * np.cos(x3)
    assert np.abs(fs.def_bsharp - expected).max() <= 1e-13


def test_deformation_trace_identity(tilted):
    # tr Def^T_{beta^sharp} = div beta^sharp + beta(bar Z)
    fs = fieldset(tilted)
    def_proj = np.einsum("pij,pjk,pkl->pil", fs.proj, fs.def_bsharp, fs.proj)
    lhs = np.einsum("pii->p", def_proj)
    div = np.einsum("pii->p", fs.covBs)
    rhs = div + fs.beta_Zbar
    assert np.abs(lhs - rhs).max() <= 1e-8


def test_shape_operator_riemannian_reduction():
    chart = chart_from_definition({**PRESETS["flat-sin"], "beta_2": "0"})
    fs = fieldset(chart)
    assert np.abs(fs.Ag - fs.barA).max() <= 1e-13
    assert np.abs(fs.Z - fs.Zbar).max() <= 1e-13
    assert np.abs(fs.Csharp_nu).max() <= 1e-15


def test_shape_operator_paths_agree_on_berwald_chart(flat_sin):
    fs = fieldset(flat_sin, n=8)
    general = fs.shape_operator_g("general")
    const_c = fs.shape_operator_g("const-c")
    berwald = fs.shape_operator_g("berwald")
    assert np.abs(general - berwald).max() <= 1e-10
    assert np.abs(general - const_c).max() <= 1e-10


def test_shape_operator_const_c_path_on_warped_torus():
    fs = fieldset(chart_from_preset("warped-torus"), n=9)
    assert np.abs(fs.shape_operator_g("general")
                  - fs.shape_operator_g("const-c")).max() <= 1e-10


def test_shape_operator_matches_levi_civita_oracle(tilted):
    pts = tilted.grid(6)
    fs = FieldSet(tilted, pts)
    oracle = shape_operator_g_oracle(tilted, pts)
    assert np.abs(fs.Ag - oracle).max() <= 1e-5
    fs_sin = FieldSet(chart_from_preset("flat-sin"), pts)
    oracle_sin = shape_operator_g_oracle(chart_from_preset("flat-sin"), pts)
    assert np.abs(fs_sin.Ag - oracle_sin).max() <= 1e-5


def test_shape_operator_g_self_adjoint(tilted):
    fs = fieldset(tilted)
    bform = np.einsum("pki,pkl,plm,pmj->pij", fs.leaf_frame, fs.g, fs.Ag, fs.leaf_frame)
    assert np.abs(bform - bform.transpose(0, 2, 1)).max() <= 1e-10


def test_csharp_definitional_oracle(tilted):
    pts = tilted.grid(6)
    fs = FieldSet(tilted, pts)
    oracle = csharp_oracle(tilted, pts)
    assert np.abs(fs.Csharp_nu - oracle).max() <= 1e-5
    cform = np.einsum("pki,pkl,plm,pmj->pij", fs.leaf_frame, fs.g, fs.Csharp_nu,
                      fs.leaf_frame)
    assert np.abs(cform - cform.transpose(0, 2, 1)).max() <= 1e-10


def test_csharp_vanishes_in_5d_parallel_chart():
    fs = FieldSet(chart_from_preset("flat-linear-5d"),
                  chart_from_preset("flat-linear-5d").grid(3))
    assert np.abs(fs.Csharp_nu).max() <= 1e-15
    assert np.abs(fs.Zbar).max() == 0.0


def test_curvature_vector_formula_and_oracle(flat_sin, tilted):
    fs = fieldset(flat_sin, n=8)
    # constant c: Z = c^-2 bar Z + c^-4 beta(bar Z) beta^sharp
    reduced = (fs.Zbar / fs.c2[:, None]
               + (fs.beta_Zbar / fs.c2 ** 2)[:, None] * fs.bsharp)
    assert np.abs(fs.Z - reduced).max() <= 1e-13
    pts = tilted.grid(6)
    fs_t = FieldSet(tilted, pts)
    assert np.abs(fs_t.Z - curvature_vector_oracle(tilted, pts)).max() <= 1e-5
    # Z is tangent for g
    gz = np.einsum("pij,pi,pj->p", fs_t.g, fs_t.Z, fs_t.nu)
    assert np.abs(gz).max() <= 1e-10


def test_finsler_shape_operator_trace_identity(tilted):
    fs = fieldset(tilted)
    lhs = np.einsum("pii->p", fs.A) - np.einsum("pii->p", fs.Ag)
    rhs = fs.mean_cartan_nu(fs.Z)
    assert np.abs(lhs - rhs).max() <= 1e-8


def test_volume_densities(flat_sin):
    # m+1 = 3: the Busemann-Hausdorff factor is c^{m+2} = c^4 = 0.91^2
    fs = fieldset(flat_sin)
    assert np.abs(fs.dens_F - 0.91 ** 2).max() <= 1e-14
    assert np.abs(fs.dens_g / fs.dens_a - fs.c ** 4).max() <= 1e-12
    assert np.abs(fs.dens_F - fs.dens_g).max() <= 1e-12


def test_g_orthogonality_of_normal(tilted):
    fs = fieldset(tilted, n=8)
    gn = np.einsum("pij,pj->pi", fs.g, fs.n)
    inner = np.einsum("pi,pij->pj", gn, fs.leaf_frame)
    assert np.abs(inner).max() <= 1e-12
    # g(n,n) = c^4
    assert np.abs(np.einsum("pi,pi->p", gn, fs.n) - fs.c ** 4).max() <= 1e-12


def test_nabla_zbar_symmetry(tilted):
    # <nabla_u bar Z, v> = <nabla_v bar Z, u> on leaf directions
    pts = tilted.grid(5)
    fs = FieldSet(tilted, pts)
    dzbar = fd_field(tilted, pts, lambda s: s.Zbar)
    cov = dzbar + np.einsum("pikj,pj->pik", fs.gamma_a, fs.Zbar)
    form = np.einsum("pij,pjk->pik", fs.a, cov)  # <nabla_k bar Z, .>_i
    restricted = np.einsum("pki,pkl,plj->pij", fs.leaf_frame, form.transpose(0, 2, 1),
                           fs.leaf_frame)
    assert np.abs(restricted - restricted.transpose(0, 2, 1)).max() <= 1e-6


def test_berwald_detection_fields(flat_sin):
    assert np.abs(fieldset(flat_sin).covBs).max() == 0.0
    fs_wt = fieldset(chart_from_preset("warped-torus"), n=9)
    assert np.abs(fs_wt.covBs).max() > 1e-2


def test_distortion_of_nu_vanishes(tilted):
    fs = fieldset(tilted)
    assert np.abs(fs.distortion_nu).max() <= 1e-12


def test_deformation_operator_for_g(tilted):
    # Def^g_Z is symmetric w.r.t. g by construction
    pts = tilted.grid(4)
    fs = FieldSet(tilted, pts)
    dz = fd_field(tilted, pts, lambda s: s.Z)
    dop = deformation_operator(fs, fs.Z, dz, metric="g")
    gd = np.einsum("pij,pjk->pik", fs.g, dop)
    assert np.abs(gd - gd.transpose(0, 2, 1)).max() <= 1e-9
