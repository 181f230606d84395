import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from monostencil.exceptions import InvalidInputError, OutOfRangeError
from monostencil.feasibility import (
    asymmetric_margin,
    brute_force_margin,
    explicit_family,
    feasibility_threshold,
    is_feasible,
    margin_sweep,
    monotonicity_margin,
)
from monostencil.stencil import (
    AsymmetricCellGeometry,
    CellGeometry,
    FreeParameters,
    moment_residuals,
    solve_stencil,
    solve_stencil_asymmetric,
)

from oracles import closed_form_normalized_margin, linprog_margin


def lp_oracle(geom):
    def betas(x):
        return solve_stencil(geom, FreeParameters(*x)).betas

    return linprog_margin(betas, scale=1.0 / (geom.h * geom.H))[0]


SWEEP = [0.1, 0.25, 0.5, 0.8, 1.0, 1.5, 1.9, 2.5, 4.0, 10.0]


def test_margin_isotropic():
    rep = monotonicity_margin(CellGeometry(1, 1))
    assert rep.margin == pytest.approx(1 / 6, rel=1e-12)
    assert rep.feasible
    expected = [1 / 6, 1 / 6, 1 / 6, 1 / 6, 2 / 3, 1 / 6, 1 / 6, 2 / 3]
    assert np.allclose(rep.stencil.betas, expected, atol=1e-14)
    assert rep.binding_indices == (1, 2, 3, 4, 6, 7)
    assert brute_force_margin(CellGeometry(1, 1)) <= rep.margin + 1e-15


def test_margin_boundary_case():
    rep = monotonicity_margin(CellGeometry(2, 1))
    assert rep.margin == pytest.approx(0.0, abs=1e-14)
    assert rep.feasible
    assert brute_force_margin(CellGeometry(2, 1), refine=20) <= 1e-15


def test_margin_anisotropic_closed_form():
    rep = monotonicity_margin(CellGeometry(4, 1))
    assert rep.margin == pytest.approx(-1 / 48, rel=1e-12)
    assert lp_oracle(CellGeometry(4, 1)) == pytest.approx(-1 / 48, rel=1e-9)
    assert brute_force_margin(CellGeometry(4, 1)) < 0
    assert not rep.feasible


@pytest.mark.parametrize("ratio", SWEEP + [0.01, 100.0])
def test_margin_matches_linprog_and_closed_form(ratio):
    geom = CellGeometry(ratio, 1.0)
    rep = monotonicity_margin(geom)
    scale = 1.0 / (geom.h * geom.H)
    assert rep.margin == pytest.approx(lp_oracle(geom), abs=1e-9 * scale)
    assert rep.normalized_margin == pytest.approx(closed_form_normalized_margin(ratio, 1.0), abs=1e-12)


def test_report_invariants():
    for ratio in SWEEP:
        rep = monotonicity_margin(CellGeometry(ratio, 1.0))
        assert rep.feasible == (rep.margin >= -1e-12 / ratio)
        rebuilt = solve_stencil(rep.geometry, rep.argmax_params)
        assert rebuilt.min_beta == pytest.approx(rep.margin, rel=1e-9, abs=1e-15)
        assert all(rebuilt.betas[i - 1] == pytest.approx(rep.margin, abs=1e-9 / ratio)
                   for i in rep.binding_indices)


@pytest.mark.parametrize("H,h,expected", [(1, 1, True), (100, 1, False), (1, 100, False)])
def test_is_feasible_examples(H, h, expected):
    assert is_feasible(CellGeometry(H, h)) is expected


def test_threshold():
    r = feasibility_threshold()
    assert r == pytest.approx(2.0, abs=1e-6)
    assert monotonicity_margin(CellGeometry(1.9, 1)).margin > 0
    assert monotonicity_margin(CellGeometry(2.1, 1)).margin < 0


def test_explicit_family_examples():
    iso = explicit_family(CellGeometry(1, 1))
    ref = solve_stencil(CellGeometry(1, 1), FreeParameters(0.5, 0.5, 0.5))
    assert iso.coefficients.tolist() == ref.coefficients.tolist()

    half = explicit_family(CellGeometry(2, 1))
    assert half.betas.tolist() == [0.0, 0.0, 0.75, 0.75, 0.25, 0.0, 0.0, 0.25]
    assert moment_residuals(half).max_relative() <= 1e-15

    with pytest.raises(OutOfRangeError):
        explicit_family(CellGeometry(1, 0.4))


@given(H=st.floats(1e-3, 10.0), s=st.floats(0.5, 2.0))
def test_explicit_family_is_monotone_and_consistent(H, s):
    st_ = explicit_family(CellGeometry(H, s * H))
    assert st_.min_beta >= 0.0
    assert moment_residuals(st_).max_relative() <= 1e-12


def test_brute_force_examples():
    v = brute_force_margin(CellGeometry(1, 1), resolution=41)
    assert 1 / 6 - 0.05 <= v <= 1 / 6
    assert brute_force_margin(CellGeometry(4, 1), resolution=41) < 0


@pytest.mark.parametrize("ratio", [0.3, 1.0, 3.0])
def test_brute_force_grid_through_argmax(ratio):
    geom = CellGeometry(ratio, 1.0)
    rep = monotonicity_margin(geom)
    x = rep.argmax_params.as_array()
    axes = [np.array([c - 1.0, c, c + 1.0]) for c in x]
    assert brute_force_margin(geom, axes=axes) == pytest.approx(rep.margin, abs=1e-12)


def test_brute_force_rejects_empty_grid():
    with pytest.raises(InvalidInputError):
        brute_force_margin(CellGeometry(1, 1), resolution=1)
    with pytest.raises(InvalidInputError):
        brute_force_margin(CellGeometry(1, 1), axes=[[], [0.0], [0.0]])


def _lipschitz_slack(geom, resolution):
    # |d beta_i / d x_j| summed over j, times half a grid step per axis
    from monostencil.feasibility import _default_box
    from monostencil.stencil import affine_map

    m, _ = affine_map(geom)
    steps = np.array([(b - a) / (resolution - 1) for a, b in _default_box(geom)])
    return float(np.max(np.abs(m) @ (steps / 2)))


@pytest.mark.parametrize("ratio", SWEEP)
def test_oracle_equivalence(ratio):
    geom = CellGeometry(ratio, 1.0)
    lp = monotonicity_margin(geom).margin
    bf = brute_force_margin(geom, resolution=41)
    assert bf <= lp + 1e-12 / (geom.h * geom.H)
    assert bf >= lp - _lipschitz_slack(geom, 41)


def test_margin_sweep_examples():
    assert margin_sweep([1]) == [(1.0, pytest.approx(1 / 6), True)]
    ((r, m, f),) = margin_sweep([2])
    assert (r, f) == (2.0, True) and m == pytest.approx(0.0, abs=1e-14)
    ((r, m, f),) = margin_sweep([0.5])
    assert (r, f) == (0.5, True) and m == pytest.approx(0.0, abs=1e-14)
    with pytest.raises(InvalidInputError):
        margin_sweep([0.0])


@pytest.mark.parametrize("s", [0.5, 0.7, 1.0, 1.4, 2.0])
def test_coefficient_upper_bound_on_feasible_stencils(s):
    for H in (0.3, 1.0, 3.0):
        for st_ in (explicit_family(CellGeometry(H, s * H)), monotonicity_margin(CellGeometry(H, s * H)).stencil):
            assert st_.min_beta >= -1e-12 / (H * H * s)
            for i in (1, 2, 5, 6, 7, 8):
                assert st_.betas[i - 1] <= 2 / H**2 + 1e-12


def test_bd_system_random_sweep():
    rng = np.random.default_rng(7)
    for _ in range(500):
        H, h = rng.uniform(1e-3, 1.0, 2)
        st_ = solve_stencil(CellGeometry(H, h), FreeParameters(*rng.uniform(-10, 10, 3)))
        B = st_.beta6 - st_.beta8
        D = st_.beta5 - st_.beta7
        tol = 1e-12 * (np.abs(st_.betas).max() + 1 / (h * H))
        assert abs(B + D - (st_.beta4 - st_.beta3)) <= tol
        assert abs(-B + D - 1 / (h * H)) <= tol


@pytest.mark.parametrize("lam", [0.1, 3.0, 10.0])
@pytest.mark.parametrize("H,h", [(1.0, 1.0), (4.0, 1.0), (1.0, 0.3), (1.9, 1.0)])
def test_margin_scaling(lam, H, h):
    a = monotonicity_margin(CellGeometry(lam * H, lam * h)).margin
    b = monotonicity_margin(CellGeometry(H, h)).margin / lam**2
    assert a == pytest.approx(b, rel=1e-9)


@pytest.mark.parametrize("ratio", SWEEP)
def test_margin_symmetry(ratio):
    a = monotonicity_margin(CellGeometry(ratio, 1.0)).margin
    b = monotonicity_margin(CellGeometry(1.0, ratio)).margin
    assert a == pytest.approx(b, rel=1e-12, abs=1e-12 / ratio)


@pytest.mark.parametrize("s", [1e-2, 1e-3, 1e-4])
def test_dominant_term_limit(s):
    # the margin tends to -1/(6hH), i.e. normalized margin -> -1/6
    rep = monotonicity_margin(CellGeometry(1.0, s))
    assert abs(rep.normalized_margin + 1 / 6) <= 10 * s
    assert rep.normalized_margin == pytest.approx((2 * s - 1) / 6, abs=1e-9)


@pytest.mark.parametrize(
    "geom",
    [
        AsymmetricCellGeometry(1.0, 2.0, 1.0, 1.0),
        AsymmetricCellGeometry(0.3, 0.1, 0.2, 0.5),
        AsymmetricCellGeometry(6.9e-4, 0.1243, 0.1243, 0.1243),
        AsymmetricCellGeometry(6.9e-4, 0.1243, 6.9e-4, 0.1243),
        AsymmetricCellGeometry(6.9e-4, 0.1243, 6.9e-4, 6.9e-4),
    ],
)
def test_asymmetric_margin_matches_linprog(geom):
    rep = asymmetric_margin(geom)
    sym = geom.symmetrized()

    def betas(x):
        return solve_stencil_asymmetric(geom, FreeParameters(*x)).betas

    ref, _ = linprog_margin(betas, scale=1.0 / (sym.h * sym.H))
    assert rep.margin == pytest.approx(ref, rel=1e-7, abs=1e-9 / (sym.h * sym.H))
    assert rep.stencil.min_beta == pytest.approx(rep.margin)


@settings(max_examples=30, deadline=None)
@given(H=st.floats(0.05, 1.0), h=st.floats(0.05, 1.0))
def test_asymmetric_margin_reduces_to_symmetric(H, h):
    a = asymmetric_margin(AsymmetricCellGeometry(H, H, h, h)).margin
    b = monotonicity_margin(CellGeometry(H, h)).margin
    assert a == pytest.approx(b, rel=1e-9, abs=1e-12 / (H * h))
