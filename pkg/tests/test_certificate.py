import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from backend.certificate import (
    METHOD_CONSTANT,
    METHOD_SEARCH,
    beta_sweep,
    certify,
    critical_speed_constant_data,
    eta_margin,
    feasibility_boundary,
    feasibility_nonconstant,
    find_eta,
    monotone_speed_extension,
    solve_c1,
)
from backend.influence import InfluenceFunction
from utils.errors import InfeasibleError, ParameterError, UsageError


def test_constant_kernel_recipe_by_hand():
    cert = critical_speed_constant_data(
        InfluenceFunction.constant(1.0), dX0=1.0, dV0=1.0, s=1.0, eta=0.5, epsilons=(1.0,), sigma_values=(2.0,)
    )
    assert cert.kappa == pytest.approx(0.25, rel=1e-15)
    expected_c1 = 1.0 + 5.0 / (2.0 * math.log(19.0 / 18.0))
    assert cert.c1 == pytest.approx(expected_c1, rel=1e-10)
    assert cert.c_star == pytest.approx(expected_c1, rel=1e-10)
    assert cert.method == METHOD_CONSTANT
    assert cert.holds_at()


def test_certificate_extends_to_faster_speeds():
    cert = certify(InfluenceFunction.power_law(0.25), dX0=1.0, dV0=1.0, s=1.0)
    for factor in (1.0, 2.0, 10.0):
        assert monotone_speed_extension(cert, factor * cert.c_star)
    with pytest.raises(UsageError):
        monotone_speed_extension(cert, 0.5 * cert.c_star)


def test_fast_decaying_kernel_with_large_data_is_infeasible():
    with pytest.raises(InfeasibleError) as info:
        certify(InfluenceFunction.power_law(2.0), dX0=10.0, dV0=10.0, s=1.0)
    assert info.value.exit_status == 3
    assert info.value.report["eta_margin"] <= 0.0


def test_find_eta_refines_an_interior_maximizer():
    psi = InfluenceFunction.power_law(0.25)
    choice = find_eta(psi, 1.0, 1.0)
    assert choice.feasible
    assert choice.refined
    grid = np.geomspace(1e-6, 1.0 - 1e-6, 400)
    assert choice.margin >= eta_margin(psi, 1.0, 1.0, grid).max()
    assert 0.05 < choice.eta < 0.4


def test_find_eta_rejects_negative_data():
    with pytest.raises(ParameterError):
        find_eta(InfluenceFunction.constant(1.0), -1.0, 0.0)


def test_resting_flock_gets_a_sigma_from_eta():
    cert = certify(InfluenceFunction.constant(1.0), dX0=2.0, dV0=0.0, s=1.0)
    assert cert.sigma > 0.0
    assert cert.holds_at()


def test_c1_solves_its_equation():
    eta, kappa, sigma, spread, s = 0.3, 0.2, 1.5, 6.0, 0.5
    c1 = solve_c1(eta, kappa, sigma, spread, s)
    assert math.log1p(eta * kappa / (kappa + sigma)) / eta == pytest.approx(spread / (c1 - s), rel=1e-9)


def test_nonconstant_data_use_the_search():
    cert = certify(InfluenceFunction.constant(1.0), dX0=1.0, dV0=1.0, s=1.0, L_v0=0.1, D0=0.05)
    assert cert.method == METHOD_SEARCH
    assert cert.kappa > 0.05
    assert cert.holds_at()
    assert cert.holds_at(3.0 * cert.c_star)


def test_search_covers_velocity_lipschitz_data():
    kernel = InfluenceFunction.power_law(0.25)
    searched = feasibility_nonconstant(kernel, dX0=1.0, dV0=1.0, s=1.0, L_v0=0.2, D0=0.0)
    assert searched.c_star > 1.0
    assert searched.L_v0 == 0.2
    assert searched.holds_at()


def test_non_monotone_kernel_is_rearranged():
    bump = InfluenceFunction.tabulated([(0.0, 0.6), (1.0, 1.0), (3.0, 0.5), (50.0, 0.4)])
    cert = certify(bump, dX0=1.0, dV0=0.5, s=1.0)
    assert cert.kernel.is_nonincreasing
    assert cert.holds_at()


def test_certificate_report_is_serializable():
    cert = certify(InfluenceFunction.power_law(0.5), dX0=1.0, dV0=0.5, s=1.0)
    report = cert.as_dict()
    assert report["conditions"]["holds"]
    assert report["inputs"]["kernel"]["type"] == "powerlaw"


def test_beta_sweep_finds_the_boundary():
    sweep = beta_sweep([0.25, 2.0], [(1.0, 1.0)], s=1.0)
    assert sweep["feasible"].tolist() == [True, False]
    assert math.isnan(sweep["c_star"].iloc[1])
    boundary = feasibility_boundary(sweep)
    row = boundary.iloc[0]
    assert row["last_feasible_beta"] == 0.25
    assert row["first_infeasible_beta"] == 2.0
    assert row["flips"] == 1


@settings(max_examples=25, deadline=None)
@given(
    beta=st.floats(min_value=0.0, max_value=0.5),
    dX0=st.floats(min_value=0.0, max_value=3.0),
    dV0=st.one_of(st.just(0.0), st.floats(min_value=1e-3, max_value=3.0)),
    s=st.floats(min_value=0.1, max_value=5.0),
)
def test_certificates_hold_at_and_above_c_star(beta, dX0, dV0, s):
    kernel = InfluenceFunction.power_law(beta)
    try:
        cert = certify(kernel, dX0=dX0, dV0=dV0, s=s)
    except InfeasibleError:
        return
    assert cert.c_star > s
    assert cert.holds_at(cert.c_star)
    assert cert.holds_at(10.0 * cert.c_star)
