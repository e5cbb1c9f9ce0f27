import dataclasses

import numpy as np
import pytest

from bulksorp.config import parse_config
from bulksorp.errors import DomainError, UsageError
from bulksorp.harness import (PropertyReport, check_comparison, check_langmuir_cap, check_mass_balance,
                              check_norm_envelope, check_positivity, comparison_gap, envelope_excess,
                              heat_errors, space_time_norms, suite)
from bulksorp.scenarios import heat_text
from bulksorp.stepper import Integrator

BASE = """\
[grid]
dim = 1
nx = 8

[species]
names = A, B
d_bulk = 1.0, 0.5
d_surf = 0.5, 0.5

[sorption]
variant = {variant}
k_ad = {k_ad}
k_de = {k_de}

[stepper]
t_end = {t_end}
output_every = 0.1

[initial]
A = cosine 1.0 0.5
B = 0.3
A.surf = 0.2
B.surf = 0.1
"""


def scenario(variant="henry", k_ad="1.0, 0.5", k_de="0.5, 1.0", t_end=0.5, extra=""):
    return BASE.format(variant=variant, k_ad=k_ad, k_de=k_de, t_end=t_end) + extra


def test_report_format():
    rep = PropertyReport("x", "pass", 1.5e-13, 1e-8, 0.1, "abc")
    assert rep.format() == "PROP x pass measured=1.5e-13 tol=1e-08"
    assert rep.passed
    assert PropertyReport("x", "heuristic", 1, 1, 0, "").passed
    assert not PropertyReport("x", "fail", 1, 1, 0, "").passed


def test_positivity_on_pure_diffusion():
    rep = check_positivity(scenario(k_ad="0, 0", k_de="0, 0"))
    assert rep.verdict == "pass"
    # diffusion only: the discrete maximum principle keeps the initial minimum, B.surf = 0.1
    assert rep.measured == 0.1


def test_positivity_precondition_negative_data():
    bad = scenario().replace("B = 0.3", "B = -0.1")
    with pytest.raises(DomainError, match="nonnegative"):
        check_positivity(bad)


def test_mass_balance_small_and_usage_error():
    rep = check_mass_balance(scenario("langmuir", t_end=0.3))
    assert rep.verdict == "pass" and rep.measured <= 1e-8
    with pytest.raises(UsageError):
        check_mass_balance(scenario(extra="[reactions_bulk]\nr1 = A -> B @ 1\n"))


def test_comparison_zero_dynamics_is_equality():
    text = scenario(k_ad="0, 0", k_de="0, 0", t_end=0.3)
    rep = check_comparison(text)
    assert rep.verdict == "pass"
    assert abs(rep.measured) <= 1e-12
    cfg = parse_config(text)
    integ = Integrator(cfg.problem(), dataclasses.replace(cfg.stepper, record_steps=True))
    res = integ.run(cfg.initial_state(), cfg.t_end)
    gap_b, gap_s = comparison_gap(integ, cfg.initial_state(), res)
    assert abs(gap_b) <= 1e-12 and abs(gap_s) <= 1e-12


def test_comparison_needs_records():
    cfg = parse_config(scenario(t_end=0.2))
    integ = Integrator(cfg.problem(), cfg.stepper)
    res = integ.run(cfg.initial_state(), cfg.t_end)
    with pytest.raises(UsageError):
        comparison_gap(integ, cfg.initial_state(), res)


def test_comparison_small_henry_network():
    text = scenario(t_end=0.3, extra="[reactions_bulk]\nr1 = A -> B @ 1\n[reactions_surface]\nr1 = A -> B @ 0.5\n")
    assert check_comparison(text).verdict == "pass"


def _heat_error(text):
    cfg = parse_config(text)
    res = Integrator(cfg.problem(), cfg.stepper).run(cfg.initial_state(), cfg.t_end)
    x = cfg.grid.cell_centers[:, 0]
    t = res.final_state.t
    exact = 1.0 + np.exp(-np.pi**2 * t) * np.cos(np.pi * x)
    return np.sqrt(np.sum(cfg.grid.cell_volume * (res.final_state.c[0] - exact) ** 2)), res


def test_heat_constant_data_has_zero_error():
    cfg = parse_config(heat_text(16).replace("cosine 1.0 1.0", "1.0"))
    res = Integrator(cfg.problem(), cfg.stepper).run(cfg.initial_state(), cfg.t_end)
    assert np.max(np.abs(res.final_state.c - 1.0)) <= 1e-13


def test_heat_time_error_is_subdominant():
    text = heat_text(32)
    err, res = _heat_error(text)
    dt = 0.05 / 32**2
    finer = text.replace(repr(dt), repr(dt / 2))
    err_half, res_half = _heat_error(finer)
    assert res_half.n_steps == 2 * res.n_steps
    errs = dict(heat_errors((16, 32, 64)))
    assert errs[32] == pytest.approx(err)
    # second-order Richardson estimate of the spatial part of the h = 1/32 error
    spatial = 4.0 / 3.0 * (errs[32] - errs[64])
    assert abs(err - err_half) < spatial


def test_envelope_helpers():
    tau = np.linspace(0.5, 1.0, 11)
    ratio, mono = envelope_excess(tau, 3.0 * np.exp(2.0 * tau))
    assert ratio == pytest.approx(1.0, abs=1e-12) and mono
    ratio, mono = envelope_excess(tau, 2.0 - tau)
    assert not mono
    with pytest.raises(DomainError):
        envelope_excess(tau, np.zeros(11))


def test_space_time_norm_of_constant_solution():
    text = scenario(k_ad="0, 0", k_de="0, 0", t_end=1.0).replace("A = cosine 1.0 0.5", "A = 2.0")
    cfg = parse_config(text)
    res = Integrator(cfg.problem(), cfg.stepper).run(cfg.initial_state(), cfg.t_end)
    bulk, surf = space_time_norms(res, cfg.grid, 2.0)
    # |Omega| = 1, c = (2, 0.3): ||c||_{L2(Omega_tau)} = sqrt((4 + 0.09) tau)
    np.testing.assert_allclose(bulk, np.sqrt(4.09 * res.times), rtol=1e-12)
    np.testing.assert_allclose(surf, np.sqrt(2 * (0.04 + 0.01) * res.times), rtol=1e-12)


def test_envelope_constant_case_passes():
    text = scenario(k_ad="0, 0", k_de="0, 0", t_end=1.0).replace("A = cosine 1.0 0.5", "A = 2.0")
    rep = check_norm_envelope(text)
    assert rep.verdict == "pass" and rep.measured <= 1.05


def test_envelope_without_triangular_structure_is_heuristic():
    text = scenario(t_end=0.4, extra="[reactions_bulk]\nr1 = A -> 2 A @ 0.5\n")
    rep = check_norm_envelope(text)
    assert rep.verdict == "heuristic"


def test_langmuir_cap_usage_errors():
    with pytest.raises(UsageError, match="single species"):
        check_langmuir_cap(scenario("langmuir"))
    one = """\
[grid]
dim = 1
nx = 8
[species]
names = A
d_bulk = 1
d_surf = 1
[sorption]
variant = {variant}
k_ad = {k_ad}
k_de = 0
[stepper]
t_end = 0.5
[initial]
A = 1
"""
    with pytest.raises(UsageError, match="Langmuir"):
        check_langmuir_cap(one.format(variant="henry", k_ad=1))
    with pytest.raises(UsageError, match="surface"):
        check_langmuir_cap(one.format(variant="langmuir", k_ad=1) + "[reactions_surface]\nr1 = A -> 0 @ 1\n")
    # zero sorption from an empty surface: theta stays 0
    rep = check_langmuir_cap(one.format(variant="langmuir", k_ad=0))
    assert rep.verdict == "pass" and rep.measured == -1.0


def test_suite_ids_are_unique_and_ordered():
    ids = [pid for pid, _ in suite()]
    assert len(ids) == len(set(ids)) == 48
    assert ids[0] == "henry_blowup"
    assert sum(i.startswith("positivity_") for i in ids) == 20
    assert sum(i.startswith("mass_") for i in ids) == 20
    assert ids[-3:] == ["heat_convergence", "norm_envelope_linear", "norm_envelope_blowup"]
