import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bulksorp.errors import DomainError, UsageError
from bulksorp.model import (ReactionNetwork, SorptionModel, SpeciesSystem, TriangularStructure,
                            check_quasi_positivity, check_sorption_structure, check_triangular,
                            eval_occupancy, eval_sorption, growth_exponent, parse_reaction,
                            sorption_violation_at)


def one(variant, k_ad=2.0, k_de=0.5, **kw):
    return SorptionModel(variant, [k_ad], [k_de], **kw)


# -- occupancy and sorption laws ---------------------------------------------

def test_occupancy_examples():
    m = SorptionModel("langmuir", [1, 1], [1, 1], sigma=[1, 2], c_s_sigma=1.0)
    assert eval_occupancy(m, [0.5, 0.25]) == pytest.approx(1.0)
    assert eval_occupancy(m, [0.0, 0.0]) == 0.0
    m1 = SorptionModel("langmuir", [1], [1], sigma=[1], c_s_sigma=0.6)
    assert eval_occupancy(m1, [0.3]) == pytest.approx(0.5)


def test_occupancy_rejects_negative():
    with pytest.raises(DomainError):
        eval_occupancy(one("langmuir"), [-0.1])


def test_henry_examples():
    m = SorptionModel("henry", [1.0], [1.0])
    assert eval_sorption(m, [1.0], [1.0]) == pytest.approx([0.0])
    assert eval_sorption(m, [2.0], [0.5]) == pytest.approx([1.5])


def test_langmuir_cutoff_example():
    m = SorptionModel("langmuir", [1.0], [0.0], sigma=[1.0], c_s_sigma=1.0)
    assert eval_occupancy(m, [2.0]) == pytest.approx(2.0)
    assert eval_sorption(m, [1.0], [2.0]) == pytest.approx([0.0])


# hand evaluation at c = 3, c_surf = 1, c_S = 2 (theta = 1/2), k_ad = 2, k_de = 1/2, beta = sigma = 1
@pytest.mark.parametrize("variant, expected", [
    ("langmuir", 2 * 3 * 0.5 - 0.5),
    ("volmer", 2 * 3 * 0.5 * math.exp(-1.0) - 0.5),
    ("frumkin", 2 * 3 * 0.5 * math.exp(-0.5) - 0.5),
    ("vanderwaals", 2 * 3 * math.exp(-0.5) * math.exp(-1.0) - 0.5),
])
def test_sorption_laws_hand_values(variant, expected):
    m = one(variant, c_s_sigma=2.0, beta=1.0, sigma=[1.0])
    assert eval_sorption(m, [3.0], [1.0])[0] == pytest.approx(expected, rel=1e-14)


@pytest.mark.parametrize("variant", ["volmer", "vanderwaals"])
def test_exponential_factors_vanish_at_full_occupancy(variant):
    m = one(variant, c_s_sigma=1.0)
    for cs in (1.0, 1.7):
        assert eval_sorption(m, [4.0], [cs])[0] == pytest.approx(-0.5 * cs)
    # continuity from below
    assert eval_sorption(m, [4.0], [1 - 1e-9])[0] == pytest.approx(-0.5, abs=1e-6)


def test_sorption_domain_and_shape_errors():
    m = one("henry")
    with pytest.raises(DomainError):
        eval_sorption(m, [-1.0], [0.0])
    with pytest.raises(UsageError):
        eval_sorption(m, [1.0, 2.0], [0.0, 1.0])
    with pytest.raises(DomainError):
        SorptionModel("henry", [-1.0], [1.0])
    with pytest.raises(DomainError):
        SorptionModel("frumkin", [1.0], [1.0], sigma=[0.5])
    with pytest.raises(UsageError):
        SorptionModel("bet", [1.0], [1.0])


@settings(max_examples=60, deadline=None)
@given(c=st.floats(0, 5), cs=st.floats(0, 5), variant=st.sampled_from(["henry", "langmuir", "volmer", "vanderwaals"]))
def test_sorption_sign_structure(c, cs, variant):
    m = one(variant, c_s_sigma=2.0)
    # no adsorption without bulk, no desorption without surface
    assert eval_sorption(m, [0.0], [cs])[0] <= 0.0
    assert eval_sorption(m, [c], [0.0])[0] >= 0.0
    s = eval_sorption(m, [c], [cs])[0]
    assert -m.k_de[0] * (1 + cs) <= s <= m.k_ad[0] * (1 + c)


def test_species_system_validation():
    with pytest.raises(UsageError):
        SpeciesSystem(["A", "A"], [1, 1], [1, 1])
    with pytest.raises(DomainError):
        SpeciesSystem(["A"], [0.0], [1.0])


# -- reactions -----------------------------------------------------------------

def test_parse_reaction_oracle():
    stoich, orders, k = parse_reaction("A + B -> C @ 1.0", ["A", "B", "C"])
    assert stoich == [-1, -1, 1]
    assert orders == [1, 1, 0]
    assert k == 1.0
    stoich, orders, k = parse_reaction("2 A -> 3 A @ 0.5", ["A"])
    assert (stoich, orders, k) == ([1], [2], 0.5)
    stoich, orders, _ = parse_reaction("0 -> B @ 2", ["A", "B"])
    assert (stoich, orders) == ([0, 1], [0, 0])


@pytest.mark.parametrize("bad", ["A -> B", "A => B @ 1", "A + D -> B @ 1", "A -> B @ x", "A -> B @ 0"])
def test_parse_reaction_errors(bad):
    with pytest.raises((UsageError, DomainError)):
        parse_reaction(bad, ["A", "B"])


def test_mass_action_examples():
    net = ReactionNetwork.from_strings(["A", "B"], ["A -> B @ 2"])
    assert net([3.0, 0.0]) == pytest.approx([-6.0, 6.0])
    net = ReactionNetwork.from_strings(["A", "B", "C"], ["A + B -> C @ 1"])
    assert net([2.0, 3.0, 0.0]) == pytest.approx([-6.0, -6.0, 6.0])
    assert net([0.0, 3.0, 1.0]) == pytest.approx([0.0, 0.0, 0.0])


def test_empty_network_is_zero():
    net = ReactionNetwork.empty(2)
    assert net.n_reactions == 0
    assert np.all(net(np.ones((2, 5))) == 0)


networks = st.lists(
    st.tuples(st.lists(st.integers(0, 2), min_size=3, max_size=3),
              st.lists(st.integers(0, 2), min_size=3, max_size=3),
              st.floats(0.1, 3.0)),
    min_size=1, max_size=4)


def _net(recipe):
    reac = np.array([s[0] for s in recipe]).T
    prod = np.array([s[1] for s in recipe]).T
    return ReactionNetwork(prod - reac, reac, [s[2] for s in recipe])


@settings(max_examples=50, deadline=None)
@given(recipe=networks, c=st.lists(st.floats(0, 4), min_size=3, max_size=3),
       perm=st.permutations([0, 1, 2]))
def test_reaction_relabelling_equivariance(recipe, c, perm):
    net = _net(recipe)
    c = np.array(c)
    perm = list(perm)
    r = net(c)
    r_perm = net.permuted(perm)(c[perm])
    np.testing.assert_allclose(r_perm, r[perm], rtol=1e-12, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(recipe=networks, c=st.lists(st.floats(0, 4), min_size=3, max_size=3))
def test_production_destruction_split(recipe, c):
    net = _net(recipe)
    c = np.array(c)
    prod, dest_rel = net.production_destruction(c)
    assert np.all(prod >= 0) and np.all(dest_rel >= 0)
    np.testing.assert_allclose(prod - c * dest_rel, net(c), rtol=1e-12, atol=1e-10)


def test_jacobian_matches_finite_differences():
    net = ReactionNetwork.from_strings(["A", "B", "C"], ["A + B -> C @ 1.3", "2 A -> B @ 0.5", "C -> A @ 0.7"])
    c = np.array([0.7, 1.1, 0.4])
    h = 1e-6
    fd = np.column_stack([(net(c + h * e) - net(c - h * e)) / (2 * h) for e in np.eye(3)])
    np.testing.assert_allclose(net.jacobian(c), fd, rtol=1e-7, atol=1e-8)


def test_network_validation():
    with pytest.raises(DomainError):
        ReactionNetwork([[-1]], [[0]], [1.0])
    with pytest.raises(UsageError):
        ReactionNetwork([[-1]], [[1]], [1.0, 2.0])


# -- checkers --------------------------------------------------------------------

def test_quasi_positivity_examples():
    net = ReactionNetwork.from_strings(["A", "B", "C"], ["A + B -> C @ 1"])
    assert check_quasi_positivity(net, 3).passed
    rep = check_quasi_positivity(lambda c: np.array([-1.0, 0.0]), 2)
    assert rep.verdict == "fail"
    assert rep.witness[0][0] == 0.0
    assert "witness" in rep.format()
    assert check_quasi_positivity(lambda c: np.array([-c[0] * c[1], c[0] * c[1]]), 2).passed


@pytest.mark.parametrize("variant", ["henry", "langmuir", "volmer", "vanderwaals"])
def test_structure_passes_for_admissible_models(variant):
    m = SorptionModel(variant, [1.0, 0.5], [0.5, 2.0], sigma=[1.0, 2.0], c_s_sigma=2.0, beta=1.0)
    rep = check_sorption_structure(m)
    assert rep.passed, rep.format()
    assert rep.samples >= 4096


def test_frumkin_reported_as_failing_monotonicity():
    m = SorptionModel("frumkin", [1.0], [0.5], sigma=[1.0], beta=1.0)
    rep = check_sorption_structure(m)
    assert rep.verdict == "fail"
    assert "decreasing_in_surface" in rep.detail
    c, cs = rep.witness
    assert sorption_violation_at(m, c, cs)["decreasing_in_surface"] > 0


class NegatedHenry:
    """Henry law with the sign flipped: adsorption becomes desorption and vice versa."""

    def __init__(self, k_ad, k_de):
        self.inner = SorptionModel("henry", k_ad, k_de)
        self.k_ad, self.k_de, self.n_species = self.inner.k_ad, self.inner.k_de, self.inner.n_species

    def rates(self, c, cs):
        return -self.inner.rates(c, cs)


def test_negated_henry_fails_with_witness():
    m = NegatedHenry([1.0], [1.0])
    rep = check_sorption_structure(m)
    assert rep.verdict == "fail"
    c, cs = rep.witness
    assert max(sorption_violation_at(m, c, cs).values()) > 0


def test_growth_exponent_examples():
    assert growth_exponent(ReactionNetwork.from_strings(["A"], ["2 A -> 3 A @ 1"]))[0] == 2
    assert growth_exponent(ReactionNetwork.from_strings(["A", "B"], ["A -> B @ 1", "B -> A @ 2"]))[0] == 1
    gamma, m = growth_exponent(ReactionNetwork.from_strings(["A", "B", "C"], ["A + B -> C @ 1"]))
    assert (gamma, m) == (2, 6.0)
    assert growth_exponent(ReactionNetwork.empty(2)) == (1, 0.0)


def test_growth_constant_bounds_jacobian():
    net = ReactionNetwork.from_strings(["A", "B", "C"], ["A + B -> C @ 1.3", "2 A -> B @ 0.5", "C -> A @ 0.7"])
    gamma, m = growth_exponent(net)
    rng = np.random.default_rng(3)
    for y in rng.uniform(0, 20, size=(200, 3)):
        assert np.linalg.norm(net.jacobian(y), 2) <= m * (1 + np.linalg.norm(y) ** (gamma - 1)) + 1e-12


def test_triangular_examples():
    q = [[1, 0], [1, 1]]
    sq = lambda c: np.array([-c[0] ** 2, c[0] ** 2])
    assert check_triangular(sq, TriangularStructure(q, 1.0, 0.0)).passed
    rep = check_triangular(lambda c: np.array([c[0] ** 2, 0.0]), TriangularStructure(np.eye(2), 1.0, 1.0))
    assert rep.verdict == "fail"
    assert rep.witness[0][0] > (1 + 5**0.5) / 2
    prod = lambda c: np.array([-c[0] * c[1], c[0] * c[1]])
    assert check_triangular(prod, TriangularStructure(q, 1.0, 0.0)).passed
    with pytest.raises(UsageError):
        check_triangular(ReactionNetwork.empty(3), TriangularStructure(q, 1.0, 0.0))


def test_triangular_structure_validation():
    with pytest.raises(DomainError):
        TriangularStructure([[1, 1], [0, 1]], 1.0, 0.0)
    with pytest.raises(DomainError):
        TriangularStructure([[0, 0], [1, 1]], 1.0, 0.0)
    t = TriangularStructure.lower_ones(3, 2.0, 1.0)
    assert t.q.tolist() == [[1, 0, 0], [1, 1, 0], [1, 1, 1]]
