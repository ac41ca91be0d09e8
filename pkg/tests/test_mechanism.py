import numpy as np
import pytest

from stiff_pinn.common.errors import DimensionError, MechanismError, MechanismSyntaxError
from stiff_pinn.mechanism import (
    Mechanism,
    Reaction,
    StateVector,
    load_mechanism,
    mass_action_jacobian,
    mass_action_rhs,
    parse_mechanism,
    parse_qss_names,
    production_consumption_split,
    serialize_mechanism,
)


def test_rober_builtin_layout(rober):
    assert rober.species_names == ("A", "B", "C")
    assert rober.n_reactions == 3
    assert rober.initial_concentrations == (1.0, 0.0, 0.0)
    assert rober.t_span == (0.0, 1e5)
    assert [r.rate_constant for r in rober.reactions] == [0.04, 3e7, 1e4]


def test_pollu_builtin_layout(pollu):
    assert pollu.n_species == 20
    assert pollu.n_reactions == 25
    assert pollu.t_span == (0.0, 60.0)
    assert pollu.y0[pollu.species_index("NO")] == pytest.approx(0.2)
    assert pollu.y0[pollu.species_index("SO2")] == pytest.approx(0.007)


def test_rober_rhs_at_initial_state(rober):
    rhs = mass_action_rhs(rober, StateVector(0.0, rober.y0))
    np.testing.assert_allclose(rhs, [-0.04, 0.04, 0.0])


def test_rober_rhs_matches_hand_evaluation(rober):
    y = np.array([1.0, 1e-5, 0.5])
    # k1 A = 0.04, k2 B^2 = 3e-3, k3 B C = 0.05
    expected = [-0.04 + 0.05, 0.04 - 3e-3 - 0.05, 3e-3]
    np.testing.assert_allclose(mass_action_rhs(rober, StateVector(0.0, y)), expected, rtol=1e-12)


def test_split_counts_net_stoichiometry_only(rober):
    # only 2 B -> B + C fires: B loses one molecule per event, C gains one
    plus, minus = production_consumption_split(rober, StateVector(0.0, [0.0, 1.0, 0.0]))
    np.testing.assert_allclose(plus, [0.0, 0.0, 3e7])
    np.testing.assert_allclose(minus, [0.0, 3e7, 0.0])


def test_split_is_nonnegative_and_sums_to_rhs(pollu):
    rng = np.random.default_rng(3)
    y = rng.uniform(0.0, 0.1, pollu.n_species)
    s = StateVector(0.0, y)
    plus, minus = production_consumption_split(pollu, s)
    assert np.all(plus >= 0) and np.all(minus >= 0)
    np.testing.assert_allclose(plus - minus, mass_action_rhs(pollu, s), rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("name", ["rober", "pollu"])
def test_jacobian_matches_central_differences(name, request):
    m = request.getfixturevalue(name)
    rng = np.random.default_rng(11)
    y = rng.uniform(0.01, 0.5, m.n_species)
    jac = mass_action_jacobian(m, StateVector(0.0, y))
    fd = np.zeros_like(jac)
    h = 1e-6
    for j in range(m.n_species):
        step = np.zeros(m.n_species)
        step[j] = h
        fd[:, j] = (m.kinetics.rhs(y + step) - m.kinetics.rhs(y - step)) / (2 * h)
    np.testing.assert_allclose(jac, fd, rtol=1e-6, atol=1e-7 * np.abs(jac).max())


def test_rober_jacobian_at_initial_state_is_triangular(rober):
    jac = mass_action_jacobian(rober, StateVector(0.0, rober.y0))
    expected = np.array([[-0.04, 0.0, 0.0], [0.04, 0.0, 0.0], [0.0, 0.0, 0.0]])
    np.testing.assert_allclose(jac, expected)


def test_kinetics_broadcast_over_batches(rober):
    rng = np.random.default_rng(0)
    batch = rng.uniform(0, 1, size=(7, 3))
    rhs = rober.kinetics.rhs(batch)
    jac = rober.kinetics.jacobian(batch)
    assert rhs.shape == (7, 3) and jac.shape == (7, 3, 3)
    np.testing.assert_allclose(rhs[4], rober.kinetics.rhs(batch[4]))
    np.testing.assert_allclose(jac[4], rober.kinetics.jacobian(batch[4]))


def test_wrong_state_length_is_rejected(rober):
    with pytest.raises(DimensionError):
        mass_action_rhs(rober, StateVector(0.0, [1.0, 0.0]))


def test_mechanism_without_reactions_has_zero_rhs():
    m = parse_mechanism("SPECIES: A B\nINIT: 1 2\n")
    assert m.n_reactions == 0
    assert m.t_span == (0.0, 1.0)
    np.testing.assert_array_equal(m.kinetics.rhs(m.y0), [0.0, 0.0])
    np.testing.assert_array_equal(m.kinetics.jacobian(m.y0), np.zeros((2, 2)))


def test_defaults_when_init_and_tspan_are_missing():
    m = parse_mechanism("SPECIES: A B\nA -> B : 2\n")
    assert m.initial_concentrations == (0.0, 0.0)


def test_comments_and_blank_lines_are_ignored():
    text = "# header\n\nSPECIES: A B   # two species\nINIT: 1 0\n\nA -> B : 0.5  # slow\n"
    m = parse_mechanism(text)
    assert m.n_reactions == 1
    assert m.reactions[0].rate_constant == 0.5


def test_unknown_species_in_reaction():
    with pytest.raises(MechanismError, match="unknown species D"):
        parse_mechanism("SPECIES: A B\nA + D -> B : 1\n")


def test_syntax_error_carries_line_number():
    with pytest.raises(MechanismSyntaxError) as info:
        parse_mechanism("SPECIES: A B\nINIT: 1 0\nA => B : 1\n")
    assert info.value.line_number == 3


def test_missing_species_header():
    with pytest.raises(MechanismSyntaxError):
        parse_mechanism("A -> B : 1\n")


def test_third_order_reaction_is_rejected():
    with pytest.raises(MechanismError, match="order"):
        parse_mechanism("SPECIES: A B\n3 A -> B : 1\n")


@pytest.mark.parametrize("rate", ["0", "-1"])
def test_non_positive_rate_constant(rate):
    with pytest.raises(MechanismError):
        parse_mechanism(f"SPECIES: A B\nA -> B : {rate}\n")


def test_init_length_mismatch():
    with pytest.raises(MechanismSyntaxError):
        parse_mechanism("SPECIES: A B\nINIT: 1\n")


def test_negative_initial_concentration():
    with pytest.raises(MechanismError):
        Mechanism(("A",), (), (-1.0,), (0.0, 1.0))


def test_reaction_validation():
    with pytest.raises(MechanismError):
        Reaction({0: 1}, {1: 1}, float("inf"))
    with pytest.raises(MechanismError):
        Reaction({0: 1, 1: 1, 2: 1}, {}, 1.0)
    assert Reaction({1: 2}, {1: 1, 2: 1}, 3e7).net_stoich(1) == -1


def test_serialize_then_parse_gives_the_same_mechanism(pollu):
    assert parse_mechanism(serialize_mechanism(pollu)) == pollu


def test_qss_line_is_ignored_by_the_mechanism_and_read_separately(rober):
    text = serialize_mechanism(rober, qss_names=("B",))
    assert text.rstrip().endswith("QSS: B")
    assert parse_mechanism(text) == rober
    assert parse_qss_names(text) == ("B",)
    assert parse_qss_names(serialize_mechanism(rober)) is None


def test_consumed_species_excludes_pure_products(pollu):
    consumed = {pollu.species_names[i] for i in pollu.consumed_species()}
    assert "SO4" not in consumed
    assert "CO2" not in consumed
    assert {"NO2", "O1D", "PAN"} <= consumed


def test_load_mechanism_resolution(tmp_path, rober):
    assert load_mechanism("builtin:rober") == rober
    assert load_mechanism("ROBER") == rober
    path = tmp_path / "r.mech"
    path.write_text(serialize_mechanism(rober), encoding="utf-8")
    assert load_mechanism(str(path)) == rober


def test_unknown_builtin_lists_valid_names():
    with pytest.raises(MechanismError, match="Valid builtins: pollu, rober"):
        load_mechanism("builtin:nope")
    with pytest.raises(MechanismError, match="Mechanism not found"):
        load_mechanism("no/such/file.mech")
