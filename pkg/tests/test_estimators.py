import math

import numpy as np
import pytest

from proxcausal import dgp, estimators as E
from proxcausal.errors import EmptyData, EmptyStratum, RankDeficient, Singular, ZeroTruth

import oracles as O


def population(spec):
    return E.ProbModel.from_joint(dgp.exact_joint(spec))


def dataset(rows, columns=("X", "Y", "Z", "W")):
    return dgp.Dataset(columns, frozenset(), np.array(rows, dtype=np.uint8))


def test_fit_counts():
    d = dataset([[0, 0, 0, 0], [0, 1, 0, 0], [1, 0, 0, 0], [1, 1, 0, 0]])
    m = E.fit(d)
    assert m.n == 4 and m.origin == "empirical(n=4)"
    for x in (0, 1):
        for y in (0, 1):
            assert m.probs[x, y, 0, 0] == 0.25
    assert m.probs.sum() == 1


def test_fit_ignores_latent_and_normalizes():
    d = dgp.sample(dgp.default_spec(), 10_000, 0)
    m = E.fit(d)
    assert set(m.names) == {"W", "Z", "X", "Y"}
    assert abs(m.probs.sum() - 1) < 1e-12


def test_fit_empty():
    with pytest.raises(EmptyData):
        E.fit(dataset(np.zeros((0, 4))))


def test_cond_matrix_identity_when_w_copies_z():
    rows = [[x, y, z, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)]
    m = E.fit(dataset(rows))
    for x in (0, 1):
        assert np.array_equal(E.cond_matrix(m, x).m, np.eye(2))
        assert E.condition_number(E.cond_matrix(m, x)) == 1.0


def test_cond_matrix_matches_oracle():
    spec = dgp.default_spec()
    m = population(spec)
    d = dict(spec.deltas)
    for x in (0, 1):
        cm = E.cond_matrix(m, x)
        assert np.allclose(cm.m, O.base_cond_matrix(0.5, d, x), atol=1e-14)
        assert np.allclose(cm.m.sum(axis=0), 1)
    # frozen from the literal-equation oracle
    cm0 = E.cond_matrix(m, 0).m
    assert cm0[0, 0] == pytest.approx(39 / 55, abs=1e-14)
    assert cm0[0, 1] == pytest.approx(32 / 85, abs=1e-14)
    assert np.linalg.det(cm0) == pytest.approx(0.3326203208556151, abs=1e-13)


def test_condition_number_matches_closed_form_singular_values():
    m = population(dgp.default_spec())
    for x in (0, 1):
        cm = E.cond_matrix(m, x)
        s1, s2 = O.singular_values_2x2(cm.m)
        assert E.condition_number(cm) == pytest.approx(s1 / s2, rel=1e-12)
        assert E.condition_number(cm) == pytest.approx(3.031153126966045, rel=1e-12)
        assert E.condition_number(cm) < 30


def test_condition_number_rank_deficient():
    assert E.condition_number(np.array([[0.3, 0.3], [0.7, 0.7]])) == math.inf
    assert E.condition_number(np.eye(3)) == 1.0


def test_no_w_u_link_is_singular():
    m = population(dgp.default_spec(UW=0.0))
    cm = E.cond_matrix(m, 0).m
    assert np.allclose(cm[:, 0], cm[:, 1])
    with pytest.raises(Singular):
        E.proximal_g(m)


def test_no_u_edges_is_singular():
    m = population(dgp.default_spec(UW=0.0, UZ=0.0, UX=0.0, UY=0.0))
    with pytest.raises(Singular) as err:
        E.proximal_g(m)
    assert err.value.x == 0


def test_no_z_u_link_is_singular_without_z_to_x():
    # with Z -> X present, conditioning on the collider X ties Z to U again
    assert E.proximal_g(population(dgp.default_spec(UZ=0.0))).max_condition_number < math.inf
    with pytest.raises(Singular):
        E.proximal_g(population(dgp.default_spec(UZ=0.0, ZX=0.0)))


def test_empty_stratum():
    rows = [[0, 0, 0, 0], [1, 1, 1, 1], [0, 1, 1, 0]]
    with pytest.raises(EmptyStratum) as err:
        E.cond_matrix(E.fit(dataset(rows)), 1)
    assert err.value.stratum == {"Z": 0, "X": 1}


@pytest.mark.parametrize("graph_id", dgp.GRAPH_IDS)
def test_population_identity(graph_id):
    spec = dgp.default_spec(graph_id)
    rep = E.proximal_g(population(spec))
    assert abs(rep.ate - spec.deltas["XY"]) < 1e-10
    assert rep.invertible
    for x in (0, 1):
        assert 0 <= rep.p_do[x] <= 1
        assert rep.p_do[x] == pytest.approx(dgp.do_distribution(spec, x), abs=1e-10)
    assert set(rep.condition_numbers) == {0, 1}
    assert rep.max_condition_number == max(rep.condition_numbers.values())


def test_report_record():
    rec = E.proximal_g(population(dgp.default_spec())).to_record()
    assert set(rec) >= {"method", "p_do_0", "p_do_1", "ate", "cond_x0", "cond_x1", "invertible", "warnings"}
    assert rec["method"] == "proximal"
    assert rec["ate"] == pytest.approx(rec["p_do_1"] - rec["p_do_0"])


def test_out_of_range_estimates_flagged_not_clipped():
    rep = E.EstimateReport(E.PROXIMAL, {0: -0.1, 1: 0.5}, warnings=E._range_warnings({0: -0.1, 1: 0.5}))
    assert rep.p_do[0] == -0.1
    assert rep.warnings == ("p_do_0_out_of_range",)


def test_backdoor_on_observed_confounder_matches_truth():
    spec = dgp.default_spec()
    joint = dgp.exact_joint(spec)
    full = E.ProbModel.from_joint(joint, ["U", "W", "Z", "X", "Y"])
    rep = E.backdoor_g(full, ["U"])
    assert rep.method == E.BACKDOOR
    assert rep.ate == pytest.approx(dgp.true_ate(spec), abs=1e-12)
    # the proximal route without U agrees
    assert E.proximal_g(population(spec)).ate == pytest.approx(rep.ate, abs=1e-10)


def test_backdoor_fig1c_style_adjustment_sampled():
    # U observed and used as the adjustment column
    spec = dgp.default_spec(UW=0.0, WY=0.0)
    d = dgp.sample(spec, 400_000, 5)
    m = E.fit(d, ["U", "X", "Y"])
    rep = E.backdoor_g(m, ["U"])
    se = 2 * 0.5 / math.sqrt(d.n / 4)
    assert abs(rep.ate - 0.1) < 4 * se


def test_backdoor_empty_set_is_naive_contrast():
    m = population(dgp.default_spec())
    rep = E.backdoor_g(m, [])
    p = m.marginal(["X", "Y"])
    assert rep.method == E.NAIVE
    assert rep.ate == pytest.approx(p[1, 1] / p[1].sum() - p[0, 1] / p[0].sum(), abs=1e-15)


def test_naive_unbiased_without_confounding_into_y():
    m = population(dgp.default_spec(UY=0.0, WY=0.0))
    assert E.backdoor_g(m, []).ate == pytest.approx(0.1, abs=1e-12)


def test_regression_identity():
    d = dataset([[x, x, z, w] for x in (0, 1) for z in (0, 1) for w in (0, 1)] * 3)
    rep = E.regression_ate(d, [])
    assert rep.ate == pytest.approx(1.0, abs=1e-12)
    assert rep.ci[0] <= 1.0 <= rep.ci[1]


def test_regression_unbiased_without_confounding():
    spec = dgp.DgpSpec(dgp.BASE, 0.5, {"XY": 0.1})
    d = dgp.sample(spec, 200_000, 9)
    rep = E.regression_ate(d, ["Z", "W"])
    assert rep.ci[0] < 0.1 < rep.ci[1]
    assert E.regression_ate(population(spec), ["Z", "W"]).ate == pytest.approx(0.1, abs=1e-12)


def test_regression_matches_lstsq_and_ci_formula():
    d = dgp.sample(dgp.default_spec(), 20_000, 4)
    rep = E.regression_ate(d, ["Z", "W"])
    design = np.column_stack([np.ones(d.n), d.column("X"), d.column("Z"), d.column("W")]).astype(float)
    target = d.column("Y").astype(float)
    beta, rss, *_ = np.linalg.lstsq(design, target, rcond=None)
    assert rep.ate == pytest.approx(beta[1], abs=1e-12)
    se = math.sqrt(rss[0] / (d.n - 4) * np.linalg.inv(design.T @ design)[1, 1])
    assert rep.stderr == pytest.approx(se, rel=1e-9)
    assert rep.ci[1] - rep.ci[0] == pytest.approx(2 * 1.96 * se, rel=1e-3)


def test_regression_biased_under_confounding():
    spec = dgp.default_spec()
    d = dgp.sample(spec, 10 ** 6, 0)
    rep = E.regression_ate(d, ["Z", "W"])
    assert E.relative_bias(rep.ate, 0.1) > 0.05


def test_population_regression_equals_large_sample():
    spec = dgp.default_spec()
    pop = E.regression_ate(population(spec), ["Z", "W"])
    d = dgp.sample(spec, 10 ** 6, 1)
    samp = E.regression_ate(d, ["Z", "W"])
    assert abs(pop.ate - samp.ate) < 4 * samp.stderr


def test_regression_rank_deficient():
    d = dataset([[x, 0, x, 0] for x in (0, 1)] * 5)
    with pytest.raises(RankDeficient):
        E.regression_ate(d, ["Z"])


def test_relative_bias():
    assert E.relative_bias(0.11, 0.10) == pytest.approx(0.10)
    assert E.relative_bias(0.10, 0.10) == 0.0
    assert E.relative_bias(0.244 * 0.1 + 0.1, 0.1) == pytest.approx(0.244)
    with pytest.raises(ZeroTruth):
        E.relative_bias(0.1, 0.0)


def test_fit_agrees_with_observed_joint():
    spec = dgp.default_spec(dgp.EXOTIC3)
    exact = population(spec).marginal(["X", "Y", "Z", "W"])
    m = E.fit(dgp.sample(spec, 10 ** 6, 3)).marginal(["X", "Y", "Z", "W"])
    se = np.sqrt(exact * (1 - exact) / 10 ** 6)
    assert (np.abs(m - exact) < 5 * se).all()


def test_consistency_over_seeds():
    spec = dgp.default_spec()
    errs = [abs(E.proximal_g(E.fit(dgp.sample(spec, 10 ** 6, (1, i)))).ate - 0.1) for i in range(20)]
    assert np.mean(errs) < 0.01
