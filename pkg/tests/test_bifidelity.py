import json
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bifire import bifidelity as bf
from bifire import io
from bifire.errors import ConfigError, IllConditionedError, RankDeficiencyError
from bifire.mapping import apply_map, compute_descriptors
from bifire.sampling import ParamBox, lhs_sample
from bifire.solver import Grid, IgnitionSpec, PhysicalParams

from conftest import tiny_config_1d
from oracles import greedy_residual_selection, ridge_normal_equations


def rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(a)


# ---------------------------------------------------------------------------
# Gramian and greedy selection
# ---------------------------------------------------------------------------

@given(st.integers(2, 25), st.integers(0, 2**32 - 1))
def test_gramian_symmetric_psd(M, seed):
    A = np.random.default_rng(seed).normal(size=(10, M))
    G = bf.gramian(A)
    assert np.array_equal(G, G.T)
    assert np.linalg.eigvalsh(G).min() > -1e-10 * np.abs(G).max()


@given(st.integers(3, 30), st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_selection_matches_residual_greedy(M, m, seed):
    rng = np.random.default_rng(seed)
    m = min(m, M)
    A = rng.normal(size=(40, M)) * rng.uniform(0.5, 2.0, M)
    sel = bf.select_nodes(bf.gramian(A), m)
    assert list(sel.indices) == greedy_residual_selection(A, m)


def test_selection_tie_goes_to_lowest_index():
    A = np.eye(5)[:, [0, 1, 2, 3, 4]]
    assert bf.select_nodes(bf.gramian(A), 3).indices == (0, 1, 2)
    B = np.column_stack([np.ones(4), 2 * np.eye(4)[:, 0], 2 * np.eye(4)[:, 1]])
    # columns 1 and 2 tie at norm^2 = 4; column 0 has 4 too
    assert bf.select_nodes(bf.gramian(B), 1).indices == (0,)


def test_selection_pivots_are_residuals():
    A = np.array([[3.0, 0.0, 1.0], [0.0, 1.0, 2.0]])
    sel = bf.select_nodes(bf.gramian(A), 2)
    # after column 0, residuals are 1 (column 1) and 4 (column 2)
    assert sel.indices == (0, 2)
    assert sel.pivots == pytest.approx((9.0, 4.0))


def test_selection_rank_deficiency():
    A = np.column_stack([np.ones(5), 2 * np.ones(5), 3 * np.ones(5)])
    with pytest.raises(RankDeficiencyError) as exc:
        bf.select_nodes(bf.gramian(A), 2)
    assert exc.value.achievable == 1


def test_selection_argument_checks():
    with pytest.raises(ConfigError):
        bf.select_nodes(np.eye(3), 4)
    with pytest.raises(ConfigError):
        bf.select_nodes(np.ones((2, 3)), 1)


def test_selection_warns_when_ill_conditioned():
    A = np.array([[1.0, 1.0], [0.0, 1e-5]])
    with pytest.warns(RuntimeWarning, match="condition"):
        bf.select_nodes(bf.gramian(A), 2)


def test_standardized_descriptors_and_beta():
    rng = np.random.default_rng(0)
    V = rng.normal(size=(6, 5))
    D = rng.normal(size=(5, 2)) * [10.0, 0.1] + [3.0, -1.0]
    Z, mean, std = bf.standardize(D)
    np.testing.assert_allclose(Z.mean(axis=0), 0.0, atol=1e-14)
    np.testing.assert_allclose(Z.std(axis=0), 1.0)
    A = bf.augmented_matrix(V, D, 2.0)
    assert A.shape == (8, 5)
    np.testing.assert_allclose(A[6:], 2.0 * Z.T)
    np.testing.assert_array_equal(bf.augmented_matrix(V, D, 0.0)[:6], V)


# ---------------------------------------------------------------------------
# ridge projection
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("lam", [0.0, 1e-6, 1e-2])
def test_projection_matches_normal_equations(lam):
    rng = np.random.default_rng(7)
    for _ in range(20):
        B = rng.normal(size=(20, 5))
        t = rng.normal(size=20)
        C = bf.project_coefficients(B, t, lam)
        ref = ridge_normal_equations(B, t, lam)
        assert np.linalg.norm(C - ref) <= 1e-10 * np.linalg.norm(ref)


def test_projection_trivial_cases():
    v = np.array([1.0, 2.0, 2.0])
    assert bf.project_coefficients(v, 2 * v, 0.0) == pytest.approx([2.0])
    with pytest.raises(IllConditionedError):
        bf.project_coefficients(np.column_stack([v, v]), v, 0.0)
    with pytest.raises(ConfigError):
        bf.project_coefficients(v, v, -1.0)


def test_ridge_shrinks_monotonically():
    rng = np.random.default_rng(3)
    B, t = rng.normal(size=(30, 6)), rng.normal(size=30)
    norms = [np.linalg.norm(bf.project_coefficients(B, t, lam)) for lam in np.logspace(-6, 4, 15)]
    assert all(a >= b for a, b in zip(norms, norms[1:]))
    assert norms[-1] < 1e-2 * norms[0]


def test_residual_non_increasing_for_nested_bases():
    rng = np.random.default_rng(4)
    B, t = rng.normal(size=(40, 8)), rng.normal(size=40)
    res = [np.linalg.norm(B[:, :k] @ bf.project_coefficients(B[:, :k], t, 1e-6) - t) for k in range(1, 9)]
    assert all(a >= b - 1e-12 for a, b in zip(res, res[1:]))


def test_reconstruct_uses_shared_coefficients():
    rng = np.random.default_rng(5)
    lf = rng.normal(size=(3, 50, 4))
    hf = rng.normal(size=(3, 50, 4))
    C_true = rng.normal(size=(3, 4))
    target = np.einsum("knm,km->kn", lf, C_true)
    fields, C = bf.reconstruct(lf, hf, target, 0.0)
    np.testing.assert_allclose(C, C_true, rtol=1e-10)
    np.testing.assert_allclose(fields, np.einsum("knm,km->kn", hf, C_true), rtol=1e-9)


# ---------------------------------------------------------------------------
# ensembles and the end-to-end offline/online stages
# ---------------------------------------------------------------------------

def test_run_key_tracks_inputs():
    g = Grid.from_extent(100.0, 10.0, 0.5, 5.0)
    p, ig = PhysicalParams(), IgnitionSpec()
    k = bf.run_key(g, p, ig, {"u_w": 1.0, "S_e0": 0.1})
    assert k == bf.run_key(g, p, ig, {"u_w": 1.0, "S_e0": 0.1})
    assert k != bf.run_key(g, p, ig, {"u_w": 1.5, "S_e0": 0.1})
    assert k != bf.run_key(g, p.replace(D_b=4.0), ig, {"u_w": 1.0, "S_e0": 0.1})


def test_run_ensemble_resumes(tmp_path):
    g = Grid.from_extent(100.0, 10.0, 0.5, 5.0)
    s = lhs_sample(ParamBox((("u_w", 1, 2), ("S_e0", 0.05, 0.1))), 4, 0)
    args = (g, PhysicalParams(), IgnitionSpec(center=(50.0,)), s, [0, 1, 2, 3], tmp_path, "lf", "LF")
    assert len(bf.run_ensemble(*args)) == 4
    assert bf.run_ensemble(*args) == {}
    (tmp_path / "lf_00002.pyro").write_bytes(b"PYRO")  # corrupt one run
    assert list(bf.run_ensemble(*args)) == [2]


@pytest.fixture(scope="module")
def tiny_model(tmp_path_factory):
    out = tmp_path_factory.mktemp("tiny")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        model = bf.offline_train(tiny_config_1d(), out)
    return model, out


def test_offline_artifacts(tiny_model):
    model, out = tiny_model
    cfg = model.config
    assert len(model.gamma) == cfg.m and len(set(model.gamma)) == cfg.m
    assert len(list((out / "lf").glob("*.pyro"))) == cfg.M
    assert len(list((out / "hf").glob("*.pyro"))) == len(set(model.gamma) | set(model.gamma_cf))
    assert len(list((out / "basis").glob("*.pyro"))) == 4 * cfg.m
    man = json.loads((out / "manifest.json").read_text())
    assert man["gamma"] == list(model.gamma) and man["config"]["M"] == cfg.M
    timings = json.loads((out / "timings.json").read_text())
    assert len(timings["lf"]) == cfg.M


def test_load_model_reproduces_predictions(tiny_model):
    model, out = tiny_model
    loaded = bf.load_model(out)
    z = {"u_w": 7.0, "S_e0": 0.1}
    a, b = bf.online_predict(model, z), bf.online_predict(loaded, z)
    assert a.equals(b)
    assert bf.conventional_predict(model, z).equals(bf.conventional_predict(loaded, z))


def test_cf_reproduces_training_nodes(tiny_model):
    model, out = tiny_model
    for j, k in enumerate(model.gamma_cf):
        v_hf = io.read_snapshot(out / "hf" / f"hf_{k:05d}.pyro")
        v = bf.conventional_predict(model, model.samples.row(k))
        for a, b in zip(v_hf.fields, v.fields):
            assert rel(a, b) <= 1e-3


def test_mf_reproduces_reference_domain_training_nodes(tiny_model):
    """At a node the LF target is a basis column, so C is (nearly) a unit vector."""
    model, out = tiny_model
    for j, k in enumerate(model.gamma):
        v_lf = bf.run_lf(model, model.samples.row(k))
        v_ref, _ = bf._mapped_lf(v_lf, model.ref, model.norm)
        fields, C = bf.reconstruct(model.lf_basis, model.hf_basis, bf._unit_vector(v_ref), model.lam)
        np.testing.assert_allclose(C, np.eye(len(model.gamma))[j][None, :].repeat(3, 0), atol=1e-3)
        for var in range(3):
            assert rel(model.hf_basis[var, :, j], fields[var]) <= 1e-3


def test_mf_prediction_is_finite_and_on_hf_grid(tiny_model):
    model, _ = tiny_model
    v = bf.online_predict(model, {"u_w": 6.0, "S_e0": 0.12})
    assert v.grid == model.config.hf_grid and all(np.all(np.isfinite(f)) for f in v.fields)
    assert v.fidelity == "MF"


def test_out_of_box_query_warns(tiny_model):
    model, _ = tiny_model
    with pytest.warns(RuntimeWarning, match="outside"):
        bf.run_lf(model, {"u_w": 20.0, "S_e0": 0.1})
