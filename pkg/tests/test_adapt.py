import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _oracles import exhaustive_doerfler, exhaustive_min_size
from clusterafem.adapt import (AfemConfig, AfemError, ClusterSeparationWarning,
                               doerfler_mark, run_afem)
from clusterafem.assembly import assemble_mass, assemble_stiffness
from clusterafem.eigensolver import smallest_eigenpairs
from clusterafem.estimator import eta_indicators
from clusterafem.fe_space import build_space
from clusterafem.mesh import build_initial, refine


def test_doerfler_example():
    assert doerfler_mark([4, 3, 2, 1], 0.5).tolist() == [0, 1]
    assert doerfler_mark([4, 3, 2, 1], 0.3).tolist() == [0]
    assert doerfler_mark([1, 2, 3, 4], 0.7).tolist() == [2, 3]


def test_doerfler_theta_one_and_dominant():
    assert doerfler_mark([0.0, 1.0, 2.0, 0.0], 1.0).tolist() == [1, 2]
    assert doerfler_mark([1e-9, 1.0, 1e-9], 0.9).tolist() == [1]
    assert doerfler_mark(np.zeros(4), 0.5).size == 0
    with pytest.raises(ValueError):
        doerfler_mark([1.0], 0.0)
    with pytest.raises(ValueError):
        doerfler_mark([-1.0, 2.0], 0.5)


def test_doerfler_ties_broken_by_id():
    assert doerfler_mark([1.0, 1.0, 1.0, 1.0], 0.5).tolist() == [0, 1]


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 1000), min_size=1, max_size=15), st.floats(0.05, 1.0))
def test_doerfler_minimal_against_exhaustive(eta2, theta):
    # integer indicators keep every partial sum exact
    eta2 = np.array(eta2, dtype=float)
    if eta2.sum() == 0:
        assert doerfler_mark(eta2, theta).size == 0
        return
    marked = doerfler_mark(eta2, theta)
    assert eta2[marked].sum() >= theta * eta2.sum()
    assert marked.size == exhaustive_min_size(eta2, theta)


def real_indicator_sets():
    # actual estimator values on every mesh of a refinement chain up to 15 elements
    m = build_initial("unit_square", 1)
    rng = np.random.default_rng(2)
    out = []
    while m.ne <= 15:
        V = build_space(m, 3)
        eig = smallest_eigenpairs(assemble_stiffness(V), assemble_mass(V), 2)
        out.append(eta_indicators(V, eig.select([0, 1])).values)
        m = refine(m, [int(rng.integers(m.ne))])
    return out


def test_doerfler_minimal_on_small_meshes():
    sets = real_indicator_sets()
    assert len(sets) >= 3 and max(s.size for s in sets) <= 15
    for eta2 in sets:
        for theta in (0.1, 0.3, 0.5, 0.7, 0.9):
            marked = doerfler_mark(eta2, theta)
            assert eta2[marked].sum() >= theta * eta2.sum()
            assert marked.size == exhaustive_min_size(eta2, theta)
    assert exhaustive_doerfler(sets[0], 0.5) == exhaustive_min_size(sets[0], 0.5)


def test_afem_unit_square_rate_and_history():
    hist = run_afem(AfemConfig("unit_square", 1, 0, 1, 0.5, max_dofs=5000))
    d, eta = hist.dofs, hist.eta
    assert d[-1] > 5000 and d[-2] <= 5000
    assert np.all(np.diff(d) > 0)
    slope = np.polyfit(np.log(d[-4:]), np.log(eta[-4:]), 1)[0]
    assert abs(slope + 0.5) <= 0.1
    lam = hist.eigenvalues[:, 0]
    assert np.all(np.diff(lam) <= 1e-9 * lam[:-1])
    assert lam[-1] >= 2 * np.pi ** 2
    assert hist.space.dim == d[-1] and hist.mesh.ne == hist.records[-1].n_elements
    assert hist.status == "completed"
    assert hist.as_dict()["records"][0]["iteration"] == 0


def test_afem_slit_cluster_values_and_nestedness():
    calls = []
    hist = run_afem(AfemConfig("slit", 2, 0, 4, 0.5, max_dofs=3000), callback=calls.append)
    assert len(calls) == len(hist)
    lam = hist.eigenvalues
    assert lam.shape[1] == 4
    assert np.all(np.diff(lam, axis=0) <= 1e-9 * lam[:-1])
    assert abs(lam[-1, 3] / (2 * np.pi ** 2) - 1) < 1e-3
    # marked sets grow the mesh in every completed step
    assert all(r.n_marked > 0 for r in hist.records[:-1])


def test_theta_one_is_uniform_and_suboptimal_on_slit():
    hist = run_afem(AfemConfig("slit", 2, 0, 1, 1.0, max_dofs=8000))
    ne = [r.n_elements for r in hist.records]
    # every element is bisected once per step
    assert all(b == 2 * a for a, b in zip(ne, ne[1:]))
    slope = np.polyfit(np.log(hist.dofs[-3:]), np.log(hist.eta[-3:]), 1)[0]
    # the tip singularity limits uniform refinement well below the optimal -1
    assert slope > -0.75


def test_separation_warning_for_degenerate_cluster():
    # the 2nd and 3rd eigenvalues of the square coincide; splitting them apart warns
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        run_afem(AfemConfig("unit_square", 1, 0, 2, 0.5, max_dofs=200))
    assert any(issubclass(w.category, ClusterSeparationWarning) for w in rec)


def test_eigensolver_failure_keeps_partial_history(monkeypatch):
    import clusterafem.adapt as adapt
    real = adapt.smallest_eigenpairs
    calls = {"n": 0}

    def flaky(*args, **kwargs):
        calls["n"] += 1
        if calls["n"] == 3:
            raise adapt.EigensolverError("forced")
        return real(*args, **kwargs)

    monkeypatch.setattr(adapt, "smallest_eigenpairs", flaky)
    with pytest.raises(AfemError) as info:
        run_afem(AfemConfig("unit_square", 1, max_dofs=10 ** 6))
    assert len(info.value.history) == 2
    assert info.value.history.status == "eigensolver_failed"


def test_config_validation():
    with pytest.raises(ValueError):
        AfemConfig(theta=1.5)
    with pytest.raises(ValueError):
        AfemConfig(N=0)
    with pytest.raises(ValueError):
        run_afem(AfemConfig("unit_square", 1, 0, 4, subdivisions=1))
