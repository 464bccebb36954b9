"""Control-chart benchmark: surrogate data, loader, distances, accuracy table."""

import numpy as np
import pytest
from scipy.spatial.distance import pdist, squareform

from topofolio.casestudy import (
    CASESTUDY_ALGORITHMS,
    CASESTUDY_DISTANCES,
    CONTROL_CHART_CLASSES,
    casestudy_distance_matrix,
    casestudy_to_csv,
    load_control_charts,
    run_casestudy,
    synthesize_control_charts,
)
from topofolio.panels import DataError


class TestSynthesize:
    def test_canonical_shape(self):
        X, y = synthesize_control_charts(seed=0)
        assert X.shape == (600, 60)
        assert y.shape == (600,)
        assert np.bincount(y).tolist() == [100] * 6
        assert len(CONTROL_CHART_CLASSES) == 6

    def test_seed_determinism(self):
        X1, _ = synthesize_control_charts(n_per_class=5, seed=3)
        X2, _ = synthesize_control_charts(n_per_class=5, seed=3)
        X3, _ = synthesize_control_charts(n_per_class=5, seed=4)
        assert np.array_equal(X1, X2)
        assert not np.array_equal(X1, X3)

    def test_class_shapes_are_visible(self):
        X, y = synthesize_control_charts(n_per_class=20, seed=11)
        t = np.arange(60.0)
        slopes = {c: [np.polyfit(t, r, 1)[0] for r in X[y == c]]
                  for c in range(6)}
        # flat classes stay flat, trend classes carry their sign
        assert max(abs(s) for s in slopes[0]) < 0.15
        assert max(abs(s) for s in slopes[1]) < 0.15
        assert min(slopes[2]) > 0.15
        assert max(slopes[3]) < -0.15
        # shifts move the late-chart level by at least the minimum jump
        for c, sign in ((4, 1.0), (5, -1.0)):
            rows = X[y == c]
            jump = sign * (rows[:, 40:].mean(axis=1) - rows[:, :20].mean(axis=1))
            assert jump.min() > 5.0
        # normal charts hover around the base level
        assert np.all(np.abs(X[y == 0].mean(axis=1) - 30.0) < 2.0)

    def test_validation(self):
        with pytest.raises(ValueError, match="n_per_class"):
            synthesize_control_charts(n_per_class=0)
        with pytest.raises(ValueError, match="length"):
            synthesize_control_charts(length=3)


class TestLoader:
    def test_round_trip(self, tmp_path):
        X, y = synthesize_control_charts(seed=2)
        path = tmp_path / "charts.txt"
        with open(path, "w") as fh:
            for row in X:
                fh.write(" ".join("%.17g" % v for v in row) + "\n")
        X2, y2 = load_control_charts(path)
        assert np.array_equal(X, X2)
        assert np.array_equal(y, y2)

    def test_token_count_mismatch(self, tmp_path):
        path = tmp_path / "short.txt"
        path.write_text("1.0 2.0 3.0\n")
        with pytest.raises(DataError, match="expected 36000 values"):
            load_control_charts(path)

    def test_non_numeric_token(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text(" ".join(["1.0"] * 35999 + ["oops"]))
        with pytest.raises(DataError, match="token 36000 is not numeric"):
            load_control_charts(path)

    def test_non_finite_token(self, tmp_path):
        path = tmp_path / "inf.txt"
        path.write_text(" ".join(["1.0"] * 10 + ["inf"] + ["1.0"] * 35989))
        with pytest.raises(DataError, match="token 11 is not finite"):
            load_control_charts(path)


class TestDistanceMatrix:
    def setup_method(self):
        X, _ = synthesize_control_charts(n_per_class=1, seed=2)
        self.X = X

    def test_euclidean_matches_reference(self):
        D = casestudy_distance_matrix(self.X, "ED")
        assert np.allclose(D, squareform(pdist(self.X)), atol=1e-12)

    @pytest.mark.parametrize("name,transform", [
        ("d1", "spearman"), ("d2", "pearson"),
    ])
    def test_correlation_distances(self, name, transform):
        rows = self.X
        if transform == "spearman":
            rows = np.argsort(np.argsort(rows, axis=1), axis=1).astype(float)
        rho = np.corrcoef(rows)
        ref = np.sqrt(np.maximum(0.0, 2.0 * (1.0 - rho)))
        np.fill_diagonal(ref, 0.0)
        D = casestudy_distance_matrix(self.X, name)
        assert np.allclose(D, ref, atol=1e-12)

    def test_persistence_distance_is_a_distance_matrix(self):
        D = casestudy_distance_matrix(self.X[:4], "WD")
        assert D.shape == (4, 4)
        assert np.array_equal(D, D.T)
        assert np.all(np.diag(D) == 0.0)
        assert np.all(D >= 0.0)

    def test_unknown_name(self):
        with pytest.raises(ValueError, match="unknown distance"):
            casestudy_distance_matrix(self.X, "WD2")

    def test_needs_two_charts(self):
        with pytest.raises(ValueError, match="at least two"):
            casestudy_distance_matrix(self.X[:1], "ED")


class TestRunCasestudy:
    def test_separable_subset(self):
        X, y = synthesize_control_charts(n_per_class=6, seed=4)
        keep = np.isin(y, (0, 2, 4))
        table = run_casestudy(X[keep], y[keep], distances=("ED", "d2"), k=3)
        assert list(table) == ["ED", "d2"]
        for row in table.values():
            assert list(row) == list(CASESTUDY_ALGORITHMS)
            for acc in row.values():
                assert 0.0 <= acc <= 1.0
        assert table["ED"]["KMedoids"] > 0.7

    def test_deterministic(self):
        X, y = synthesize_control_charts(n_per_class=4, seed=9)
        a = run_casestudy(X, y, distances=("ED",), k=6)
        b = run_casestudy(X, y, distances=("ED",), k=6)
        assert a == b

    def test_validation(self):
        X, y = synthesize_control_charts(n_per_class=2, seed=0)
        with pytest.raises(ValueError, match="align"):
            run_casestudy(X, y[:-1])
        with pytest.raises(ValueError, match="unknown algorithm"):
            run_casestudy(X, y, algorithms=("OPTICS",))
        with pytest.raises(ValueError, match="k must lie"):
            run_casestudy(X, y, k=1)
        with pytest.raises(ValueError, match="at least one"):
            run_casestudy(X, y, distances=())

    def test_full_distance_roster(self):
        assert CASESTUDY_DISTANCES == ("WD", "LD", "AWD", "ALD", "DWD", "DLD",
                                       "d1", "d2", "ED")


class TestCsv:
    def test_emission(self, tmp_path):
        X, y = synthesize_control_charts(n_per_class=4, seed=9)
        table = run_casestudy(X, y, distances=("ED", "d1"), k=6)
        path = tmp_path / "acc.csv"
        casestudy_to_csv(table, path)
        again = tmp_path / "acc2.csv"
        casestudy_to_csv(table, again)
        assert path.read_bytes() == again.read_bytes()
        lines = path.read_text().splitlines()
        assert lines[0] == "distance,algorithm,accuracy"
        assert len(lines) == 1 + 2 * len(CASESTUDY_ALGORITHMS)
        name, algo, acc = lines[1].split(",")
        assert (name, algo) == ("ED", "KMedoids")
        assert float(acc) == table["ED"]["KMedoids"]
