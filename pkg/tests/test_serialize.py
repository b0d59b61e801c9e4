"""Round trips for the matrix CSV format and model folders."""
import numpy as np

from latentlqr import (ExperimentConfig, make_benchmark_instance, run_pipeline)
from latentlqr.regression import DecoderClass, FittedRegressor
from latentlqr.serialize import (load_matrix, load_policy, load_regressor, load_sysid,
                                 save_matrix, save_regressor)


class TestMatrixCsv:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(0)
        m = rng.standard_normal((3, 5))
        save_matrix(tmp_path / "m.csv", m)
        assert np.array_equal(load_matrix(tmp_path / "m.csv"), m)

    def test_header(self, tmp_path):
        save_matrix(tmp_path / "m.csv", np.zeros((2, 4)))
        first = (tmp_path / "m.csv").read_text().splitlines()[0]
        assert first == "2,4"

    def test_regressor_roundtrip(self, tmp_path):
        cls = DecoderClass(candidates=(lambda y: np.atleast_2d(y),))
        reg = FittedRegressor(candidate_index=0, m=np.array([[1.5, -2.0]]),
                              empirical_loss=0.0, decoder_class=cls)
        save_regressor(tmp_path / "r.csv", reg)
        loaded = load_regressor(tmp_path / "r.csv", cls)
        assert loaded.candidate_index == 0
        assert np.array_equal(loaded.m, reg.m)
        obs = np.array([[1.0, 2.0], [3.0, 4.0]])
        assert np.allclose(loaded.predict(obs), reg.predict(obs))


class TestModelFolders:
    def test_policy_roundtrip_reproduces_actions(self, tmp_path):
        config = ExperimentConfig(instance="scalar-identity", n_id=1200, n_op=500,
                                  t_horizon=2, n_eval=100, seed=9, sigma=0.3,
                                  kappa0_override=4)
        result = run_pipeline(config, outdir=tmp_path)
        spec, emission, cls = make_benchmark_instance("scalar-identity")
        loaded = load_policy(tmp_path / "policy", cls)
        est = load_sysid(tmp_path / "sysid")
        assert np.allclose(est.a_hat, result.estimates.a_hat)

        from latentlqr import rollout

        b1 = rollout(spec, emission, result.learned.policy(), horizon=2, n_traj=20,
                     base_seed=123)
        b2 = rollout(spec, emission, loaded.policy(), horizon=2, n_traj=20, base_seed=123)
        assert np.allclose(b1.inputs, b2.inputs)
        assert np.allclose(b1.costs, b2.costs)
