import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from glira.data import make_synthetic
from glira.distill import (
    DistillConfig,
    ModelOracle,
    distill,
    glira_kl_preset,
    glira_mse_preset,
    kd_loss,
    kd_loss_and_grad,
    kl_distill_loss,
    kl_grad_wrt_student_logits,
    mse_logit_loss,
)
from glira.errors import ConfigError, ShapeError
from glira.model import ArchitectureSpec, cross_entropy, forward_logits, init_classifier, softmax

from oracles import central_diff, loop_forward, rel_err

logit = st.floats(-20, 20, allow_nan=False)
prob_vec = st.lists(st.floats(0.01, 1.0), min_size=2, max_size=6).map(lambda v: np.array(v) / sum(v))


class TestKlLoss:
    def test_identity(self):
        p = np.array([0.2, 0.3, 0.5])
        assert kl_distill_loss(p, p, 3.0) == 0.0

    def test_tau_squared(self):
        ps, pt = np.array([0.5, 0.5]), np.array([0.75, 0.25])
        assert kl_distill_loss(ps, pt, 2.0) == pytest.approx(4 * kl_distill_loss(ps, pt, 1.0), rel=1e-14)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            kl_distill_loss([0.5, 0.5], [0.2, 0.3, 0.5], 1.0)

    def test_zero_student_prob_finite(self):
        assert np.isfinite(kl_distill_loss([1.0, 0.0], [0.5, 0.5], 1.0))

    @given(prob_vec, prob_vec)
    def test_nonnegative(self, a, b):
        if len(a) == len(b):
            assert kl_distill_loss(a, b, 1.0) >= 0.0

    def test_batch_rows(self):
        ps = np.array([[0.5, 0.5], [0.9, 0.1]])
        pt = np.array([[0.75, 0.25], [0.9, 0.1]])
        out = kl_distill_loss(ps, pt, 1.0)
        assert out.shape == (2,)
        assert out[1] == pytest.approx(0.0, abs=1e-15)


class TestMseLoss:
    def test_equal(self):
        assert mse_logit_loss([1.0, -2.0], [1.0, -2.0]) == 0.0

    def test_example(self):
        assert mse_logit_loss([1.0, 2.0], [0.0, 0.0]) == 5.0

    @given(st.lists(logit, min_size=3, max_size=3), st.lists(logit, min_size=3, max_size=3))
    def test_symmetric(self, a, b):
        assert mse_logit_loss(a, b) == mse_logit_loss(b, a)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            mse_logit_loss([1.0], [1.0, 2.0])


class TestKdLoss:
    zs = np.array([0.3, -1.2, 0.8])
    zt = np.array([1.0, 0.1, -0.4])

    @pytest.mark.parametrize("variant", ["kl", "mse"])
    def test_alpha_zero_is_cross_entropy(self, variant):
        cfg = DistillConfig(alpha=0.0, temperature=3.0, variant=variant)
        assert kd_loss(1, self.zs, self.zt, cfg) == cross_entropy(softmax(self.zs), 1)

    def test_alpha_one_kl(self):
        cfg = DistillConfig(alpha=1.0, temperature=3.0, variant="kl")
        expected = kl_distill_loss(softmax(self.zs, 3.0), softmax(self.zt, 3.0), 3.0)
        assert kd_loss(1, self.zs, self.zt, cfg) == pytest.approx(expected, rel=1e-14)

    def test_alpha_one_mse(self):
        cfg = DistillConfig(alpha=1.0, variant="mse")
        assert kd_loss(0, self.zs, self.zt, cfg) == pytest.approx(mse_logit_loss(self.zs, self.zt), rel=1e-14)

    @pytest.mark.parametrize("variant", ["kl", "mse"])
    def test_alpha_half_is_mean_of_endpoints(self, variant):
        lo = kd_loss(2, self.zs, self.zt, DistillConfig(alpha=0.0, temperature=2.0, variant=variant))
        hi = kd_loss(2, self.zs, self.zt, DistillConfig(alpha=1.0, temperature=2.0, variant=variant))
        mid = kd_loss(2, self.zs, self.zt, DistillConfig(alpha=0.5, temperature=2.0, variant=variant))
        assert mid == pytest.approx((lo + hi) / 2, rel=1e-14)

    def test_mse_with_probabilities_needs_reconstruction(self):
        with pytest.raises(ConfigError):
            kd_loss(0, self.zs, softmax(self.zt), DistillConfig(variant="mse"), teacher_mode="probabilities")

    def test_mse_with_reconstructed_probabilities(self):
        zt = self.zt - self.zt.mean()
        cfg = DistillConfig(variant="mse", reconstruct=True)
        got = kd_loss(0, self.zs, softmax(zt), cfg, teacher_mode="probabilities")
        assert got == pytest.approx(mse_logit_loss(self.zs, zt), abs=1e-9)

    def test_kl_with_probabilities_matches_logits(self):
        cfg = DistillConfig(temperature=4.0, variant="kl")
        a = kd_loss(0, self.zs, self.zt, cfg, teacher_mode="logits")
        b = kd_loss(0, self.zs, softmax(self.zt), cfg, teacher_mode="probabilities")
        assert a == pytest.approx(b, rel=1e-10)


class TestConfig:
    @pytest.mark.parametrize("kwargs", [{"alpha": 1.5}, {"temperature": 0.0}, {"variant": "l1"}, {"steps": -1}])
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            DistillConfig(**kwargs)

    def test_presets(self):
        assert glira_kl_preset().variant == "kl"
        assert glira_mse_preset().variant == "mse"
        assert glira_mse_preset().alpha == 1.0


@pytest.mark.parametrize("variant", ["kl", "mse"])
def test_kd_gradient_matches_finite_differences(variant):
    rng = np.random.default_rng(11 if variant == "kl" else 12)
    for _ in range(20):
        widths = (int(rng.integers(2, 5)), int(rng.integers(2, 7)), int(rng.integers(2, 5)))
        act = ("relu", "tanh")[int(rng.integers(2))]
        spec = ArchitectureSpec(widths, act, init_seed=int(rng.integers(1 << 30)))
        student = init_classifier(spec)
        n = int(rng.integers(1, 4))
        x = rng.normal(size=(n, widths[0]))
        y = rng.integers(0, widths[-1], size=n)
        zt = rng.normal(size=(n, widths[-1]))
        cfg = DistillConfig(alpha=float(rng.uniform()), temperature=float(rng.choice([1.0, 2.0, 5.0])),
                            variant=variant)
        _, grad, _ = kd_loss_and_grad(student, x, y, zt, cfg)

        def f(theta):
            return np.mean([kd_loss(yi, loop_forward(widths, act, theta, xi), zti, cfg)
                            for xi, yi, zti in zip(x, y, zt)])

        assert rel_err(grad, central_diff(f, student.params)) < 1e-4


def test_kl_grad_wrt_logits_matches_fd():
    zs, zt, tau = np.array([0.2, -0.5, 1.1]), np.array([1.0, 0.0, -1.0]), 3.0
    fd = central_diff(lambda z: kl_distill_loss(softmax(z, tau), softmax(zt, tau), tau), zs)
    assert rel_err(kl_grad_wrt_student_logits(zs, zt, tau), fd) < 1e-6


class TestDistill:
    def setup_method(self):
        self.ds = make_synthetic(2, 3, 20, 1.0, seed=0)
        self.spec = ArchitectureSpec((3, 6, 2), init_seed=5)
        self.teacher = ModelOracle(init_classifier(ArchitectureSpec((3, 4, 2), init_seed=9)))

    def test_zero_steps_is_init(self):
        student = distill(self.teacher, self.ds, self.spec, DistillConfig(steps=0))
        assert student.params.tobytes() == init_classifier(self.spec).params.tobytes()

    def test_deterministic(self):
        cfg = DistillConfig(steps=30, batch_size=8, seed=4, variant="kl", temperature=2.0)
        a = distill(self.teacher, self.ds, self.spec, cfg)
        b = distill(self.teacher, self.ds, self.spec, cfg)
        assert a.params.tobytes() == b.params.tobytes()

    def test_logs_both_terms(self):
        seen = []
        distill(self.teacher, self.ds, self.spec, DistillConfig(steps=3, batch_size=8),
                log=lambda step, loss, extra: seen.append(extra))
        assert len(seen) == 3 and set(seen[0]) == {"ce_term", "distill_term"}

    def test_mse_from_probability_teacher_rejected(self):
        oracle = ModelOracle(self.teacher.model, mode="probabilities")
        with pytest.raises(ConfigError):
            distill(oracle, self.ds, self.spec, DistillConfig(variant="mse", steps=1))

    def test_mse_student_learns_teacher_logits(self):
        cfg = DistillConfig(variant="mse", steps=400, batch_size=20, learning_rate=0.01, seed=1)
        student = distill(self.teacher, self.ds, self.spec, cfg)
        before = mse_logit_loss(forward_logits(init_classifier(self.spec), self.ds.features),
                                self.teacher.query(self.ds.features)).mean()
        after = mse_logit_loss(forward_logits(student, self.ds.features),
                               self.teacher.query(self.ds.features)).mean()
        assert after < 0.1 * before

    def test_oracle_mode_validated(self):
        with pytest.raises(ConfigError):
            ModelOracle(self.teacher.model, mode="labels")
