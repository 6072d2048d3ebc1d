import numpy as np
import pytest

from arithmeta.optim import (
    AdamState,
    MomentumLedger,
    SgdConfig,
    adam_step,
    ledger_fractions,
    ledger_update,
    sgd_step,
)


class TestSgd:
    def test_zero_grad_no_move(self):
        p = np.array([1.0, -2.0])
        assert np.array_equal(sgd_step(p, np.zeros(2), SgdConfig(0.1)), p)

    def test_hand_case(self):
        out = sgd_step(np.zeros(2), np.array([1.0, 2.0]), SgdConfig(0.1))
        assert np.allclose(out, [-0.1, -0.2], atol=1e-15)

    def test_stateless_inverse(self):
        p = np.array([0.3, 0.7])
        g = np.array([1.5, -0.4])
        cfg = SgdConfig(0.2)
        back = sgd_step(sgd_step(p, g, cfg), -g, cfg)
        assert np.max(np.abs(back - p)) <= 1e-15

    def test_rejects_nonpositive_lr(self):
        with pytest.raises(ValueError):
            SgdConfig(0.0)


class TestAdam:
    def test_first_step_magnitude(self):
        state = AdamState.zeros(1, learning_rate=1e-3)
        p, _ = adam_step(np.zeros(1), np.array([2.0]), state)
        assert p[0] == pytest.approx(-1e-3, abs=1e-6)

    def test_zero_grad_first_step_no_move(self):
        state = AdamState.zeros(3, learning_rate=0.1)
        p, new = adam_step(np.zeros(3), np.zeros(3), state)
        assert np.array_equal(p, np.zeros(3))
        assert new.step_count == 1

    def test_sign_equivariance(self):
        rng = np.random.default_rng(0)
        grads = [rng.normal(size=4) for _ in range(20)]
        pos = np.zeros(4)
        neg = np.zeros(4)
        sp = AdamState.zeros(4, learning_rate=0.05)
        sn = AdamState.zeros(4, learning_rate=0.05)
        for g in grads:
            pos, sp = adam_step(pos, g, sp)
            neg, sn = adam_step(neg, -g, sn)
        assert np.max(np.abs(pos + neg)) <= 1e-12

    def test_second_moment_nonnegative_and_count_increments(self):
        rng = np.random.default_rng(1)
        state = AdamState.zeros(5, learning_rate=0.01)
        p = np.zeros(5)
        for t in range(1, 51):
            p, state = adam_step(p, rng.normal(size=5), state)
            assert state.step_count == t
            assert np.all(state.v >= 0.0)
            assert np.all(np.isfinite(p))

    def test_layout_mismatch_rejected(self):
        state = AdamState.zeros(3)
        with pytest.raises(ValueError):
            adam_step(np.zeros(2), np.zeros(2), state)


class TestLedger:
    def test_single_update(self):
        led = MomentumLedger.zeros([0, 1], 3)
        g = np.array([1.0, -2.0, 0.5])
        led = ledger_update(led, g, 0, 0.9)
        assert np.allclose(led.contributions[0], 0.1 * g, atol=1e-15)
        assert np.all(led.contributions[1] == 0.0)

    def test_sum_matches_adam_first_moment(self):
        rng = np.random.default_rng(7)
        dim, beta1 = 6, 0.9
        led = MomentumLedger.zeros([0, 1, 2], dim)
        state = AdamState.zeros(dim, learning_rate=0.01, beta1=beta1)
        params = np.zeros(dim)
        for t in range(200):
            g = rng.normal(size=dim)
            dom = int(rng.integers(0, 3))
            led = ledger_update(led, g, dom, beta1)
            params, state = adam_step(params, g, state)
            assert np.max(np.abs(led.momentum() - state.m)) <= 1e-10

    def test_unknown_domain_rejected(self):
        led = MomentumLedger.zeros([0], 2)
        with pytest.raises(ValueError, match="not registered"):
            ledger_update(led, np.zeros(2), 3, 0.9)

    def test_steady_state_fractions(self):
        # constant-direction unit gradients, domains cycling 0,1,2:
        # shares converge to beta^lag / (1 + beta + beta^2) ordered by recency
        beta = 0.9
        led = MomentumLedger.zeros([0, 1, 2], 4)
        g = np.full(4, 0.5)  # unit L1 norm
        for t in range(1, 51):
            led = ledger_update(led, g, (t - 1) % 3, beta)
        fr = ledger_fractions(led)
        denom = 1 + beta + beta**2
        expected = {1: 1 / denom, 0: beta / denom, 2: beta**2 / denom}  # step 50 hit domain 1
        for dom, exp in expected.items():
            assert fr[dom] == pytest.approx(exp, abs=0.02)
        assert sorted(fr.values(), reverse=True) == [fr[1], fr[0], fr[2]]

    def test_fractions_sum_to_one(self):
        rng = np.random.default_rng(3)
        led = MomentumLedger.zeros([0, 1, 2, 3], 5)
        for t in range(40):
            led = ledger_update(led, rng.normal(size=5), int(rng.integers(0, 4)), 0.9)
        assert sum(ledger_fractions(led).values()) == pytest.approx(1.0, abs=1e-12)

    def test_single_domain_fraction_is_one(self):
        led = MomentumLedger.zeros([0, 1], 2)
        led = ledger_update(led, np.ones(2), 1, 0.9)
        fr = ledger_fractions(led)
        assert fr[1] == 1.0 and fr[0] == 0.0

    def test_zero_momentum_limit_tracks_most_recent(self):
        led = MomentumLedger.zeros([0, 1, 2], 2)
        for dom in (0, 1, 2, 0, 1):
            led = ledger_update(led, np.ones(2), dom, 0.0)
        fr = ledger_fractions(led)
        assert fr[1] == pytest.approx(1.0, abs=1e-15)

    def test_all_zero_ledger_rejected(self):
        with pytest.raises(ValueError, match="no accumulated"):
            ledger_fractions(MomentumLedger.zeros([0], 2))

    def test_convergence_to_similar_proportions(self):
        # the gap between per-domain shares collapses as momentum accumulates
        beta = 0.9
        led = MomentumLedger.zeros([0, 1, 2], 3)
        g = np.ones(3) / 3.0
        gaps = []
        for t in range(1, 51):
            led = ledger_update(led, g, (t - 1) % 3, beta)
            fr = list(ledger_fractions(led).values())
            gaps.append(max(fr) - min(fr))
        early = np.mean(gaps[0:5])
        late = np.mean(gaps[45:50])
        assert late < early
        assert max(gaps[45:50]) < 0.08
