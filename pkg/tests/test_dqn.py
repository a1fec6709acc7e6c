import math

import numpy as np
import pytest

from linksched.dqn import (
    HIDDEN_UNITS,
    NUM_ACTIONS,
    PARAM_KEYS,
    DivergenceError,
    DqnTrainer,
    EpsilonSchedule,
    ModelFormatError,
    ObservationLayoutError,
    QNetwork,
    ReplayBuffer,
    TrainerConfig,
    TransitionSlot,
    double_dqn_targets,
    huber_value_and_slope,
    load_policy,
    save_policy,
)
from linksched.agents import OBS_DIM


def zero_network() -> QNetwork:
    return QNetwork(
        {
            "w1": np.zeros((HIDDEN_UNITS, OBS_DIM)),
            "b1": np.zeros(HIDDEN_UNITS),
            "w2": np.zeros((HIDDEN_UNITS, HIDDEN_UNITS)),
            "b2": np.zeros(HIDDEN_UNITS),
            "w3": np.zeros((NUM_ACTIONS, HIDDEN_UNITS)),
            "b3": np.zeros(NUM_ACTIONS),
        }
    )


def constant_network(q_inactive: float, q_active: float) -> QNetwork:
    net = zero_network()
    net.params["b3"] = np.array([q_inactive, q_active], dtype=float)
    return net


def naive_forward(net: QNetwork, obs) -> list[float]:
    """Plain-python re-implementation used as an oracle for forward()."""
    p = net.params
    a1 = [
        math.tanh(sum(p["w1"][k][i] * obs[i] for i in range(OBS_DIM)) + p["b1"][k])
        for k in range(HIDDEN_UNITS)
    ]
    a2 = [
        math.tanh(sum(p["w2"][k][i] * a1[i] for i in range(HIDDEN_UNITS)) + p["b2"][k])
        for k in range(HIDDEN_UNITS)
    ]
    return [
        sum(p["w3"][a][i] * a2[i] for i in range(HIDDEN_UNITS)) + p["b3"][a]
        for a in range(NUM_ACTIONS)
    ]


def td_loss(net: QNetwork, obs: np.ndarray, action: int, target: float) -> float:
    error = net.forward(obs)[action] - target
    value, _ = huber_value_and_slope(np.array([error]))
    return float(value[0])


def finite_difference_gradient(net, obs, action, target, key, index, h=1e-6):
    flat = net.params[key].ravel()
    original = flat[index]
    flat[index] = original + h
    up = td_loss(net, obs, action, target)
    flat[index] = original - h
    down = td_loss(net, obs, action, target)
    flat[index] = original
    return (up - down) / (2.0 * h)


def check_gradients(net, obs, action, target, indices_per_key, tol=1e-4):
    """Compare analytic gradients against central differences entrywise."""
    q = net.forward(obs)
    _, slope = huber_value_and_slope(np.array([q[action] - target]))
    grads = net.backward(obs[None, :], np.array([action]), slope)
    worst = 0.0
    for key, indices in indices_per_key.items():
        analytic_flat = grads[key].ravel()
        for index in indices:
            fd = finite_difference_gradient(net, obs, action, target, key, index)
            an = analytic_flat[index]
            rel = abs(fd - an) / max(abs(fd), abs(an), 1e-5)
            worst = max(worst, rel)
            assert rel <= tol, f"{key}[{index}]: analytic {an} vs fd {fd} (rel {rel:.2e})"
    return worst


def random_triple(rng):
    net = QNetwork.initialize(rng)
    for key in PARAM_KEYS:
        net.params[key] *= rng.uniform(0.5, 2.0)
    obs = rng.uniform(-1.0, 1.0, OBS_DIM)
    action = int(rng.integers(0, NUM_ACTIONS))
    target = float(rng.normal(0.0, 3.0))
    return net, obs, action, target


def singleton_slot(rng, n_agents=2, interval=0):
    return TransitionSlot(
        interval=interval,
        obs=rng.uniform(-1, 1, (n_agents, OBS_DIM)),
        actions=rng.integers(0, 2, n_agents),
        rewards=rng.normal(size=n_agents),
        next_obs=rng.uniform(-1, 1, (n_agents, OBS_DIM)),
    )


class TestForward:
    def test_zero_network(self):
        assert zero_network().forward(np.ones(OBS_DIM)).tolist() == [0.0, 0.0]

    def test_identical_output_rows(self):
        rng = np.random.default_rng(0)
        net = QNetwork.initialize(rng)
        net.params["w3"][1] = net.params["w3"][0]
        net.params["b3"][1] = net.params["b3"][0]
        for _ in range(5):
            q = net.forward(rng.uniform(-1, 1, OBS_DIM))
            assert q[0] == q[1]

    def test_matches_naive_reimplementation(self):
        rng = np.random.default_rng(1)
        for _ in range(3):
            net = QNetwork.initialize(rng)
            obs = rng.uniform(-1, 1, OBS_DIM)
            fast = net.forward(obs)
            slow = naive_forward(net, obs)
            np.testing.assert_allclose(fast, slow, rtol=1e-12)

    def test_batched_matches_single(self):
        rng = np.random.default_rng(2)
        net = QNetwork.initialize(rng)
        batch = rng.uniform(-1, 1, (6, OBS_DIM))
        q = net.forward(batch)
        for i in range(6):
            np.testing.assert_allclose(q[i], net.forward(batch[i]), rtol=1e-12, atol=0)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            zero_network().forward(np.ones(5))


class TestAct:
    def test_greedy_picks_argmax(self):
        net = constant_network(1.0, 2.0)
        assert net.act(np.zeros(OBS_DIM), 0.0, np.random.default_rng(0)).tolist() == [1]
        net = constant_network(3.0, 2.0)
        assert net.act(np.zeros(OBS_DIM), 0.0, np.random.default_rng(0)).tolist() == [0]

    def test_tie_breaks_to_active(self):
        net = constant_network(2.0, 2.0)
        assert net.act(np.zeros(OBS_DIM), 0.0, np.random.default_rng(0)).tolist() == [1]

    def test_full_exploration_is_uniform(self):
        net = constant_network(5.0, -5.0)  # greedy would always pick 0
        rng = np.random.default_rng(3)
        actions = net.act(np.zeros((100_000, OBS_DIM)), 1.0, rng)
        assert abs(actions.mean() - 0.5) <= 0.01

    def test_epsilon_validated(self):
        with pytest.raises(ValueError):
            zero_network().act(np.zeros(OBS_DIM), 1.5, np.random.default_rng(0))

    def test_argmax_invariant_to_common_bias(self):
        rng = np.random.default_rng(4)
        net = QNetwork.initialize(rng)
        obs = rng.uniform(-1, 1, (32, OBS_DIM))
        before = net.greedy_actions(obs)
        net.params["b3"] += 17.3
        assert np.array_equal(net.greedy_actions(obs), before)


class TestEpsilonSchedule:
    def test_reference_points(self):
        schedule = EpsilonSchedule()
        assert schedule.value(0) == 1.0
        assert schedule.value(50) == 1.0
        assert schedule.value(99) == 1.0
        assert schedule.value(100) == 1.0
        assert schedule.value(125) == pytest.approx(0.505)
        assert schedule.value(150) == pytest.approx(0.01)
        assert schedule.value(500) == pytest.approx(0.01)

    def test_bounds(self):
        schedule = EpsilonSchedule()
        for ep in range(0, 400, 7):
            assert 0.01 <= schedule.value(ep) <= 1.0
        with pytest.raises(ValueError):
            schedule.value(-1)


class TestReplayBuffer:
    def test_singleton_sampling(self):
        rng = np.random.default_rng(5)
        buf = ReplayBuffer(capacity=10)
        slot = singleton_slot(rng)
        buf.push(slot)
        sampled = buf.sample_slots(64, rng)
        assert len(sampled) == 64
        assert all(s is slot for s in sampled)

    def test_batch_transition_count(self):
        rng = np.random.default_rng(6)
        buf = ReplayBuffer(capacity=100)
        for t in range(10):
            buf.push(singleton_slot(rng, n_agents=4, interval=t))
        slots = buf.sample_slots(64, rng)
        total = sum(len(s.actions) for s in slots)
        assert total == 64 * 4

    def test_uniform_with_replacement(self):
        rng = np.random.default_rng(7)
        buf = ReplayBuffer(capacity=10)
        for t in range(10):
            buf.push(singleton_slot(rng, interval=t))
        counts = np.zeros(10)
        for s in buf.sample_slots(100_000, rng):
            counts[s.interval] += 1
        freqs = counts / 100_000
        assert np.all(np.abs(freqs - 0.1) <= 0.01)

    def test_empty_buffer_raises(self):
        with pytest.raises(ValueError):
            ReplayBuffer(4).sample_slots(1, np.random.default_rng(0))

    def test_eviction_keeps_last_c(self):
        rng = np.random.default_rng(8)
        buf = ReplayBuffer(capacity=5)
        for t in range(8):
            buf.push(singleton_slot(rng, interval=t))
        assert len(buf) == 5
        assert [s.interval for s in buf.slots()] == [3, 4, 5, 6, 7]


class TestTdTargets:
    def test_hand_computed(self):
        main = constant_network(2.0, 3.0)
        target = constant_network(5.0, 7.0)
        y = double_dqn_targets(main, target, np.array([1.0]), np.zeros((1, OBS_DIM)), 0.9)
        assert y[0] == pytest.approx(7.3)

    def test_zero_gamma(self):
        main = constant_network(2.0, 3.0)
        target = constant_network(5.0, 7.0)
        y = double_dqn_targets(main, target, np.array([-2.5]), np.zeros((1, OBS_DIM)), 0.0)
        assert y[0] == -2.5

    def test_main_selects_target_evaluates(self):
        main = constant_network(3.0, 2.0)  # main prefers action 0
        target = constant_network(5.0, 7.0)
        y = double_dqn_targets(main, target, np.array([0.0]), np.zeros((1, OBS_DIM)), 0.5)
        assert y[0] == pytest.approx(2.5)

    def test_gamma_validated(self):
        with pytest.raises(ValueError):
            double_dqn_targets(
                zero_network(), zero_network(), np.zeros(1), np.zeros((1, OBS_DIM)), 1.0
            )


class TestTrainStep:
    def test_zero_error_batch_keeps_params(self):
        rng = np.random.default_rng(9)
        net = QNetwork.initialize(rng)
        trainer = DqnTrainer(net, TrainerConfig(gamma=0.0))
        slot = singleton_slot(rng, n_agents=3)
        q = net.forward(slot.obs)
        slot.rewards = q[np.arange(3), slot.actions]  # targets equal current Q
        before = {k: v.copy() for k, v in net.params.items()}
        loss = trainer.train_step([slot])
        assert loss == 0.0
        for key in PARAM_KEYS:
            assert np.array_equal(net.params[key], before[key])

    def test_gradients_match_finite_differences_everywhere(self):
        rng = np.random.default_rng(10)
        for _ in range(2):
            net, obs, action, target = random_triple(rng)
            indices = {key: range(net.params[key].size) for key in PARAM_KEYS}
            worst = check_gradients(net, obs, action, target, indices)
            assert worst <= 1e-4

    def test_loss_decreases_on_fixed_batch(self):
        rng = np.random.default_rng(11)
        net = QNetwork.initialize(rng)
        trainer = DqnTrainer(net, TrainerConfig(gamma=0.0, target_sync_every_updates=10**9))
        slots = [singleton_slot(rng, n_agents=4, interval=t) for t in range(4)]
        losses = [trainer.train_step(slots) for _ in range(100)]
        assert losses[-1] <= losses[0]
        assert losses[-1] < 0.5 * losses[0]

    def test_divergence_detected(self):
        rng = np.random.default_rng(12)
        net = QNetwork.initialize(rng)
        net.params["b3"][0] = np.inf
        trainer = DqnTrainer(net)
        with pytest.raises(DivergenceError):
            trainer.train_step([singleton_slot(rng)])

    def test_empty_batch_rejected(self):
        with pytest.raises(ValueError):
            DqnTrainer(zero_network()).train_step([])


class TestTargetSync:
    def test_sync_copies_main(self):
        rng = np.random.default_rng(13)
        net = QNetwork.initialize(rng)
        trainer = DqnTrainer(net, TrainerConfig(target_sync_every_updates=10**9))
        trainer.train_step([singleton_slot(rng)])
        probe = rng.uniform(-1, 1, (8, OBS_DIM))
        assert not np.array_equal(trainer.main.forward(probe), trainer.target.forward(probe))
        trainer.sync_target()
        assert np.array_equal(trainer.main.forward(probe), trainer.target.forward(probe))

    def test_target_untouched_between_syncs(self):
        rng = np.random.default_rng(14)
        net = QNetwork.initialize(rng)
        trainer = DqnTrainer(net, TrainerConfig(target_sync_every_updates=10**9))
        target_before = {k: v.copy() for k, v in trainer.target.params.items()}
        for _ in range(5):
            trainer.train_step([singleton_slot(rng)])
        for key in PARAM_KEYS:
            assert np.array_equal(trainer.target.params[key], target_before[key])

    def test_update_and_sync_cadence(self):
        # 2000 intervals at one update per 20 -> 100 updates -> exactly 1 sync
        rng = np.random.default_rng(15)
        net = QNetwork.initialize(rng)
        trainer = DqnTrainer(net, TrainerConfig(target_sync_every_updates=100))
        slot = singleton_slot(rng)
        for interval in range(1, 2001):
            if interval % 20 == 0:
                trainer.train_step([slot])
        assert trainer.updates == 100
        assert trainer.syncs == 1


class TestSerialization:
    def test_round_trip_bitwise(self, tmp_path):
        rng = np.random.default_rng(16)
        net = QNetwork.initialize(rng)
        net.metadata.update(train_steps=123, epoch=7, best_score=1.25e8)
        path = tmp_path / "policy.txt"
        save_policy(net, path)
        loaded = load_policy(path)
        for key in PARAM_KEYS:
            assert net.params[key].tobytes() == loaded.params[key].tobytes()
        assert loaded.metadata["train_steps"] == 123
        assert loaded.metadata["epoch"] == 7
        assert loaded.metadata["best_score"] == 1.25e8

    def test_truncated_file(self, tmp_path):
        net = QNetwork.initialize(np.random.default_rng(17))
        path = tmp_path / "policy.txt"
        save_policy(net, path)
        text = path.read_text()
        path.write_text(text[: len(text) // 2])
        with pytest.raises(ModelFormatError):
            load_policy(path)

    def test_layout_mismatch(self, tmp_path):
        net = QNetwork.initialize(np.random.default_rng(18))
        net.metadata["obs_layout"] = "obs14-v0"
        path = tmp_path / "policy.txt"
        save_policy(net, path)
        with pytest.raises(ObservationLayoutError):
            load_policy(path)

    def test_not_a_policy_file(self, tmp_path):
        path = tmp_path / "junk.txt"
        path.write_text("hello world\n")
        with pytest.raises(ModelFormatError):
            load_policy(path)

    def test_initialize_deterministic(self):
        a = QNetwork.initialize(np.random.default_rng(19))
        b = QNetwork.initialize(np.random.default_rng(19))
        for key in PARAM_KEYS:
            assert np.array_equal(a.params[key], b.params[key])
