import numpy as np
import pytest

from dynasto.errors import TrainingError
from dynasto.rl import (STEP1_X_ADV, STEP1_X_EGO, Adam, Batch, DQNAgent, DQNConfig, QNetwork,
                        RandomActor, ReplayBuffer, epsilon_at, evaluate_sut, load_policy,
                        run_adversary, sample_step1_config, save_policy, select_action,
                        td_loss_and_grads, td_update, train_adversary)
from dynasto.sim import N_ACTIONS, MetaAction, ScenarioConfig, constant_policy
from dynasto.validity import VALID


def random_batch(rng, n=8, n_in=8, terminal=False):
    return Batch(obs=rng.normal(size=(n, n_in)), actions=rng.integers(0, N_ACTIONS, n),
                 rewards=rng.normal(size=n), next_obs=rng.normal(size=(n, n_in)),
                 dones=np.ones(n) if terminal else (rng.random(n) < 0.3).astype(float))


def max_relative_gradient_error(rng, n_in=4, hidden=(4,), n=6, h=1e-6):
    q = QNetwork(n_in, N_ACTIONS, hidden, rng)
    target = QNetwork(n_in, N_ACTIONS, hidden, rng)
    batch = random_batch(rng, n, n_in)
    _, grads = td_loss_and_grads(q, target, batch)
    worst = 0.0
    for name, p in q.params.items():
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            up = td_loss_and_grads(q, target, batch)[0]
            p[idx] = old - h
            down = td_loss_and_grads(q, target, batch)[0]
            p[idx] = old
            num = (up - down) / (2 * h)
            ana = grads[name][idx]
            worst = max(worst, abs(num - ana) / max(abs(num), abs(ana), 1e-6))
    return worst


def test_td_gradients_match_finite_differences():
    rng = np.random.default_rng(0)
    assert max(max_relative_gradient_error(rng) for _ in range(20)) < 1e-4


def test_network_shape_and_finiteness():
    q = QNetwork(rng=np.random.default_rng(0))
    assert q.sizes == [8, 64, 64, 5]
    assert q(np.zeros(8)).shape == (1, 5)
    assert q.all_finite()


def test_epsilon_schedule():
    assert epsilon_at(0, 3000) == 1.0
    assert epsilon_at(300, 3000) == pytest.approx(0.525)
    assert epsilon_at(600, 3000) == 0.05
    assert epsilon_at(2999, 3000) == 0.05


def test_select_action_greedy_and_ties():
    q = QNetwork(8, 5, (4,), np.random.default_rng(0))
    for k in q.params:
        q.params[k][...] = 0.0
    rng = np.random.default_rng(0)
    assert select_action(q, np.zeros(8), 0.0, rng) == 0
    q.params["b1"][2] = 3.0
    assert select_action(q, np.zeros(8), 0.0, rng) == 2


def test_select_action_uniform_exploration():
    q = QNetwork(8, 5, (4,), np.random.default_rng(0))
    rng = np.random.default_rng(1)
    n = 100_000
    counts = np.bincount([select_action(q, np.zeros(8), 1.0, rng) for _ in range(n)], minlength=5)
    sigma = np.sqrt(n * 0.2 * 0.8)
    assert np.all(np.abs(counts - n / 5) < 3 * sigma)


def test_replay_buffer_evicts_oldest():
    buf = ReplayBuffer(capacity=4, obs_dim=1)
    for i in range(6):
        buf.add([i], 0, float(i), [i], False)
    assert len(buf) == 4
    assert sorted(buf.rewards.tolist()) == [2.0, 3.0, 4.0, 5.0]
    b = buf.sample(4, np.random.default_rng(0))
    assert len(set(b.rewards.tolist())) == 4  # without replacement


def test_zero_error_batch_leaves_parameters():
    rng = np.random.default_rng(0)
    q = QNetwork(8, 5, (4,), rng)
    for k in q.params:
        q.params[k][...] = 0.0
    before = q.copy()
    batch = random_batch(rng, terminal=True)
    batch.rewards[:] = 0.0
    loss = td_update(q, q.copy(), batch, Adam(q.params))
    assert loss == 0.0
    assert all(np.array_equal(q.params[k], before.params[k]) for k in q.params)


def test_fixed_transition_converges_to_reward():
    rng = np.random.default_rng(0)
    q = QNetwork(8, 5, (16,), rng)
    batch = Batch(obs=np.ones((1, 8)) * 0.3, actions=np.array([2]), rewards=np.array([1.5]),
                  next_obs=np.zeros((1, 8)), dones=np.array([1.0]))
    opt = Adam(q.params, lr=1e-2)
    for _ in range(2000):
        td_update(q, q.copy(), batch, opt)
    assert q(batch.obs)[0, 2] == pytest.approx(1.5, abs=1e-3)


def test_non_finite_loss_raises_training_error():
    rng = np.random.default_rng(0)
    q = QNetwork(8, 5, (4,), rng)
    batch = random_batch(rng)
    batch.rewards[0] = np.nan
    with pytest.raises(TrainingError) as exc:
        td_update(q, q.copy(), batch, Adam(q.params))
    assert "loss" in exc.value.diagnostics


def test_step1_sampler_ranges():
    rng = np.random.default_rng(0)
    for _ in range(500):
        c = sample_step1_config(rng)
        assert STEP1_X_EGO[0] <= c.x_ego <= STEP1_X_EGO[1]
        assert STEP1_X_ADV[0] <= c.x_adv <= STEP1_X_ADV[1]
        assert c.h_ego == c.h_adv == 0.0 and c.s_ego == c.s_adv == 25.0
        assert c.l_ego == c.tl_ego and c.l_adv == c.tl_adv


class _FixedConfig:
    """Ego at 30 m/s closes a 40 m gap on a 15 m/s adversary: contact during step 3."""

    config = ScenarioConfig(x_ego=250.0, x_adv=290.0, l_ego=0, l_adv=0, tl_ego=0, tl_adv=0,
                            s_ego=30.0, s_adv=15.0)

    def propose(self, rng):
        return self.config

    def feedback(self, config, trace, cls):
        pass


class _IdleActor:
    def act(self, obs):
        return int(MetaAction.IDLE)

    def observe(self, *args):
        pass


def test_scripted_collisions_fill_archive():
    run = run_adversary(_IdleActor(), constant_policy(int(MetaAction.IDLE)), budget=30,
                        config_source=_FixedConfig())
    assert run.n_steps == 30 and run.n_episodes == 10
    assert len(run.archive) == 10
    assert all(r.classification.label == VALID and r.trace.T_c == 3 for r in run.archive)
    assert [r.index for r in run.archive] == list(range(2, 30, 3))


def test_zero_budget_leaves_network_untouched():
    agent = DQNAgent(DQNConfig(), 0, seed=0)
    before = agent.q.copy()
    run = run_adversary(agent, constant_policy(1), budget=0)
    assert run.n_steps == 0 and len(run.archive) == 0
    assert all(np.array_equal(agent.q.params[k], before.params[k]) for k in before.params)


def test_training_is_reproducible_and_budget_exact(sut1):
    a = train_adversary(sut1, 700, seed=4)
    b = train_adversary(sut1, 700, seed=4)
    assert a.n_steps == b.n_steps == 700
    assert all(np.array_equal(a.policy.q.params[k], b.policy.q.params[k]) for k in a.policy.q.params)
    assert [r.trace.dumps() for r in a.archive] == [r.trace.dumps() for r in b.archive]


def test_random_actor_ignores_observation():
    a, b = RandomActor(3), RandomActor(3)
    assert [a.act(np.zeros(8)) for _ in range(50)] == [b.act(np.ones(8) * 7) for _ in range(50)]


def test_policy_checkpoint_round_trip(tmp_path, sut1):
    path = tmp_path / "p.json"
    save_policy(path, sut1, {"note": "x"})
    again = load_policy(path)
    obs = np.random.default_rng(0).normal(size=(20, 8))
    assert [sut1(o) for o in obs] == [again(o) for o in obs]


def test_trained_sut_beats_idle_in_traffic(sut1):
    trained = evaluate_sut(sut1, "SUT1", 50, seed=123)
    idle = evaluate_sut(constant_policy(int(MetaAction.IDLE)), "SUT1", 50, seed=123)
    assert trained["mean_speed"] > idle["mean_speed"]
    assert trained["collisions"] <= idle["collisions"]
