"""Expansion agent: state machine, policy, rewards, training, retrieval."""

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_bridged_cliques, make_clique_graph, make_path_graph
from gradcheck import max_rel_error
from ppsl.encoder import EmbeddingTable, embed_community
from ppsl.graph import Community, CommunitySet, Graph, ROLE_KNOWN
from ppsl.sampler import (
    Agent,
    ExpansionState,
    SamplerConfig,
    STOP,
    Trajectory,
    action_log_probs,
    generate_initial_community,
    init_node_features,
    load_agent,
    policy_distribution,
    policy_update,
    retrieve_similar,
    returns,
    sample_trajectory,
    save_agent,
    step_reward,
    teacher_forcing_update,
    train_agent,
)
from ppsl.seeding import numpy_rng, torch_generator


def tiny_cfg(**kw) -> SamplerConfig:
    base = dict(embed_dim=8, epochs=5, batch_size=4)
    base.update(kw)
    return SamplerConfig(**base)


def random_table(n: int, dim: int = 6, seed: int = 0) -> EmbeddingTable:
    rng = np.random.default_rng(seed)
    return EmbeddingTable(rng.normal(size=(n, dim)))


def fresh_agent(n_nodes: int, seed: int = 0, **kw):
    cfg = tiny_cfg(**kw)
    tab = random_table(n_nodes, seed=seed)
    agent = Agent.initial(cfg, tab.dim, torch_generator(seed, 3), seed=seed)
    return agent, tab


def randomize_params(agent: Agent, seed: int = 9) -> None:
    gen = torch.Generator()
    gen.manual_seed(seed)
    with torch.no_grad():
        for p in agent.parameters():
            p.copy_(torch.randn(p.shape, generator=gen, dtype=p.dtype) * 0.3)


class TestExpansionState:
    def test_create(self):
        g = make_path_graph(5)
        state = ExpansionState.create(g, [2])
        assert state.community == (2,)
        assert state.frontier.tolist() == [1, 3]
        assert state.nodes.tolist() == [1, 2, 3]

    def test_frontier_excludes_members(self):
        g, _ = make_clique_graph([4])
        state = ExpansionState.create(g, [0, 1])
        assert set(state.frontier.tolist()) == {2, 3}

    def test_extend(self):
        g = make_path_graph(5)
        state = ExpansionState.create(g, [2]).extend(g, 3)
        assert state.community == (2, 3)
        assert state.frontier.tolist() == [1, 4]

    def test_extend_rejects_non_frontier(self):
        g = make_path_graph(5)
        with pytest.raises(ValueError):
            ExpansionState.create(g, [2]).extend(g, 0)

    def test_duplicate_members_rejected(self):
        g = make_path_graph(3)
        with pytest.raises(ValueError):
            ExpansionState.create(g, [1, 1])


class TestInitFeatures:
    def test_type_vectors(self):
        g = make_path_graph(4)
        agent, tab = fresh_agent(4)
        state = ExpansionState.create(g, [1, 2])
        x = init_node_features(agent, state, 1, tab)
        pos = {int(v): i for i, v in enumerate(state.nodes)}
        q1 = agent.p("q1").detach()
        q2 = agent.p("q2").detach()
        gmax = agent.project(tab.row(1)).max().item()
        assert torch.allclose(x[pos[0]].detach(), torch.zeros_like(q2))
        assert torch.allclose(x[pos[2]].detach(), q2)
        assert torch.allclose(x[pos[1]].detach(), gmax * q1 + q2)

    def test_query_must_be_in_state(self):
        g = make_path_graph(9)
        agent, tab = fresh_agent(9)
        state = ExpansionState.create(g, [0])
        with pytest.raises(ValueError):
            init_node_features(agent, state, 8, tab)


class TestPolicy:
    def test_empty_frontier_is_stop(self):
        g = Graph(2, [(0, 1)])
        agent, tab = fresh_agent(3)
        g3 = Graph(3, [(0, 1)])
        state = ExpansionState.create(g3, [2])
        probs = policy_distribution(agent, state, 2, tab)
        assert probs.tolist() == [1.0]

    def test_zeroed_agent_is_uniform(self):
        g = Graph(4, [(0, 1), (0, 2), (0, 3)])
        agent, tab = fresh_agent(4)
        with torch.no_grad():
            agent.p("q1").zero_()
            agent.p("q2").zero_()
        state = ExpansionState.create(g, [0])
        probs = policy_distribution(agent, state, 0, tab)
        assert np.allclose(probs, [0.25] * 4, atol=1e-12)

    def test_sums_to_one(self):
        g, _ = make_bridged_cliques(4)
        agent, tab = fresh_agent(8, seed=3)
        randomize_params(agent)
        state = ExpansionState.create(g, [0, 1])
        probs = policy_distribution(agent, state, 0, tab)
        assert abs(probs.sum() - 1.0) <= 1e-9
        assert len(probs) == len(state.frontier) + 1

    def test_edge_order_invariance(self):
        edges = [(0, 1), (1, 2), (2, 3), (0, 3), (1, 3)]
        g1 = Graph(4, edges)
        g2 = Graph(4, list(reversed(edges)))
        agent, tab = fresh_agent(4, seed=5)
        randomize_params(agent)
        p1 = policy_distribution(agent, ExpansionState.create(g1, [0]), 0, tab)
        p2 = policy_distribution(agent, ExpansionState.create(g2, [0]), 0, tab)
        assert np.allclose(p1, p2, atol=1e-12)


class TestRewardsAndReturns:
    def test_gain_step(self):
        assert step_reward({1, 2}, {1}, {1, 2}) == pytest.approx(1 - 2 / 3)

    def test_loss_step(self):
        assert step_reward({1, 9}, {1}, {1}) == pytest.approx(2 / 3 - 1)

    def test_stop_step(self):
        assert step_reward({1}, {1}, {1, 2}) == 0.0

    def test_empty_truth_rejected(self):
        with pytest.raises(ValueError):
            step_reward({1}, {1}, set())

    def test_undiscounted(self):
        got = returns([0.2, -0.1, 0.3], 1.0)
        assert np.allclose(got, [0.4, 0.2, 0.3])

    def test_discounted(self):
        assert returns([1.0, 1.0], 0.5) == [1.5, 1.0]

    def test_single(self):
        assert returns([0.7], 0.9) == [0.7]

    def test_gamma_out_of_range(self):
        with pytest.raises(ValueError):
            returns([1.0], 0.0)

    @given(st.lists(st.floats(-1, 1), min_size=1, max_size=8))
    def test_suffix_identity(self, rewards):
        g = returns(rewards, 1.0)
        for t in range(len(rewards) - 1):
            assert g[t] == pytest.approx(g[t + 1] + rewards[t], abs=1e-9)

    @given(st.lists(st.floats(-1, 1), min_size=1, max_size=6))
    def test_matches_polynomial(self, rewards):
        gamma = 0.25
        got = returns(rewards, gamma)
        for t in range(len(rewards)):
            want = sum(gamma**k * r for k, r in enumerate(rewards[t:]))
            assert got[t] == pytest.approx(want, abs=1e-9)


class TestTrajectories:
    def test_actions_come_from_frontier(self):
        g, truth = make_bridged_cliques(5)
        agent, tab = fresh_agent(10, seed=2)
        traj = sample_trajectory(
            agent, g, tab, 0, truth.communities[0].members, 1.0, numpy_rng(0, 5)
        )
        state = ExpansionState.create(g, [0])
        for action in traj.actions:
            if action == STOP:
                break
            assert action in state.frontier.tolist()
            state = state.extend(g, action)

    def test_lengths_and_determinism(self):
        g, truth = make_bridged_cliques(5)
        agent, tab = fresh_agent(10, seed=2)
        a = sample_trajectory(agent, g, tab, 0, truth.communities[0].members, 1.0, numpy_rng(1, 5))
        b = sample_trajectory(agent, g, tab, 0, truth.communities[0].members, 1.0, numpy_rng(1, 5))
        assert a.actions == b.actions
        assert len(a.actions) == len(a.rewards) == len(a.returns)

    def test_rollout_capped_by_truth_size(self):
        g, truth = make_clique_graph([6])
        agent, tab = fresh_agent(6)
        traj = sample_trajectory(agent, g, tab, 0, truth.communities[0].members, 1.0, numpy_rng(2, 5))
        non_stop = [a for a in traj.actions if a != STOP]
        assert 1 + len(non_stop) <= 6


class TestUpdates:
    def make_trajectory(self, agent, g, tab, query, truth):
        return sample_trajectory(agent, g, tab, query, truth, 1.0, numpy_rng(3, 5))

    def test_zero_returns_leave_params(self):
        g, truth = make_bridged_cliques(4)
        agent, tab = fresh_agent(8, seed=7)
        traj = self.make_trajectory(agent, g, tab, 0, truth.communities[0].members)
        traj.returns = [0.0] * len(traj.actions)
        before = [p.detach().clone() for p in agent.parameters()]
        policy_update(agent, g, tab, [traj], lr=0.05)
        for a, b in zip(agent.parameters(), before):
            assert torch.equal(a.detach(), b)

    def test_positive_return_raises_log_prob(self):
        g, truth = make_bridged_cliques(4)
        agent, tab = fresh_agent(8, seed=8)
        randomize_params(agent, seed=11)
        traj = self.make_trajectory(agent, g, tab, 0, truth.communities[0].members)
        traj.returns = [1.0] * len(traj.actions)

        def objective():
            from ppsl.sampler import trajectory_objective

            return trajectory_objective(agent, g, tab, traj)

        before = float(objective().detach())
        policy_update(agent, g, tab, [traj], lr=1e-3)
        after = float(objective().detach())
        assert after >= before - 1e-12

    def test_policy_gradient_matches_finite_differences(self):
        from ppsl.sampler import trajectory_objective

        g, truth = make_bridged_cliques(3)
        agent, tab = fresh_agent(6, seed=4, embed_dim=4, mp_rounds=2, mlp_layers=2)
        randomize_params(agent, seed=13)
        trajs = [
            self.make_trajectory(agent, g, tab, 0, truth.communities[0].members),
            self.make_trajectory(agent, g, tab, 3, truth.communities[1].members),
        ]
        for traj in trajs:
            traj.returns = [g_t + 0.1 for g_t in traj.returns]

        def objective():
            total = torch.zeros((), dtype=torch.float64)
            for traj in trajs:
                total = total + trajectory_objective(agent, g, tab, traj)
            return total / len(trajs)

        assert max_rel_error(agent.parameters(), objective) <= 1e-4

    def test_teacher_forcing_two_node_community(self):
        g = make_path_graph(2)
        agent, tab = fresh_agent(2, seed=5)
        loss = teacher_forcing_update(
            agent, Community(frozenset({0, 1})), g, tab, lr=0.1, rng=numpy_rng(4, 5)
        )
        assert np.isfinite(loss)

    def test_teacher_forcing_lr_zero_keeps_params(self):
        g, truth = make_bridged_cliques(4)
        agent, tab = fresh_agent(8, seed=6)
        before = [p.detach().clone() for p in agent.parameters()]
        teacher_forcing_update(agent, truth.communities[0], g, tab, lr=0.0, rng=numpy_rng(5, 5))
        for a, b in zip(agent.parameters(), before):
            assert torch.equal(a.detach(), b)

    def test_teacher_forcing_drives_recovery(self):
        g, truth = make_bridged_cliques(5)
        agent, tab = fresh_agent(10, seed=9)
        comm = truth.communities[0]
        for step in range(60):
            teacher_forcing_update(agent, comm, g, tab, lr=0.05, rng=numpy_rng(step, 5))
        got = generate_initial_community(agent, g, 0, tab, size_cap=5)
        from ppsl.metrics import fscore

        assert fscore(got.members, comm.members) >= 0.9

    def test_teacher_forcing_disconnected_warns(self, caplog):
        g = Graph(4, [(0, 1), (2, 3)])
        agent, tab = fresh_agent(4, seed=10)
        comm = Community(frozenset({0, 1, 2}))
        with caplog.at_level("WARNING"):
            teacher_forcing_update(agent, comm, g, tab, lr=0.1, rng=numpy_rng(6, 5))
        assert any("unreachable" in rec.message for rec in caplog.records)


class TestTrainAgent:
    def test_zero_epochs_unchanged(self):
        g, truth = make_clique_graph([4, 4])
        known = CommunitySet(truth.communities, ROLE_KNOWN)
        tab = random_table(8)
        agent, history = train_agent(
            g, known, tab, tiny_cfg(epochs=0), numpy_rng(0, 3), torch_generator(0, 3)
        )
        fresh = Agent.initial(tiny_cfg(epochs=0), tab.dim, torch_generator(0, 3), seed=0)
        for a, b in zip(agent.parameters(), fresh.parameters()):
            assert torch.allclose(a.detach(), b.detach().float().double(), atol=1e-7)
        assert history == []

    def test_fixed_seed_identical_history(self):
        g, truth = make_clique_graph([4, 4, 3])
        known = CommunitySet(truth.communities, ROLE_KNOWN)
        tab = random_table(11)
        runs = []
        for _ in range(2):
            _, history = train_agent(
                g, known, tab, tiny_cfg(epochs=3), numpy_rng(1, 3), torch_generator(1, 3)
            )
            runs.append(history)
        assert runs[0] == runs[1]


class TestInference:
    def test_isolated_query(self):
        g = Graph(3, [(0, 1)])
        agent, tab = fresh_agent(3)
        got = generate_initial_community(agent, g, 2, tab, size_cap=5)
        assert got.members == frozenset({2})

    def test_size_cap_checked_after_exceeding(self):
        g, _ = make_clique_graph([6])
        agent, tab = fresh_agent(6, seed=12)
        with torch.no_grad():
            agent.p("stop").fill_(-100.0)
        got = generate_initial_community(agent, g, 0, tab, size_cap=1)
        assert len(got.members) == 2

    def test_rollout_stays_in_clique_component(self):
        g, truth = make_clique_graph([5, 5])
        agent, tab = fresh_agent(10, seed=13)
        got = generate_initial_community(agent, g, 7, tab, size_cap=5)
        assert got.members <= truth.communities[1].members


class TestRetrieval:
    def build(self, n_comms: int, n_nodes: int = 40, seed: int = 0):
        rng = np.random.default_rng(seed)
        tab = random_table(n_nodes, dim=5, seed=seed)
        comms = []
        for _ in range(n_comms):
            size = int(rng.integers(2, 7))
            comms.append(Community(frozenset(rng.choice(n_nodes, size, replace=False).tolist())))
        return tab, CommunitySet(tuple(comms), ROLE_KNOWN)

    def brute_force(self, tab, initial, known, m):
        center = embed_community(tab, initial.members)
        dists = [
            (float(np.linalg.norm(center - embed_community(tab, c.members))), i)
            for i, c in enumerate(known.communities)
        ]
        order = sorted(dists)
        return [i for _, i in order[:m]]

    def test_identical_community_ranks_first(self):
        tab, known = self.build(12, seed=3)
        initial = known.communities[7]
        got = retrieve_similar(tab, initial, known, 3)
        assert got.communities[0].members == initial.members

    def test_full_retrieval_sorted(self):
        tab, known = self.build(9, seed=4)
        initial = Community(frozenset({0, 1}))
        got = retrieve_similar(tab, initial, known, len(known.communities))
        want = self.brute_force(tab, initial, known, 9)
        assert [c.members for c in got.communities] == [
            known.communities[i].members for i in want
        ]

    def test_m_too_large_rejected(self):
        tab, known = self.build(4)
        with pytest.raises(ValueError):
            retrieve_similar(tab, Community(frozenset({0})), known, 5)

    @given(st.integers(0, 500))
    @settings(max_examples=25)
    def test_matches_brute_force(self, seed):
        tab, known = self.build(11, seed=seed % 37)
        rng = np.random.default_rng(seed)
        initial = Community(frozenset(rng.choice(40, 4, replace=False).tolist()))
        m = int(rng.integers(1, 12))
        got = retrieve_similar(tab, initial, known, m)
        want = self.brute_force(tab, initial, known, m)
        assert [c.members for c in got.communities] == [
            known.communities[i].members for i in want
        ]


class TestPersistence:
    def test_save_load_round_trip(self, tmp_path):
        g, truth = make_clique_graph([4, 4])
        known = CommunitySet(truth.communities, ROLE_KNOWN)
        tab = random_table(8)
        agent, _ = train_agent(
            g, known, tab, tiny_cfg(epochs=2), numpy_rng(2, 3), torch_generator(2, 3)
        )
        path = tmp_path / "agent.ckpt"
        save_agent(path, agent)
        loaded = load_agent(path)
        for a, b in zip(agent.parameters(), loaded.parameters()):
            assert torch.equal(a.detach(), b.detach())
        assert loaded.cfg.gamma == agent.cfg.gamma
