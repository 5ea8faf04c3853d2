#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <vector>

#include "tailor/ddpg.hpp"
#include "tailor/error.hpp"
#include "tailor/rng.hpp"

using namespace tailor;
using namespace tailor::rl;

namespace {

AgentConfig small_config() {
    AgentConfig cfg;
    cfg.state_dim = 3;
    cfg.hidden = {8, 8};
    cfg.replay_capacity = 64;
    cfg.batch = 8;
    cfg.warmup = 8;
    cfg.seed = 42;
    return cfg;
}

Transition random_transition(Rng& rng, int state_dim) {
    Transition t;
    for (int i = 0; i < state_dim; ++i) {
        t.state.push_back(rng.normal());
        t.next_state.push_back(rng.normal());
    }
    t.action = rng.uniform();
    t.reward = rng.normal();
    t.terminal = rng.uniform() < 0.2;
    return t;
}

bool mlp_params_equal(const Mlp& a, const Mlp& b) {
    return a.w == b.w && a.b == b.b;
}

}  // namespace

TEST_CASE("agent config validation rejects out-of-range settings") {
    auto bad = [](auto mutate) {
        AgentConfig cfg;
        cfg.state_dim = 3;
        mutate(cfg);
        CHECK_THROWS_AS(Agent{cfg}, ConfigError);
    };
    bad([](AgentConfig& c) { c.state_dim = 0; });
    bad([](AgentConfig& c) { c.hidden = {}; });
    bad([](AgentConfig& c) { c.hidden = {8, 0}; });
    bad([](AgentConfig& c) { c.actor_lr = 0.0; });
    bad([](AgentConfig& c) { c.critic_lr = -1e-3; });
    bad([](AgentConfig& c) { c.gamma = 1.5; });
    bad([](AgentConfig& c) { c.tau = 0.0; });
    bad([](AgentConfig& c) { c.tau = 1.5; });
    bad([](AgentConfig& c) { c.noise_scale = -0.1; });
    bad([](AgentConfig& c) { c.noise_decay = 0.0; });
    bad([](AgentConfig& c) { c.replay_capacity = 4; });  // below batch 64
    bad([](AgentConfig& c) { c.batch = 0; });
    bad([](AgentConfig& c) { c.warmup = -1; });
    CHECK_NOTHROW(Agent{small_config()});
}

TEST_CASE("mlp backward matches central finite differences") {
    Rng rng(7);
    Mlp net = Mlp::init({4, 6, 1}, rng);
    // Make the weights non-tiny so the check runs away from the near-zero
    // output-layer init.
    for (auto& layer : net.w)
        for (double& x : layer) x = rng.uniform(-0.8, 0.8);

    std::vector<double> in = {0.3, -1.2, 0.5, 0.9};
    std::vector<std::vector<double>> acts;
    net.forward(in, &acts);
    auto gw = net.zero_like_w();
    auto gb = net.zero_like_b();
    const std::vector<double> din = net.backward(acts, 1.0, &gw, &gb);

    const double h = 1e-6;
    auto check_close = [](double got, double want) {
        CHECK(std::abs(got - want) <= 1e-6 * std::max(1.0, std::abs(want)));
    };
    for (std::size_t l = 0; l < net.w.size(); ++l)
        for (std::size_t i = 0; i < net.w[l].size(); ++i) {
            Mlp plus = net, minus = net;
            plus.w[l][i] += h;
            minus.w[l][i] -= h;
            check_close(gw[l][i], (plus.forward(in) - minus.forward(in)) / (2 * h));
        }
    for (std::size_t l = 0; l < net.b.size(); ++l)
        for (std::size_t i = 0; i < net.b[l].size(); ++i) {
            Mlp plus = net, minus = net;
            plus.b[l][i] += h;
            minus.b[l][i] -= h;
            check_close(gb[l][i], (plus.forward(in) - minus.forward(in)) / (2 * h));
        }
    for (std::size_t i = 0; i < in.size(); ++i) {
        std::vector<double> plus = in, minus = in;
        plus[i] += h;
        minus[i] -= h;
        check_close(din[i], (net.forward(plus) - net.forward(minus)) / (2 * h));
    }
}

TEST_CASE("mlp init respects the layer-wise bounds") {
    Rng rng(3);
    Mlp net = Mlp::init({9, 16, 1}, rng);
    for (double x : net.w[0]) CHECK(std::abs(x) <= 1.0 / 3.0);
    for (double x : net.w[1]) CHECK(std::abs(x) <= 3e-3);
    CHECK(net.w[0].size() == 16u * 9u);
    CHECK(net.w[1].size() == 16u);
}

TEST_CASE("deterministic action repeats and stays within the unit interval") {
    Agent agent(small_config());
    const std::vector<double> s = {0.4, -1.0, 2.2};
    const double a1 = agent.act(s, false);
    const double a2 = agent.act(s, false);
    CHECK(a1 == a2);

    Rng rng(11);
    for (int i = 0; i < 10000; ++i) {
        std::vector<double> state = {rng.normal(), rng.normal(), rng.normal()};
        const double det = agent.act(state, false);
        const double expl = agent.act(state, true);
        CHECK(det >= 0.0);
        CHECK(det <= 1.0);
        CHECK(expl >= 0.0);
        CHECK(expl <= 1.0);
    }
}

TEST_CASE("zero exploration noise reduces to the deterministic action") {
    AgentConfig cfg = small_config();
    cfg.noise_scale = 0.0;
    Agent agent(cfg);
    const std::vector<double> s = {1.0, 0.0, -1.0};
    CHECK(agent.act(s, true) == agent.act(s, false));
}

TEST_CASE("nonzero exploration noise perturbs the action") {
    Agent agent(small_config());
    const std::vector<double> s = {0.1, 0.2, 0.3};
    const double det = agent.act(s, false);
    int moved = 0;
    for (int i = 0; i < 32; ++i)
        if (agent.act(s, true) != det) ++moved;
    CHECK(moved >= 30);  // clipping may pin a stray sample to a bound
}

TEST_CASE("exploration scale decays multiplicatively per episode") {
    AgentConfig cfg = small_config();
    cfg.noise_scale = 0.5;
    cfg.noise_decay = 0.9;
    Agent agent(cfg);
    CHECK(agent.exploration_scale() == 0.5);
    agent.decay_exploration();
    CHECK(agent.exploration_scale() == 0.5 * 0.9);
    agent.decay_exploration();
    CHECK(agent.exploration_scale() == 0.5 * 0.9 * 0.9);
}

TEST_CASE("act and remember reject mismatched dimensions and bad actions") {
    Agent agent(small_config());
    CHECK_THROWS_AS(agent.act({1.0, 2.0}, false), std::invalid_argument);

    Transition t;
    t.state = {1.0, 2.0, 3.0};
    t.next_state = {1.0, 2.0};
    CHECK_THROWS_AS(agent.remember(t), std::invalid_argument);
    t.next_state = {1.0, 2.0, 3.0};
    t.action = 1.5;
    CHECK_THROWS_AS(agent.remember(t), std::invalid_argument);
    t.action = 0.5;
    CHECK_NOTHROW(agent.remember(t));
}

TEST_CASE("replay buffer follows ring discipline and never exceeds capacity") {
    AgentConfig cfg = small_config();
    cfg.replay_capacity = 2;
    cfg.batch = 2;
    Agent agent(cfg);
    auto make = [](double r) {
        Transition t;
        t.state = {r, 0.0, 0.0};
        t.next_state = {0.0, 0.0, 0.0};
        t.action = 0.5;
        t.reward = r;
        return t;
    };
    agent.remember(make(1.0));
    agent.remember(make(2.0));
    agent.remember(make(3.0));
    REQUIRE(agent.buffer_size() == 2);
    // The first transition was evicted; slots now hold #3 (overwrote #1) and #2.
    std::vector<double> rewards = {agent.buffer()[0].reward, agent.buffer()[1].reward};
    CHECK(rewards == std::vector<double>{3.0, 2.0});

    Rng rng(5);
    for (int i = 0; i < 100; ++i) {
        agent.remember(random_transition(rng, 3));
        CHECK(agent.buffer_size() <= 2);
    }
    CHECK(agent.total_remembered() == 103);
}

TEST_CASE("update refuses to run before warmup and batch requirements") {
    AgentConfig cfg = small_config();
    cfg.warmup = 12;
    cfg.batch = 4;
    Agent agent(cfg);
    Rng rng(9);
    for (int i = 0; i < 11; ++i) {
        CHECK_FALSE(agent.ready());
        CHECK_THROWS_AS(agent.update(), std::logic_error);
        agent.remember(random_transition(rng, 3));
    }
    agent.remember(random_transition(rng, 3));
    CHECK(agent.ready());
    CHECK_NOTHROW(agent.update());
}

TEST_CASE("tau = 1 copies the online networks into the targets") {
    AgentConfig cfg = small_config();
    cfg.tau = 1.0;
    Agent agent(cfg);
    Rng rng(13);
    for (int i = 0; i < 16; ++i) agent.remember(random_transition(rng, 3));
    agent.update();
    CHECK(mlp_params_equal(agent.actor(), agent.target_actor()));
    CHECK(mlp_params_equal(agent.critic(), agent.target_critic()));
}

TEST_CASE("soft update equals tau * online + (1 - tau) * target exactly") {
    AgentConfig cfg = small_config();
    cfg.tau = 0.25;
    Agent agent(cfg);
    Rng rng(17);
    for (int i = 0; i < 16; ++i) agent.remember(random_transition(rng, 3));

    const Mlp before = agent.target_actor();
    agent.update();
    const Mlp& online = agent.actor();
    const Mlp& after = agent.target_actor();
    for (std::size_t l = 0; l < online.w.size(); ++l)
        for (std::size_t i = 0; i < online.w[l].size(); ++i)
            CHECK(after.w[l][i] == 0.25 * online.w[l][i] + 0.75 * before.w[l][i]);
    for (std::size_t l = 0; l < online.b.size(); ++l)
        for (std::size_t i = 0; i < online.b[l].size(); ++i)
            CHECK(after.b[l][i] == 0.25 * online.b[l][i] + 0.75 * before.b[l][i]);
}

TEST_CASE("with zero discount the critic converges to the raw reward") {
    AgentConfig cfg = small_config();
    cfg.gamma = 0.0;
    cfg.batch = 4;
    cfg.warmup = 4;
    cfg.critic_lr = 5e-3;
    Agent agent(cfg);

    Transition t;
    t.state = {0.5, -0.5, 1.0};
    t.next_state = {0.0, 0.0, 0.0};
    t.action = 0.3;
    t.reward = 0.7;
    for (int i = 0; i < 4; ++i) agent.remember(t);

    double critic_loss = 1.0;
    for (int k = 0; k < 2000 && critic_loss > 1e-6; ++k)
        critic_loss = agent.update().critic_loss;

    std::vector<double> in = t.state;
    in.push_back(t.action);
    CHECK(std::abs(agent.critic().forward(in) - t.reward) <= 1e-2);
}

TEST_CASE("replay sampling is uniform over occupied slots") {
    AgentConfig cfg = small_config();
    cfg.replay_capacity = 64;
    cfg.batch = 8;
    Agent agent(cfg);
    Rng rng(21);
    const int slots = 16;
    for (int i = 0; i < slots; ++i) agent.remember(random_transition(rng, 3));

    std::vector<long> counts(slots, 0);
    const int draws = 100000;
    for (int chunk = 0; chunk < draws / 1000; ++chunk)
        for (int idx : agent.sample_slots(1000)) ++counts[static_cast<std::size_t>(idx)];

    const double expected = static_cast<double>(draws) / slots;
    double chi2 = 0.0;
    for (long c : counts) {
        const double d = static_cast<double>(c) - expected;
        chi2 += d * d / expected;
    }
    // 0.999 quantile of chi-square with 15 degrees of freedom.
    CHECK(chi2 < 37.70);
}

TEST_CASE("identical seed and transition stream yield identical parameters") {
    auto run = []() {
        Agent agent(small_config());
        Rng rng(33);
        for (int i = 0; i < 32; ++i) agent.remember(random_transition(rng, 3));
        UpdateStats last{};
        for (int k = 0; k < 10; ++k) last = agent.update();
        return std::make_pair(std::move(agent), last);
    };
    auto [a1, s1] = run();
    auto [a2, s2] = run();
    CHECK(mlp_params_equal(a1.actor(), a2.actor()));
    CHECK(mlp_params_equal(a1.critic(), a2.critic()));
    CHECK(mlp_params_equal(a1.target_actor(), a2.target_actor()));
    CHECK(mlp_params_equal(a1.target_critic(), a2.target_critic()));
    CHECK(s1.critic_loss == s2.critic_loss);
    CHECK(s1.actor_objective == s2.actor_objective);
}

TEST_CASE("agent checkpoints round-trip parameters and config") {
    AgentConfig cfg = small_config();
    cfg.noise_decay = 0.95;
    Agent agent(cfg);
    Rng rng(51);
    for (int i = 0; i < 32; ++i) agent.remember(random_transition(rng, 3));
    for (int k = 0; k < 5; ++k) agent.update();
    agent.decay_exploration();

    const std::string path = "rl_agent_checkpoint.bin";
    save_agent_file(agent, path);
    Agent loaded = load_agent_file(path);

    CHECK(loaded.config().state_dim == cfg.state_dim);
    CHECK(loaded.config().hidden == cfg.hidden);
    CHECK(loaded.config().seed == cfg.seed);
    CHECK(loaded.config().noise_decay == cfg.noise_decay);
    CHECK(loaded.exploration_scale() == agent.exploration_scale());
    CHECK(mlp_params_equal(loaded.actor(), agent.actor()));
    CHECK(mlp_params_equal(loaded.critic(), agent.critic()));
    CHECK(mlp_params_equal(loaded.target_actor(), agent.target_actor()));
    CHECK(mlp_params_equal(loaded.target_critic(), agent.target_critic()));

    const std::vector<double> s = {0.2, 0.4, -0.6};
    CHECK(loaded.act(s, false) == agent.act(s, false));
    std::remove(path.c_str());
}

TEST_CASE("checkpoint loading rejects missing and corrupt files") {
    CHECK_THROWS_AS(load_agent_file("no_such_agent.bin"), ConfigError);

    const std::string path = "bad_agent_checkpoint.bin";
    std::ofstream(path, std::ios::binary) << "definitely not a checkpoint";
    CHECK_THROWS_AS(load_agent_file(path), ConfigError);
    std::remove(path.c_str());

    // Truncated: valid magic, nothing else.
    std::ofstream(path, std::ios::binary) << "TLRAGT01";
    CHECK_THROWS_AS(load_agent_file(path), ConfigError);
    std::remove(path.c_str());
}
