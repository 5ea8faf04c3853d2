#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tailor/rng.hpp"

namespace tailor::rl {

// One step of the layer-by-layer compression walk: the agent saw `state`,
// emitted `action`, and the environment answered with `reward` and the
// next layer's embedding.  `terminal` marks the last layer of an episode.
struct Transition {
    std::vector<double> state;
    double action = 0.0;
    double reward = 0.0;
    std::vector<double> next_state;
    bool terminal = false;
};

struct AgentConfig {
    int state_dim = 0;
    std::vector<int> hidden = {64, 64};
    double actor_lr = 1e-3;
    double critic_lr = 1e-3;
    double gamma = 0.99;        // discount, in [0, 1]
    double tau = 0.01;          // soft-update rate, in (0, 1]
    double noise_scale = 0.5;   // exploration noise std-dev on the action
    double noise_decay = 0.99;  // multiplicative decay applied per episode
    int replay_capacity = 2000;
    int batch = 64;
    int warmup = 100;           // transitions stored before updates may run
    std::uint64_t seed = 0;
    bool normalize_rewards = true;
};

// Small fully connected net (tanh hidden units, linear output) with its Adam
// optimizer state.  Exposed so tests can compare parameters directly.
struct Mlp {
    std::vector<int> dims;                   // widths, input through output
    std::vector<std::vector<double>> w;      // per layer, row-major out x in
    std::vector<std::vector<double>> b;      // per layer
    std::vector<std::vector<double>> mw, vw; // Adam first/second moments
    std::vector<std::vector<double>> mb, vb;
    long t = 0;                              // Adam step count

    static Mlp init(const std::vector<int>& dims, Rng& rng);
    // Forward pass; if `acts` is given it receives the post-activation value
    // of every layer (input first), sized for a matching backward() call.
    double forward(const std::vector<double>& in,
                   std::vector<std::vector<double>>* acts = nullptr) const;
    // Backprop of a scalar upstream gradient through activations recorded by
    // forward(); accumulates into gw/gb and returns d(out)/d(in).
    std::vector<double> backward(const std::vector<std::vector<double>>& acts,
                                 double dout,
                                 std::vector<std::vector<double>>* gw,
                                 std::vector<std::vector<double>>* gb) const;
    void adam_step(const std::vector<std::vector<double>>& gw,
                   const std::vector<std::vector<double>>& gb, double lr);
    std::vector<std::vector<double>> zero_like_w() const;
    std::vector<std::vector<double>> zero_like_b() const;
};

struct UpdateStats {
    double critic_loss = 0.0;      // mean squared TD error before the step
    double actor_objective = 0.0;  // mean Q(s, mu(s)) being ascended
};

// Continuous-action actor-critic agent with a single action in [0, 1].
// Deterministic given (config, seed, observation/reward stream).
class Agent {
public:
    explicit Agent(const AgentConfig& cfg);

    const AgentConfig& config() const { return cfg_; }

    // Actor output in [0, 1]; with explore=true, Gaussian noise at the
    // current exploration scale is added and the sum clipped back to [0, 1].
    double act(const std::vector<double>& state, bool explore);

    // Ring-buffer insert; once full, the oldest transition is overwritten.
    void remember(const Transition& t);

    std::size_t buffer_size() const { return buffer_.size(); }
    const std::vector<Transition>& buffer() const { return buffer_; }
    long total_remembered() const { return total_remembered_; }

    // True once the buffer holds a full batch and the warmup count is met.
    bool ready() const;

    // Draws n indices uniformly over occupied slots (with replacement) from
    // the seeded sampling stream; update() uses this for its minibatches.
    std::vector<int> sample_slots(int n);

    // One DDPG step: critic regresses toward r + gamma * Q'(s', mu'(s')),
    // actor ascends Q(s, mu(s)), targets soft-update with tau.
    UpdateStats update();

    // Multiplies the exploration noise scale by the configured decay.
    void decay_exploration() { noise_scale_ *= cfg_.noise_decay; }
    double exploration_scale() const { return noise_scale_; }

    // Parameter access for tests and checkpointing.
    const Mlp& actor() const { return actor_; }
    const Mlp& critic() const { return critic_; }
    const Mlp& target_actor() const { return target_actor_; }
    const Mlp& target_critic() const { return target_critic_; }

private:
    friend void save_agent_file(const Agent&, const std::string&);
    friend Agent load_agent_file(const std::string&);

    double normalize(double reward) const;

    AgentConfig cfg_;
    Mlp actor_, critic_, target_actor_, target_critic_;
    std::vector<Transition> buffer_;
    std::size_t write_pos_ = 0;
    long total_remembered_ = 0;
    double noise_scale_ = 0.0;
    // Running reward statistics (Welford) fed by remember().
    long reward_count_ = 0;
    double reward_mean_ = 0.0;
    double reward_m2_ = 0.0;
    Rng noise_rng_, sample_rng_;
};

// Versioned binary checkpoint: config echo plus all online/target parameters,
// optimizer moments, reward statistics and the current exploration scale.
// The replay buffer and RNG positions are not captured, so a loaded agent
// reproduces inference exactly and continues training with fresh streams.
void save_agent_file(const Agent& agent, const std::string& path);
Agent load_agent_file(const std::string& path);

}  // namespace tailor::rl
