#include "tailor/ddpg.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "tailor/error.hpp"

namespace tailor::rl {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double clip01(double x) { return std::min(1.0, std::max(0.0, x)); }

void check_config(const AgentConfig& cfg) {
    if (cfg.state_dim < 1) throw ConfigError("agent state_dim must be at least 1");
    if (cfg.hidden.empty()) throw ConfigError("agent needs at least one hidden layer");
    for (int h : cfg.hidden)
        if (h < 1) throw ConfigError("agent hidden sizes must be positive");
    if (cfg.actor_lr <= 0.0 || cfg.critic_lr <= 0.0)
        throw ConfigError("agent learning rates must be positive");
    if (cfg.gamma < 0.0 || cfg.gamma > 1.0)
        throw ConfigError("agent discount must lie in [0, 1]");
    if (cfg.tau <= 0.0 || cfg.tau > 1.0)
        throw ConfigError("agent soft-update rate must lie in (0, 1]");
    if (cfg.noise_scale < 0.0) throw ConfigError("agent noise scale must be nonnegative");
    if (cfg.noise_decay <= 0.0 || cfg.noise_decay > 1.0)
        throw ConfigError("agent noise decay must lie in (0, 1]");
    if (cfg.batch < 1) throw ConfigError("agent batch size must be positive");
    if (cfg.replay_capacity < cfg.batch)
        throw ConfigError("agent replay capacity must be at least the batch size");
    if (cfg.warmup < 0) throw ConfigError("agent warmup must be nonnegative");
}

std::vector<int> full_dims(int in, const std::vector<int>& hidden) {
    std::vector<int> dims;
    dims.push_back(in);
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(1);
    return dims;
}

// target = tau * online + (1 - tau) * target, exactly, parameter-wise.
void soft_update(Mlp& target, const Mlp& online, double tau) {
    for (std::size_t l = 0; l < online.w.size(); ++l) {
        for (std::size_t i = 0; i < online.w[l].size(); ++i)
            target.w[l][i] = tau * online.w[l][i] + (1.0 - tau) * target.w[l][i];
        for (std::size_t i = 0; i < online.b[l].size(); ++i)
            target.b[l][i] = tau * online.b[l][i] + (1.0 - tau) * target.b[l][i];
    }
}

}  // namespace

Mlp Mlp::init(const std::vector<int>& dims, Rng& rng) {
    Mlp net;
    net.dims = dims;
    const std::size_t layers = dims.size() - 1;
    for (std::size_t l = 0; l < layers; ++l) {
        const int fan_in = dims[l], fan_out = dims[l + 1];
        // Hidden layers draw from +-1/sqrt(fan_in); the output layer starts
        // near zero so initial actions sit at 0.5 and initial values at 0.
        const double bound = l + 1 == layers ? 3e-3 : 1.0 / std::sqrt(fan_in);
        std::vector<double> w(static_cast<std::size_t>(fan_out) * fan_in);
        std::vector<double> b(static_cast<std::size_t>(fan_out));
        for (double& x : w) x = rng.uniform(-bound, bound);
        for (double& x : b) x = rng.uniform(-bound, bound);
        net.w.push_back(std::move(w));
        net.b.push_back(std::move(b));
    }
    net.mw = net.zero_like_w();
    net.vw = net.zero_like_w();
    net.mb = net.zero_like_b();
    net.vb = net.zero_like_b();
    return net;
}

std::vector<std::vector<double>> Mlp::zero_like_w() const {
    std::vector<std::vector<double>> z;
    for (const auto& layer : w) z.emplace_back(layer.size(), 0.0);
    return z;
}

std::vector<std::vector<double>> Mlp::zero_like_b() const {
    std::vector<std::vector<double>> z;
    for (const auto& layer : b) z.emplace_back(layer.size(), 0.0);
    return z;
}

double Mlp::forward(const std::vector<double>& in,
                    std::vector<std::vector<double>>* acts) const {
    if (static_cast<int>(in.size()) != dims.front())
        throw std::invalid_argument("mlp input size does not match its first layer");
    std::vector<double> cur = in;
    if (acts) {
        acts->clear();
        acts->push_back(cur);
    }
    for (std::size_t l = 0; l < w.size(); ++l) {
        const int rows = dims[l + 1], cols = dims[l];
        std::vector<double> next(static_cast<std::size_t>(rows));
        for (int r = 0; r < rows; ++r) {
            double z = b[l][static_cast<std::size_t>(r)];
            const double* row = &w[l][static_cast<std::size_t>(r) * cols];
            for (int c = 0; c < cols; ++c) z += row[c] * cur[static_cast<std::size_t>(c)];
            next[static_cast<std::size_t>(r)] = l + 1 == w.size() ? z : std::tanh(z);
        }
        cur = std::move(next);
        if (acts) acts->push_back(cur);
    }
    return cur[0];
}

std::vector<double> Mlp::backward(const std::vector<std::vector<double>>& acts,
                                  double dout,
                                  std::vector<std::vector<double>>* gw,
                                  std::vector<std::vector<double>>* gb) const {
    if (acts.size() != dims.size())
        throw std::invalid_argument("mlp backward needs activations from forward");
    std::vector<double> delta{dout};
    for (std::size_t l = w.size(); l-- > 0;) {
        const int rows = dims[l + 1], cols = dims[l];
        const std::vector<double>& below = acts[l];
        std::vector<double> dbelow(static_cast<std::size_t>(cols), 0.0);
        for (int r = 0; r < rows; ++r) {
            const double d = delta[static_cast<std::size_t>(r)];
            const std::size_t base = static_cast<std::size_t>(r) * cols;
            if (gb) (*gb)[l][static_cast<std::size_t>(r)] += d;
            for (int c = 0; c < cols; ++c) {
                if (gw) (*gw)[l][base + c] += d * below[static_cast<std::size_t>(c)];
                dbelow[static_cast<std::size_t>(c)] += d * w[l][base + c];
            }
        }
        if (l > 0) {
            // Undo the tanh of the layer below: dtanh = 1 - tanh^2.
            for (int c = 0; c < cols; ++c) {
                const double a = below[static_cast<std::size_t>(c)];
                dbelow[static_cast<std::size_t>(c)] *= 1.0 - a * a;
            }
        }
        delta = std::move(dbelow);
    }
    return delta;
}

void Mlp::adam_step(const std::vector<std::vector<double>>& gw,
                    const std::vector<std::vector<double>>& gb, double lr) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    ++t;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
    auto apply = [&](std::vector<double>& p, std::vector<double>& m,
                     std::vector<double>& v, const std::vector<double>& g) {
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
        }
    };
    for (std::size_t l = 0; l < w.size(); ++l) {
        apply(w[l], mw[l], vw[l], gw[l]);
        apply(b[l], mb[l], vb[l], gb[l]);
    }
}

Agent::Agent(const AgentConfig& cfg)
    : cfg_(cfg),
      noise_scale_(cfg.noise_scale),
      noise_rng_(0),
      sample_rng_(0) {
    check_config(cfg_);
    Rng base(cfg_.seed);
    Rng init_rng = base.stream(1);
    actor_ = Mlp::init(full_dims(cfg_.state_dim, cfg_.hidden), init_rng);
    critic_ = Mlp::init(full_dims(cfg_.state_dim + 1, cfg_.hidden), init_rng);
    target_actor_ = actor_;
    target_critic_ = critic_;
    noise_rng_ = base.stream(2);
    sample_rng_ = base.stream(3);
}

double Agent::act(const std::vector<double>& state, bool explore) {
    if (static_cast<int>(state.size()) != cfg_.state_dim)
        throw std::invalid_argument("agent state dimension does not match its config");
    double a = sigmoid(actor_.forward(state));
    if (explore && noise_scale_ > 0.0)
        a = clip01(a + noise_scale_ * noise_rng_.normal());
    return a;
}

void Agent::remember(const Transition& tr) {
    if (static_cast<int>(tr.state.size()) != cfg_.state_dim ||
        static_cast<int>(tr.next_state.size()) != cfg_.state_dim)
        throw std::invalid_argument("transition state dimension does not match the agent");
    if (tr.action < 0.0 || tr.action > 1.0)
        throw std::invalid_argument("transition action must lie in [0, 1]");
    const std::size_t cap = static_cast<std::size_t>(cfg_.replay_capacity);
    if (buffer_.size() < cap)
        buffer_.push_back(tr);
    else
        buffer_[write_pos_] = tr;
    write_pos_ = (write_pos_ + 1) % cap;
    ++total_remembered_;
    // Welford running reward statistics.
    ++reward_count_;
    const double d = tr.reward - reward_mean_;
    reward_mean_ += d / static_cast<double>(reward_count_);
    reward_m2_ += d * (tr.reward - reward_mean_);
}

bool Agent::ready() const {
    return static_cast<int>(buffer_.size()) >= cfg_.batch &&
           total_remembered_ >= cfg_.warmup;
}

double Agent::normalize(double reward) const {
    if (!cfg_.normalize_rewards || reward_count_ < 2) return reward;
    const double var = reward_m2_ / static_cast<double>(reward_count_ - 1);
    // A constant reward stream carries its own scale; pass it through so the
    // critic can still regress to the raw value.
    if (var <= 1e-16) return reward;
    return (reward - reward_mean_) / std::sqrt(var);
}

std::vector<int> Agent::sample_slots(int n) {
    if (buffer_.empty()) throw std::logic_error("cannot sample from an empty replay buffer");
    std::vector<int> idx(static_cast<std::size_t>(n));
    for (int& i : idx) i = sample_rng_.uniform_int(static_cast<int>(buffer_.size()));
    return idx;
}

UpdateStats Agent::update() {
    if (!ready())
        throw std::logic_error("agent update called before the warmup/batch requirement is met");
    const std::vector<int> batch = sample_slots(cfg_.batch);
    const double inv_b = 1.0 / static_cast<double>(cfg_.batch);

    UpdateStats stats;
    std::vector<std::vector<double>> acts;

    // Critic regression toward r + gamma * Q_target(s', mu_target(s')).
    auto cgw = critic_.zero_like_w();
    auto cgb = critic_.zero_like_b();
    for (int i : batch) {
        const Transition& tr = buffer_[static_cast<std::size_t>(i)];
        double y = normalize(tr.reward);
        if (!tr.terminal && cfg_.gamma > 0.0) {
            std::vector<double> next_in = tr.next_state;
            next_in.push_back(sigmoid(target_actor_.forward(tr.next_state)));
            y += cfg_.gamma * target_critic_.forward(next_in);
        }
        std::vector<double> in = tr.state;
        in.push_back(tr.action);
        const double q = critic_.forward(in, &acts);
        const double err = q - y;
        stats.critic_loss += err * err * inv_b;
        critic_.backward(acts, 2.0 * err * inv_b, &cgw, &cgb);
    }
    critic_.adam_step(cgw, cgb, cfg_.critic_lr);

    // Actor ascends Q(s, mu(s)): descend the gradient of -Q.
    auto agw = actor_.zero_like_w();
    auto agb = actor_.zero_like_b();
    std::vector<std::vector<double>> actor_acts;
    for (int i : batch) {
        const Transition& tr = buffer_[static_cast<std::size_t>(i)];
        const double pre = actor_.forward(tr.state, &actor_acts);
        const double mu = sigmoid(pre);
        std::vector<double> in = tr.state;
        in.push_back(mu);
        const double q = critic_.forward(in, &acts);
        stats.actor_objective += q * inv_b;
        const std::vector<double> din = critic_.backward(acts, 1.0, nullptr, nullptr);
        const double dq_da = din[static_cast<std::size_t>(cfg_.state_dim)];
        actor_.backward(actor_acts, -dq_da * mu * (1.0 - mu) * inv_b, &agw, &agb);
    }
    actor_.adam_step(agw, agb, cfg_.actor_lr);

    soft_update(target_actor_, actor_, cfg_.tau);
    soft_update(target_critic_, critic_, cfg_.tau);
    return stats;
}

namespace {

constexpr char kMagic[8] = {'T', 'L', 'R', 'A', 'G', 'T', '0', '1'};

template <typename T>
void put(std::ofstream& out, const T& x) {
    out.write(reinterpret_cast<const char*>(&x), sizeof(T));
}

template <typename T>
T get(std::ifstream& in) {
    T x{};
    in.read(reinterpret_cast<char*>(&x), sizeof(T));
    if (!in) throw ConfigError("agent checkpoint is truncated or unreadable");
    return x;
}

void put_vec(std::ofstream& out, const std::vector<double>& v) {
    put(out, static_cast<std::uint64_t>(v.size()));
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
}

std::vector<double> get_vec(std::ifstream& in) {
    const auto n = get<std::uint64_t>(in);
    std::vector<double> v(n);
    in.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(n * sizeof(double)));
    if (!in) throw ConfigError("agent checkpoint is truncated or unreadable");
    return v;
}

void put_mlp(std::ofstream& out, const Mlp& net) {
    put(out, static_cast<std::int64_t>(net.t));
    for (std::size_t l = 0; l < net.w.size(); ++l) {
        put_vec(out, net.w[l]);
        put_vec(out, net.b[l]);
        put_vec(out, net.mw[l]);
        put_vec(out, net.vw[l]);
        put_vec(out, net.mb[l]);
        put_vec(out, net.vb[l]);
    }
}

void get_mlp(std::ifstream& in, Mlp& net) {
    net.t = get<std::int64_t>(in);
    for (std::size_t l = 0; l < net.w.size(); ++l) {
        auto check = [&](std::vector<double>& dst) {
            std::vector<double> v = get_vec(in);
            if (v.size() != dst.size())
                throw ConfigError("agent checkpoint layer shape does not match its config");
            dst = std::move(v);
        };
        check(net.w[l]);
        check(net.b[l]);
        check(net.mw[l]);
        check(net.vw[l]);
        check(net.mb[l]);
        check(net.vb[l]);
    }
}

}  // namespace

void save_agent_file(const Agent& agent, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open agent checkpoint for writing: " + path);
    out.write(kMagic, sizeof(kMagic));
    const AgentConfig& c = agent.cfg_;
    put(out, static_cast<std::int32_t>(c.state_dim));
    put(out, static_cast<std::uint64_t>(c.hidden.size()));
    for (int h : c.hidden) put(out, static_cast<std::int32_t>(h));
    put(out, c.actor_lr);
    put(out, c.critic_lr);
    put(out, c.gamma);
    put(out, c.tau);
    put(out, c.noise_scale);
    put(out, c.noise_decay);
    put(out, static_cast<std::int32_t>(c.replay_capacity));
    put(out, static_cast<std::int32_t>(c.batch));
    put(out, static_cast<std::int32_t>(c.warmup));
    put(out, c.seed);
    put(out, static_cast<std::uint8_t>(c.normalize_rewards ? 1 : 0));
    put(out, agent.noise_scale_);
    put(out, static_cast<std::int64_t>(agent.reward_count_));
    put(out, agent.reward_mean_);
    put(out, agent.reward_m2_);
    put_mlp(out, agent.actor_);
    put_mlp(out, agent.critic_);
    put_mlp(out, agent.target_actor_);
    put_mlp(out, agent.target_critic_);
    if (!out) throw ConfigError("failed to write agent checkpoint: " + path);
}

Agent load_agent_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open agent checkpoint: " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw ConfigError("not an agent checkpoint (bad magic): " + path);
    AgentConfig c;
    c.state_dim = get<std::int32_t>(in);
    c.hidden.resize(get<std::uint64_t>(in));
    for (int& h : c.hidden) h = get<std::int32_t>(in);
    c.actor_lr = get<double>(in);
    c.critic_lr = get<double>(in);
    c.gamma = get<double>(in);
    c.tau = get<double>(in);
    c.noise_scale = get<double>(in);
    c.noise_decay = get<double>(in);
    c.replay_capacity = get<std::int32_t>(in);
    c.batch = get<std::int32_t>(in);
    c.warmup = get<std::int32_t>(in);
    c.seed = get<std::uint64_t>(in);
    c.normalize_rewards = get<std::uint8_t>(in) != 0;
    Agent agent(c);
    agent.noise_scale_ = get<double>(in);
    agent.reward_count_ = get<std::int64_t>(in);
    agent.reward_mean_ = get<double>(in);
    agent.reward_m2_ = get<double>(in);
    get_mlp(in, agent.actor_);
    get_mlp(in, agent.critic_);
    get_mlp(in, agent.target_actor_);
    get_mlp(in, agent.target_critic_);
    return agent;
}

}  // namespace tailor::rl
