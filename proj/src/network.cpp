#include "tailor/network.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "tailor/error.hpp"

namespace tailor::nn {

Network Network::init(const NetSpec& spec, Rng& rng) {
    validate(spec);
    Network net;
    net.spec = spec;
    net.params.reserve(spec.layers.size());
    for (const LayerSpec& l : spec.layers) net.params.push_back(init_params(l, rng));
    return net;
}

Tensor Network::forward(const Tensor& x, Trace* trace) const {
    if (trace) {
        trace->acts.clear();
        trace->acts.push_back(x);
    }
    Tensor cur = x;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        cur = layer_forward(spec.layers[i], params[i], cur);
        if (trace) trace->acts.push_back(cur);
    }
    if (cur.rank() != 2) {
        // flatten trailing dims into the class axis
        cur.shape = {cur.shape[0], static_cast<int>(cur.size() / cur.shape[0])};
    }
    if (cur.shape[1] != spec.num_classes)
        throw std::invalid_argument("forward: logits do not match num_classes");
    return cur;
}

Gradients Network::backward(const Trace& trace, const Tensor& dlogits) const {
    if (trace.acts.size() != spec.layers.size() + 1)
        throw std::logic_error("backward: trace does not match network depth");
    Gradients g;
    g.layers.resize(spec.layers.size());
    Tensor d = dlogits;
    for (int i = static_cast<int>(spec.layers.size()) - 1; i >= 0; --i) {
        const Tensor& in = trace.acts[static_cast<std::size_t>(i)];
        const Tensor& out = trace.acts[static_cast<std::size_t>(i) + 1];
        if (d.size() != out.size())
            throw std::logic_error("backward: gradient shape does not match trace");
        d.shape = out.shape;  // flattened logits grad back to layer-output shape
        g.layers[static_cast<std::size_t>(i)] =
            layer_backward(spec.layers[static_cast<std::size_t>(i)], params[static_cast<std::size_t>(i)], in, d);
        d = std::move(g.layers[static_cast<std::size_t>(i)].dinput);
    }
    g.dinput = std::move(d);
    return g;
}

void Network::apply_sgd(const Gradients& grads, double lr) {
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!spec.layers[i].parametric()) continue;
        axpy(-lr, grads.layers[i].dweight, params[i].weight);
        axpy(-lr, grads.layers[i].dbias, params[i].bias);
    }
}

std::int64_t Network::total_macs() const {
    std::int64_t total = 0;
    for (const LayerSpec& l : spec.layers) total += count_macs(l);
    return total;
}

std::pair<double, Tensor> softmax_xent(const Tensor& logits, const std::vector<int>& labels) {
    const int B = logits.shape[0], C = logits.shape[1];
    if (static_cast<int>(labels.size()) != B)
        throw std::invalid_argument("softmax_xent: label count does not match batch");
    Tensor dlogits = Tensor::zeros(logits.shape);
    double loss = 0.0;
    for (int b = 0; b < B; ++b) {
        double mx = logits(b, 0);
        for (int c = 1; c < C; ++c) mx = std::max(mx, logits(b, c));
        double z = 0.0;
        for (int c = 0; c < C; ++c) z += std::exp(logits(b, c) - mx);
        const double logz = std::log(z) + mx;
        loss += logz - logits(b, labels[static_cast<std::size_t>(b)]);
        for (int c = 0; c < C; ++c) {
            const double p = std::exp(logits(b, c) - logz);
            dlogits(b, c) = (p - (c == labels[static_cast<std::size_t>(b)] ? 1.0 : 0.0)) / B;
        }
    }
    return {loss / B, dlogits};
}

Tensor stack_examples(const std::vector<Example>& ex, const std::vector<int>& order, int lo,
                      int hi, std::vector<int>* labels) {
    const Tensor& first = ex[static_cast<std::size_t>(order[static_cast<std::size_t>(lo)])].x;
    std::vector<int> shape = first.shape;
    shape.insert(shape.begin(), hi - lo);
    Tensor batch = Tensor::zeros(shape);
    labels->clear();
    const std::size_t per = first.data.size();
    for (int i = lo; i < hi; ++i) {
        const Example& e = ex[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
        std::copy(e.x.data.begin(), e.x.data.end(),
                  batch.data.begin() + static_cast<std::size_t>(i - lo) * per);
        labels->push_back(e.label);
    }
    return batch;
}

double accuracy(const Network& net, const std::vector<Example>& split) {
    if (split.empty()) return 0.0;
    int hits = 0;
    std::vector<int> idx(split.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::vector<int> labels;
    Tensor batch = stack_examples(split, idx, 0, static_cast<int>(split.size()), &labels);
    Tensor logits = net.forward(batch);
    for (int b = 0; b < logits.shape[0]; ++b) {
        int best = 0;
        for (int c = 1; c < logits.shape[1]; ++c)
            if (logits(b, c) > logits(b, best)) best = c;
        if (best == labels[static_cast<std::size_t>(b)]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(split.size());
}

double train_from(Network& net, const Dataset& data, const TrainConfig& cfg) {
    if (data.train.empty()) throw std::invalid_argument("train: empty training split");
    if (cfg.lr <= 0.0) throw std::invalid_argument("train: lr must be positive");

    Rng shuffle_rng = Rng(cfg.seed).stream(2);
    std::vector<int> order(data.train.size());
    std::iota(order.begin(), order.end(), 0);

    const int n = static_cast<int>(data.train.size());
    const int batch = std::max(1, std::min(cfg.batch, n));
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        for (int lo = 0; lo < n; lo += batch) {
            const int hi = std::min(lo + batch, n);
            std::vector<int> labels;
            Tensor bx = stack_examples(data.train, order, lo, hi, &labels);
            Trace trace;
            Tensor logits = net.forward(bx, &trace);
            auto [loss, dlogits] = softmax_xent(logits, labels);
            if (!std::isfinite(loss)) throw TrainingError("train: non-finite loss", epoch);
            Gradients g = net.backward(trace, dlogits);
            net.apply_sgd(g, cfg.lr);
        }
    }
    return accuracy(net, data.val);
}

TrainResult train_sgd(const NetSpec& spec, const Dataset& data, const TrainConfig& cfg) {
    Rng init_rng = Rng(cfg.seed).stream(1);
    TrainResult res;
    res.net = Network::init(spec, init_rng);
    res.val_accuracy = train_from(res.net, data, cfg);
    return res;
}

}  // namespace tailor::nn
