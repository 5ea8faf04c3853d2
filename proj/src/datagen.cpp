#include "tailor/datagen.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "tailor/rng.hpp"

namespace tailor::bench {

namespace {

void check_spec(const DataSpec& spec) {
    if (spec.classes < 2) throw std::invalid_argument("generate_dataset: need at least 2 classes");
    if (spec.n < spec.classes)
        throw std::invalid_argument("generate_dataset: need at least one example per class");
    if (spec.channels < 1) throw std::invalid_argument("generate_dataset: channels must be >= 1");
    if (spec.image_size < 4)
        throw std::invalid_argument("generate_dataset: image_size must be >= 4");
    if (!(spec.difficulty >= 0.0))
        throw std::invalid_argument("generate_dataset: difficulty must be >= 0");
}

std::vector<nn::Example> make_split(const DataSpec& spec,
                                    const std::vector<nn::Tensor>& prototypes, int count,
                                    Rng& noise) {
    std::vector<nn::Example> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        const int label = i % spec.classes;
        nn::Tensor x = prototypes[static_cast<std::size_t>(label)];
        for (double& v : x.data) v += spec.difficulty * noise.normal();
        out.push_back({std::move(x), label});
    }
    return out;
}

}  // namespace

nn::Dataset generate_dataset(const DataSpec& spec) {
    check_spec(spec);
    Rng base(spec.seed);
    Rng proto_rng = base.stream(1);
    Rng train_rng = base.stream(2);
    Rng val_rng = base.stream(3);

    std::vector<nn::Tensor> prototypes;
    prototypes.reserve(static_cast<std::size_t>(spec.classes));
    for (int c = 0; c < spec.classes; ++c) {
        nn::Tensor p = nn::Tensor::zeros({spec.channels, spec.image_size, spec.image_size});
        double ss = 0.0;
        for (double& v : p.data) {
            v = proto_rng.normal();
            ss += v * v;
        }
        const double rms = std::sqrt(ss / static_cast<double>(p.data.size()));
        for (double& v : p.data) v /= rms;
        prototypes.push_back(std::move(p));
    }

    nn::Dataset data;
    data.train = make_split(spec, prototypes, spec.n, train_rng);
    data.val = make_split(spec, prototypes, std::max(spec.classes, spec.n / 4), val_rng);
    return data;
}

}  // namespace tailor::bench
