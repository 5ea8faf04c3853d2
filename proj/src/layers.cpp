#include "tailor/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace tailor::nn {

const char* kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::dense: return "dense";
        case LayerKind::conv2d: return "conv2d";
        case LayerKind::depthwise_conv2d: return "depthwise_conv2d";
        case LayerKind::pointwise_conv2d: return "pointwise_conv2d";
        case LayerKind::relu: return "relu";
        case LayerKind::identity: return "identity";
        case LayerKind::zero: return "zero";
    }
    return "?";
}

LayerKind kind_from_name(const std::string& name) {
    if (name == "dense") return LayerKind::dense;
    if (name == "conv2d") return LayerKind::conv2d;
    if (name == "depthwise_conv2d") return LayerKind::depthwise_conv2d;
    if (name == "pointwise_conv2d") return LayerKind::pointwise_conv2d;
    if (name == "relu") return LayerKind::relu;
    if (name == "identity") return LayerKind::identity;
    if (name == "zero") return LayerKind::zero;
    throw std::invalid_argument("unknown layer kind: " + name);
}

void validate(const LayerSpec& s) {
    auto need_channels = [&] {
        if (s.in_channels <= 0 || s.out_channels <= 0)
            throw std::invalid_argument(std::string(kind_name(s.kind)) + ": channels must be positive");
    };
    auto need_spatial = [&] {
        if (s.spatial_h <= 0 || s.spatial_w <= 0)
            throw std::invalid_argument(std::string(kind_name(s.kind)) + ": spatial_in must be positive");
    };
    auto need_odd_kernel = [&] {
        if (s.kernel_size <= 0 || s.kernel_size % 2 == 0)
            throw std::invalid_argument(std::string(kind_name(s.kind)) + ": kernel_size must be odd positive");
    };
    switch (s.kind) {
        case LayerKind::dense:
            need_channels();
            break;
        case LayerKind::conv2d:
            need_channels();
            need_spatial();
            need_odd_kernel();
            break;
        case LayerKind::depthwise_conv2d:
            need_channels();
            need_spatial();
            need_odd_kernel();
            if (s.in_channels != s.out_channels)
                throw std::invalid_argument("depthwise_conv2d: in_channels must equal out_channels");
            break;
        case LayerKind::pointwise_conv2d:
            need_channels();
            need_spatial();
            if (s.kernel_size != 1)
                throw std::invalid_argument("pointwise_conv2d: kernel_size must be 1");
            break;
        case LayerKind::zero:
            if (s.out_channels <= 0)
                throw std::invalid_argument("zero: out_channels must be positive");
            need_spatial();
            break;
        case LayerKind::relu:
        case LayerKind::identity:
            break;
    }
}

void validate(const NetSpec& net) {
    if (net.num_classes <= 0) throw std::invalid_argument("NetSpec: num_classes must be positive");
    if (net.layers.empty()) throw std::invalid_argument("NetSpec: no layers");

    bool any_parametric = false;
    std::vector<int> cur;  // shape after previous layer, batch excluded; empty = first layer decides
    for (const LayerSpec& s : net.layers) {
        validate(s);
        if (s.parametric()) any_parametric = true;
        std::int64_t cur_elems = cur.empty() ? -1 : Tensor::numel(cur);
        switch (s.kind) {
            case LayerKind::dense:
                if (cur_elems >= 0 && cur_elems != s.in_channels)
                    throw std::invalid_argument("NetSpec: dense in_channels mismatch");
                cur = {s.out_channels};
                break;
            case LayerKind::conv2d:
            case LayerKind::depthwise_conv2d:
            case LayerKind::pointwise_conv2d:
                if (!cur.empty() &&
                    cur != std::vector<int>{s.in_channels, s.spatial_h, s.spatial_w})
                    throw std::invalid_argument("NetSpec: conv input shape mismatch");
                cur = {s.out_channels, s.spatial_h, s.spatial_w};
                break;
            case LayerKind::zero:
                cur = {s.out_channels, s.spatial_h, s.spatial_w};
                break;
            case LayerKind::relu:
            case LayerKind::identity:
                break;  // shape preserved
        }
    }
    if (!any_parametric) throw std::invalid_argument("NetSpec: needs at least one parametric layer");
    if (!cur.empty() && Tensor::numel(cur) != net.num_classes)
        throw std::invalid_argument("NetSpec: final layer output does not match num_classes");
}

LayerParams init_params(const LayerSpec& s, Rng& rng) {
    LayerParams p;
    if (!s.parametric()) return p;

    std::vector<int> wshape;
    std::int64_t fan_in = 0, fan_out = 0;
    const int k = s.kernel_size;
    switch (s.kind) {
        case LayerKind::dense:
        case LayerKind::pointwise_conv2d:
            wshape = {s.out_channels, s.in_channels};
            fan_in = s.in_channels;
            fan_out = s.out_channels;
            break;
        case LayerKind::conv2d:
            wshape = {s.out_channels, s.in_channels, k, k};
            fan_in = static_cast<std::int64_t>(k) * k * s.in_channels;
            fan_out = static_cast<std::int64_t>(k) * k * s.out_channels;
            break;
        case LayerKind::depthwise_conv2d:
            wshape = {s.out_channels, k, k};
            fan_in = static_cast<std::int64_t>(k) * k;
            fan_out = fan_in;
            break;
        default:
            break;
    }
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    p.weight = Tensor::zeros(wshape);
    for (double& v : p.weight.data) v = rng.uniform(-a, a);
    p.bias = Tensor::zeros({s.out_channels});
    return p;
}

std::int64_t count_macs(const LayerSpec& s) {
    const std::int64_t k2 = static_cast<std::int64_t>(s.kernel_size) * s.kernel_size;
    const std::int64_t hw = static_cast<std::int64_t>(s.spatial_h) * s.spatial_w;
    switch (s.kind) {
        case LayerKind::dense: return static_cast<std::int64_t>(s.in_channels) * s.out_channels;
        case LayerKind::conv2d: return k2 * s.in_channels * s.out_channels * hw;
        case LayerKind::depthwise_conv2d: return k2 * s.out_channels * hw;
        case LayerKind::pointwise_conv2d: return static_cast<std::int64_t>(s.in_channels) * s.out_channels * hw;
        default: return 0;
    }
}

std::int64_t weight_count(const LayerSpec& s) {
    const std::int64_t k2 = static_cast<std::int64_t>(s.kernel_size) * s.kernel_size;
    switch (s.kind) {
        case LayerKind::dense:
        case LayerKind::pointwise_conv2d:
            return static_cast<std::int64_t>(s.in_channels) * s.out_channels;
        case LayerKind::conv2d: return k2 * s.in_channels * s.out_channels;
        case LayerKind::depthwise_conv2d: return k2 * s.out_channels;
        default: return 0;
    }
}

std::int64_t input_activations(const LayerSpec& s) {
    if (s.kind == LayerKind::dense) return s.in_channels;
    return static_cast<std::int64_t>(s.in_channels) * s.spatial_h * s.spatial_w;
}

std::int64_t output_activations(const LayerSpec& s) {
    if (s.kind == LayerKind::dense) return s.out_channels;
    return static_cast<std::int64_t>(s.out_channels) * s.spatial_h * s.spatial_w;
}

std::vector<int> output_shape(const LayerSpec& s) {
    switch (s.kind) {
        case LayerKind::dense: return {s.out_channels};
        case LayerKind::conv2d:
        case LayerKind::depthwise_conv2d:
        case LayerKind::pointwise_conv2d:
        case LayerKind::zero:
            return {s.out_channels, s.spatial_h, s.spatial_w};
        default:
            return {};  // shape of the input, caller-dependent
    }
}

namespace {

void check_conv_input(const LayerSpec& s, const Tensor& x) {
    if (x.rank() != 4 || x.shape[1] != s.in_channels || x.shape[2] != s.spatial_h ||
        x.shape[3] != s.spatial_w)
        throw std::invalid_argument(std::string(kind_name(s.kind)) + ": input shape " +
                                    x.shape_str() + " does not match spec");
}

}  // namespace

Tensor layer_forward(const LayerSpec& s, const LayerParams& p, const Tensor& x) {
    const int B = x.shape.empty() ? 0 : x.shape[0];
    switch (s.kind) {
        case LayerKind::dense: {
            const std::int64_t flat = x.size() / B;
            if (flat != s.in_channels)
                throw std::invalid_argument("dense: input " + x.shape_str() + " does not flatten to " +
                                            std::to_string(s.in_channels));
            Tensor y = Tensor::zeros({B, s.out_channels});
            for (int b = 0; b < B; ++b)
                for (int o = 0; o < s.out_channels; ++o) {
                    double acc = p.bias(o);
                    const double* xp = x.data.data() + static_cast<std::size_t>(b) * flat;
                    const double* wp = p.weight.data.data() + static_cast<std::size_t>(o) * flat;
                    for (std::int64_t i = 0; i < flat; ++i) acc += wp[i] * xp[i];
                    y(b, o) = acc;
                }
            return y;
        }
        case LayerKind::conv2d: {
            check_conv_input(s, x);
            const int k = s.kernel_size, pad = k / 2, H = s.spatial_h, W = s.spatial_w;
            Tensor y = Tensor::zeros({B, s.out_channels, H, W});
            for (int b = 0; b < B; ++b)
                for (int o = 0; o < s.out_channels; ++o)
                    for (int i = 0; i < H; ++i)
                        for (int j = 0; j < W; ++j) {
                            double acc = p.bias(o);
                            for (int c = 0; c < s.in_channels; ++c)
                                for (int u = 0; u < k; ++u) {
                                    const int yi = i + u - pad;
                                    if (yi < 0 || yi >= H) continue;
                                    for (int v = 0; v < k; ++v) {
                                        const int xj = j + v - pad;
                                        if (xj < 0 || xj >= W) continue;
                                        acc += p.weight(o, c, u, v) * x(b, c, yi, xj);
                                    }
                                }
                            y(b, o, i, j) = acc;
                        }
            return y;
        }
        case LayerKind::depthwise_conv2d: {
            check_conv_input(s, x);
            const int k = s.kernel_size, pad = k / 2, H = s.spatial_h, W = s.spatial_w;
            Tensor y = Tensor::zeros({B, s.out_channels, H, W});
            for (int b = 0; b < B; ++b)
                for (int c = 0; c < s.out_channels; ++c)
                    for (int i = 0; i < H; ++i)
                        for (int j = 0; j < W; ++j) {
                            double acc = p.bias(c);
                            for (int u = 0; u < k; ++u) {
                                const int yi = i + u - pad;
                                if (yi < 0 || yi >= H) continue;
                                for (int v = 0; v < k; ++v) {
                                    const int xj = j + v - pad;
                                    if (xj < 0 || xj >= W) continue;
                                    acc += p.weight.data[(static_cast<std::size_t>(c) * k + u) * k + v] *
                                           x(b, c, yi, xj);
                                }
                            }
                            y(b, c, i, j) = acc;
                        }
            return y;
        }
        case LayerKind::pointwise_conv2d: {
            check_conv_input(s, x);
            const int H = s.spatial_h, W = s.spatial_w;
            Tensor y = Tensor::zeros({B, s.out_channels, H, W});
            for (int b = 0; b < B; ++b)
                for (int o = 0; o < s.out_channels; ++o)
                    for (int i = 0; i < H; ++i)
                        for (int j = 0; j < W; ++j) {
                            double acc = p.bias(o);
                            for (int c = 0; c < s.in_channels; ++c)
                                acc += p.weight(o, c) * x(b, c, i, j);
                            y(b, o, i, j) = acc;
                        }
            return y;
        }
        case LayerKind::relu: {
            Tensor y = x;
            for (double& v : y.data) v = v > 0.0 ? v : 0.0;
            return y;
        }
        case LayerKind::identity:
            return x;
        case LayerKind::zero:
            return Tensor::zeros({B, s.out_channels, s.spatial_h, s.spatial_w});
    }
    throw std::logic_error("layer_forward: unreachable");
}

LayerGrads layer_backward(const LayerSpec& s, const LayerParams& p, const Tensor& x,
                          const Tensor& dout) {
    LayerGrads g;
    const int B = x.shape.empty() ? 0 : x.shape[0];
    switch (s.kind) {
        case LayerKind::dense: {
            const std::int64_t flat = x.size() / B;
            g.dweight = Tensor::zeros(p.weight.shape);
            g.dbias = Tensor::zeros(p.bias.shape);
            g.dinput = Tensor::zeros(x.shape);
            for (int b = 0; b < B; ++b)
                for (int o = 0; o < s.out_channels; ++o) {
                    const double d = dout(b, o);
                    g.dbias(o) += d;
                    const double* xp = x.data.data() + static_cast<std::size_t>(b) * flat;
                    double* dwp = g.dweight.data.data() + static_cast<std::size_t>(o) * flat;
                    const double* wp = p.weight.data.data() + static_cast<std::size_t>(o) * flat;
                    double* dxp = g.dinput.data.data() + static_cast<std::size_t>(b) * flat;
                    for (std::int64_t i = 0; i < flat; ++i) {
                        dwp[i] += d * xp[i];
                        dxp[i] += d * wp[i];
                    }
                }
            return g;
        }
        case LayerKind::conv2d: {
            const int k = s.kernel_size, pad = k / 2, H = s.spatial_h, W = s.spatial_w;
            g.dweight = Tensor::zeros(p.weight.shape);
            g.dbias = Tensor::zeros(p.bias.shape);
            g.dinput = Tensor::zeros(x.shape);
            for (int b = 0; b < B; ++b)
                for (int o = 0; o < s.out_channels; ++o)
                    for (int i = 0; i < H; ++i)
                        for (int j = 0; j < W; ++j) {
                            const double d = dout(b, o, i, j);
                            if (d == 0.0) continue;
                            g.dbias(o) += d;
                            for (int c = 0; c < s.in_channels; ++c)
                                for (int u = 0; u < k; ++u) {
                                    const int yi = i + u - pad;
                                    if (yi < 0 || yi >= H) continue;
                                    for (int v = 0; v < k; ++v) {
                                        const int xj = j + v - pad;
                                        if (xj < 0 || xj >= W) continue;
                                        g.dweight(o, c, u, v) += d * x(b, c, yi, xj);
                                        g.dinput(b, c, yi, xj) += d * p.weight(o, c, u, v);
                                    }
                                }
                        }
            return g;
        }
        case LayerKind::depthwise_conv2d: {
            const int k = s.kernel_size, pad = k / 2, H = s.spatial_h, W = s.spatial_w;
            g.dweight = Tensor::zeros(p.weight.shape);
            g.dbias = Tensor::zeros(p.bias.shape);
            g.dinput = Tensor::zeros(x.shape);
            for (int b = 0; b < B; ++b)
                for (int c = 0; c < s.out_channels; ++c)
                    for (int i = 0; i < H; ++i)
                        for (int j = 0; j < W; ++j) {
                            const double d = dout(b, c, i, j);
                            if (d == 0.0) continue;
                            g.dbias(c) += d;
                            for (int u = 0; u < k; ++u) {
                                const int yi = i + u - pad;
                                if (yi < 0 || yi >= H) continue;
                                for (int v = 0; v < k; ++v) {
                                    const int xj = j + v - pad;
                                    if (xj < 0 || xj >= W) continue;
                                    const std::size_t wi = (static_cast<std::size_t>(c) * k + u) * k + v;
                                    g.dweight.data[wi] += d * x(b, c, yi, xj);
                                    g.dinput(b, c, yi, xj) += d * p.weight.data[wi];
                                }
                            }
                        }
            return g;
        }
        case LayerKind::pointwise_conv2d: {
            const int H = s.spatial_h, W = s.spatial_w;
            g.dweight = Tensor::zeros(p.weight.shape);
            g.dbias = Tensor::zeros(p.bias.shape);
            g.dinput = Tensor::zeros(x.shape);
            for (int b = 0; b < B; ++b)
                for (int o = 0; o < s.out_channels; ++o)
                    for (int i = 0; i < H; ++i)
                        for (int j = 0; j < W; ++j) {
                            const double d = dout(b, o, i, j);
                            if (d == 0.0) continue;
                            g.dbias(o) += d;
                            for (int c = 0; c < s.in_channels; ++c) {
                                g.dweight(o, c) += d * x(b, c, i, j);
                                g.dinput(b, c, i, j) += d * p.weight(o, c);
                            }
                        }
            return g;
        }
        case LayerKind::relu: {
            g.dinput = dout;
            for (std::size_t i = 0; i < g.dinput.data.size(); ++i)
                if (x.data[i] <= 0.0) g.dinput.data[i] = 0.0;
            return g;
        }
        case LayerKind::identity:
            g.dinput = dout;
            return g;
        case LayerKind::zero:
            g.dinput = Tensor::zeros(x.shape);
            return g;
    }
    throw std::logic_error("layer_backward: unreachable");
}

}  // namespace tailor::nn
