#include "tailor/hardware.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "tailor/error.hpp"

namespace tailor::hw {

void validate(const HardwareSpec& hw) {
    if (hw.peak_macs_per_s <= 0.0 || hw.dram_bytes_per_s <= 0.0)
        throw std::invalid_argument("HardwareSpec: rates must be strictly positive");
    if (hw.energy_per_mac <= 0.0 || hw.energy_per_dram_byte <= 0.0)
        throw std::invalid_argument("HardwareSpec: energy coefficients must be strictly positive");
    if (hw.fixed_overhead_s < 0.0)
        throw std::invalid_argument("HardwareSpec: fixed_overhead_s must be nonnegative");
}

HardwareSpec builtin_profile(const std::string& name) {
    if (name == "edge")
        return {"edge", 1.0e9, 1.0e8, 2.0e-12, 1.0e-10, 5.0e-6};
    if (name == "cloud")
        return {"cloud", 2.0e10, 1.0e10, 1.0e-12, 2.0e-10, 1.0e-5};
    if (name == "spatial")
        return {"spatial", 5.0e8, 4.0e8, 3.0e-12, 8.0e-11, 2.0e-5};
    throw std::invalid_argument("unknown hardware profile: " + name);
}

HardwareSpec load_hardware_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open hardware profile: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("hardware profile " + path + ": " + e.what());
    }
    static const std::vector<std::string> known = {
        "name", "peak_macs_per_s", "dram_bytes_per_s",
        "energy_per_mac", "energy_per_dram_byte", "fixed_overhead_s"};
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (std::find(known.begin(), known.end(), it.key()) == known.end())
            throw ConfigError("hardware profile " + path + ": unknown key '" + it.key() + "'");
    }
    HardwareSpec hw;
    try {
        hw.name = j.at("name").get<std::string>();
        hw.peak_macs_per_s = j.at("peak_macs_per_s").get<double>();
        hw.dram_bytes_per_s = j.at("dram_bytes_per_s").get<double>();
        hw.energy_per_mac = j.at("energy_per_mac").get<double>();
        hw.energy_per_dram_byte = j.at("energy_per_dram_byte").get<double>();
        hw.fixed_overhead_s = j.at("fixed_overhead_s").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("hardware profile " + path + ": " + e.what());
    }
    validate(hw);
    return hw;
}

void save_hardware_file(const HardwareSpec& hw, const std::string& path) {
    nlohmann::json j{
        {"name", hw.name},
        {"peak_macs_per_s", hw.peak_macs_per_s},
        {"dram_bytes_per_s", hw.dram_bytes_per_s},
        {"energy_per_mac", hw.energy_per_mac},
        {"energy_per_dram_byte", hw.energy_per_dram_byte},
        {"fixed_overhead_s", hw.fixed_overhead_s},
    };
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write hardware profile: " + path);
    out << j.dump(2) << "\n";
}

double roofline_attainable(double intensity, const HardwareSpec& hw) {
    if (intensity < 0.0) throw std::invalid_argument("roofline_attainable: negative intensity");
    return std::min(hw.peak_macs_per_s, hw.dram_bytes_per_s * intensity);
}

double layer_dram_bytes(const nn::LayerSpec& layer, int w_bits, int a_bits) {
    if (w_bits < 1 || w_bits > 8 || a_bits < 1 || a_bits > 8)
        throw std::invalid_argument("bitwidths must be in [1,8]");
    const double weight_bits = static_cast<double>(nn::weight_count(layer)) * w_bits;
    const double act_bits =
        static_cast<double>(nn::input_activations(layer) + nn::output_activations(layer)) * a_bits;
    return (weight_bits + act_bits) / 8.0;
}

double operation_intensity(const nn::LayerSpec& layer, int w_bits, int a_bits) {
    if (!layer.parametric())
        throw std::domain_error(std::string("operation_intensity: undefined for ") +
                                nn::kind_name(layer.kind));
    return static_cast<double>(nn::count_macs(layer)) / layer_dram_bytes(layer, w_bits, a_bits);
}

CostReport simulate_cost(const nn::NetSpec& net, const BitwidthPolicy& policy,
                         const HardwareSpec& hw) {
    validate(hw);
    CostReport report;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const nn::LayerSpec& layer = net.layers[i];
        if (!layer.parametric()) continue;
        auto it = policy.layers.find(static_cast<int>(i));
        if (it == policy.layers.end())
            throw std::invalid_argument("simulate_cost: policy missing layer " + std::to_string(i));
        const LayerBits bits = it->second;

        LayerCost c;
        c.layer_index = static_cast<int>(i);
        const double macs = static_cast<double>(nn::count_macs(layer));
        const double bytes = layer_dram_bytes(layer, bits.w_bits, bits.a_bits);
        c.intensity = macs / bytes;
        c.attained_rate = roofline_attainable(c.intensity, hw);
        c.latency_s = macs / c.attained_rate + hw.fixed_overhead_s;
        c.energy_j = macs * hw.energy_per_mac + bytes * hw.energy_per_dram_byte;
        c.size_bits = static_cast<double>(nn::weight_count(layer)) * bits.w_bits;

        report.latency_s += c.latency_s;
        report.energy_j += c.energy_j;
        report.model_size_bits += c.size_bits;
        report.per_layer.push_back(c);
    }
    return report;
}

}  // namespace tailor::hw
