#pragma once

#include <string>
#include <vector>

#include "tailor/layers.hpp"
#include "tailor/policies.hpp"

namespace tailor::hw {

// Abstract device profile driving the roofline latency and linear energy
// models. Stands in for real measured devices.
struct HardwareSpec {
    std::string name;
    double peak_macs_per_s = 0.0;
    double dram_bytes_per_s = 0.0;
    double energy_per_mac = 0.0;        // J per MAC
    double energy_per_dram_byte = 0.0;  // J per DRAM byte
    double fixed_overhead_s = 0.0;      // per kernel call

    double ridge_point() const { return peak_macs_per_s / dram_bytes_per_s; }
};

void validate(const HardwareSpec& hw);

// Shipped profiles: "edge" (bandwidth-starved), "cloud" (bandwidth-rich),
// "spatial" (modest rates, high call overhead).
HardwareSpec builtin_profile(const std::string& name);

// JSON file with exactly the HardwareSpec fields; unknown keys rejected
// (ConfigError).
HardwareSpec load_hardware_file(const std::string& path);
void save_hardware_file(const HardwareSpec& hw, const std::string& path);

// Attainable compute rate (MACs/s) at a given operation intensity:
// min(peak, bandwidth * intensity).
double roofline_attainable(double intensity, const HardwareSpec& hw);

// MACs per DRAM byte for one layer at the given bitwidths. Weights are read
// once; input and output activations each cross DRAM once.
// Throws std::domain_error for non-parametric layers.
double operation_intensity(const nn::LayerSpec& layer, int w_bits, int a_bits);

// DRAM bytes moved by one layer at the given bitwidths.
double layer_dram_bytes(const nn::LayerSpec& layer, int w_bits, int a_bits);

struct LayerCost {
    int layer_index = 0;
    double latency_s = 0.0;
    double energy_j = 0.0;
    double size_bits = 0.0;
    double intensity = 0.0;       // MACs per byte
    double attained_rate = 0.0;   // MACs per s under the roofline
};

struct CostReport {
    double latency_s = 0.0;
    double energy_j = 0.0;
    double model_size_bits = 0.0;
    std::vector<LayerCost> per_layer;
};

// Roofline latency + linear energy + bit-exact size for a whole network
// under a bitwidth policy. The policy must cover every parametric layer.
// Batch is fixed at 1.
CostReport simulate_cost(const nn::NetSpec& net, const BitwidthPolicy& policy,
                         const HardwareSpec& hw);

}  // namespace tailor::hw
