#include "tailor/latency.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "tailor/error.hpp"

namespace tailor::hw {

void LatencyTable::set(int block, const std::string& op, double latency_s) {
    if (latency_s < 0.0) throw std::invalid_argument("LatencyTable: negative latency");
    entries_[{block, op}] = latency_s;
}

double LatencyTable::lookup(int block, const std::string& op) const {
    auto it = entries_.find({block, op});
    if (it == entries_.end())
        throw std::out_of_range("LatencyTable: no entry for block " + std::to_string(block) +
                                " op " + op);
    return it->second;
}

bool LatencyTable::covers(const nn::SearchSpace& space) const {
    for (int b = 0; b < space.num_blocks(); ++b)
        for (const std::string& op : space.choices)
            if (entries_.find({b, op}) == entries_.end()) return false;
    return true;
}

LatencyTable LatencyTable::load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open latency table: " + path);
    std::string line;
    if (!std::getline(in, line) || line != "block_index,op_name,latency_us")
        throw ConfigError("latency table " + path + ": bad header");
    LatencyTable table;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string block_s, op, lat_s;
        if (!std::getline(ss, block_s, ',') || !std::getline(ss, op, ',') ||
            !std::getline(ss, lat_s))
            throw ConfigError("latency table " + path + ": bad row at line " +
                              std::to_string(lineno));
        try {
            table.set(std::stoi(block_s), op, std::stod(lat_s) * 1e-6);
        } catch (const std::exception&) {
            throw ConfigError("latency table " + path + ": bad value at line " +
                              std::to_string(lineno));
        }
    }
    return table;
}

void LatencyTable::save_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write latency table: " + path);
    out << "block_index,op_name,latency_us\n";
    char buf[64];
    for (const auto& [key, lat] : entries_) {
        std::snprintf(buf, sizeof buf, "%.17g", lat * 1e6);
        out << key.first << "," << key.second << "," << buf << "\n";
    }
}

LatencyTable synthesize_latency_table(const nn::SearchSpace& space, const HardwareSpec& hw) {
    validate(hw);
    LatencyTable table;
    for (int b = 0; b < space.num_blocks(); ++b) {
        for (const std::string& op : space.choices) {
            double lat = 0.0;
            for (const nn::LayerSpec& layer : nn::candidate_op_layers(op, space.blocks[b])) {
                if (!layer.parametric()) continue;
                const double macs = static_cast<double>(nn::count_macs(layer));
                lat += macs / roofline_attainable(operation_intensity(layer, 8, 8), hw) +
                       hw.fixed_overhead_s;
            }
            table.set(b, op, lat);
        }
    }
    return table;
}

double expected_network_latency(const nn::SearchSpace& space,
                                const std::vector<std::vector<double>>& probs,
                                const LatencyTable& table) {
    if (static_cast<int>(probs.size()) != space.num_blocks())
        throw std::invalid_argument("expected_network_latency: block count mismatch");
    double total = 0.0;
    for (int b = 0; b < space.num_blocks(); ++b) {
        const auto& row = probs[static_cast<std::size_t>(b)];
        if (row.size() != space.choices.size())
            throw std::invalid_argument("expected_network_latency: choice count mismatch");
        double sum = 0.0;
        for (double p : row) sum += p;
        if (std::abs(sum - 1.0) > 1e-9)
            throw std::invalid_argument("expected_network_latency: probabilities of block " +
                                        std::to_string(b) + " sum to " + std::to_string(sum));
        for (std::size_t j = 0; j < row.size(); ++j)
            total += row[j] * table.lookup(b, space.choices[j]);
    }
    return total;
}

}  // namespace tailor::hw
