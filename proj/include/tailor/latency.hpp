#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "tailor/hardware.hpp"
#include "tailor/search_space.hpp"

namespace tailor::hw {

// Pre-computed per-operator latency entries F(block, op), in seconds.
class LatencyTable {
public:
    void set(int block, const std::string& op, double latency_s);

    // Throws std::out_of_range when the entry is missing; the table must be
    // total over the search space it serves.
    double lookup(int block, const std::string& op) const;

    bool covers(const nn::SearchSpace& space) const;
    std::size_t size() const { return entries_.size(); }
    const std::map<std::pair<int, std::string>, double>& entries() const { return entries_; }

    // CSV with header "block_index,op_name,latency_us"; microseconds on
    // disk, seconds in memory.
    static LatencyTable load_csv(const std::string& path);
    void save_csv(const std::string& path) const;

private:
    std::map<std::pair<int, std::string>, double> entries_;
};

// Latency table from the roofline model instead of device measurement:
// each entry is the sum over the candidate's parametric layers of
// roofline latency at 8/8-bit traffic plus one kernel overhead per layer.
// Skip ops ("zero"/"identity") cost exactly 0.
LatencyTable synthesize_latency_table(const nn::SearchSpace& space, const HardwareSpec& hw);

// E[LAT] = sum over blocks of sum over ops of p(op) * F(block, op).
// Each probability row must sum to 1 within 1e-9 (std::invalid_argument).
double expected_network_latency(const nn::SearchSpace& space,
                                const std::vector<std::vector<double>>& probs,
                                const LatencyTable& table);

}  // namespace tailor::hw
