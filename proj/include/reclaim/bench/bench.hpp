#pragma once

// Retrieval benchmark on the simulated name system. Each run bootstraps a
// fresh network and a fixed user A; each repeat picks a new requesting party
// B, has A store the test attribute and authorize B, then measures B's key
// and attribute resolution. The network is kept across repeats of a run.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "reclaim/namesys/sim.hpp"

namespace reclaim::bench {

struct ExperimentConfig {
    std::vector<std::size_t> sizes{50, 100, 150, 200};
    std::size_t runs = 50;
    std::size_t repeats = 10;
    std::uint64_t seed = 42;
    namesys::LatencyModel latency;
    namesys::Topology topology = namesys::Topology::Clique;
    std::size_t workers = 0;  // 0 = hardware concurrency; results do not depend on it

    /// Throws Errc::InvalidArgument for empty sizes, zero runs, fewer than
    /// two repeats or a network too small to pick distinct parties.
    void validate() const;
};

struct Measurement {
    std::size_t size = 0;
    std::size_t run = 0;     // 1-based
    std::size_t repeat = 0;  // 1-based
    namesys::SimTime key_time = 0;
    namesys::SimTime attr_time = 0;
    int key_hops = 0;
    int attr_hops = 0;
    bool key_from_cache = false;
    bool attr_from_cache = false;

    bool operator==(const Measurement&) const = default;
};

/// Measurements ordered by size, run and repeat.
std::vector<Measurement> run_experiment(const ExperimentConfig& config);

/// One run of the protocol on its own network.
std::vector<Measurement> run_once(const ExperimentConfig& config, std::size_t size, std::size_t run);

/// Order statistics with the lower-median convention: the q-quantile of n
/// sorted values is element floor((n - 1) * q).
struct Stats {
    std::size_t n = 0;
    double min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
};
/// Throws Errc::InvalidArgument for empty input.
Stats stats(std::vector<double> values);
double lower_median(std::vector<double> values);

struct SizeSummary {
    std::size_t size = 0;
    std::size_t runs = 0;
    double first_attr_ms = 0;    // median attribute time at repeat 1
    double first_attr_hops = 0;  // median attribute hops at repeat 1
    double key_ms = 0;           // median key time over all repeats
    double attr_ms = 0;          // median attribute time over all repeats
    double early_attr_ms = 0;    // repeats 1-2
    std::optional<double> late_attr_ms;  // repeats 6 and later
};

struct RepeatSummary {
    std::size_t size = 0;
    std::size_t repeat = 0;
    std::string metric;  // "key" or "attr"
    Stats ms;
    double median_hops = 0;
    double cache_share = 0;  // fraction of resolutions answered from a cache
};

std::vector<SizeSummary> summarize_by_size(const std::vector<Measurement>& m);
std::vector<RepeatSummary> summarize_by_repeat(const std::vector<Measurement>& m);

std::string measurements_csv(const std::vector<Measurement>& m);
std::string size_summary_csv(const std::vector<SizeSummary>& s);
std::string repeat_summary_csv(const std::vector<RepeatSummary>& s);

/// Writes measurements.csv, summary_by_size.csv and summary_by_repeat.csv.
void write_results(const std::filesystem::path& out, const std::vector<Measurement>& m);

}  // namespace reclaim::bench
