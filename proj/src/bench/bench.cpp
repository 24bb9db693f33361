#include "reclaim/bench/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cinttypes>
#include <cstdio>
#include <exception>
#include <map>
#include <mutex>
#include <set>
#include <thread>

#include "reclaim/idp/idp.hpp"
#include "reclaim/idp/state_dir.hpp"

namespace reclaim::bench {

namespace {

constexpr const char* kAttribute = "email";
constexpr const char* kValue = "alice@doe.com";

std::string ms(namesys::SimTime us) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%" PRId64 ".%03" PRId64, us / namesys::kMicrosPerMs, us % namesys::kMicrosPerMs);
    return buf;
}

std::string fixed3(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}

double to_ms(namesys::SimTime us) { return static_cast<double>(us) / namesys::kMicrosPerMs; }

crypto::Digest run_seed(std::uint64_t seed, std::size_t size, std::size_t run) {
    ByteWriter w;
    w.u64(seed);
    w.u64(size);
    w.u64(run);
    return crypto::hash("reclaim-bench-run", {w.bytes()});
}

}  // namespace

void ExperimentConfig::validate() const {
    if (sizes.empty()) fail(Errc::InvalidArgument, "at least one network size is needed");
    if (runs == 0) fail(Errc::InvalidArgument, "runs must be positive");
    if (repeats < 2) fail(Errc::InvalidArgument, "repeats must be at least 2");
    for (auto s : sizes)
        if (s < repeats + 1)
            fail(Errc::InvalidArgument, "network size " + std::to_string(s) + " cannot host " +
                                            std::to_string(repeats) + " distinct parties besides the user");
    if (latency.median_ms <= 0 || latency.sigma < 0) fail(Errc::InvalidArgument, "invalid latency parameters");
}

std::vector<Measurement> run_once(const ExperimentConfig& config, std::size_t size, std::size_t run) {
    const auto seed = run_seed(config.seed, size, run);
    namesys::SimConfig c;
    c.size = size;
    c.seed = ByteReader(seed.view()).u64();
    c.topology = config.topology;
    c.latency = config.latency;
    c.record_trace = false;

    SeededEntropy rng(seed.bytes);
    namesys::NameSystem ns(std::make_unique<namesys::SimNetwork>(c), rng);
    const auto a = ns.random_node();
    auto user = idp::IdentityState::create(rng, a);
    idp::Provider provider(user, ns, rng);

    std::vector<namesys::NodeIndex> used{a};
    std::vector<Measurement> out;
    for (std::size_t r = 1; r <= config.repeats; ++r) {
        namesys::NodeIndex b;
        do b = ns.random_node();
        while (std::find(used.begin(), used.end(), b) != used.end());
        used.push_back(b);

        const auto rp = crypto::SigningKeyPair::generate(rng);
        provider.store(kAttribute, as_bytes(kValue));
        const auto auth = provider.authorize(rp.public_key(), {kAttribute});
        const auto res = idp::retrieve(ns, rp, auth.ticket, std::nullopt, b);
        const auto& attr = res.attributes.at(0);
        if (!attr.value || to_string(*attr.value) != kValue)
            fail(Errc::IntegrityFailure, "benchmark retrieval failed: " + attr.detail);

        out.push_back({size, run, r, res.key_latency, attr.latency, res.key_hops, attr.hops, res.key_from_cache,
                       attr.from_cache});
    }
    return out;
}

std::vector<Measurement> run_experiment(const ExperimentConfig& config) {
    config.validate();
    std::vector<std::pair<std::size_t, std::size_t>> jobs;
    for (auto size : config.sizes)
        for (std::size_t run = 1; run <= config.runs; ++run) jobs.emplace_back(size, run);

    std::vector<std::vector<Measurement>> results(jobs.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mu;
    auto worker = [&] {
        for (std::size_t j; (j = next++) < jobs.size();) {
            try {
                results[j] = run_once(config, jobs[j].first, jobs[j].second);
            } catch (...) {
                std::lock_guard lock(error_mu);
                if (!error) error = std::current_exception();
            }
        }
    };
    std::size_t n = config.workers ? config.workers : std::max(1u, std::thread::hardware_concurrency());
    n = std::min(n, jobs.size());
    std::vector<std::jthread> pool;
    for (std::size_t i = 1; i < n; ++i) pool.emplace_back(worker);
    worker();
    pool.clear();
    if (error) std::rethrow_exception(error);

    std::vector<Measurement> out;
    for (auto& r : results) out.insert(out.end(), r.begin(), r.end());
    return out;
}

// --- statistics ------------------------------------------------------------

Stats stats(std::vector<double> v) {
    if (v.empty()) fail(Errc::InvalidArgument, "no values to summarize");
    std::sort(v.begin(), v.end());
    auto at = [&](double q) { return v[static_cast<std::size_t>(static_cast<double>(v.size() - 1) * q)]; };
    return {v.size(), v.front(), at(0.25), at(0.5), at(0.75), v.back()};
}

double lower_median(std::vector<double> v) { return stats(std::move(v)).median; }

std::vector<SizeSummary> summarize_by_size(const std::vector<Measurement>& m) {
    if (m.empty()) fail(Errc::InvalidArgument, "no measurements to summarize");
    std::map<std::size_t, std::vector<const Measurement*>> by_size;
    for (const auto& x : m) by_size[x.size].push_back(&x);

    std::vector<SizeSummary> out;
    for (const auto& [size, xs] : by_size) {
        std::vector<double> first_ms, first_hops, key, attr, early, late;
        std::set<std::size_t> runs;
        for (const auto* x : xs) {
            runs.insert(x->run);
            key.push_back(to_ms(x->key_time));
            attr.push_back(to_ms(x->attr_time));
            if (x->repeat == 1) {
                first_ms.push_back(to_ms(x->attr_time));
                first_hops.push_back(x->attr_hops);
            }
            if (x->repeat <= 2) early.push_back(to_ms(x->attr_time));
            if (x->repeat >= 6) late.push_back(to_ms(x->attr_time));
        }
        SizeSummary s;
        s.size = size;
        s.runs = runs.size();
        s.first_attr_ms = lower_median(first_ms);
        s.first_attr_hops = lower_median(first_hops);
        s.key_ms = lower_median(key);
        s.attr_ms = lower_median(attr);
        s.early_attr_ms = lower_median(early);
        if (!late.empty()) s.late_attr_ms = lower_median(late);
        out.push_back(s);
    }
    return out;
}

std::vector<RepeatSummary> summarize_by_repeat(const std::vector<Measurement>& m) {
    if (m.empty()) fail(Errc::InvalidArgument, "no measurements to summarize");
    std::map<std::pair<std::size_t, std::size_t>, std::vector<const Measurement*>> groups;
    for (const auto& x : m) groups[{x.size, x.repeat}].push_back(&x);

    std::vector<RepeatSummary> out;
    for (const auto& [key, xs] : groups) {
        for (const bool is_key : {true, false}) {
            std::vector<double> times, hops;
            double cached = 0;
            for (const auto* x : xs) {
                times.push_back(to_ms(is_key ? x->key_time : x->attr_time));
                hops.push_back(is_key ? x->key_hops : x->attr_hops);
                cached += (is_key ? x->key_from_cache : x->attr_from_cache) ? 1 : 0;
            }
            out.push_back({key.first, key.second, is_key ? "key" : "attr", stats(times), lower_median(hops),
                           cached / static_cast<double>(xs.size())});
        }
    }
    return out;
}

std::string measurements_csv(const std::vector<Measurement>& m) {
    std::string out = "size,run,repeat,key_ms,attr_ms,key_hops,attr_hops,key_from_cache,attr_from_cache\n";
    for (const auto& x : m)
        out += std::to_string(x.size) + "," + std::to_string(x.run) + "," + std::to_string(x.repeat) + "," +
               ms(x.key_time) + "," + ms(x.attr_time) + "," + std::to_string(x.key_hops) + "," +
               std::to_string(x.attr_hops) + "," + (x.key_from_cache ? "1" : "0") + "," +
               (x.attr_from_cache ? "1" : "0") + "\n";
    return out;
}

std::string size_summary_csv(const std::vector<SizeSummary>& s) {
    std::string out =
        "size,runs,first_attr_median_ms,first_attr_median_hops,key_median_ms,attr_median_ms,"
        "early_attr_median_ms,late_attr_median_ms,late_to_early\n";
    for (const auto& x : s)
        out += std::to_string(x.size) + "," + std::to_string(x.runs) + "," + fixed3(x.first_attr_ms) + "," +
               fixed3(x.first_attr_hops) + "," + fixed3(x.key_ms) + "," + fixed3(x.attr_ms) + "," +
               fixed3(x.early_attr_ms) + "," + (x.late_attr_ms ? fixed3(*x.late_attr_ms) : "") + "," +
               (x.late_attr_ms && x.early_attr_ms > 0 ? fixed3(*x.late_attr_ms / x.early_attr_ms) : "") + "\n";
    return out;
}

std::string repeat_summary_csv(const std::vector<RepeatSummary>& s) {
    std::string out = "size,repeat,metric,n,min_ms,q1_ms,median_ms,q3_ms,max_ms,median_hops,cache_share\n";
    for (const auto& x : s)
        out += std::to_string(x.size) + "," + std::to_string(x.repeat) + "," + x.metric + "," +
               std::to_string(x.ms.n) + "," + fixed3(x.ms.min) + "," + fixed3(x.ms.q1) + "," + fixed3(x.ms.median) +
               "," + fixed3(x.ms.q3) + "," + fixed3(x.ms.max) + "," + fixed3(x.median_hops) + "," +
               fixed3(x.cache_share) + "\n";
    return out;
}

void write_results(const std::filesystem::path& out, const std::vector<Measurement>& m) {
    std::error_code ec;
    std::filesystem::create_directories(out, ec);
    if (ec) fail(Errc::Io, "cannot create " + out.string() + ": " + ec.message());
    idp::write_file_atomic(out / "measurements.csv", measurements_csv(m));
    idp::write_file_atomic(out / "summary_by_size.csv", size_summary_csv(summarize_by_size(m)));
    idp::write_file_atomic(out / "summary_by_repeat.csv", repeat_summary_csv(summarize_by_repeat(m)));
}

}  // namespace reclaim::bench
