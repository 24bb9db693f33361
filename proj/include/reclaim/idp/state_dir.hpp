#pragma once

// On-disk state for a local node: identity keys, the identity journal with
// snapshot compaction, the simulated name system and service settings.
//
//   <root>/lock           writer lock (flock)
//   <root>/keys/<alias>.json   private keys, mode 0600
//   <root>/state.log      one JSON event per line
//   <root>/snapshot.json  compacted identity state, no private keys
//   <root>/network.json   simulated name system
//   <root>/service.conf   key = value settings

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "reclaim/idp/idp.hpp"
#include "reclaim/namesys/name_system.hpp"

namespace reclaim::idp {

struct ServiceConfig {
    std::string listen = "127.0.0.1:7776";
    std::string origin = "http://identity.gnu";  // local petname the service stands in for
    std::string clients = "clients.json";        // relative to the state directory
    std::string identity;                        // alias that answers /authorize
    bool auto_approve = false;
    bool sim_control = false;  // exposes POST /sim/advance
    std::int64_t ttl_ms = namesys::kDefaultTtlMs;
    std::int64_t code_lifetime_ms = 600'000;
    std::optional<std::uint64_t> entropy_seed;  // reproducible keys and labels, for tests only
    std::size_t network_size = 50;
    std::uint64_t network_seed = 1;
    namesys::Topology topology = namesys::Topology::Clique;

    /// Lines of `key = value`; '#' starts a comment. Throws Errc::ParseError.
    static ServiceConfig parse(std::string_view text);
    std::string render() const;
};

/// Alias rules for identities: 1-32 characters from [a-z0-9_-].
void validate_alias(std::string_view alias);

class StateDir {
public:
    /// Creates the layout when `create` is set, then takes the writer lock.
    /// Throws Errc::Locked when another writer holds it and Errc::Io when the
    /// directory is missing or unusable.
    static std::unique_ptr<StateDir> open(const std::filesystem::path& root, bool create = true);
    ~StateDir();
    StateDir(const StateDir&) = delete;
    StateDir& operator=(const StateDir&) = delete;

    const std::filesystem::path& root() const { return root_; }
    const ServiceConfig& config() const { return config_; }
    void set_config(const ServiceConfig& config);

    Entropy& entropy() { return *entropy_; }
    namesys::NameSystem& names();

    std::vector<std::string> aliases() const;
    bool has_identity(const std::string& alias) const { return identities_.contains(alias); }
    /// Throws Errc::InvalidArgument when the alias is taken or malformed.
    IdentityState& create_identity(const std::string& alias);
    /// Throws Errc::NotFound for unknown aliases.
    IdentityState& identity(const std::string& alias);
    std::optional<std::string> alias_of(const IdentityId& id) const;

    /// Provider whose journal appends to state.log.
    Provider provider(const std::string& alias);

    /// Writes network.json and compacts the journal once it passes
    /// `compact_after` events.
    void commit();
    void compact();
    std::size_t pending_events() const { return log_events_; }
    std::size_t compact_after = 256;

private:
    explicit StateDir(std::filesystem::path root);
    void load_identities();
    void append(const std::string& alias, nlohmann::json event);

    std::filesystem::path root_;
    int lock_fd_ = -1;
    ServiceConfig config_;
    std::unique_ptr<Entropy> entropy_;
    std::unique_ptr<namesys::NameSystem> names_;
    std::map<std::string, IdentityState> identities_;
    std::uint64_t seq_ = 0;
    std::size_t log_events_ = 0;
};

/// Writes through a temporary file and rename. `mode` applies to new files.
void write_file_atomic(const std::filesystem::path& path, std::string_view content, unsigned mode = 0644);
std::string read_file(const std::filesystem::path& path);

}  // namespace reclaim::idp
