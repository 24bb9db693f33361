#include "reclaim/idp/state_dir.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>

#include "reclaim/common/encoding.hpp"

namespace reclaim::idp {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void io_fail(const std::string& what) { fail(Errc::Io, what + ": " + std::strerror(errno)); }

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& v, const std::string& key) {
    try {
        std::size_t used = 0;
        const auto n = std::stoll(v, &used);
        if (used != v.size() || n < 0) throw std::invalid_argument(v);
        return static_cast<T>(n);
    } catch (const std::exception&) {
        fail(Errc::ParseError, "service.conf: '" + key + "' needs a non-negative integer");
    }
}

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true") return true;
    if (v == "false") return false;
    fail(Errc::ParseError, "service.conf: '" + key + "' needs true or false");
}

}  // namespace

ServiceConfig ServiceConfig::parse(std::string_view text) {
    ServiceConfig c;
    std::istringstream in{std::string(text)};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        if (trim(line).empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            fail(Errc::ParseError, "service.conf line " + std::to_string(lineno) + ": expected key = value");
        const auto key = trim(std::string_view(line).substr(0, eq));
        auto value = trim(std::string_view(line).substr(eq + 1));
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);

        if (key == "listen") c.listen = value;
        else if (key == "origin") c.origin = value;
        else if (key == "clients") c.clients = value;
        else if (key == "identity") c.identity = value;
        else if (key == "auto_approve") c.auto_approve = parse_bool(value, key);
        else if (key == "sim_control") c.sim_control = parse_bool(value, key);
        else if (key == "ttl_ms") c.ttl_ms = parse_number<std::int64_t>(value, key);
        else if (key == "code_lifetime_ms") c.code_lifetime_ms = parse_number<std::int64_t>(value, key);
        else if (key == "entropy_seed") c.entropy_seed = parse_number<std::uint64_t>(value, key);
        else if (key == "network_size") c.network_size = parse_number<std::size_t>(value, key);
        else if (key == "network_seed") c.network_seed = parse_number<std::uint64_t>(value, key);
        else if (key == "topology") {
            try {
                c.topology = namesys::parse_topology(value);
            } catch (const Error& e) {
                fail(Errc::ParseError, std::string("service.conf: ") + e.what());
            }
        } else {
            fail(Errc::ParseError, "service.conf line " + std::to_string(lineno) + ": unknown key '" + key + "'");
        }
    }
    if (c.ttl_ms <= 0) fail(Errc::ParseError, "service.conf: ttl_ms must be positive");
    return c;
}

std::string ServiceConfig::render() const {
    std::ostringstream out;
    out << "listen = \"" << listen << "\"\n"
        << "origin = \"" << origin << "\"\n"
        << "clients = \"" << clients << "\"\n"
        << "identity = \"" << identity << "\"\n"
        << "auto_approve = " << (auto_approve ? "true" : "false") << "\n"
        << "sim_control = " << (sim_control ? "true" : "false") << "\n"
        << "ttl_ms = " << ttl_ms << "\n"
        << "code_lifetime_ms = " << code_lifetime_ms << "\n";
    if (entropy_seed) out << "entropy_seed = " << *entropy_seed << "\n";
    out << "network_size = " << network_size << "\n"
        << "network_seed = " << network_seed << "\n"
        << "topology = \"" << namesys::topology_name(topology) << "\"\n";
    return out.str();
}

void validate_alias(std::string_view alias) {
    const bool ok = !alias.empty() && alias.size() <= 32 && std::all_of(alias.begin(), alias.end(), [](char c) {
                        return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_' || c == '-';
                    });
    if (!ok) fail(Errc::InvalidArgument, "alias must be 1-32 characters from a-z, 0-9, '_' and '-'");
}

void write_file_atomic(const fs::path& path, std::string_view content, unsigned mode) {
    const auto tmp = path.string() + ".tmp";
    const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, mode);
    if (fd < 0) io_fail("cannot write " + tmp);
    std::size_t done = 0;
    while (done < content.size()) {
        const auto n = ::write(fd, content.data() + done, content.size() - done);
        if (n < 0) {
            if (errno == EINTR) continue;
            ::close(fd);
            io_fail("cannot write " + tmp);
        }
        done += static_cast<std::size_t>(n);
    }
    if (::fsync(fd) != 0 || ::close(fd) != 0) io_fail("cannot flush " + tmp);
    if (::rename(tmp.c_str(), path.c_str()) != 0) io_fail("cannot replace " + path.string());
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(Errc::Io, "cannot read " + path.string());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

// --- state directory -------------------------------------------------------

StateDir::StateDir(fs::path root) : root_(std::move(root)) {}

StateDir::~StateDir() {
    if (lock_fd_ >= 0) ::close(lock_fd_);  // closing drops the flock
}

std::unique_ptr<StateDir> StateDir::open(const fs::path& root, bool create) {
    std::error_code ec;
    if (!fs::is_directory(root)) {
        if (!create) fail(Errc::Io, root.string() + " is not a state directory");
        fs::create_directories(root, ec);
        if (ec) fail(Errc::Io, "cannot create " + root.string() + ": " + ec.message());
        fs::permissions(root, fs::perms::owner_all, ec);
    }
    std::unique_ptr<StateDir> dir(new StateDir(root));

    const auto lock_path = root / "lock";
    dir->lock_fd_ = ::open(lock_path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0600);
    if (dir->lock_fd_ < 0) io_fail("cannot open " + lock_path.string());
    if (::flock(dir->lock_fd_, LOCK_EX | LOCK_NB) != 0) {
        if (errno == EWOULDBLOCK) fail(Errc::Locked, root.string() + " is in use by another process");
        io_fail("cannot lock " + lock_path.string());
    }

    const auto keys = root / "keys";
    if (!fs::is_directory(keys)) {
        fs::create_directory(keys, ec);
        if (ec) fail(Errc::Io, "cannot create " + keys.string() + ": " + ec.message());
        fs::permissions(keys, fs::perms::owner_all, ec);
    }
    const auto conf = root / "service.conf";
    if (fs::exists(conf)) {
        dir->config_ = ServiceConfig::parse(read_file(conf));
    } else if (create) {
        write_file_atomic(conf, dir->config_.render());
    } else {
        fail(Errc::Io, root.string() + " has no service.conf");
    }

    dir->load_identities();

    if (dir->config_.entropy_seed) {
        // One stream per journal position, so every command draws fresh but reproducible bytes.
        std::uint8_t buf[16];
        for (int i = 0; i < 8; ++i) {
            buf[i] = static_cast<std::uint8_t>(*dir->config_.entropy_seed >> (8 * i));
            buf[8 + i] = static_cast<std::uint8_t>(dir->seq_ >> (8 * i));
        }
        const auto d = crypto::hash("reclaim-state-entropy", {ByteView(buf, sizeof buf)});
        dir->entropy_ = std::make_unique<SeededEntropy>(d.bytes);
    } else {
        dir->entropy_ = std::make_unique<SystemEntropy>();
    }
    return dir;
}

void StateDir::set_config(const ServiceConfig& config) {
    write_file_atomic(root_ / "service.conf", config.render());
    config_ = config;
}

void StateDir::load_identities() {
    std::map<std::string, json> snap;
    std::uint64_t snap_seq = 0;
    if (fs::exists(root_ / "snapshot.json")) {
        const auto j = json::parse(read_file(root_ / "snapshot.json"));
        snap_seq = j.at("seq");
        for (const auto& [alias, s] : j.at("identities").items()) snap[alias] = s;
    }
    seq_ = snap_seq;

    for (const auto& entry : fs::directory_iterator(root_ / "keys")) {
        if (entry.path().extension() != ".json") continue;
        const auto alias = entry.path().stem().string();
        const auto k = json::parse(read_file(entry.path()));
        const auto keys = crypto::SigningKeyPair::from_seed(
            encoding::fixed_from<crypto::SigningSeed>(encoding::unhex(k.at("seed").get<std::string>())));
        abe::MasterKey master{
            encoding::fixed_from<crypto::SymmetricKey>(encoding::unhex(k.at("abe_secret").get<std::string>())),
            keys.public_key()};
        auto state = IdentityState::from_keys(keys, master, k.at("home").get<namesys::NodeIndex>());
        if (auto it = snap.find(alias); it != snap.end()) state.restore(it->second);
        identities_.emplace(alias, std::move(state));
    }

    if (!fs::exists(root_ / "state.log")) return;
    std::istringstream log(read_file(root_ / "state.log"));
    std::vector<std::string> lines;
    for (std::string line; std::getline(log, line);)
        if (!trim(line).empty()) lines.push_back(line);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        json e;
        try {
            e = json::parse(lines[i]);
        } catch (const json::exception&) {
            if (i + 1 == lines.size()) {  // torn final write: drop it before appending again
                std::string kept;
                for (std::size_t k = 0; k < i; ++k) kept += lines[k] + "\n";
                write_file_atomic(root_ / "state.log", kept);
                break;
            }
            fail(Errc::ParseError, "state.log line " + std::to_string(i + 1) + " is not JSON");
        }
        const std::uint64_t seq = e.at("seq");
        ++log_events_;
        if (seq <= snap_seq) continue;
        seq_ = std::max(seq_, seq);
        if (e.at("op") == "create") continue;
        auto it = identities_.find(e.at("id").get<std::string>());
        if (it == identities_.end())
            fail(Errc::ParseError, "state.log names unknown identity '" + e.at("id").get<std::string>() + "'");
        it->second.apply(e);
    }
}

namesys::NameSystem& StateDir::names() {
    if (names_) return *names_;
    const auto path = root_ / "network.json";
    if (fs::exists(path)) {
        names_ = namesys::NameSystem::load(json::parse(read_file(path)), *entropy_);
    } else {
        namesys::SimConfig c;
        c.size = config_.network_size;
        c.seed = config_.network_seed;
        c.topology = config_.topology;
        c.record_trace = false;
        names_ = std::make_unique<namesys::NameSystem>(std::make_unique<namesys::SimNetwork>(c), *entropy_);
    }
    for (const auto& [_, s] : identities_) names_->register_owner(s.keys);
    return *names_;
}

std::vector<std::string> StateDir::aliases() const {
    std::vector<std::string> out;
    for (const auto& [alias, _] : identities_) out.push_back(alias);
    return out;
}

IdentityState& StateDir::create_identity(const std::string& alias) {
    validate_alias(alias);
    if (identities_.contains(alias)) fail(Errc::InvalidArgument, "identity '" + alias + "' already exists");
    auto& ns = names();
    auto state = IdentityState::create(*entropy_, ns.random_node());
    const json k{{"alias", alias},
                 {"seed", encoding::hex(state.keys.seed().view())},
                 {"abe_secret", encoding::hex(state.master.secret.view())},
                 {"home", state.home}};
    write_file_atomic(root_ / "keys" / (alias + ".json"), k.dump(2) + "\n", 0600);
    ns.register_owner(state.keys);
    auto& stored = identities_.emplace(alias, std::move(state)).first->second;
    append(alias, {{"op", "create"}, {"ts", ns.now_ms()}});
    return stored;
}

IdentityState& StateDir::identity(const std::string& alias) {
    auto it = identities_.find(alias);
    if (it == identities_.end()) fail(Errc::NotFound, "no identity named '" + alias + "'");
    return it->second;
}

std::optional<std::string> StateDir::alias_of(const IdentityId& id) const {
    for (const auto& [alias, s] : identities_)
        if (s.id() == id) return alias;
    return std::nullopt;
}

Provider StateDir::provider(const std::string& alias) {
    auto& state = identity(alias);
    return Provider(state, names(), *entropy_, {config_.ttl_ms},
                    [this, alias](const json& e) { append(alias, e); });
}

void StateDir::append(const std::string& alias, json event) {
    event["seq"] = ++seq_;
    event["id"] = alias;
    std::ofstream out(root_ / "state.log", std::ios::app | std::ios::binary);
    out << event.dump() << '\n';
    out.flush();
    if (!out) fail(Errc::Io, "cannot append to state.log");
    ++log_events_;
}

void StateDir::commit() {
    if (names_) write_file_atomic(root_ / "network.json", names_->save().dump());
    if (log_events_ > compact_after) compact();
}

void StateDir::compact() {
    json ids = json::object();
    for (const auto& [alias, s] : identities_) ids[alias] = s.snapshot();
    write_file_atomic(root_ / "snapshot.json", json{{"seq", seq_}, {"identities", ids}}.dump(2) + "\n");
    write_file_atomic(root_ / "state.log", "");
    log_events_ = 0;
}

}  // namespace reclaim::idp
