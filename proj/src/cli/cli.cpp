#include "reclaim/cli/cli.hpp"

#include <pthread.h>
#include <signal.h>

#include <CLI11.hpp>
#include <cctype>
#include <iostream>
#include <thread>

#include "reclaim/bench/bench.hpp"
#include "reclaim/common/encoding.hpp"
#include "reclaim/idp/state_dir.hpp"
#include "reclaim/oidc/oidc.hpp"

namespace reclaim::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Options {
    std::string dir = ".reclaim";
    bool json = false;

    std::string alias, name, value, ticket, rp, key_file, key_out, client_name;
    std::vector<std::string> names, redirects;
    std::int64_t ms = 0;
    std::string config_key, config_value;

    std::string listen, identity;
    bool auto_approve = false, sim_control = false;

    bench::ExperimentConfig bench;
    std::string bench_out = "results";
    bool bench_full = false;
};

struct Context {
    const Options& opt;
    std::ostream& out;
    std::ostream& err;
    std::unique_ptr<idp::StateDir> dir;

    idp::StateDir& state() {
        if (!dir) dir = idp::StateDir::open(opt.dir);
        return *dir;
    }
};

std::string id_text(const idp::IdentityId& id) { return encoding::base32(id.view()); }

/// Accepts a local alias or a base32 public key.
idp::IdentityId resolve_party(Context& c, const std::string& who) {
    if (c.state().has_identity(who)) return c.state().identity(who).id();
    try {
        return encoding::fixed_from<idp::IdentityId>(encoding::unbase32(who));
    } catch (const Error&) {
        fail(Errc::InvalidArgument, "not an alias or public key: " + who);
    }
}

std::string party_label(Context& c, const idp::IdentityId& id) {
    const auto alias = c.state().alias_of(id);
    return alias ? *alias : id_text(id);
}

void print_json(Context& c, const json& j) { c.out << j.dump(2, ' ', false, json::error_handler_t::replace) << "\n"; }

// id

void id_create(Context& c) {
    const auto& s = c.state().create_identity(c.opt.alias);
    c.state().commit();
    c.out << c.opt.alias << " " << id_text(s.id()) << "\n";
}

void id_list(Context& c) {
    json list = json::array();
    for (const auto& alias : c.state().aliases()) {
        const auto& s = c.state().identity(alias);
        list.push_back({{"alias", alias}, {"id", id_text(s.id())}, {"home", s.home}});
    }
    if (c.opt.json) return print_json(c, list);
    for (const auto& e : list)
        c.out << e["alias"].get<std::string>() << " " << e["id"].get<std::string>() << " home=" << e["home"] << "\n";
}

// attr

void attr_store(Context& c, bool update) {
    auto p = c.state().provider(c.opt.alias);
    const auto a = update ? p.update(c.opt.name, as_bytes(c.opt.value)) : p.store(c.opt.name, as_bytes(c.opt.value));
    c.state().commit();
    c.out << a.name << " v" << a.version << "\n";
}

void attr_delete(Context& c) {
    c.state().provider(c.opt.alias).remove(c.opt.name);
    c.state().commit();
    c.out << c.opt.name << " deleted v" << c.state().identity(c.opt.alias).attributes.at(c.opt.name).version << "\n";
}

void attr_list(Context& c) {
    json list = json::array();
    for (const auto& [name, a] : c.state().identity(c.opt.alias).attributes)
        if (!a.deleted) list.push_back({{"name", name}, {"version", a.version}, {"value", to_string(a.value)}});
    if (c.opt.json) return print_json(c, list);
    for (const auto& e : list)
        c.out << e["name"].get<std::string>() << " v" << e["version"] << " " << e["value"].get<std::string>() << "\n";
}

// ticket

void ticket_issue(Context& c) {
    const auto rp = resolve_party(c, c.opt.rp);
    const auto auth = c.state().provider(c.opt.alias).authorize(rp, c.opt.names);
    c.state().commit();
    if (!c.opt.key_out.empty()) idp::write_file_atomic(c.opt.key_out, encoding::base64url(auth.wrapped_key) + "\n", 0600);
    c.out << auth.ticket.encode() << "\n";
}

void ticket_revoke(Context& c) {
    auto& s = c.state().identity(c.opt.alias);
    idp::Ticket ticket;
    if (const auto* issued = s.find_ticket(c.opt.ticket))
        ticket = issued->ticket;
    else
        ticket = idp::Ticket::decode(c.opt.ticket);
    const auto receipt = c.state().provider(c.opt.alias).revoke(ticket);
    c.state().commit();
    c.out << "revoked " << ticket.rnd << "\n";
    for (const auto& [name, v] : receipt.bumped) c.out << "bumped " << name << " v" << v << "\n";
    for (const auto& rnd : receipt.rekeyed) c.out << "rekeyed " << rnd << "\n";
}

void ticket_list(Context& c) {
    json list = json::array();
    for (const auto& t : c.state().identity(c.opt.alias).tickets)
        list.push_back({{"rnd", t.ticket.rnd},
                        {"rp", party_label(c, t.ticket.rp)},
                        {"names", t.ticket.names},
                        {"authorized", t.authorized},
                        {"ticket", t.ticket.encode()}});
    if (c.opt.json) return print_json(c, list);
    for (const auto& e : list) {
        c.out << e["rnd"].get<std::string>() << " " << e["rp"].get<std::string>();
        for (const auto& n : e["names"]) c.out << " " << n.get<std::string>();
        c.out << "\n";
    }
}

// retrieve

int retrieve(Context& c) {
    const auto ticket = idp::Ticket::decode(c.opt.ticket);
    const auto rp_alias = c.state().alias_of(ticket.rp);
    if (!rp_alias) fail(Errc::KeyRecordMissing, "no local keys for the ticket audience");
    const auto& rp = c.state().identity(*rp_alias);
    std::optional<Bytes> wrapped;
    if (!c.opt.key_file.empty()) {
        auto text = idp::read_file(c.opt.key_file);
        while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back()))) text.pop_back();
        wrapped = encoding::unbase64url(text);
    }
    const auto r = idp::retrieve(c.state().names(), rp.keys, ticket, wrapped, rp.home);
    c.state().commit();  // caches filled on the way

    bool ok = true;
    json list = json::array();
    for (const auto& a : r.attributes) {
        json e{{"name", a.name}, {"hops", a.hops}, {"from_cache", a.from_cache}};
        if (a.value) {
            e["value"] = to_string(*a.value);
        } else {
            ok = false;
            e["error"] = errc_name(a.error.value_or(Errc::NotFound));
        }
        list.push_back(e);
    }
    if (c.opt.json) {
        print_json(c, list);
    } else {
        for (const auto& e : list)
            c.out << e["name"].get<std::string>() << " "
                  << (e.contains("value") ? e["value"].get<std::string>() : "error=" + e["error"].get<std::string>())
                  << "\n";
    }
    return ok ? kExitOk : kExitOperational;
}

// net, config, client

void net_advance(Context& c) {
    if (c.opt.ms < 0) fail(Errc::InvalidArgument, "negative duration");
    c.state().names().advance(c.opt.ms);
    c.state().commit();
    c.out << "now_ms " << c.state().names().now_ms() << "\n";
}

void net_status(Context& c) {
    auto& ns = c.state().names();
    const json j{{"now_ms", ns.now_ms()}, {"nodes", ns.network().size()}};
    if (c.opt.json) return print_json(c, j);
    c.out << "now_ms " << j["now_ms"] << "\nnodes " << j["nodes"] << "\n";
}

void config_show(Context& c) { c.out << c.state().config().render(); }

void config_set(Context& c) {
    // Re-parse the whole file so the usual validation applies.
    auto text = c.state().config().render();
    text += c.opt.config_key + " = " + c.opt.config_value + "\n";
    c.state().set_config(idp::ServiceConfig::parse(text));
}

fs::path clients_path(Context& c) {
    const fs::path p = c.state().config().clients;
    return p.is_absolute() ? p : c.state().root() / p;
}

void client_add(Context& c) {
    auto registry = oidc::ClientRegistry::load(clients_path(c));
    const auto id = resolve_party(c, c.opt.rp);
    const auto name = c.opt.client_name.empty() ? party_label(c, id) : c.opt.client_name;
    registry.add({id_text(id), name, c.opt.redirects});
    idp::write_file_atomic(clients_path(c), registry.to_json().dump(2) + "\n");
    c.out << id_text(id) << " " << name << "\n";
}

void client_list(Context& c) {
    const auto j = oidc::ClientRegistry::load(clients_path(c)).to_json();
    if (c.opt.json) return print_json(c, j);
    for (const auto& e : j["clients"]) {
        c.out << e["client_id"].get<std::string>() << " " << e["name"].get<std::string>();
        for (const auto& u : e["redirect_uris"]) c.out << " " << u.get<std::string>();
        c.out << "\n";
    }
}

// serve

void serve(Context& c, const CLI::App& cmd) {
    auto& dir = c.state();
    auto config = dir.config();
    if (cmd.count("--identity")) config.identity = c.opt.identity;
    if (cmd.count("--listen")) config.listen = c.opt.listen;
    if (cmd.count("--auto-approve")) config.auto_approve = c.opt.auto_approve;
    if (cmd.count("--sim-control")) config.sim_control = c.opt.sim_control;
    dir.set_config(config);

    oidc::Service service(dir, oidc::ClientRegistry::load(clients_path(c)));
    oidc::HttpServer server(service);
    const auto [host, port] = oidc::parse_listen(config.listen);

    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    const int bound = server.bind(host, port);
    if (bound < 0) fail(Errc::Io, "cannot listen on " + config.listen);
    c.err << "serving " << config.identity << " on " << host << ":" << bound << "\n";
    std::jthread waiter([&] {
        int sig = 0;
        sigwait(&signals, &sig);
        server.stop();
    });
    server.run();
    waiter.join();
    service.persist();
}

// bench

void bench_run(Context& c) {
    auto config = c.opt.bench;
    if (c.opt.bench_full) config.runs = 1000;
    const auto m = bench::run_experiment(config);
    bench::write_results(c.opt.bench_out, m);
    c.out << bench::size_summary_csv(bench::summarize_by_size(m));
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    Options opt;
    CLI::App app{"Decentralized identity provider node", "reclaim"};
    app.require_subcommand(1);
    app.fallthrough();  // global options may follow the subcommand
    app.add_option("--dir", opt.dir, "State directory")->capture_default_str();
    app.add_flag("--json", opt.json, "Machine-readable output for read commands");

    auto* id = app.add_subcommand("id", "Identities")->require_subcommand(1);
    auto* id_create_cmd = id->add_subcommand("create", "Create an identity");
    id_create_cmd->add_option("alias", opt.alias)->required();
    auto* id_list_cmd = id->add_subcommand("list", "List identities");

    auto* attr = app.add_subcommand("attr", "Attributes")->require_subcommand(1);
    auto* attr_store_cmd = attr->add_subcommand("store", "Store an attribute");
    auto* attr_update_cmd = attr->add_subcommand("update", "Update a live attribute");
    for (auto* cmd : {attr_store_cmd, attr_update_cmd}) {
        cmd->add_option("alias", opt.alias)->required();
        cmd->add_option("name", opt.name)->required();
        cmd->add_option("value", opt.value)->required();
    }
    auto* attr_delete_cmd = attr->add_subcommand("delete", "Delete an attribute");
    attr_delete_cmd->add_option("alias", opt.alias)->required();
    attr_delete_cmd->add_option("name", opt.name)->required();
    auto* attr_list_cmd = attr->add_subcommand("list", "List live attributes");
    attr_list_cmd->add_option("alias", opt.alias)->required();

    auto* ticket = app.add_subcommand("ticket", "Authorization tickets")->require_subcommand(1);
    auto* ticket_issue_cmd = ticket->add_subcommand("issue", "Authorize a requesting party");
    ticket_issue_cmd->add_option("alias", opt.alias)->required();
    ticket_issue_cmd->add_option("--rp", opt.rp, "Alias or public key of the requesting party")->required();
    ticket_issue_cmd->add_option("--attrs", opt.names, "Attribute names")->required()->delimiter(',');
    ticket_issue_cmd->add_option("--key-out", opt.key_out, "Write the wrapped key here");
    auto* ticket_revoke_cmd = ticket->add_subcommand("revoke", "Revoke a ticket");
    ticket_revoke_cmd->add_option("alias", opt.alias)->required();
    ticket_revoke_cmd->add_option("ticket", opt.ticket, "Ticket or its rnd")->required();
    auto* ticket_list_cmd = ticket->add_subcommand("list", "List live tickets");
    ticket_list_cmd->add_option("alias", opt.alias)->required();

    auto* retrieve_cmd = app.add_subcommand("retrieve", "Resolve a ticket as its requesting party");
    retrieve_cmd->add_option("ticket", opt.ticket)->required();
    retrieve_cmd->add_option("--key", opt.key_file, "Wrapped key file from ticket issue");

    auto* net = app.add_subcommand("net", "Simulated network")->require_subcommand(1);
    auto* net_advance_cmd = net->add_subcommand("advance", "Advance the simulated clock");
    net_advance_cmd->add_option("ms", opt.ms)->required();
    auto* net_status_cmd = net->add_subcommand("status", "Clock and size");

    auto* config = app.add_subcommand("config", "service.conf")->require_subcommand(1);
    auto* config_show_cmd = config->add_subcommand("show", "Print the configuration");
    auto* config_set_cmd = config->add_subcommand("set", "Set one key");
    config_set_cmd->add_option("key", opt.config_key)->required();
    config_set_cmd->add_option("value", opt.config_value)->required();

    auto* client = app.add_subcommand("client", "Registered OIDC clients")->require_subcommand(1);
    auto* client_add_cmd = client->add_subcommand("add", "Register a client");
    client_add_cmd->add_option("rp", opt.rp, "Alias or public key")->required();
    client_add_cmd->add_option("--redirect", opt.redirects, "Allowed redirect URI")->required();
    client_add_cmd->add_option("--name", opt.client_name);
    auto* client_list_cmd = client->add_subcommand("list", "List clients");

    auto* serve_cmd = app.add_subcommand("serve", "Run the OIDC service on the embedded network");
    serve_cmd->add_option("--identity", opt.identity, "Alias answering /authorize");
    serve_cmd->add_option("--listen", opt.listen, "host:port");
    serve_cmd->add_flag("--auto-approve,!--no-auto-approve", opt.auto_approve);
    serve_cmd->add_flag("--sim-control,!--no-sim-control", opt.sim_control);

    auto* bench_cmd = app.add_subcommand("bench", "Retrieval benchmark")->require_subcommand(1);
    auto* bench_run_cmd = bench_cmd->add_subcommand("run", "Run the experiment and write CSV artifacts");
    bench_run_cmd->add_option("--sizes", opt.bench.sizes)->delimiter(',')->capture_default_str();
    bench_run_cmd->add_option("--runs", opt.bench.runs)->capture_default_str();
    bench_run_cmd->add_option("--repeats", opt.bench.repeats)->capture_default_str();
    bench_run_cmd->add_option("--seed", opt.bench.seed)->capture_default_str();
    bench_run_cmd->add_option("--workers", opt.bench.workers, "0 uses every core");
    bench_run_cmd->add_option("--out", opt.bench_out)->capture_default_str();
    bench_run_cmd->add_flag("--full", opt.bench_full, "1000 runs per size");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n";
        return kExitUsage;
    }

    Context c{opt, out, err, nullptr};
    try {
        if (id_create_cmd->parsed()) id_create(c);
        else if (id_list_cmd->parsed()) id_list(c);
        else if (attr_store_cmd->parsed()) attr_store(c, false);
        else if (attr_update_cmd->parsed()) attr_store(c, true);
        else if (attr_delete_cmd->parsed()) attr_delete(c);
        else if (attr_list_cmd->parsed()) attr_list(c);
        else if (ticket_issue_cmd->parsed()) ticket_issue(c);
        else if (ticket_revoke_cmd->parsed()) ticket_revoke(c);
        else if (ticket_list_cmd->parsed()) ticket_list(c);
        else if (retrieve_cmd->parsed()) return retrieve(c);
        else if (net_advance_cmd->parsed()) net_advance(c);
        else if (net_status_cmd->parsed()) net_status(c);
        else if (config_show_cmd->parsed()) config_show(c);
        else if (config_set_cmd->parsed()) config_set(c);
        else if (client_add_cmd->parsed()) client_add(c);
        else if (client_list_cmd->parsed()) client_list(c);
        else if (serve_cmd->parsed()) serve(c, *serve_cmd);
        else if (bench_run_cmd->parsed()) bench_run(c);
    } catch (const Error& e) {
        err << "error: " << errc_name(e.code()) << ": " << e.what() << "\n";
        return kExitOperational;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitOperational;
    }
    return kExitOk;
}

}  // namespace reclaim::cli
