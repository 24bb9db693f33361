#include "reclaim/oidc/oidc.hpp"

#include <algorithm>
#include <set>

#include <httplib.h>

#include "reclaim/common/encoding.hpp"

namespace reclaim::oidc {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

const std::set<std::string> kReservedClaims{"iss", "sub", "aud", "iat", "exp", "nonce", "warnings"};

json error_body(const std::string& error, const std::string& description = {}) {
    json j{{"error", error}};
    if (!description.empty()) j["error_description"] = description;
    return j;
}

Response error(int status, const std::string& err, const std::string& description = {}) {
    return {status, error_body(err, description), {}};
}

Response from_error(const Error& e) {
    switch (e.code()) {
        case Errc::InvalidArgument:
        case Errc::ParseError:
            return error(400, "invalid_request", e.what());
        case Errc::PayloadTooLarge:
            return error(413, "payload_too_large", e.what());
        case Errc::UnknownAttribute:
        case Errc::UnknownTicket:
        case Errc::NotFound:
            return error(404, "not_found", e.what());
        case Errc::AlreadyRevoked:
            return error(409, "already_revoked", e.what());
        default:
            return error(500, "server_error", e.what());
    }
}

std::string param(const Service::Params& p, const std::string& key) {
    auto it = p.find(key);
    return it == p.end() ? std::string() : it->second;
}

crypto::SigningPublicKey key_from_base32(std::string_view s) {
    const auto raw = encoding::unbase32(s);
    if (raw.size() != crypto::SigningPublicKey::size) fail(Errc::ParseError, "not a namespace key");
    return encoding::fixed_from<crypto::SigningPublicKey>(raw);
}

std::string b64(std::string_view s) { return encoding::base64url(as_bytes(s)); }

json parse_b64_json(std::string_view part) {
    const auto raw = encoding::unbase64url(part);
    try {
        return json::parse(raw.begin(), raw.end());
    } catch (const json::exception&) {
        fail(Errc::ParseError, "segment is not JSON");
    }
}

crypto::Signature signature_from(std::string_view part) {
    const auto raw = encoding::unbase64url(part);
    if (raw.size() != crypto::Signature::size) fail(Errc::ParseError, "bad signature length");
    return encoding::fixed_from<crypto::Signature>(raw);
}

std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        out.emplace_back(s.substr(start, pos - start));
        if (pos == std::string_view::npos) return out;
        start = pos + 1;
    }
}

json attribute_json(const idp::Attribute& a) {
    return {{"name", a.name}, {"value", to_string(a.value)}, {"version", a.version}, {"deleted", a.deleted}};
}

}  // namespace

// --- clients -----------------------------------------------------------------

ClientRegistry ClientRegistry::parse(const json& j) {
    ClientRegistry r;
    if (!j.is_object() || !j.contains("clients") || !j["clients"].is_array())
        fail(Errc::ParseError, "client registry needs a \"clients\" list");
    for (const auto& c : j["clients"]) {
        Client client;
        try {
            client.client_id = c.at("client_id").get<std::string>();
            client.name = c.value("name", "");
            client.redirect_uris = c.at("redirect_uris").get<std::vector<std::string>>();
        } catch (const json::exception& e) {
            fail(Errc::ParseError, std::string("bad client entry: ") + e.what());
        }
        r.add(std::move(client));
    }
    return r;
}

ClientRegistry ClientRegistry::load(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) return {};
    try {
        return parse(json::parse(idp::read_file(path)));
    } catch (const json::exception&) {
        fail(Errc::ParseError, path.string() + " is not JSON");
    }
}

json ClientRegistry::to_json() const {
    json list = json::array();
    for (const auto& [_, c] : clients_)
        list.push_back({{"client_id", c.client_id}, {"name", c.name}, {"redirect_uris", c.redirect_uris}});
    return {{"clients", list}};
}

void ClientRegistry::add(Client c) {
    key_from_base32(c.client_id);
    if (c.redirect_uris.empty()) fail(Errc::ParseError, "client " + c.client_id + " has no redirect uris");
    clients_[c.client_id] = std::move(c);
}

const Client* ClientRegistry::find(std::string_view client_id) const {
    auto it = clients_.find(client_id);
    return it == clients_.end() ? nullptr : &it->second;
}

// --- tokens and codes --------------------------------------------------------

std::string make_client_assertion(const crypto::SigningKeyPair& rp, std::string_view code, std::int64_t iat) {
    ordered_json payload;
    payload["iss"] = encoding::base32(rp.public_key().view());
    payload["code"] = code;
    payload["iat"] = iat;
    const auto body = b64(payload.dump());
    return body + "." + encoding::base64url(rp.sign(as_bytes(body)).view());
}

json verify_id_token(std::string_view token) {
    const auto parts = split(token, '.');
    if (parts.size() != 3) fail(Errc::ParseError, "token needs three segments");
    const auto header = parse_b64_json(parts[0]);
    if (header.value("alg", "") != "EdDSA") fail(Errc::ParseError, "unsupported token algorithm");
    auto payload = parse_b64_json(parts[1]);
    if (!payload.contains("iss") || !payload["iss"].is_string()) fail(Errc::ParseError, "token has no issuer");
    const auto issuer = key_from_base32(payload["iss"].get<std::string>());
    const auto signed_part = parts[0] + "." + parts[1];
    if (!crypto::verify(issuer, as_bytes(signed_part), signature_from(parts[2])))
        fail(Errc::SignatureInvalid, "token signature does not verify");
    return payload;
}

std::string encode_code(const idp::Ticket& ticket, ByteView wrapped_key) {
    return ticket.encode() + "." + encoding::base64url(wrapped_key);
}

std::pair<idp::Ticket, Bytes> decode_code(std::string_view code) {
    const auto dot = code.find('.');
    if (dot == std::string_view::npos) return {idp::Ticket::decode(code), {}};
    return {idp::Ticket::decode(code.substr(0, dot)), encoding::unbase64url(code.substr(dot + 1))};
}

// --- service -----------------------------------------------------------------

Service::Service(idp::StateDir& dir, ClientRegistry clients)
    : dir_(dir), clients_(std::move(clients)), alias_(dir.config().identity) {
    dir_.identity(alias_);
}

std::int64_t Service::now_ms() { return dir_.names().now_ms(); }

namesys::NodeIndex Service::node_of(const idp::IdentityId& id) {
    const auto alias = dir_.alias_of(id);
    return alias ? dir_.identity(*alias).home : dir_.names().random_node();
}

void Service::drop_expired() {
    const auto now = now_ms();
    const auto life = dir_.config().code_lifetime_ms;
    std::erase_if(pending_, [&](const auto& p) { return now - p.second.created_ms > life; });
}

void Service::persist() {
    std::lock_guard lock(mu_);
    dir_.commit();
}

Response Service::redirect_error(const std::string& uri, const std::string& err, const std::string& state,
                                 const std::string& description) {
    httplib::Params p{{"error", err}};
    if (!state.empty()) p.emplace("state", state);
    if (!description.empty()) p.emplace("error_description", description);
    Response r{302, error_body(err, description), httplib::append_query_params(uri, p)};
    return r;
}

Response Service::authorize(const Params& q) {
    std::lock_guard lock(mu_);
    const auto* client = clients_.find(param(q, "client_id"));
    if (!client) return error(400, "invalid_client", "unknown client_id");
    const auto redirect = param(q, "redirect_uri");
    if (std::find(client->redirect_uris.begin(), client->redirect_uris.end(), redirect) == client->redirect_uris.end())
        return error(400, "invalid_request", "redirect_uri is not registered for this client");
    const auto state = param(q, "state");
    if (param(q, "response_type") != "code") return redirect_error(redirect, "unsupported_response_type", state);

    std::vector<std::string> names;
    for (const auto& s : split(param(q, "scope"), ' ')) {
        if (s.empty() || s == "openid") continue;
        if (std::find(names.begin(), names.end(), s) == names.end()) names.push_back(s);
    }
    if (names.empty()) return redirect_error(redirect, "invalid_scope", state, "no attributes requested");
    const auto& user = dir_.identity(alias_);
    for (const auto& n : names)
        if (!user.live(n)) return redirect_error(redirect, "invalid_scope", state, "unknown attribute '" + n + "'");

    PendingRequest req{idp::random_label(dir_.entropy()), client, redirect, state, param(q, "nonce"), names, now_ms()};
    if (dir_.config().auto_approve) return issue_code(req, names);
    drop_expired();
    pending_[req.id] = req;
    return {200, {{"pending", req.id}, {"consent", "/consent/pending"}}, {}};
}

Response Service::issue_code(const PendingRequest& req, const std::vector<std::string>& names) {
    auto provider = dir_.provider(alias_);
    const auto auth = provider.authorize(key_from_base32(req.client->client_id), names);
    dir_.commit();
    const auto code = encode_code(auth.ticket, auth.wrapped_key);
    codes_[code] = {req.client->client_id, req.redirect_uri, req.nonce, now_ms(), false};
    httplib::Params p{{"code", code}};
    if (!req.state.empty()) p.emplace("state", req.state);
    const auto location = httplib::append_query_params(req.redirect_uri, p);
    return {302, {{"redirect", location}}, location};
}

Response Service::consent_pending() {
    std::lock_guard lock(mu_);
    drop_expired();
    json list = json::array();
    for (const auto& [id, p] : pending_)
        list.push_back({{"id", id},
                        {"client_id", p.client->client_id},
                        {"client_name", p.client->name},
                        {"redirect_uri", p.redirect_uri},
                        {"names", p.names},
                        {"state", p.state},
                        {"created_ms", p.created_ms},
                        {"expires_ms", p.created_ms + dir_.config().code_lifetime_ms}});
    return {200, {{"pending", list}}, {}};
}

Response Service::consent_decision(const json& body) {
    std::lock_guard lock(mu_);
    if (!body.is_object() || !body.contains("id") || !body["id"].is_string() || !body.contains("approve") ||
        !body["approve"].is_boolean())
        return error(400, "invalid_request", "decision needs id and approve");
    const auto id = body["id"].get<std::string>();
    if (!pending_.contains(id)) return error(404, "not_found", "no pending request with this id");
    drop_expired();
    auto it = pending_.find(id);
    if (it == pending_.end()) return error(410, "expired", "the authorization request expired");
    const auto req = it->second;

    Response r;
    if (!body["approve"].get<bool>()) {
        pending_.erase(it);
        r = redirect_error(req.redirect_uri, "access_denied", req.state);
    } else {
        std::vector<std::string> names = req.names;
        if (body.contains("names")) {
            if (!body["names"].is_array()) return error(400, "invalid_request", "names must be a list");
            names.clear();
            for (const auto& n : body["names"]) {
                if (!n.is_string() || std::find(req.names.begin(), req.names.end(), n) == req.names.end())
                    return error(400, "invalid_request", "approved names must be a subset of the request");
                if (std::find(names.begin(), names.end(), n) == names.end()) names.push_back(n);
            }
            if (names.empty()) return error(400, "invalid_request", "approve at least one name or deny");
        }
        pending_.erase(it);
        try {
            r = issue_code(req, names);
        } catch (const Error& e) {
            r = redirect_error(req.redirect_uri, "invalid_scope", req.state, e.what());
        }
    }
    // The browser follows this itself; the service answers JSON.
    return {200, {{"redirect", r.location}}, {}};
}

json Service::claims_from(const idp::RetrieveResult& r, json& warnings) const {
    json claims = json::object();
    for (const auto& a : r.attributes) {
        if (!a.value) {
            warnings.push_back({{"claim", a.name}, {"error", std::string(errc_name(*a.error))}, {"detail", a.detail}});
        } else if (kReservedClaims.contains(a.name)) {
            warnings.push_back({{"claim", a.name}, {"error", "ReservedClaimName"}});
        } else {
            claims[a.name] = to_string(*a.value);
        }
    }
    return claims;
}

Response Service::token(const Params& form) {
    std::lock_guard lock(mu_);
    if (param(form, "grant_type") != "authorization_code") return error(400, "unsupported_grant_type");
    const auto code = param(form, "code");
    auto it = codes_.find(code);
    if (it == codes_.end()) return error(400, "invalid_grant", "unknown authorization code");
    auto& entry = it->second;

    try {
        const auto parts = split(param(form, "client_assertion"), '.');
        if (parts.size() != 2) fail(Errc::ParseError, "client_assertion needs two segments");
        const auto claims = parse_b64_json(parts[0]);
        const auto iss = claims.at("iss").get<std::string>();
        if (iss != entry.client_id || claims.at("code").get<std::string>() != code)
            fail(Errc::BindingMismatch, "assertion does not match the code");
        if (!crypto::verify(key_from_base32(iss), as_bytes(parts[0]), signature_from(parts[1])))
            fail(Errc::SignatureInvalid, "assertion signature does not verify");
    } catch (const std::exception& e) {
        return error(401, "invalid_client", e.what());
    }

    if (entry.consumed) return error(400, "invalid_grant", "authorization code already used");
    if (now_ms() - entry.issued_ms > dir_.config().code_lifetime_ms)
        return error(400, "invalid_grant", "authorization code expired");
    const auto redirect = param(form, "redirect_uri");
    if (!redirect.empty() && redirect != entry.redirect_uri) return error(400, "invalid_grant", "redirect_uri mismatch");
    entry.consumed = true;

    const auto [ticket, wrapped] = decode_code(code);
    const auto rp_alias = dir_.alias_of(ticket.rp);
    const auto user_alias = dir_.alias_of(ticket.user);
    if (!rp_alias || !user_alias) return error(400, "invalid_client", "client keys are not held by this node");
    const auto& rp = dir_.identity(*rp_alias).keys;
    const auto origin = dir_.identity(*rp_alias).home;

    idp::RetrieveResult result;
    try {
        try {
            result = idp::retrieve(dir_.names(), rp, ticket, wrapped, origin);
            const bool stale = std::any_of(result.attributes.begin(), result.attributes.end(),
                                           [](const auto& a) { return a.error == Errc::PolicyNotSatisfied; });
            if (stale) result = idp::retrieve(dir_.names(), rp, ticket, std::nullopt, origin);
        } catch (const Error& e) {
            if (e.code() != Errc::UnwrapFailure) throw;
            result = idp::retrieve(dir_.names(), rp, ticket, std::nullopt, origin);
        }
    } catch (const Error& e) {
        return error(400, "invalid_grant", e.what());
    }

    json warnings = json::array();
    const auto claims = claims_from(result, warnings);
    if (claims.empty()) return error(400, "invalid_grant", "no authorized attribute could be retrieved");

    const auto iat = now_ms() / 1000;
    ordered_json header{{"alg", "EdDSA"}, {"typ", "JWT"}};
    ordered_json payload;
    payload["iss"] = encoding::base32(ticket.user.view());
    payload["sub"] = payload["iss"];
    payload["aud"] = entry.client_id;
    payload["iat"] = iat;
    payload["exp"] = iat + 3600;
    if (!entry.nonce.empty()) payload["nonce"] = entry.nonce;
    for (const auto& [k, v] : claims.items()) payload[k] = v;
    const auto signing_input =
        b64(header.dump()) + "." + b64(payload.dump(-1, ' ', false, json::error_handler_t::replace));
    const auto id_token =
        signing_input + "." + encoding::base64url(dir_.identity(*user_alias).keys.sign(as_bytes(signing_input)).view());

    const auto access = idp::random_label(dir_.entropy());
    access_[access] = {ticket, entry.client_id};
    json body{{"access_token", access}, {"token_type", "Bearer"}, {"id_token", id_token}};
    if (!warnings.empty()) body["warnings"] = warnings;
    return {200, body, {}};
}

Response Service::userinfo(std::string_view header) {
    std::lock_guard lock(mu_);
    constexpr std::string_view prefix = "Bearer ";
    if (!header.starts_with(prefix)) return error(401, "invalid_token", "bearer token required");
    auto it = access_.find(std::string(header.substr(prefix.size())));
    if (it == access_.end()) return error(401, "invalid_token", "unknown access token");
    const auto& grant = it->second;
    const auto rp_alias = dir_.alias_of(grant.ticket.rp);
    if (!rp_alias) return error(401, "invalid_token", "client keys are not held by this node");

    idp::RetrieveResult result;
    try {
        result = idp::retrieve(dir_.names(), dir_.identity(*rp_alias).keys, grant.ticket, std::nullopt,
                               dir_.identity(*rp_alias).home);
    } catch (const Error& e) {
        return error(401, "invalid_token", std::string("authorization no longer valid: ") + e.what());
    }
    json warnings = json::array();
    auto claims = claims_from(result, warnings);
    claims["sub"] = encoding::base32(grant.ticket.user.view());
    if (!warnings.empty()) claims["warnings"] = warnings;
    return {200, claims, {}};
}

// --- bridge --------------------------------------------------------------------

Response Service::identity() {
    std::lock_guard lock(mu_);
    const auto& user = dir_.identity(alias_);
    return {200, {{"alias", alias_}, {"id", encoding::base32(user.id().view())}, {"now_ms", now_ms()}}, {}};
}

Response Service::list_attributes() {
    std::lock_guard lock(mu_);
    json list = json::array();
    for (const auto& [_, a] : dir_.identity(alias_).attributes) list.push_back(attribute_json(a));
    return {200, {{"attributes", list}}, {}};
}

Response Service::store_attribute(const json& body) {
    std::lock_guard lock(mu_);
    if (!body.is_object() || !body.contains("name") || !body["name"].is_string() || !body.contains("value") ||
        !body["value"].is_string())
        return error(400, "invalid_request", "attribute needs string name and value");
    try {
        const auto a = dir_.provider(alias_).store(body["name"], as_bytes(body["value"].get<std::string>()));
        dir_.commit();
        return {201, attribute_json(a), {}};
    } catch (const Error& e) {
        return from_error(e);
    }
}

Response Service::update_attribute(const std::string& name, const json& body) {
    std::lock_guard lock(mu_);
    if (!body.is_object() || !body.contains("value") || !body["value"].is_string())
        return error(400, "invalid_request", "update needs a string value");
    try {
        const auto a = dir_.provider(alias_).update(name, as_bytes(body["value"].get<std::string>()));
        dir_.commit();
        return {200, attribute_json(a), {}};
    } catch (const Error& e) {
        return from_error(e);
    }
}

Response Service::delete_attribute(const std::string& name) {
    std::lock_guard lock(mu_);
    try {
        dir_.provider(alias_).remove(name);
        dir_.commit();
        return {200, attribute_json(dir_.identity(alias_).attributes.at(name)), {}};
    } catch (const Error& e) {
        return from_error(e);
    }
}

Response Service::list_tickets() {
    std::lock_guard lock(mu_);
    json list = json::array();
    for (const auto& t : dir_.identity(alias_).tickets) {
        const auto rp = encoding::base32(t.ticket.rp.view());
        const auto* client = clients_.find(rp);
        list.push_back({{"ticket", t.ticket.encode()},
                        {"rnd", t.ticket.rnd},
                        {"rp", rp},
                        {"rp_name", client ? client->name : ""},
                        {"names", t.ticket.names},
                        {"authorized", t.authorized}});
    }
    return {200, {{"tickets", list}}, {}};
}

Response Service::revoke_ticket(const std::string& rnd) {
    std::lock_guard lock(mu_);
    auto& user = dir_.identity(alias_);
    if (user.revoked.contains(rnd)) return error(409, "already_revoked", "ticket was already revoked");
    const auto* issued = user.find_ticket(rnd);
    if (!issued) return error(404, "not_found", "no ticket with this rnd");
    try {
        const auto receipt = dir_.provider(alias_).revoke(idp::Ticket(issued->ticket));
        dir_.commit();
        return {200, {{"rnd", rnd}, {"bumped", receipt.bumped}, {"rekeyed", receipt.rekeyed}}, {}};
    } catch (const Error& e) {
        return from_error(e);
    }
}

Response Service::advance(const json& body) {
    std::lock_guard lock(mu_);
    if (!dir_.config().sim_control) return error(404, "not_found", "simulation control is disabled");
    if (!body.is_object() || !body.contains("ms") || !body["ms"].is_number_integer() || body["ms"].get<std::int64_t>() < 0)
        return error(400, "invalid_request", "advance needs a non-negative integer ms");
    dir_.names().advance(body["ms"].get<std::int64_t>());
    return {200, {{"now_ms", now_ms()}}, {}};
}

// --- HTTP ----------------------------------------------------------------------

std::pair<std::string, int> parse_listen(const std::string& listen) {
    const auto colon = listen.rfind(':');
    if (colon == std::string::npos || colon == 0) fail(Errc::InvalidArgument, "listen must be host:port");
    try {
        std::size_t used = 0;
        const int port = std::stoi(listen.substr(colon + 1), &used);
        if (used != listen.size() - colon - 1 || port < 0 || port > 65535) throw std::out_of_range(listen);
        return {listen.substr(0, colon), port};
    } catch (const std::exception&) {
        fail(Errc::InvalidArgument, "listen port must be 0-65535");
    }
}

struct HttpServer::Impl {
    explicit Impl(Service& s) : service(s) {}
    Service& service;
    httplib::Server server;
};

namespace {

Service::Params params_of(const httplib::Request& req) {
    Service::Params p;
    for (const auto& [k, v] : req.params) p.emplace(k, v);
    return p;
}

void send(httplib::Response& res, const Response& r) {
    res.status = r.status;
    if (!r.location.empty()) res.set_header("Location", r.location);
    if (r.status == 401) res.set_header("WWW-Authenticate", "Bearer");
    res.set_content(r.body.dump(-1, ' ', false, json::error_handler_t::replace), "application/json");
}

template <typename F>
httplib::Server::Handler json_handler(F f) {
    return [f](const httplib::Request& req, httplib::Response& res) {
        json body;
        if (!req.body.empty()) {
            try {
                body = json::parse(req.body);
            } catch (const json::exception&) {
                send(res, error(400, "invalid_request", "body is not JSON"));
                return;
            }
        }
        send(res, f(req, body));
    };
}

}  // namespace

HttpServer::HttpServer(Service& service) : impl_(std::make_unique<Impl>(service)) {
    auto& s = impl_->server;
    auto& svc = impl_->service;
    s.Get("/authorize", [&svc](const auto& req, auto& res) { send(res, svc.authorize(params_of(req))); });
    s.Post("/token", [&svc](const auto& req, auto& res) { send(res, svc.token(params_of(req))); });
    auto userinfo = [&svc](const httplib::Request& req, httplib::Response& res) {
        send(res, svc.userinfo(req.get_header_value("Authorization")));
    };
    s.Get("/userinfo", userinfo);
    s.Post("/userinfo", userinfo);
    s.Get("/consent/pending", [&svc](const auto&, auto& res) { send(res, svc.consent_pending()); });
    s.Post("/consent/decision", json_handler([&svc](const auto&, const json& b) { return svc.consent_decision(b); }));
    s.Get("/api/identity", [&svc](const auto&, auto& res) { send(res, svc.identity()); });
    s.Get("/api/attributes", [&svc](const auto&, auto& res) { send(res, svc.list_attributes()); });
    s.Post("/api/attributes", json_handler([&svc](const auto&, const json& b) { return svc.store_attribute(b); }));
    s.Put("/api/attributes/:name", json_handler([&svc](const httplib::Request& req, const json& b) {
              return svc.update_attribute(req.path_params.at("name"), b);
          }));
    s.Delete("/api/attributes/:name", [&svc](const httplib::Request& req, httplib::Response& res) {
        send(res, svc.delete_attribute(req.path_params.at("name")));
    });
    s.Get("/api/tickets", [&svc](const auto&, auto& res) { send(res, svc.list_tickets()); });
    s.Delete("/api/tickets/:rnd", [&svc](const httplib::Request& req, httplib::Response& res) {
        send(res, svc.revoke_ticket(req.path_params.at("rnd")));
    });
    s.Post("/sim/advance", json_handler([&svc](const auto&, const json& b) { return svc.advance(b); }));
    s.set_exception_handler([](const auto&, auto& res, std::exception_ptr ep) {
        std::string what = "internal error";
        try {
            std::rethrow_exception(ep);
        } catch (const std::exception& e) {
            what = e.what();
        } catch (...) {
        }
        send(res, error(500, "server_error", what));
    });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
    if (port == 0) return impl_->server.bind_to_any_port(host);
    return impl_->server.bind_to_port(host, port) ? port : -1;
}

void HttpServer::run() { impl_->server.listen_after_bind(); }
void HttpServer::stop() {
    if (impl_->server.is_running()) impl_->server.stop();
}
void HttpServer::wait_until_ready() { impl_->server.wait_until_ready(); }

}  // namespace reclaim::oidc
