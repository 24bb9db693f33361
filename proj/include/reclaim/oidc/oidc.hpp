#pragma once

// Authorization-code flow on top of the identity provider. The authorization
// code carries the ticket and the wrapped key; the token and userinfo
// endpoints run the requesting party's retrieval. One Service instance
// answers for the local user identity and for every requesting party whose
// keys live in the same state directory.

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "reclaim/idp/idp.hpp"
#include "reclaim/idp/state_dir.hpp"

namespace reclaim::oidc {

struct Client {
    std::string client_id;  // base32 namespace key of the requesting party
    std::string name;
    std::vector<std::string> redirect_uris;
};

/// Static client registry: {"clients":[{"client_id","name","redirect_uris"}]}.
class ClientRegistry {
public:
    /// Throws Errc::ParseError for malformed entries or client ids that are not keys.
    static ClientRegistry parse(const nlohmann::json& j);
    static ClientRegistry load(const std::filesystem::path& path);
    nlohmann::json to_json() const;

    void add(Client c);
    const Client* find(std::string_view client_id) const;

private:
    std::map<std::string, Client, std::less<>> clients_;
};

struct Response {
    int status = 200;
    nlohmann::json body = nlohmann::json::object();
    std::string location;  // redirect target when status is 302
};

/// "<b64url payload>.<b64url signature>" where the payload is
/// {"iss": client_id, "code": code, "iat": seconds} signed by the RP key.
std::string make_client_assertion(const crypto::SigningKeyPair& rp, std::string_view code, std::int64_t iat);

/// Splits header.payload.signature, checks the EdDSA signature against the
/// payload's "iss" key and returns the payload. Throws Errc::ParseError or
/// Errc::SignatureInvalid.
nlohmann::json verify_id_token(std::string_view token);

/// Authorization code layout: "<ticket encoding>.<b64url wrapped key>".
std::string encode_code(const idp::Ticket& ticket, ByteView wrapped_key);
std::pair<idp::Ticket, Bytes> decode_code(std::string_view code);

class Service {
public:
    using Params = std::map<std::string, std::string>;

    /// Throws Errc::NotFound unless the configured identity exists.
    Service(idp::StateDir& dir, ClientRegistry clients);

    Response authorize(const Params& query);
    Response token(const Params& form);
    Response userinfo(std::string_view authorization_header);
    Response consent_pending();
    Response consent_decision(const nlohmann::json& body);

    Response identity();
    Response list_attributes();
    Response store_attribute(const nlohmann::json& body);
    Response update_attribute(const std::string& name, const nlohmann::json& body);
    Response delete_attribute(const std::string& name);
    Response list_tickets();
    Response revoke_ticket(const std::string& rnd);

    /// Moves the simulated clock; only when sim_control is enabled.
    Response advance(const nlohmann::json& body);

    /// Writes network and journal state to disk.
    void persist();

    const idp::ServiceConfig& config() const { return dir_.config(); }

private:
    struct PendingRequest {
        std::string id;
        const Client* client = nullptr;
        std::string redirect_uri, state, nonce;
        std::vector<std::string> names;
        std::int64_t created_ms = 0;
    };
    struct CodeEntry {
        std::string client_id, redirect_uri, nonce;
        std::int64_t issued_ms = 0;
        bool consumed = false;
    };
    struct AccessGrant {
        idp::Ticket ticket;
        std::string client_id;
    };

    Response issue_code(const PendingRequest& req, const std::vector<std::string>& names);
    Response redirect_error(const std::string& uri, const std::string& error, const std::string& state,
                            const std::string& description = {});
    nlohmann::json claims_from(const idp::RetrieveResult& r, nlohmann::json& warnings) const;
    namesys::NodeIndex node_of(const idp::IdentityId& id);
    std::int64_t now_ms();
    void drop_expired();

    std::mutex mu_;
    idp::StateDir& dir_;
    ClientRegistry clients_;
    std::string alias_;
    std::map<std::string, PendingRequest> pending_;
    std::map<std::string, CodeEntry> codes_;
    std::map<std::string, AccessGrant> access_;
};

/// HTTP binding for Service.
class HttpServer {
public:
    explicit HttpServer(Service& service);
    ~HttpServer();

    /// Binds to host:port (port 0 picks a free one) and returns the port, or -1.
    int bind(const std::string& host, int port);
    /// Serves until stop(); blocks.
    void run();
    void stop();
    void wait_until_ready();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Splits "host:port"; throws Errc::InvalidArgument.
std::pair<std::string, int> parse_listen(const std::string& listen);

}  // namespace reclaim::oidc
