#include <gtest/gtest.h>

#include <atomic>
#include <thread>

#include "support/oidc_node.hpp"
#include "support/scan.hpp"

using namespace reclaim;
using namespace reclaim::oidc;
using support::OidcNode;
using nlohmann::json;

namespace {

json advance(OidcNode& n, std::int64_t ms) { return n.service->advance({{"ms", ms}}).body; }

std::string bearer(const Response& token) { return "Bearer " + token.body.at("access_token").get<std::string>(); }

}  // namespace

TEST(ClientRegistry, ParseErrors) {
    EXPECT_THROW(ClientRegistry::parse(json::array()), Error);
    EXPECT_THROW(ClientRegistry::parse({{"clients", {{{"client_id", "abc"}, {"redirect_uris", {"x"}}}}}}), Error);
    OidcNode n;
    const auto id = n.client_id("shop");
    EXPECT_THROW(ClientRegistry::parse({{"clients", {{{"client_id", id}, {"redirect_uris", json::array()}}}}}), Error);
    const auto r = ClientRegistry::parse({{"clients", {{{"client_id", id}, {"redirect_uris", {"https://a/cb"}}}}}});
    ASSERT_TRUE(r.find(id));
    EXPECT_EQ(ClientRegistry::parse(r.to_json()).to_json(), r.to_json());
}

TEST(Authorize, AutoApproveRedirectsWithTicketCode) {
    OidcNode n;
    const auto r = n.service->authorize(n.authorize_query("shop", "openid email"));
    ASSERT_EQ(r.status, 302);
    EXPECT_TRUE(r.location.starts_with(OidcNode::redirect_uri("shop") + "?"));
    const auto q = OidcNode::query_of(r.location);
    EXPECT_EQ(q.at("state"), "st-1");
    const auto [ticket, wrapped] = decode_code(q.at("code"));
    EXPECT_EQ(ticket.names, std::vector<std::string>{"email"});
    EXPECT_EQ(ticket.rp, n.dir->identity("shop").id());
    EXPECT_FALSE(wrapped.empty());
    EXPECT_EQ(n.dir->identity("alice").tickets.size(), 1u);
}

TEST(Authorize, RejectsUnknownClientAndRedirect) {
    OidcNode n;
    auto q = n.authorize_query("shop", "email");
    q["client_id"] = n.client_id("alice");
    EXPECT_EQ(n.service->authorize(q).status, 400);
    EXPECT_EQ(n.service->authorize(q).body["error"], "invalid_client");

    q = n.authorize_query("shop", "email");
    q["redirect_uri"] = OidcNode::redirect_uri("news");
    const auto r = n.service->authorize(q);
    EXPECT_EQ(r.status, 400);
    EXPECT_TRUE(r.location.empty());
}

TEST(Authorize, ScopeAndResponseTypeErrorsRedirect) {
    OidcNode n;
    auto r = n.service->authorize(n.authorize_query("shop", "email shoe_size"));
    ASSERT_EQ(r.status, 302);
    EXPECT_EQ(OidcNode::query_of(r.location).at("error"), "invalid_scope");
    EXPECT_EQ(OidcNode::query_of(r.location).at("state"), "st-1");

    r = n.service->authorize(n.authorize_query("shop", "openid"));
    EXPECT_EQ(OidcNode::query_of(r.location).at("error"), "invalid_scope");

    auto q = n.authorize_query("shop", "email");
    q["response_type"] = "token";
    EXPECT_EQ(OidcNode::query_of(n.service->authorize(q).location).at("error"), "unsupported_response_type");
    EXPECT_TRUE(n.dir->identity("alice").tickets.empty());
}

TEST(Consent, DenyYieldsAccessDeniedWithoutTicket) {
    OidcNode n(false);
    const auto r = n.service->authorize(n.authorize_query("shop", "email"));
    ASSERT_EQ(r.status, 200);
    const auto id = r.body.at("pending").get<std::string>();
    const auto pending = n.service->consent_pending().body.at("pending");
    ASSERT_EQ(pending.size(), 1u);
    EXPECT_EQ(pending[0]["id"], id);
    EXPECT_EQ(pending[0]["names"], json({"email"}));
    EXPECT_EQ(pending[0]["client_name"], "shop");

    const auto d = n.service->consent_decision({{"id", id}, {"approve", false}});
    ASSERT_EQ(d.status, 200);
    const auto q = OidcNode::query_of(d.body.at("redirect"));
    EXPECT_EQ(q.at("error"), "access_denied");
    EXPECT_EQ(q.at("state"), "st-1");
    EXPECT_TRUE(n.dir->identity("alice").tickets.empty());
    EXPECT_TRUE(n.service->consent_pending().body.at("pending").empty());
}

TEST(Consent, ApproveSubset) {
    OidcNode n(false);
    const auto id = n.service->authorize(n.authorize_query("shop", "email phone")).body.at("pending").get<std::string>();
    EXPECT_EQ(n.service->consent_decision({{"id", id}, {"approve", true}, {"names", {"email", "name"}}}).status, 400);
    EXPECT_EQ(n.service->consent_decision({{"id", id}, {"approve", true}, {"names", json::array()}}).status, 400);
    const auto d = n.service->consent_decision({{"id", id}, {"approve", true}, {"names", {"email"}}});
    ASSERT_EQ(d.status, 200);
    const auto [ticket, _] = decode_code(OidcNode::query_of(d.body.at("redirect")).at("code"));
    EXPECT_EQ(ticket.names, std::vector<std::string>{"email"});
}

TEST(Consent, UnknownOrExpiredRequest) {
    OidcNode n(false);
    EXPECT_EQ(n.service->consent_decision({{"id", "nope"}, {"approve", true}}).status, 404);
    EXPECT_EQ(n.service->consent_decision({{"approve", true}}).status, 400);
    const auto id = n.service->authorize(n.authorize_query("shop", "email")).body.at("pending").get<std::string>();
    advance(n, 600'001);
    EXPECT_EQ(n.service->consent_decision({{"id", id}, {"approve", true}}).status, 410);
}

TEST(Token, HappyPathIssuesSignedToken) {
    OidcNode n;
    const auto code = n.code_for("shop", "openid email");
    const auto r = n.service->token(n.token_form("shop", code));
    ASSERT_EQ(r.status, 200) << r.body.dump();
    EXPECT_EQ(r.body["token_type"], "Bearer");
    const auto claims = verify_id_token(r.body.at("id_token").get<std::string>());
    EXPECT_EQ(claims["email"], "alice@doe.com");
    EXPECT_EQ(claims["iss"], n.client_id("alice"));
    EXPECT_EQ(claims["aud"], n.client_id("shop"));
    EXPECT_EQ(claims["nonce"], "n-1");
    EXPECT_FALSE(claims.contains("name"));
}

TEST(Token, AnyClaimMutationBreaksSignature) {
    OidcNode n;
    const auto token = n.service->token(n.token_form("shop", n.code_for("shop", "email"))).body.at("id_token").get<std::string>();
    const auto first = token.find('.'), second = token.rfind('.');
    auto payload = json::parse(to_string(encoding::unbase64url(token.substr(first + 1, second - first - 1))));
    payload["email"] = "mallory@evil.com";
    const auto forged =
        token.substr(0, first + 1) + encoding::base64url(as_bytes(payload.dump())) + token.substr(second);
    EXPECT_THROW(verify_id_token(forged), Error);

    for (std::size_t i = first + 1; i < second; i += 7) {
        auto flipped = token;
        flipped[i] = flipped[i] == 'A' ? 'B' : 'A';
        bool rejected = false;
        try {
            rejected = verify_id_token(flipped) != verify_id_token(token);
        } catch (const Error&) {
            rejected = true;
        }
        EXPECT_TRUE(rejected) << i;
    }
}

TEST(Token, ReplayedCodeIsInvalidGrant) {
    OidcNode n;
    const auto code = n.code_for("shop", "email");
    EXPECT_EQ(n.service->token(n.token_form("shop", code)).status, 200);
    const auto again = n.service->token(n.token_form("shop", code));
    EXPECT_EQ(again.status, 400);
    EXPECT_EQ(again.body["error"], "invalid_grant");
}

TEST(Token, ConcurrentReplaysYieldOneSuccess) {
    OidcNode n;
    const auto code = n.code_for("shop", "email");
    const auto form = n.token_form("shop", code);
    std::atomic<int> ok{0}, invalid_grant{0};
    std::vector<std::thread> threads;
    for (int i = 0; i < 10; ++i)
        threads.emplace_back([&] {
            const auto r = n.service->token(form);
            if (r.status == 200) ++ok;
            else if (r.body.value("error", "") == "invalid_grant") ++invalid_grant;
        });
    for (auto& t : threads) t.join();
    EXPECT_EQ(ok, 1);
    EXPECT_EQ(invalid_grant, 9);
}

TEST(Token, ClientProofMustMatchAudience) {
    OidcNode n;
    const auto code = n.code_for("shop", "email");
    auto form = n.token_form("news", code);  // signed by the wrong party
    EXPECT_EQ(n.service->token(form).status, 401);
    form = n.token_form("shop", code);
    form["client_assertion"] = make_client_assertion(n.dir->identity("shop").keys, "other-code", 0);
    EXPECT_EQ(n.service->token(form).status, 401);
    form["client_assertion"] = "garbage";
    EXPECT_EQ(n.service->token(form).status, 401);
    // Failed proofs do not burn the code.
    EXPECT_EQ(n.service->token(n.token_form("shop", code)).status, 200);
}

TEST(Token, ExpiredUnknownAndWrongGrant) {
    OidcNode n;
    const auto code = n.code_for("shop", "email");
    auto form = n.token_form("shop", code);
    form["grant_type"] = "password";
    EXPECT_EQ(n.service->token(form).body["error"], "unsupported_grant_type");
    EXPECT_EQ(n.service->token(n.token_form("shop", "nope")).body["error"], "invalid_grant");
    advance(n, 600'001);
    EXPECT_EQ(n.service->token(n.token_form("shop", code)).body["error"], "invalid_grant");
}

TEST(Token, RevocationMidFlowIsInvalidGrant) {
    OidcNode n;
    const auto code = n.code_for("shop", "email");
    const auto [ticket, _] = decode_code(code);
    EXPECT_EQ(n.service->revoke_ticket(ticket.rnd).status, 200);
    advance(n, support::kNodeTtl + 1);
    const auto r = n.service->token(n.token_form("shop", code));
    EXPECT_EQ(r.status, 400);
    EXPECT_EQ(r.body["error"], "invalid_grant");
}

TEST(Userinfo, ReflectsUpdateAfterExpiryWithoutConsent) {
    OidcNode n;
    const auto token = n.service->token(n.token_form("shop", n.code_for("shop", "email")));
    auto info = n.service->userinfo(bearer(token));
    ASSERT_EQ(info.status, 200);
    EXPECT_EQ(info.body["email"], "alice@doe.com");
    EXPECT_EQ(info.body["sub"], n.client_id("alice"));

    EXPECT_EQ(n.service->update_attribute("email", {{"value", "alice@new.org"}}).status, 200);
    EXPECT_EQ(n.service->userinfo(bearer(token)).body["email"], "alice@doe.com");  // cached
    advance(n, support::kNodeTtl + 1);
    EXPECT_EQ(n.service->userinfo(bearer(token)).body["email"], "alice@new.org");
    EXPECT_EQ(n.dir->identity("alice").tickets.size(), 1u);
}

TEST(Userinfo, RevokedAfterExpiryIs401) {
    OidcNode n;
    const auto code = n.code_for("shop", "email");
    const auto token = n.service->token(n.token_form("shop", code));
    EXPECT_EQ(n.service->revoke_ticket(decode_code(code).first.rnd).status, 200);
    advance(n, support::kNodeTtl + 1);
    EXPECT_EQ(n.service->userinfo(bearer(token)).status, 401);
    EXPECT_EQ(n.service->userinfo("Bearer unknown").status, 401);
    EXPECT_EQ(n.service->userinfo("").status, 401);
}

TEST(Userinfo, SeparateTokensAreIsolated) {
    OidcNode n;
    const auto shop = n.service->token(n.token_form("shop", n.code_for("shop", "email")));
    const auto news = n.service->token(n.token_form("news", n.code_for("news", "name")));
    const auto a = n.service->userinfo(bearer(shop)).body;
    const auto b = n.service->userinfo(bearer(news)).body;
    EXPECT_EQ(a["email"], "alice@doe.com");
    EXPECT_FALSE(a.contains("name"));
    EXPECT_EQ(b["name"], "Alice Doe");
    EXPECT_FALSE(b.contains("email"));
}

TEST(Bridge, AttributeLifecycle) {
    OidcNode n;
    EXPECT_EQ(n.service->list_attributes().body["attributes"].size(), 3u);
    auto r = n.service->store_attribute({{"name", "city"}, {"value", "Berlin"}});
    EXPECT_EQ(r.status, 201);
    EXPECT_EQ(r.body["version"], 0);
    EXPECT_EQ(n.service->store_attribute({{"name", ""}, {"value", "x"}}).status, 400);
    EXPECT_EQ(n.service->store_attribute({{"name", "x"}}).status, 400);
    EXPECT_EQ(n.service->update_attribute("nope", {{"value", "x"}}).status, 404);
    r = n.service->delete_attribute("city");
    EXPECT_EQ(r.status, 200);
    EXPECT_EQ(r.body["version"], 1);
    EXPECT_EQ(r.body["deleted"], true);
    EXPECT_EQ(n.service->delete_attribute("city").status, 404);
}

TEST(Bridge, TicketsAndRevocation) {
    OidcNode n;
    const auto code = n.code_for("shop", "email name");
    const auto tickets = n.service->list_tickets().body["tickets"];
    ASSERT_EQ(tickets.size(), 1u);
    EXPECT_EQ(tickets[0]["rp_name"], "shop");
    EXPECT_EQ(tickets[0]["names"], json({"email", "name"}));
    const auto rnd = tickets[0]["rnd"].get<std::string>();
    EXPECT_EQ(n.service->revoke_ticket("nope").status, 404);
    const auto r = n.service->revoke_ticket(rnd);
    EXPECT_EQ(r.status, 200);
    EXPECT_EQ(r.body["bumped"]["email"], 1);
    EXPECT_EQ(n.service->revoke_ticket(rnd).status, 409);
    EXPECT_TRUE(n.service->list_tickets().body["tickets"].empty());
}

TEST(Bridge, NeverExposesPrivateKeys) {
    OidcNode n;
    n.code_for("shop", "email");
    std::string all;
    for (const auto& r : {n.service->identity(), n.service->list_attributes(), n.service->list_tickets(),
                          n.service->consent_pending()})
        all += r.body.dump();
    for (const auto* alias : {"alice", "shop", "news"}) {
        const auto& s = n.dir->identity(alias);
        for (const auto& secret : {encoding::hex(s.keys.seed().view()), encoding::base32(s.keys.seed().view()),
                                   encoding::base64url(s.keys.seed().view()), encoding::hex(s.master.secret.view()),
                                   encoding::base64url(s.master.secret.view())})
            EXPECT_EQ(all.find(secret), std::string::npos);
    }
}

TEST(SimControl, DisabledByDefault) {
    OidcNode n;
    auto c = n.dir->config();
    c.sim_control = false;
    n.dir->set_config(c);
    EXPECT_EQ(n.service->advance({{"ms", 5}}).status, 404);
    c.sim_control = true;
    n.dir->set_config(c);
    EXPECT_EQ(n.service->advance({{"ms", -5}}).status, 400);
}

TEST(EndToEnd, NoPlaintextInNameSystem) {
    OidcNode n;
    const auto shop = n.service->token(n.token_form("shop", n.code_for("shop", "email name phone")));
    n.service->userinfo(bearer(shop));
    n.service->update_attribute("email", {{"value", "alice@new.org"}});
    n.service->delete_attribute("phone");
    const auto news = n.service->token(n.token_form("news", n.code_for("news", "email")));
    advance(n, support::kNodeTtl + 1);
    n.service->userinfo(bearer(news));

    std::vector<std::string> needles{"alice@new.org"};
    for (const auto& [k, v] : n.attributes) {
        needles.push_back(k);
        needles.push_back(v);
    }
    EXPECT_EQ(support::plaintext_leaks(n.dir->names().network(), needles), std::vector<std::string>{});
}

TEST(Http, FlowOverTheWire) {
    OidcNode n;
    HttpServer server(*n.service);
    const int port = server.bind("127.0.0.1", 0);
    ASSERT_GT(port, 0);
    std::thread t([&] { server.run(); });
    server.wait_until_ready();

    httplib::Client cli("127.0.0.1", port);
    httplib::Params q;
    for (const auto& [k, v] : n.authorize_query("shop", "openid email")) q.emplace(k, v);
    auto res = cli.Get(httplib::append_query_params("/authorize", q));
    ASSERT_TRUE(res);
    ASSERT_EQ(res->status, 302);
    const auto code = OidcNode::query_of(res->get_header_value("Location")).at("code");

    httplib::Params form;
    for (const auto& [k, v] : n.token_form("shop", code)) form.emplace(k, v);
    res = cli.Post("/token", form);
    ASSERT_TRUE(res);
    ASSERT_EQ(res->status, 200) << res->body;
    const auto token = json::parse(res->body);
    EXPECT_EQ(verify_id_token(token["id_token"].get<std::string>())["email"], "alice@doe.com");

    res = cli.Get("/userinfo", {{"Authorization", "Bearer " + token["access_token"].get<std::string>()}});
    ASSERT_TRUE(res);
    EXPECT_EQ(json::parse(res->body)["email"], "alice@doe.com");

    res = cli.Get("/userinfo");
    EXPECT_EQ(res->status, 401);
    res = cli.Post("/consent/decision", "{not json", "application/json");
    EXPECT_EQ(res->status, 400);
    res = cli.Put("/api/attributes/email", R"({"value":"a@b.c"})", "application/json");
    EXPECT_EQ(res->status, 200);
    res = cli.Delete("/api/tickets/unknown");
    EXPECT_EQ(res->status, 404);
    res = cli.Post("/sim/advance", R"({"ms":10})", "application/json");
    EXPECT_EQ(res->status, 200);

    server.stop();
    t.join();
}
