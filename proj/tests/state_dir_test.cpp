#include <gtest/gtest.h>

#include <sys/stat.h>

#include <fstream>

#include "reclaim/common/encoding.hpp"
#include "reclaim/idp/state_dir.hpp"
#include "support/temp_dir.hpp"

using namespace reclaim;
using namespace reclaim::idp;
namespace fs = std::filesystem;

namespace {

using support::TempDir;

template <typename F>
std::optional<Errc> code_of(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    return std::nullopt;
}

unsigned mode_of(const fs::path& p) {
    struct stat st {};
    ::stat(p.c_str(), &st);
    return st.st_mode & 0777;
}

void seeded_config(const fs::path& root, std::uint64_t seed) {
    auto dir = StateDir::open(root);
    auto c = dir->config();
    c.entropy_seed = seed;
    c.network_size = 20;
    c.ttl_ms = 60'000;
    dir->set_config(c);
}

}  // namespace

TEST(ServiceConfig, ParseAndRender) {
    const auto c = ServiceConfig::parse(
        "# comment\nlisten = \"0.0.0.0:9000\"\nauto_approve = true\nttl_ms = 5000  # trailing\n"
        "entropy_seed = 7\ntopology = random-regular\n\n");
    EXPECT_EQ(c.listen, "0.0.0.0:9000");
    EXPECT_TRUE(c.auto_approve);
    EXPECT_EQ(c.ttl_ms, 5000);
    EXPECT_EQ(c.entropy_seed, 7u);
    EXPECT_EQ(c.topology, namesys::Topology::RandomRegular);
    const auto again = ServiceConfig::parse(c.render());
    EXPECT_EQ(again.render(), c.render());
}

TEST(ServiceConfig, RejectsBadLines) {
    EXPECT_EQ(code_of([] { ServiceConfig::parse("listen\n"); }), Errc::ParseError);
    EXPECT_EQ(code_of([] { ServiceConfig::parse("colour = blue\n"); }), Errc::ParseError);
    EXPECT_EQ(code_of([] { ServiceConfig::parse("auto_approve = yes\n"); }), Errc::ParseError);
    EXPECT_EQ(code_of([] { ServiceConfig::parse("ttl_ms = -1\n"); }), Errc::ParseError);
    EXPECT_EQ(code_of([] { ServiceConfig::parse("ttl_ms = 0\n"); }), Errc::ParseError);
}

TEST(StateDir, LayoutAndKeyFilePermissions) {
    TempDir tmp;
    auto dir = StateDir::open(tmp.path);
    dir->create_identity("alice");
    dir->commit();
    EXPECT_TRUE(fs::exists(tmp.path / "service.conf"));
    EXPECT_TRUE(fs::exists(tmp.path / "state.log"));
    EXPECT_TRUE(fs::exists(tmp.path / "network.json"));
    EXPECT_EQ(mode_of(tmp.path / "keys"), 0700u);
    EXPECT_EQ(mode_of(tmp.path / "keys" / "alice.json"), 0600u);
}

TEST(StateDir, SecondWriterIsLockedOut) {
    TempDir tmp;
    auto dir = StateDir::open(tmp.path);
    EXPECT_EQ(code_of([&] { StateDir::open(tmp.path); }), Errc::Locked);
    dir.reset();
    EXPECT_NO_THROW(StateDir::open(tmp.path));
}

TEST(StateDir, OpenWithoutCreateNeedsExistingDirectory) {
    TempDir tmp;
    EXPECT_EQ(code_of([&] { StateDir::open(tmp.path, false); }), Errc::Io);
}

TEST(StateDir, AliasRules) {
    TempDir tmp;
    auto dir = StateDir::open(tmp.path);
    EXPECT_EQ(code_of([&] { dir->create_identity("Alice"); }), Errc::InvalidArgument);
    EXPECT_EQ(code_of([&] { dir->create_identity("../x"); }), Errc::InvalidArgument);
    dir->create_identity("alice");
    EXPECT_EQ(code_of([&] { dir->create_identity("alice"); }), Errc::InvalidArgument);
    EXPECT_EQ(code_of([&] { dir->identity("bob"); }), Errc::NotFound);
}

TEST(StateDir, ReloadReproducesStateAndBehaviour) {
    TempDir tmp;
    seeded_config(tmp.path, 3);
    nlohmann::json snapshot;
    Ticket ticket;
    {
        auto dir = StateDir::open(tmp.path);
        dir->create_identity("alice");
        dir->create_identity("shop");
        auto p = dir->provider("alice");
        p.store("email", to_bytes("alice@doe.com"));
        p.store("phone", to_bytes("555"));
        ticket = p.authorize(dir->identity("shop").id(), {"email", "phone"}).ticket;
        p.remove("phone");
        dir->commit();
        snapshot = dir->identity("alice").snapshot();
    }
    auto dir = StateDir::open(tmp.path);
    EXPECT_EQ(dir->identity("alice").snapshot(), snapshot);
    EXPECT_EQ(dir->alias_of(ticket.rp), "shop");

    // The reloaded provider continues where the old one stopped.
    auto p = dir->provider("alice");
    p.store("phone", to_bytes("777"));
    EXPECT_EQ(dir->identity("alice").live("phone")->version, 1u);
    dir->names().advance(60'001);
    const auto r = retrieve(dir->names(), dir->identity("shop").keys, ticket);
    EXPECT_EQ(to_string(*r.attributes.at(0).value), "alice@doe.com");
    EXPECT_FALSE(r.attributes.at(1).value);
}

TEST(StateDir, CompactionKeepsState) {
    TempDir tmp;
    nlohmann::json snapshot;
    {
        auto dir = StateDir::open(tmp.path);
        dir->compact_after = 3;
        dir->create_identity("alice");
        auto p = dir->provider("alice");
        for (int i = 0; i < 5; ++i) p.store("a" + std::to_string(i), to_bytes("v"));
        dir->commit();
        EXPECT_EQ(dir->pending_events(), 0u);
        p.remove("a1");  // lands in the fresh log on top of the snapshot
        dir->commit();
        snapshot = dir->identity("alice").snapshot();
    }
    EXPECT_TRUE(fs::exists(tmp.path / "snapshot.json"));
    EXPECT_EQ(StateDir::open(tmp.path)->identity("alice").snapshot(), snapshot);
}

TEST(StateDir, CrashBetweenSnapshotAndTruncateIsHarmless) {
    TempDir tmp;
    nlohmann::json snapshot;
    std::string log;
    {
        auto dir = StateDir::open(tmp.path);
        dir->create_identity("alice");
        auto p = dir->provider("alice");
        p.store("email", to_bytes("x"));
        p.authorize(dir->identity("alice").id(), {"email"});
        log = read_file(tmp.path / "state.log");
        dir->compact();
        snapshot = dir->identity("alice").snapshot();
    }
    write_file_atomic(tmp.path / "state.log", log);  // old log survives next to the new snapshot
    const auto dir = StateDir::open(tmp.path);
    EXPECT_EQ(dir->identity("alice").snapshot(), snapshot);
    EXPECT_EQ(dir->identity("alice").tickets.size(), 1u);
}

TEST(StateDir, TornFinalLineIsDropped) {
    TempDir tmp;
    nlohmann::json snapshot;
    {
        auto dir = StateDir::open(tmp.path);
        dir->create_identity("alice");
        dir->provider("alice").store("email", to_bytes("x"));
        snapshot = dir->identity("alice").snapshot();
    }
    {
        std::ofstream out(tmp.path / "state.log", std::ios::app);
        out << R"({"op":"store","name":"ema)";
    }
    {
        auto dir = StateDir::open(tmp.path);
        EXPECT_EQ(dir->identity("alice").snapshot(), snapshot);
        dir->provider("alice").store("name", to_bytes("A"));
    }
    EXPECT_TRUE(StateDir::open(tmp.path)->identity("alice").live("name"));
}

TEST(StateDir, SeededDirectoriesReplayIdentically) {
    auto run = [](const fs::path& root) {
        seeded_config(root, 11);
        std::string out;
        for (const auto* alias : {"alice", "shop"}) {
            auto dir = StateDir::open(root);
            out += encoding::base32(dir->create_identity(alias).id().view()) + "\n";
            dir->commit();
        }
        auto dir = StateDir::open(root);
        dir->provider("alice").store("email", to_bytes("a@b"));
        out += dir->provider("alice").authorize(dir->identity("shop").id(), {"email"}).ticket.encode();
        return out;
    };
    TempDir a, b;
    const auto first = run(a.path);
    EXPECT_EQ(first, run(b.path));
    EXPECT_NE(first.substr(0, 52), first.substr(53, 52));  // two identities, two keys
}
