#include <doctest.h>

#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <random>
#include <thread>

#include "loadcast/error.hpp"
#include "loadcast/registry.hpp"

using namespace loadcast;
namespace fs = std::filesystem;

namespace {

ModelRecord make_record(const std::string& point, std::uint64_t seed, int hidden = 4) {
    ModelRecord r;
    r.point = PointId(point);
    r.created_at = 1546300800 + static_cast<Timestamp>(seed) * kHour;
    r.train_config.seed = seed;
    r.train_config.hidden_dim = hidden;
    r.split.boundary = 1572566400;
    for (std::size_t c = 0; c < kTableColumns; ++c) {
        r.scaler.mean[c] = 10.0 * static_cast<double>(c) + 0.1 * static_cast<double>(seed);
        r.scaler.stddev[c] = 1.0 + static_cast<double>(c);
    }
    r.model = lstm::init_parameters(seed, 6, hidden, 18);
    r.metrics.pairs = 100;
    r.metrics.mse_original = 1000.0 + static_cast<double>(seed);
    r.metrics.step_mse_original.assign(18, 1.0);
    r.metrics.step_mse_scaled.assign(18, 0.5);
    return r;
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("loadcast_reg_" + name)) {
        fs::remove_all(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("record encoding round-trips bitwise and detects corruption") {
    const ModelRecord r = make_record("campus-main-kw", 3);
    const auto bytes = encode_record(r);
    const ModelRecord back = decode_record(bytes);
    CHECK(encode_record(back) == bytes);
    CHECK(back.model.lstm[lstm::Gate::Candidate].recurrent == r.model.lstm[lstm::Gate::Candidate].recurrent);
    CHECK(back.scaler == r.scaler);
    CHECK(back.metrics == r.metrics);
    CHECK(payload_checksum(back) == payload_checksum(r));

    SUBCASE("every single-byte flip is caught") {
        for (std::size_t i = 0; i < bytes.size(); i += 7) {
            auto bad = bytes;
            bad[i] ^= std::byte{0x01};
            CHECK_THROWS_AS(decode_record(bad), IntegrityError);
        }
    }
    SUBCASE("every truncation is caught") {
        for (std::size_t len = 0; len < bytes.size(); len += 13)
            CHECK_THROWS_AS(decode_record(std::span(bytes).first(len)), IntegrityError);
    }
}

TEST_CASE("registry versions are monotonic and isolated per point") {
    TempDir dir("versions");
    Registry reg(dir.path);
    CHECK(reg.put(make_record("A", 1)) == 1);
    CHECK(reg.put(make_record("A", 2)) == 2);
    CHECK(reg.put(make_record("A", 3)) == 3);
    CHECK(reg.put(make_record("B", 9)) == 1);

    const ModelRecord latest_a = reg.get_latest(PointId("A"));
    CHECK(latest_a.version == 3);
    CHECK(latest_a.train_config.seed == 3);

    const auto before_b = encode_record(reg.get_latest(PointId("B")));
    reg.put(make_record("A", 4));
    CHECK(encode_record(reg.get_latest(PointId("B"))) == before_b);

    auto expected = make_record("A", 2);
    expected.version = 2;
    CHECK(encode_record(reg.get_version(PointId("A"), 2)) == encode_record(expected));

    const auto listing = reg.list(PointId("A"));
    REQUIRE(listing.size() == 4);
    for (std::size_t i = 0; i < listing.size(); ++i) CHECK(listing[i].version == i + 1);
    CHECK(listing[1].headline_mse == 1002.0);

    CHECK(reg.points() == std::vector<PointId>{PointId("A"), PointId("B")});
    std::ifstream latest(reg.point_dir(PointId("A")) / "LATEST");
    int pointer = 0;
    latest >> pointer;
    CHECK(pointer == 4);
}

TEST_CASE("missing data is not-found, corrupt data is an integrity error") {
    TempDir dir("errors");
    Registry reg(dir.path);
    CHECK_THROWS_AS(reg.get_latest(PointId("nope")), NotFoundError);
    CHECK_THROWS_AS(reg.list(PointId("nope")), NotFoundError);
    reg.put(make_record("A", 1));
    CHECK_THROWS_AS(reg.get_version(PointId("A"), 7), NotFoundError);

    const fs::path file = reg.point_dir(PointId("A")) / "v000001.lcm";
    std::fstream f(file, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(200);
    char c = 0;
    f.seekg(200);
    f.get(c);
    f.seekp(200);
    f.put(static_cast<char>(c ^ 0x40));
    f.close();
    CHECK_THROWS_AS(reg.get_latest(PointId("A")), IntegrityError);
}

TEST_CASE("point ids with path characters stay inside the root") {
    TempDir dir("sanitize");
    Registry reg(dir.path);
    reg.put(make_record("../escape/attempt", 1));
    CHECK(reg.get_latest(PointId("../escape/attempt")).point.str() == "../escape/attempt");
    CHECK_FALSE(fs::exists(dir.path.parent_path() / "escape"));
    CHECK(reg.points().front().str() == "../escape/attempt");
}

TEST_CASE("storage failure is reported and leaves nothing behind") {
    TempDir dir("storage");
    fs::create_directories(dir.path.parent_path());
    std::ofstream(dir.path) << "not a directory";
    Registry reg(dir.path);
    CHECK_THROWS_AS(reg.put(make_record("A", 1)), StorageError);
    fs::remove(dir.path);
}

TEST_CASE("concurrent puts") {
    TempDir dir("concurrent");
    Registry reg(dir.path);

    SUBCASE("different points never interfere") {
        std::vector<std::thread> threads;
        for (int t = 0; t < 8; ++t)
            threads.emplace_back([&, t] {
                for (int k = 0; k < 5; ++k) reg.put(make_record("P" + std::to_string(t), static_cast<std::uint64_t>(k)));
            });
        for (auto& th : threads) th.join();
        for (int t = 0; t < 8; ++t) {
            const auto listing = reg.list(PointId("P" + std::to_string(t)));
            CHECK(listing.size() == 5);
            for (const auto& info : listing) CHECK_NOTHROW(reg.get_version(PointId("P" + std::to_string(t)), info.version));
        }
    }
    SUBCASE("the same point serializes to contiguous versions") {
        std::vector<std::thread> threads;
        for (int t = 0; t < 8; ++t)
            threads.emplace_back([&, t] {
                for (int k = 0; k < 4; ++k) reg.put(make_record("shared", static_cast<std::uint64_t>(t * 10 + k)));
            });
        for (auto& th : threads) th.join();
        const auto listing = reg.list(PointId("shared"));
        REQUIRE(listing.size() == 32);
        for (std::size_t i = 0; i < listing.size(); ++i) CHECK(listing[i].version == i + 1);
    }
}

TEST_CASE("a killed writer never leaves a torn record") {
    TempDir dir("kill");
    Registry reg(dir.path);
    reg.put(make_record("A", 0, 64));
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 5; ++trial) {
        const pid_t child = fork();
        REQUIRE(child >= 0);
        if (child == 0) {
            for (std::uint64_t k = 1;; ++k) reg.put(make_record("A", k, 64));
        }
        std::this_thread::sleep_for(std::chrono::microseconds(2000 + rng() % 20000));
        kill(child, SIGKILL);
        waitpid(child, nullptr, 0);

        const auto listing = reg.list(PointId("A"));
        for (std::size_t i = 0; i < listing.size(); ++i) CHECK(listing[i].version == i + 1);
        CHECK_NOTHROW(reg.get_latest(PointId("A")));
        const auto next = reg.put(make_record("A", 999, 64));
        CHECK(next == listing.size() + 1);
    }
}

TEST_CASE("prune keeps the newest versions and clears temp files") {
    TempDir dir("prune");
    Registry reg(dir.path);
    for (std::uint64_t k = 0; k < 5; ++k) reg.put(make_record("A", k));
    std::ofstream(reg.point_dir(PointId("A")) / ".tmp-v000009.lcm-1-0") << "junk";
    CHECK(reg.prune(PointId("A"), 2) == 3);
    const auto listing = reg.list(PointId("A"));
    REQUIRE(listing.size() == 2);
    CHECK(listing[0].version == 4);
    CHECK(reg.put(make_record("A", 7)) == 6);
    CHECK_FALSE(fs::exists(reg.point_dir(PointId("A")) / ".tmp-v000009.lcm-1-0"));
    CHECK_THROWS_AS(reg.prune(PointId("nope"), 1), NotFoundError);
}
