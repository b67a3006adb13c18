#include "pct/pc_io.hpp"

#include "pct/binio.hpp"
#include "pct/errors.hpp"
#include "support/helpers.hpp"

#include <doctest.h>

#include <algorithm>
#include <bit>
#include <set>

using namespace pct;

namespace {

void append_f32le(std::vector<uint8_t>& out, float f) {
    uint32_t v = std::bit_cast<uint32_t>(f);
    for (int i = 0; i < 4; ++i) out.push_back(uint8_t(v >> (8 * i)));
}

std::vector<uint8_t> craft_records(const std::vector<std::array<float, 4>>& recs) {
    std::vector<uint8_t> bytes;
    for (const auto& r : recs)
        for (float f : r) append_f32le(bytes, f);
    return bytes;
}

} // namespace

TEST_CASE("load_kitti_bin parses crafted records in order") {
    test::TempDir dir("kitti");
    std::vector<uint8_t> bytes = craft_records(
        {{1.f, 2.f, 3.f, 0.5f}, {0.f, 0.f, 0.f, 0.f}, {-1.f, -2.f, -3.f, 1.f}});
    CHECK(bytes.size() == 48);
    binio::write_file(dir.file("a.bin"), bytes);

    PointCloud c = load_kitti_bin(dir.file("a.bin"));
    REQUIRE(c.size() == 3);
    CHECK(c.points(0, 0) == 1.0);
    CHECK(c.points(0, 1) == 2.0);
    CHECK(c.points(0, 2) == 3.0);
    CHECK(c.points(1, 0) == 0.0);
    CHECK(c.points(2, 0) == -1.0);
    CHECK(c.points(2, 2) == -3.0);
    REQUIRE(c.reflectance.has_value());
    CHECK((*c.reflectance)[0] == 0.5);
    CHECK((*c.reflectance)[2] == 1.0);
}

TEST_CASE("kitti load/save round-trip is byte-exact") {
    test::TempDir dir("kitti_rt");
    Rng rng(7);
    std::vector<std::array<float, 4>> recs;
    for (int i = 0; i < 257; ++i)
        recs.push_back({float(rng.uniform(-80, 80)), float(rng.uniform(-80, 80)),
                        float(rng.uniform(-3, 10)), float(rng.uniform())});
    std::vector<uint8_t> bytes = craft_records(recs);
    binio::write_file(dir.file("sweep.bin"), bytes);

    PointCloud c = load_kitti_bin(dir.file("sweep.bin"));
    save_kitti_bin(c, dir.file("back.bin"));
    CHECK(binio::read_file(dir.file("back.bin")) == bytes);
}

TEST_CASE("kitti edge cases") {
    test::TempDir dir("kitti_err");
    binio::write_file(dir.file("empty.bin"), {});
    CHECK(load_kitti_bin(dir.file("empty.bin")).size() == 0);

    binio::write_file(dir.file("odd.bin"), std::vector<uint8_t>(17, 0));
    CHECK_THROWS_WITH_AS(load_kitti_bin(dir.file("odd.bin")),
                         doctest::Contains("residual 1 bytes"), DataError);

    std::vector<uint8_t> nan_rec = craft_records({{1.f, 2.f, 3.f, 0.f}});
    std::vector<uint8_t> bad = craft_records({{0.f, 0.f, 0.f, 0.f}});
    append_f32le(bad, std::numeric_limits<float>::quiet_NaN());
    append_f32le(bad, 0.f);
    append_f32le(bad, 0.f);
    append_f32le(bad, 0.f);
    binio::write_file(dir.file("nan.bin"), bad);
    CHECK_THROWS_WITH_AS(load_kitti_bin(dir.file("nan.bin")), doctest::Contains("record 1"),
                         DataError);
}

TEST_CASE("xyz text format") {
    test::TempDir dir("xyz");
    {
        std::vector<uint8_t> text{'1', ' ', '2', ' ', '3', '\n'};
        binio::write_file(dir.file("one.xyz"), text);
        PointCloud c = load_xyz(dir.file("one.xyz"));
        REQUIRE(c.size() == 1);
        CHECK(c.points(0, 0) == 1.0);
        CHECK(c.points(0, 2) == 3.0);
    }
    {
        std::string text = "1 2\n";
        binio::write_file(dir.file("bad.xyz"), std::vector<uint8_t>(text.begin(), text.end()));
        CHECK_THROWS_WITH_AS(load_xyz(dir.file("bad.xyz")), doctest::Contains("line 1"),
                             DataError);
    }
    {
        Rng rng(3);
        PointCloud c = test::random_cloud(rng, 100, -50.0, 50.0);
        save_xyz(c, dir.file("rt.xyz"));
        PointCloud back = load_xyz(dir.file("rt.xyz"));
        REQUIRE(back.size() == 100);
        CHECK(test::max_abs_diff(c.points, back.points) <= 1e-9);
    }
}

TEST_CASE("split_dataset sizes and determinism") {
    std::vector<std::string> paths;
    for (int i = 0; i < 500; ++i) paths.push_back("sweep_" + std::to_string(i));
    DatasetSplit s = split_dataset(paths, 0.8, 42);
    CHECK(s.train_paths.size() == 400);
    CHECK(s.test_paths.size() == 100);

    DatasetSplit again = split_dataset(paths, 0.8, 42);
    CHECK(s.train_paths == again.train_paths);
    CHECK(s.test_paths == again.test_paths);

    // Partition property: union is the input, intersection empty.
    std::set<std::string> all(s.train_paths.begin(), s.train_paths.end());
    for (const auto& p : s.test_paths) CHECK(all.insert(p).second);
    CHECK(all.size() == paths.size());
}

TEST_CASE("split_dataset seeded shuffle oracle") {
    // Oracle: Fisher-Yates with the library RNG, run once and frozen.
    std::vector<std::string> paths{"a", "b", "c", "d", "e"};
    auto oracle = [&](uint64_t seed) {
        std::vector<std::string> v = paths;
        Rng rng(seed);
        for (size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[size_t(rng.uniform_int(i))]);
        return v;
    };
    for (uint64_t seed : {1ull, 2ull}) {
        DatasetSplit s = split_dataset(paths, 0.8, seed);
        std::vector<std::string> shuffled = oracle(seed);
        REQUIRE(s.train_paths.size() == 4);
        for (size_t i = 0; i < 4; ++i) CHECK(s.train_paths[i] == shuffled[i]);
        CHECK(s.test_paths[0] == shuffled[4]);
    }
    CHECK(split_dataset(paths, 0.8, 1).train_paths != split_dataset(paths, 0.8, 2).train_paths);
}

TEST_CASE("split_dataset errors") {
    CHECK_THROWS_AS(split_dataset({}, 0.5, 1), DataError);
    std::vector<std::string> paths{"a", "b"};
    CHECK_THROWS_AS(split_dataset(paths, 0.0, 1), ConfigError);
    CHECK_THROWS_AS(split_dataset(paths, 1.0, 1), ConfigError);
}
