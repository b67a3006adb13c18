#include "pct/voxelize.hpp"

#include "pct/errors.hpp"
#include "support/helpers.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

using namespace pct;

namespace {

PointCloud cloud_of(std::vector<std::array<double, 3>> pts) {
    PointCloud c;
    c.points = Tensor(int(pts.size()), 3);
    for (size_t i = 0; i < pts.size(); ++i)
        for (int k = 0; k < 3; ++k) c.points(int(i), k) = pts[i][size_t(k)];
    return c;
}

std::vector<std::array<double, 3>> sorted_rows(const Tensor& t) {
    std::vector<std::array<double, 3>> rows;
    for (int i = 0; i < t.rows; ++i) rows.push_back({t(i, 0), t(i, 1), t(i, 2)});
    std::sort(rows.begin(), rows.end());
    return rows;
}

} // namespace

TEST_CASE("partition assigns half-open membership") {
    VoxelSpec spec{1.0, 1.0, 10.0, {0.0, 0.0, 0.0}};
    VoxelizedCloud vc = partition(cloud_of({{0.5, 0.5, 5.0}}), spec);
    REQUIRE(vc.voxel_count() == 1);
    CHECK(vc.voxels.begin()->first == VoxelIndex{1, 1, 1});

    // Boundary point belongs to the upper cell.
    VoxelSpec unit{1.0, 1.0, 1.0, {0.0, 0.0, 0.0}};
    VoxelizedCloud vb = partition(cloud_of({{1.0, 0.0, 0.0}}), unit);
    CHECK(vb.voxels.begin()->first == VoxelIndex{2, 1, 1});
}

TEST_CASE("partition of empty cloud has no voxels") {
    VoxelSpec spec{1.0, 1.0, 10.0, {0.0, 0.0, 0.0}};
    PointCloud empty;
    empty.points = Tensor(0, 3);
    CHECK(partition(empty, spec).voxel_count() == 0);
}

TEST_CASE("partition handles negative coordinates with signed indices") {
    VoxelSpec spec{1.0, 1.0, 1.0, {0.0, 0.0, 0.0}};
    VoxelizedCloud vc = partition(cloud_of({{-0.5, -1.5, 0.5}}), spec);
    CHECK(vc.voxels.begin()->first == VoxelIndex{0, -1, 1});
}

TEST_CASE("partition is a set partition") {
    Rng rng(11);
    PointCloud c = test::random_cloud(rng, 500, -20.0, 20.0);
    VoxelSpec spec{1.0, 1.0, 10.0, default_origin(c, 1.0, 1.0, 10.0)};
    VoxelizedCloud vc = partition(c, spec);
    std::set<int64_t> seen;
    int64_t total = 0;
    for (const auto& [idx, cell] : vc.voxels) {
        total += cell.points.rows;
        for (int64_t id : cell.point_ids) CHECK(seen.insert(id).second);
        // Membership satisfies the half-open ranges.
        std::array<double, 3> corner = spec.corner(idx);
        std::array<double, 3> sz = spec.sizes();
        for (int i = 0; i < cell.points.rows; ++i)
            for (int k = 0; k < 3; ++k) {
                CHECK(cell.points(i, k) >= corner[size_t(k)]);
                CHECK(cell.points(i, k) < corner[size_t(k)] + sz[size_t(k)]);
            }
    }
    CHECK(total == c.size());
}

TEST_CASE("partition is covariant under grid translation") {
    Rng rng(12);
    PointCloud c = test::random_cloud(rng, 200, -5.0, 5.0);
    std::array<double, 3> shift{2.0, -3.0, 7.0};
    PointCloud shifted;
    shifted.points = c.points;
    for (int i = 0; i < shifted.points.rows; ++i)
        for (int k = 0; k < 3; ++k) shifted.points(i, k) += shift[size_t(k)];
    VoxelSpec spec{1.0, 1.0, 2.0, {0.0, 0.0, 0.0}};
    VoxelSpec spec_shifted{1.0, 1.0, 2.0, shift};
    VoxelizedCloud a = partition(c, spec);
    VoxelizedCloud b = partition(shifted, spec_shifted);
    REQUIRE(a.voxel_count() == b.voxel_count());
    auto ita = a.voxels.begin();
    auto itb = b.voxels.begin();
    for (; ita != a.voxels.end(); ++ita, ++itb) {
        CHECK(ita->first == itb->first);
        CHECK(ita->second.point_ids == itb->second.point_ids);
    }
}

TEST_CASE("to_local maps into the unit cube") {
    VoxelSpec spec{1.0, 1.0, 10.0, {0.0, 0.0, 0.0}};
    VoxelizedCloud vc = partition(cloud_of({{0.5, 0.5, 5.0}, {0.0, 0.0, 0.0}}), spec);
    LocalVoxel lv = to_local(vc, VoxelIndex{1, 1, 1});
    REQUIRE(lv.n == 2);
    CHECK(lv.local_points(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(lv.local_points(0, 2) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(lv.local_points(1, 0) == 0.0); // exact at the lower corner
    CHECK(lv.local_points(1, 1) == 0.0);
    CHECK(lv.local_points(1, 2) == 0.0);

    CHECK_THROWS_AS(to_local(vc, VoxelIndex{9, 9, 9}), DataError);
}

TEST_CASE("to_local/from_local round-trip") {
    Rng rng(13);
    PointCloud c = test::random_cloud(rng, 300, -10.0, 10.0);
    VoxelSpec spec{1.0, 1.0, 10.0, default_origin(c, 1.0, 1.0, 10.0)};
    VoxelizedCloud vc = partition(c, spec);
    for (const auto& [idx, cell] : vc.voxels) {
        LocalVoxel lv = to_local(vc, idx);
        for (int i = 0; i < lv.local_points.rows; ++i)
            for (int k = 0; k < 3; ++k) {
                CHECK(lv.local_points(i, k) >= 0.0);
                CHECK(lv.local_points(i, k) < 1.0);
            }
        Tensor back = from_local(spec, idx, lv.local_points);
        CHECK(test::max_abs_diff(back, cell.points) <= 1e-9);
    }
}

TEST_CASE("synthesis examples") {
    VoxelSpec spec{1.0, 1.0, 10.0, {0.0, 0.0, 0.0}};
    std::map<VoxelIndex, Tensor> recon;
    recon[VoxelIndex{2, 1, 1}] = Tensor::zeros(1, 3);
    PointCloud out = synthesis(recon, spec);
    REQUIRE(out.size() == 1);
    CHECK(out.points(0, 0) == 1.0);
    CHECK(out.points(0, 1) == 0.0);
    CHECK(out.points(0, 2) == 0.0);

    // Two voxels, lexicographic order: (1,5,1) precedes (2,1,1).
    recon[VoxelIndex{1, 5, 1}] = Tensor::full(1, 3, 0.5);
    PointCloud two = synthesis(recon, spec);
    REQUIRE(two.size() == 2);
    CHECK(two.points(0, 0) == doctest::Approx(0.5));  // from voxel (1,5,1)
    CHECK(two.points(0, 1) == doctest::Approx(4.5));
    CHECK(two.points(1, 0) == doctest::Approx(1.0));  // from voxel (2,1,1)
}

TEST_CASE("partition then identity-decode reproduces the cloud as a set") {
    Rng rng(14);
    PointCloud c = test::random_cloud(rng, 400, -8.0, 8.0);
    VoxelSpec spec{1.0, 1.0, 10.0, default_origin(c, 1.0, 1.0, 10.0)};
    VoxelizedCloud vc = partition(c, spec);
    std::map<VoxelIndex, Tensor> locals;
    for (const auto& [idx, cell] : vc.voxels) locals[idx] = to_local(vc, idx).local_points;
    PointCloud back = synthesis(locals, spec);
    REQUIRE(back.size() == c.size());
    auto a = sorted_rows(c.points);
    auto b = sorted_rows(back.points);
    for (size_t i = 0; i < a.size(); ++i)
        for (int k = 0; k < 3; ++k)
            CHECK(std::abs(a[i][size_t(k)] - b[i][size_t(k)]) <= 1e-9);
}

TEST_CASE("default_origin floors to the voxel size and ignores order") {
    PointCloud c = cloud_of({{3.7, -2.2, 14.0}, {1.1, 0.4, -3.0}});
    auto o = default_origin(c, 1.0, 1.0, 10.0);
    CHECK(o[0] == 1.0);
    CHECK(o[1] == -3.0);
    CHECK(o[2] == -10.0);
    PointCloud r = cloud_of({{1.1, 0.4, -3.0}, {3.7, -2.2, 14.0}});
    CHECK(default_origin(r, 1.0, 1.0, 10.0) == o);
}

TEST_CASE("partition rejects non-finite coordinates") {
    VoxelSpec spec{1.0, 1.0, 1.0, {0.0, 0.0, 0.0}};
    CHECK_THROWS_AS(partition(cloud_of({{std::nan(""), 0.0, 0.0}}), spec), DataError);
    VoxelSpec bad{0.0, 1.0, 1.0, {0.0, 0.0, 0.0}};
    CHECK_THROWS_AS(partition(cloud_of({{0.0, 0.0, 0.0}}), bad), ConfigError);
}
