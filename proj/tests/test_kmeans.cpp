#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <random>
#include <set>

#include "blockivf/dataset.hpp"
#include "blockivf/kmeans.hpp"

using namespace blockivf;

TEST_CASE("four separable corners get one centroid each") {
    const std::vector<float> pts = {0, 0, 0, 10, 10, 0, 10, 10};
    auto res = kmeans(pts, 4, 2, 4, 25, 1);
    std::set<std::uint32_t> clusters(res.assignment.begin(), res.assignment.end());
    CHECK(clusters.size() == 4);
    // every centroid coincides with one of the points
    for (std::size_t c = 0; c < 4; ++c) {
        bool matched = false;
        for (std::size_t p = 0; p < 4; ++p) {
            if (res.centroids[c * 2] == pts[p * 2] && res.centroids[c * 2 + 1] == pts[p * 2 + 1])
                matched = true;
        }
        CHECK(matched);
    }
}

TEST_CASE("same seed gives byte-identical centroids") {
    auto ds = synthetic_dataset(1000, 16, 8, 99);
    auto a = kmeans(ds.all(), ds.size(), 16, 20, 25, 1234);
    auto b = kmeans(ds.all(), ds.size(), 16, 20, 25, 1234);
    REQUIRE(a.centroids.size() == b.centroids.size());
    CHECK(std::memcmp(a.centroids.data(), b.centroids.data(),
                      a.centroids.size() * sizeof(float)) == 0);
    CHECK(a.assignment == b.assignment);

    auto c = kmeans(ds.all(), ds.size(), 16, 20, 25, 4321);
    CHECK(std::memcmp(a.centroids.data(), c.centroids.data(),
                      a.centroids.size() * sizeof(float)) != 0);
}

TEST_CASE("k=1 degenerates to the mean") {
    const std::vector<float> pts = {1, 2, 3, 4, 5, 6};
    auto res = kmeans(pts, 3, 2, 1, 25, 7);
    CHECK(res.centroids[0] == doctest::Approx(3.0f));
    CHECK(res.centroids[1] == doctest::Approx(4.0f));
    for (auto a : res.assignment) CHECK(a == 0);
}

TEST_CASE("no cluster is left empty") {
    // many duplicate points force collisions in seeding
    std::vector<float> pts;
    for (int i = 0; i < 50; ++i) {
        pts.push_back(0.0f);
        pts.push_back(0.0f);
    }
    for (int i = 0; i < 5; ++i) {
        pts.push_back(100.0f + i);
        pts.push_back(100.0f);
    }
    auto res = kmeans(pts, 55, 2, 8, 25, 3);
    std::vector<std::size_t> counts(8, 0);
    for (auto a : res.assignment) ++counts[a];
    // duplicates may legitimately collapse to one centroid, but clusters with
    // distinct points available must not stay empty forever
    std::size_t nonempty = 0;
    for (auto c : counts) nonempty += c > 0;
    CHECK(nonempty >= 6);
}

TEST_CASE("invalid arguments throw") {
    const std::vector<float> pts = {1, 2, 3, 4};
    CHECK_THROWS_AS(kmeans(pts, 2, 2, 3, 10, 1), std::invalid_argument);  // n < k
    CHECK_THROWS_AS(kmeans(pts, 2, 2, 0, 10, 1), std::invalid_argument);  // k = 0
    CHECK_THROWS_AS(kmeans(pts, 3, 2, 1, 10, 1), std::invalid_argument);  // bad extent
}
