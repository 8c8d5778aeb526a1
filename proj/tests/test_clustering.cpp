#include <algorithm>
#include <fstream>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>
#include <json.hpp>

#include "alts/clustering.hpp"
#include "alts/rng.hpp"
#include "oracles.hpp"

namespace {

alts::EmbeddingMatrix points_1d(std::initializer_list<float> xs) {
    alts::EmbeddingMatrix m;
    m.rows = xs.size();
    m.cols = 1;
    m.values.assign(xs.begin(), xs.end());
    return m;
}

}  // namespace

TEST(Clustering, KEqualsNGivesSingletons) {
    const auto points = testutil::random_points(6, 3, 5);
    const auto result = alts::agglomerative_cluster(points, 6, alts::Linkage::ward);
    EXPECT_EQ(result.labels, (std::vector<int>{0, 1, 2, 3, 4, 5}));
}

TEST(Clustering, KEqualsOneGivesOneCluster) {
    const auto points = testutil::random_points(9, 2, 6);
    const auto result = alts::agglomerative_cluster(points, 1, alts::Linkage::average);
    EXPECT_EQ(result.labels, std::vector<int>(9, 0));
}

TEST(Clustering, RecoversPlantedBlobsWithWard) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto blobs = testutil::make_blobs(3, 40, 4, 10.0, seed);
        const auto result =
            alts::agglomerative_cluster(blobs.points, 3, alts::Linkage::ward);
        EXPECT_EQ(testutil::adjusted_rand_index(result.labels, blobs.labels), 1.0)
            << "seed " << seed;
    }
}

TEST(Clustering, AllLinkagesSplitObviousGap) {
    const auto points = points_1d({0.0f, 1.0f, 10.0f});
    for (const alts::Linkage linkage :
         {alts::Linkage::ward, alts::Linkage::complete, alts::Linkage::average,
          alts::Linkage::single}) {
        const auto result = alts::agglomerative_cluster(points, 2, linkage);
        EXPECT_EQ(result.labels, (std::vector<int>{0, 0, 1})) << to_string(linkage);
    }
}

TEST(Clustering, SingleLinkageEqualsMstCutOracle) {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        alts::SplitMix64 rng(seed);
        const std::size_t n = 3 + rng.bounded(6);  // up to 8 points
        const std::size_t k = 1 + rng.bounded(n);
        const auto points = testutil::random_points(n, 2, seed * 7 + 1, 4.0f);
        const auto result =
            alts::agglomerative_cluster(points, k, alts::Linkage::single);
        const auto oracle = testutil::oracle_single_linkage_mst(points, k);
        EXPECT_TRUE(testutil::partitions_equal(result.labels, oracle))
            << "seed " << seed << " n " << n << " k " << k;
    }
}

TEST(Clustering, WardFirstMergeMatchesBruteForcePairScan) {
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
        const std::size_t n = 5 + seed % 6;
        const auto points = testutil::random_points(n, 3, seed + 100, 2.0f);

        // brute-force: ward increment for singletons is 0.5 * ||x - y||^2
        std::size_t best_a = 0, best_b = 1;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t a = 0; a < n; ++a) {
            for (std::size_t b = a + 1; b < n; ++b) {
                const double d = testutil::point_dist(points, a, b);
                const double increment = 0.5 * d * d;
                if (increment < best) {
                    best = increment;
                    best_a = a;
                    best_b = b;
                }
            }
        }

        const auto result =
            alts::agglomerative_cluster(points, n - 1, alts::Linkage::ward);
        EXPECT_EQ(result.labels[best_a], result.labels[best_b]) << "seed " << seed;
        // everything else stays a singleton
        std::vector<int> counts(n - 1, 0);
        for (const int lab : result.labels) {
            counts[lab]++;
        }
        EXPECT_EQ(*std::max_element(counts.begin(), counts.end()), 2);
    }
}

TEST(Clustering, ExactlyKNonemptyClusters) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        alts::SplitMix64 rng(seed + 40);
        const std::size_t n = 10 + rng.bounded(30);
        const std::size_t k = 1 + rng.bounded(n);
        const auto points = testutil::random_points(n, 3, seed + 41);
        for (const alts::Linkage linkage :
             {alts::Linkage::ward, alts::Linkage::complete, alts::Linkage::average,
              alts::Linkage::single}) {
            const auto result = alts::agglomerative_cluster(points, k, linkage);
            std::vector<int> counts(k, 0);
            for (const int lab : result.labels) {
                ASSERT_GE(lab, 0);
                ASSERT_LT(lab, static_cast<int>(k));
                counts[lab]++;
            }
            for (const int c : counts) {
                EXPECT_GT(c, 0);
            }
        }
    }
}

TEST(Clustering, PermutationInvariantUpToRelabeling) {
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
        const std::size_t n = 40;
        const auto points = testutil::random_points(n, 4, seed + 900);
        std::vector<std::size_t> perm(n);
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        alts::SplitMix64 rng(seed + 901);
        alts::partial_shuffle(perm, n, rng);

        alts::EmbeddingMatrix permuted;
        permuted.rows = n;
        permuted.cols = points.cols;
        permuted.values.resize(points.values.size());
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t c = 0; c < points.cols; ++c) {
                permuted.values[i * points.cols + c] =
                    points.values[perm[i] * points.cols + c];
            }
        }
        for (const alts::Linkage linkage : {alts::Linkage::ward, alts::Linkage::single,
                                            alts::Linkage::average}) {
            const auto base = alts::agglomerative_cluster(points, 5, linkage);
            const auto shuffled = alts::agglomerative_cluster(permuted, 5, linkage);
            // undo the permutation and compare partitions
            std::vector<int> unshuffled(n);
            for (std::size_t i = 0; i < n; ++i) {
                unshuffled[perm[i]] = shuffled.labels[i];
            }
            EXPECT_TRUE(testutil::partitions_equal(base.labels, unshuffled))
                << to_string(linkage) << " seed " << seed;
        }
    }
}

TEST(Clustering, DeterministicTieBreakOnSquare) {
    // unit square corners: the first merge has four distance-1 ties and must
    // take the smallest index pair, giving {0,1} then {2,3}
    alts::EmbeddingMatrix square;
    square.rows = 4;
    square.cols = 2;
    square.values = {0, 0, 1, 0, 0, 1, 1, 1};
    const auto result = alts::agglomerative_cluster(square, 2, alts::Linkage::ward);
    EXPECT_EQ(result.labels, (std::vector<int>{0, 0, 1, 1}));
}

TEST(Clustering, RejectsBadArguments) {
    const auto points = testutil::random_points(5, 2, 3);
    EXPECT_THROW(alts::agglomerative_cluster(points, 0, alts::Linkage::ward),
                 alts::precondition_error);
    EXPECT_THROW(alts::agglomerative_cluster(points, 6, alts::Linkage::ward),
                 alts::precondition_error);

    auto bad = points;
    bad.values[3] = std::numeric_limits<float>::infinity();
    EXPECT_THROW(alts::agglomerative_cluster(bad, 2, alts::Linkage::ward),
                 alts::precondition_error);

    alts::EmbeddingMatrix empty;
    EXPECT_THROW(alts::agglomerative_cluster(empty, 1, alts::Linkage::ward),
                 alts::precondition_error);
}

TEST(Clustering, LabelFileWriter) {
    testutil::TempDir dir("clusters");
    const auto points = testutil::random_points(5, 2, 12);
    const auto assignment = alts::agglomerative_cluster(points, 2);
    const std::vector<std::string> ids = {"a", "b", "c", "d", "e"};
    const auto path = dir / "labels.jsonl";
    alts::write_cluster_labels(ids, assignment, path);

    std::ifstream in(path);
    std::string line;
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        const auto j = nlohmann::json::parse(line);
        EXPECT_EQ(j["tile_id"].get<std::string>(), ids[rows]);
        EXPECT_EQ(j["cluster"].get<int>(), assignment.labels[rows]);
        ++rows;
    }
    EXPECT_EQ(rows, 5u);

    EXPECT_THROW(alts::write_cluster_labels({"a"}, assignment, path),
                 alts::precondition_error);
}

TEST(Clustering, LinkageNamesRoundtrip) {
    for (const alts::Linkage l : {alts::Linkage::ward, alts::Linkage::complete,
                                  alts::Linkage::average, alts::Linkage::single}) {
        EXPECT_EQ(alts::linkage_from_string(alts::to_string(l)), l);
    }
    EXPECT_THROW(alts::linkage_from_string("centroid"), alts::precondition_error);
}
