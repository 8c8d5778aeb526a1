#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "alts/embedding.hpp"
#include "alts/rng.hpp"
#include "oracles.hpp"

using testutil::TempDir;

namespace {

alts::FeatureMap constant_map(std::uint32_t h, std::uint32_t w, std::uint32_t c,
                              float value) {
    alts::FeatureMap map;
    map.height = h;
    map.width = w;
    map.channels = c;
    map.values.assign(static_cast<std::size_t>(h) * w * c, value);
    return map;
}

}  // namespace

TEST(GridMaxPool, ConstantMapStaysConstant) {
    const auto map = constant_map(64, 64, 5, 0.5f);
    const auto pooled = alts::grid_max_pool(map, 8);
    EXPECT_EQ(pooled.height, 8u);
    EXPECT_EQ(pooled.width, 8u);
    EXPECT_EQ(pooled.channels, 5u);
    for (const float v : pooled.values) {
        EXPECT_EQ(v, 0.5f);
    }
}

TEST(GridMaxPool, HandEnumeratedWindows) {
    // 4x4 single-channel map holding 1..16 row-major; 2x2 windows.
    alts::FeatureMap map;
    map.height = 4;
    map.width = 4;
    map.channels = 1;
    for (int i = 1; i <= 16; ++i) {
        map.values.push_back(static_cast<float>(i));
    }
    const auto pooled = alts::grid_max_pool(map, 2);
    EXPECT_EQ(pooled.values, (std::vector<float>{6, 8, 14, 16}));
}

TEST(GridMaxPool, GridEqualToSideIsIdentity) {
    const auto map = testutil::random_feature_map(6, 6, 3, 42);
    const auto pooled = alts::grid_max_pool(map, 6);
    EXPECT_EQ(pooled.values, map.values);
}

TEST(GridMaxPool, RejectsBadInput) {
    const auto map = testutil::random_feature_map(6, 6, 2, 1);
    EXPECT_THROW(alts::grid_max_pool(map, 4), alts::precondition_error);
    EXPECT_THROW(alts::grid_max_pool(map, 0), alts::precondition_error);

    auto bad = map;
    bad.values[7] = std::nanf("");
    EXPECT_THROW(alts::grid_max_pool(bad, 2), alts::precondition_error);
}

TEST(GridMaxPool, WindowPermutationInvariance) {
    auto map = testutil::random_feature_map(8, 8, 3, 99);
    const auto before = alts::grid_max_pool(map, 2);

    // Shuffle values inside one pooling window (top-left 4x4 block), per channel.
    alts::SplitMix64 rng(5);
    for (std::uint32_t c = 0; c < map.channels; ++c) {
        std::vector<float> window;
        for (std::uint32_t h = 0; h < 4; ++h) {
            for (std::uint32_t w = 0; w < 4; ++w) {
                window.push_back(map.at(h, w, c));
            }
        }
        alts::partial_shuffle(window, window.size(), rng);
        std::size_t i = 0;
        for (std::uint32_t h = 0; h < 4; ++h) {
            for (std::uint32_t w = 0; w < 4; ++w) {
                map.values[map.index(h, w, c)] = window[i++];
            }
        }
    }
    const auto after = alts::grid_max_pool(map, 2);
    EXPECT_EQ(after.values, before.values);
}

TEST(GlobalAvgPool, SmallCases) {
    EXPECT_EQ(alts::global_avg_pool(constant_map(16, 16, 4, 0.5f)),
              (std::vector<float>{0.5f, 0.5f, 0.5f, 0.5f}));

    alts::FeatureMap map;
    map.height = 2;
    map.width = 2;
    map.channels = 1;
    map.values = {1, 2, 3, 4};
    EXPECT_EQ(alts::global_avg_pool(map), std::vector<float>{2.5f});
}

TEST(GlobalAvgPool, MatchesNaiveOracle) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto map = testutil::random_feature_map(12, 20, 7, seed);
        const auto got = alts::global_avg_pool(map);
        const auto expected = testutil::oracle_global_avg_pool(map);
        ASSERT_EQ(got.size(), expected.size());
        for (std::size_t c = 0; c < got.size(); ++c) {
            EXPECT_NEAR(got[c], expected[c], 1e-6 * std::abs(expected[c]) + 1e-9);
        }
    }
}

TEST(EmbedTile, FullSizeConstantMap) {
    const auto map = constant_map(128, 128, 128, 0.25f);
    const auto emb = alts::embed_tile(map);
    ASSERT_EQ(emb.size(), 128u);
    for (const float v : emb) {
        EXPECT_EQ(v, 0.25f);
    }
}

TEST(EmbedTile, MatchesTwoStageOracleOnFullSizeMap) {
    const auto map = testutil::random_feature_map(128, 128, 128, 2024);
    const auto got = alts::embed_tile(map, 8);
    const auto expected = testutil::oracle_embed_tile(map, 8);
    ASSERT_EQ(got.size(), 128u);
    for (std::size_t c = 0; c < got.size(); ++c) {
        EXPECT_NEAR(got[c], expected[c], 1e-6 * std::abs(expected[c]));
    }
}

TEST(EmbedTile, OutputDimensionTracksChannels) {
    for (const std::uint32_t channels : {1u, 3u, 7u}) {
        const auto map = testutil::random_feature_map(16, 16, channels, channels);
        EXPECT_EQ(alts::embed_tile(map, 4).size(), channels);
    }
}

TEST(EmbedTile, PositivelyHomogeneous) {
    const auto map = testutil::random_feature_map(16, 16, 4, 77);
    const auto base = alts::embed_tile(map, 4);
    for (const float alpha : {0.5f, 2.0f}) {
        auto scaled = map;
        for (auto& v : scaled.values) {
            v *= alpha;
        }
        const auto emb = alts::embed_tile(scaled, 4);
        for (std::size_t c = 0; c < emb.size(); ++c) {
            // power-of-two scaling is exact in float
            EXPECT_EQ(emb[c], alpha * base[c]);
        }
    }
}

TEST(EmbeddingFiles, RoundtripAndValidation) {
    TempDir dir("embed");
    alts::EmbeddingMatrix m;
    m.rows = 3;
    m.cols = 2;
    m.values = {1, 2, 3, 4, 5, 6};
    const std::vector<std::string> ids = {"a", "b", "c"};

    const auto tensor_path = dir / "emb.alts";
    const auto ids_path = dir / "emb.alts.ids.jsonl";
    alts::write_embeddings(m, ids, tensor_path, ids_path);
    const auto back = alts::read_embeddings(tensor_path, ids_path);
    EXPECT_EQ(back.matrix.values, m.values);
    EXPECT_EQ(back.ids, ids);

    // sidecar/tensor disagreement
    alts::write_embeddings(m, ids, tensor_path, ids_path);
    std::ofstream(ids_path, std::ios::trunc) << R"({"tile_id":"a"})" << "\n";
    EXPECT_THROW(alts::read_embeddings(tensor_path, ids_path), alts::io_error);

    EXPECT_THROW(alts::write_embeddings(m, {"a", "b"}, tensor_path, ids_path),
                 alts::precondition_error);
}

TEST(FeatureMapTensor, ShapeValidation) {
    alts::Tensor t;
    t.dims = {2, 2};
    t.data = {1, 2, 3, 4};
    EXPECT_THROW(alts::feature_map_from_tensor(t), alts::precondition_error);
    t.dims = {2, 2, 1};
    EXPECT_EQ(alts::feature_map_from_tensor(t).channels, 1u);
}
