// alts command-line front end. Subcommand per pipeline stage so upstream
// model pipelines can inject artifacts at any boundary:
//   genpool -> preselect -> score -> embed -> select -> eval, plus simulate.
// Exit codes: 0 success, 2 flag validation, 3 I/O, 4 precondition violation.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <unordered_map>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "alts/clustering.hpp"
#include "alts/common.hpp"
#include "alts/embedding.hpp"
#include "alts/evaluation.hpp"
#include "alts/parallel.hpp"
#include "alts/selection.hpp"
#include "alts/simulator.hpp"
#include "alts/tensor_store.hpp"
#include "alts/uncertainty.hpp"

namespace fs = std::filesystem;

namespace {

fs::path default_sidecar(const fs::path& tensor_path) {
    fs::path p = tensor_path;
    p += ".ids.jsonl";
    return p;
}

int run_preselect(const fs::path& catalog_path, double fraction, const fs::path& out,
                  std::uint64_t seed, const std::string& timestamp, unsigned threads) {
    const auto records = alts::load_catalog(catalog_path);
    alts::SelectionManifest manifest =
        alts::preselect(records, fraction, catalog_path.parent_path(), threads);
    manifest.seed = seed;
    manifest.created_at = timestamp;
    alts::save_manifest(manifest, out);
    std::cout << "preselected " << manifest.selected.size() << " of " << records.size()
              << " tiles -> " << out.string() << "\n";
    return 0;
}

int run_score(const fs::path& catalog_path, const fs::path& out, unsigned threads) {
    const auto records = alts::load_catalog(catalog_path);
    if (records.empty()) {
        throw alts::precondition_error("score: empty catalog");
    }
    const fs::path base = catalog_path.parent_path();
    std::vector<alts::UncertaintyScore> scores(records.size());
    alts::parallel_for(records.size(), threads, [&](std::size_t i) {
        if (records[i].score_stack_path.empty()) {
            throw alts::precondition_error("tile " + records[i].tile_id +
                                           ": no score stack");
        }
        const alts::Tensor t = alts::read_tensor(
            alts::resolve_artifact_path(base, records[i].score_stack_path));
        scores[i].tile_id = records[i].tile_id;
        scores[i].value =
            alts::mc_dropout_score(alts::stack_from_tensor(t, records[i].tile_id));
    });
    alts::write_scores(scores, out);
    std::cout << "scored " << records.size() << " tiles -> " << out.string() << "\n";
    return 0;
}

int run_embed(const fs::path& catalog_path, const fs::path& out, fs::path ids_path,
              unsigned grid, unsigned threads) {
    const auto records = alts::load_catalog(catalog_path);
    if (records.empty()) {
        throw alts::precondition_error("embed: empty catalog");
    }
    if (ids_path.empty()) {
        ids_path = default_sidecar(out);
    }
    const fs::path base = catalog_path.parent_path();

    std::vector<std::vector<float>> rows(records.size());
    alts::parallel_for(records.size(), threads, [&](std::size_t i) {
        if (records[i].feature_map_path.empty()) {
            throw alts::precondition_error("tile " + records[i].tile_id +
                                           ": no feature map");
        }
        const alts::Tensor t = alts::read_tensor(
            alts::resolve_artifact_path(base, records[i].feature_map_path));
        rows[i] = alts::embed_tile(alts::feature_map_from_tensor(t), grid);
    });

    alts::EmbeddingMatrix matrix;
    matrix.rows = records.size();
    matrix.cols = rows.front().size();
    matrix.values.reserve(matrix.rows * matrix.cols);
    std::vector<std::string> ids;
    ids.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (rows[i].size() != matrix.cols) {
            throw alts::precondition_error("tile " + records[i].tile_id +
                                           ": embedding width differs from others");
        }
        matrix.values.insert(matrix.values.end(), rows[i].begin(), rows[i].end());
        ids.push_back(records[i].tile_id);
    }
    alts::write_embeddings(matrix, ids, out, ids_path);
    std::cout << "embedded " << matrix.rows << " tiles (" << matrix.cols
              << " dims) -> " << out.string() << "\n";
    return 0;
}

int run_cluster(const fs::path& emb_path, fs::path ids_path, std::size_t k,
                const std::string& linkage, const fs::path& out, unsigned threads) {
    if (ids_path.empty()) {
        ids_path = default_sidecar(emb_path);
    }
    const alts::EmbeddingFile file = alts::read_embeddings(emb_path, ids_path);
    const alts::ClusterAssignment assignment = alts::agglomerative_cluster(
        file.matrix, k, alts::linkage_from_string(linkage), threads);
    alts::write_cluster_labels(file.ids, assignment, out);
    std::cout << "clustered " << file.ids.size() << " tiles into " << k
              << " groups -> " << out.string() << "\n";
    return 0;
}

int run_select(const std::string& strategy_name, std::size_t budget,
               const fs::path& catalog_path, const fs::path& emb_path,
               fs::path emb_ids_path, const fs::path& scores_path,
               const fs::path& anchors_path, fs::path anchor_ids_path,
               const std::string& linkage, std::int64_t outliers, std::uint64_t seed,
               const std::string& timestamp, const fs::path& out, unsigned threads) {
    const alts::Strategy strategy = alts::strategy_from_string(strategy_name);
    const auto records = alts::load_catalog(catalog_path);
    if (records.empty()) {
        throw alts::precondition_error("select: empty catalog");
    }

    alts::Pool pool;
    pool.ids.reserve(records.size());
    for (const auto& rec : records) {
        pool.ids.push_back(rec.tile_id);
    }

    const bool need_scores = strategy == alts::Strategy::mc_dropout ||
                             strategy == alts::Strategy::hybrid_naive ||
                             strategy == alts::Strategy::hybrid_clustering;
    const bool need_embeddings = strategy == alts::Strategy::coreset ||
                                 strategy == alts::Strategy::robust_coreset ||
                                 strategy == alts::Strategy::hybrid_naive ||
                                 strategy == alts::Strategy::hybrid_clustering;

    if (need_scores) {
        if (scores_path.empty()) {
            throw alts::precondition_error("select: --scores required for strategy " +
                                           strategy_name);
        }
        std::unordered_map<std::string, double> by_id;
        for (const auto& row : alts::load_scores(scores_path)) {
            by_id[row.tile_id] = row.value;
        }
        pool.scores.reserve(pool.ids.size());
        for (const auto& id : pool.ids) {
            const auto it = by_id.find(id);
            if (it == by_id.end()) {
                throw alts::precondition_error("select: no score for tile \"" + id +
                                               "\"");
            }
            pool.scores.push_back(it->second);
        }
    }
    if (need_embeddings) {
        if (emb_path.empty()) {
            throw alts::precondition_error(
                "select: --embeddings required for strategy " + strategy_name);
        }
        if (emb_ids_path.empty()) {
            emb_ids_path = default_sidecar(emb_path);
        }
        const alts::EmbeddingFile file = alts::read_embeddings(emb_path, emb_ids_path);
        std::unordered_map<std::string, std::size_t> row_of;
        row_of.reserve(file.ids.size());
        for (std::size_t i = 0; i < file.ids.size(); ++i) {
            row_of[file.ids[i]] = i;
        }
        pool.embeddings.rows = pool.ids.size();
        pool.embeddings.cols = file.matrix.cols;
        pool.embeddings.values.reserve(pool.ids.size() * file.matrix.cols);
        for (const auto& id : pool.ids) {
            const auto it = row_of.find(id);
            if (it == row_of.end()) {
                throw alts::precondition_error("select: no embedding for tile \"" + id +
                                               "\"");
            }
            const auto row = file.matrix.row(it->second);
            pool.embeddings.values.insert(pool.embeddings.values.end(), row.begin(),
                                          row.end());
        }
        if (!anchors_path.empty()) {
            if (anchor_ids_path.empty()) {
                anchor_ids_path = default_sidecar(anchors_path);
            }
            const alts::EmbeddingFile anchors =
                alts::read_embeddings(anchors_path, anchor_ids_path);
            pool.anchor_ids = anchors.ids;
            pool.anchor_embeddings = anchors.matrix;
        }
    }

    alts::SelectionManifest manifest;
    switch (strategy) {
        case alts::Strategy::mc_dropout:
            manifest = alts::top_k_uncertain(pool, budget);
            break;
        case alts::Strategy::coreset:
            manifest = alts::kcenter_greedy(pool, budget, threads).manifest;
            break;
        case alts::Strategy::robust_coreset: {
            const std::size_t budget_xi =
                outliers < 0 ? alts::default_outlier_budget(pool.size())
                             : static_cast<std::size_t>(outliers);
            manifest =
                alts::robust_kcenter(pool, budget, budget_xi, 64, threads).manifest;
            break;
        }
        case alts::Strategy::hybrid_naive:
            manifest = alts::hybrid_naive(pool, budget, threads);
            break;
        case alts::Strategy::hybrid_clustering:
            manifest = alts::hybrid_clustering(
                pool, budget, alts::linkage_from_string(linkage), threads);
            break;
        case alts::Strategy::random:
            manifest = alts::random_select(pool, budget, seed);
            break;
        case alts::Strategy::preselect:
            throw alts::precondition_error(
                "select: use the preselect subcommand for pre-selection");
    }
    manifest.seed = seed;
    manifest.created_at = timestamp;
    alts::save_manifest(manifest, out);
    std::cout << "selected " << manifest.selected.size() << " of " << pool.size()
              << " tiles (" << strategy_name << ") -> " << out.string() << "\n";
    return 0;
}

int run_eval(const fs::path& catalog_path, const fs::path& out, const fs::path& csv,
             int connectivity, std::vector<double> thresholds, unsigned threads) {
    const auto records = alts::load_catalog(catalog_path);
    if (records.empty()) {
        throw alts::precondition_error("eval: empty catalog");
    }
    const fs::path base = catalog_path.parent_path();
    if (thresholds.empty()) {
        thresholds = alts::default_thresholds();
    }

    std::vector<alts::ProbMap> maps(records.size());
    std::vector<std::vector<alts::GroundTruthInstance>> gts(records.size());
    alts::parallel_for(records.size(), threads, [&](std::size_t i) {
        const auto& rec = records[i];
        if (rec.ground_truth_path.empty()) {
            throw alts::precondition_error("tile " + rec.tile_id + ": no ground truth");
        }
        if (!rec.mean_map_path.empty()) {
            maps[i] = alts::prob_map_from_tensor(alts::read_tensor(
                alts::resolve_artifact_path(base, rec.mean_map_path)));
        } else if (!rec.score_stack_path.empty()) {
            const alts::Tensor t = alts::read_tensor(
                alts::resolve_artifact_path(base, rec.score_stack_path));
            const alts::ScoreMapStack stack = alts::stack_from_tensor(t, rec.tile_id);
            const auto first = stack.map(0);
            maps[i].height = stack.height;
            maps[i].width = stack.width;
            maps[i].values.assign(first.begin(), first.end());
        } else {
            throw alts::precondition_error("tile " + rec.tile_id +
                                           ": no prediction map");
        }
        const alts::Tensor gt_tensor = alts::read_tensor(
            alts::resolve_artifact_path(base, rec.ground_truth_path));
        if (gt_tensor.dims.size() != 2 || gt_tensor.dims[0] != maps[i].height ||
            gt_tensor.dims[1] != maps[i].width) {
            throw alts::precondition_error("tile " + rec.tile_id +
                                           ": ground truth grid mismatch");
        }
        gts[i] = alts::gt_instances_from_labels(gt_tensor.data, gt_tensor.dims[0],
                                                gt_tensor.dims[1]);
    });

    const alts::PRCurve curve = alts::pr_curve(maps, gts, thresholds, connectivity,
                                               threads);
    alts::write_pr_json(curve, out);
    if (!csv.empty()) {
        alts::write_pr_csv(curve, csv);
    }
    std::cout << "evaluated " << records.size() << " tiles at " << thresholds.size()
              << " thresholds -> " << out.string() << "\n";
    return 0;
}

int run_simulate(const fs::path& config_path, std::vector<std::string> strategies,
                 std::size_t rounds, std::size_t budget,
                 std::vector<std::uint64_t> seeds, const fs::path& out_dir,
                 unsigned threads) {
    const alts::ScenarioConfig scenario = alts::load_scenario(config_path);
    const alts::ComparisonReport report =
        alts::compare_strategies(scenario, strategies, rounds, budget, seeds, threads);
    fs::create_directories(out_dir);
    alts::write_comparison_json(report, out_dir / "comparison.json");
    alts::write_loop_reports_json(report.runs, out_dir / "loops.json");
    alts::write_rounds_csv(report.runs, out_dir / "rounds.csv");
    std::cout << alts::format_comparison_table(report);
    std::cout << "reports -> " << out_dir.string() << "\n";
    return 0;
}

int run_genpool(const fs::path& config_path, const fs::path& out_dir,
                unsigned threads) {
    const alts::ScenarioConfig scenario = alts::load_scenario(config_path);
    const alts::SyntheticPool pool = alts::generate_pool(scenario.pool, threads);
    alts::dump_pool(pool, out_dir, threads);
    std::cout << "generated " << pool.size() << " tiles -> "
              << (out_dir / "catalog.jsonl").string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"alts - active-learning tile selection engine"};
    app.require_subcommand(1);
    unsigned threads = 0;
    app.add_option("--threads", threads,
                   "Worker threads for per-tile stages (0 = all cores); results are "
                   "identical for any value")
        ->capture_default_str();

    // preselect
    auto* preselect = app.add_subcommand(
        "preselect", "Keep the top fraction of a catalog by mean map intensity");
    fs::path pre_catalog, pre_out;
    double pre_fraction = 0.05;
    std::uint64_t pre_seed = 0;
    std::string pre_timestamp;
    preselect->add_option("--catalog", pre_catalog, "Tile catalog (JSON lines)")
        ->required();
    preselect->add_option("--fraction", pre_fraction, "Fraction of tiles to keep")
        ->capture_default_str()
        ->check(CLI::Range(0.0, 1.0));
    preselect->add_option("--out", pre_out, "Output manifest path")->required();
    preselect->add_option("--seed", pre_seed, "Seed recorded in the manifest")
        ->capture_default_str();
    preselect->add_option("--timestamp", pre_timestamp,
                          "created_at value recorded in the manifest (kept out of "
                          "wall-clock for reproducibility)");

    // score
    auto* score = app.add_subcommand(
        "score", "MC-dropout uncertainty score per tile from its score stack");
    fs::path score_catalog, score_out;
    score->add_option("--catalog", score_catalog, "Tile catalog (JSON lines)")
        ->required();
    score->add_option("--out", score_out, "Output scores path (JSON lines)")
        ->required();

    // embed
    auto* embed = app.add_subcommand(
        "embed", "Pool decoder feature maps into per-tile embeddings");
    fs::path embed_catalog, embed_out, embed_ids;
    unsigned embed_grid = 8;
    embed->add_option("--catalog", embed_catalog, "Tile catalog (JSON lines)")
        ->required();
    embed->add_option("--out", embed_out, "Output embedding tensor ([N,C])")
        ->required();
    embed->add_option("--ids", embed_ids,
                      "Id sidecar path (default: <out>.ids.jsonl)");
    embed->add_option("--grid", embed_grid, "Max-pooling grid size")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);

    // cluster
    auto* cluster = app.add_subcommand(
        "cluster", "Agglomerative clustering of an embedding file");
    fs::path cluster_emb, cluster_ids, cluster_out;
    std::size_t cluster_k = 0;
    std::string cluster_linkage = "ward";
    cluster->add_option("--embeddings", cluster_emb, "Embedding tensor ([N,C])")
        ->required();
    cluster->add_option("--ids", cluster_ids,
                        "Id sidecar path (default: <embeddings>.ids.jsonl)");
    cluster->add_option("--k", cluster_k, "Number of clusters")
        ->required()
        ->check(CLI::PositiveNumber);
    cluster->add_option("--linkage", cluster_linkage, "Merge criterion")
        ->capture_default_str()
        ->check(CLI::IsMember({"ward", "complete", "average", "single"}));
    cluster->add_option("--out", cluster_out, "Output labels path (JSON lines)")
        ->required();

    // select
    auto* select = app.add_subcommand(
        "select", "Budget-constrained tile selection with a given strategy");
    std::string sel_strategy, sel_linkage = "ward", sel_timestamp;
    std::size_t sel_budget = 0;
    std::uint64_t sel_seed = 0;
    std::int64_t sel_outliers = -1;
    fs::path sel_catalog, sel_emb, sel_emb_ids, sel_scores, sel_anchors,
        sel_anchor_ids, sel_out;
    select->add_option("--strategy", sel_strategy, "Selection strategy")
        ->required()
        ->check(CLI::IsMember({"mc_dropout", "coreset", "robust_coreset",
                               "hybrid_naive", "hybrid_clustering", "random"}));
    select->add_option("--budget", sel_budget, "Number of tiles to select")
        ->required()
        ->check(CLI::PositiveNumber);
    select->add_option("--seed", sel_seed, "Seed for randomized strategies")
        ->capture_default_str();
    select->add_option("--catalog", sel_catalog, "Tile catalog defining the pool")
        ->required();
    select->add_option("--embeddings", sel_emb, "Embedding tensor ([N,C])");
    select->add_option("--embedding-ids", sel_emb_ids,
                       "Embedding id sidecar (default: <embeddings>.ids.jsonl)");
    select->add_option("--scores", sel_scores, "Uncertainty scores (JSON lines)");
    select->add_option("--anchors", sel_anchors,
                       "Already-labeled anchor embeddings ([M,C])");
    select->add_option("--anchor-ids", sel_anchor_ids,
                       "Anchor id sidecar (default: <anchors>.ids.jsonl)");
    select->add_option("--linkage", sel_linkage, "Linkage for hybrid_clustering")
        ->capture_default_str()
        ->check(CLI::IsMember({"ward", "complete", "average", "single"}));
    select->add_option("--outliers", sel_outliers,
                       "Outlier budget for robust_coreset (-1 = 1% of pool)")
        ->capture_default_str();
    select->add_option("--timestamp", sel_timestamp,
                       "created_at value recorded in the manifest");
    select->add_option("--out", sel_out, "Output manifest path")->required();

    // eval
    auto* eval = app.add_subcommand(
        "eval", "Polygon-coverage precision/recall over a labeled catalog");
    fs::path eval_catalog, eval_out, eval_csv;
    int eval_connectivity = 8;
    std::vector<double> eval_thresholds;
    eval->add_option("--catalog", eval_catalog, "Tile catalog with ground truth")
        ->required();
    eval->add_option("--out", eval_out, "Output curve path (JSON)")->required();
    eval->add_option("--csv", eval_csv, "Optional CSV output path");
    eval->add_option("--connectivity", eval_connectivity, "Component connectivity")
        ->capture_default_str()
        ->check(CLI::IsMember({4, 8}));
    eval->add_option("--thresholds", eval_thresholds,
                     "Threshold grid (default: 0.05..0.95 step 0.05)")
        ->delimiter(',');

    // simulate
    auto* simulate = app.add_subcommand(
        "simulate", "Run the synthetic active-learning loop and compare strategies");
    fs::path sim_config, sim_out;
    std::vector<std::string> sim_strategies;
    std::vector<std::uint64_t> sim_seeds;
    std::size_t sim_rounds = 1, sim_budget = 50;
    simulate->add_option("--config", sim_config, "Scenario config (JSON)")->required();
    simulate->add_option("--strategies", sim_strategies, "Strategies to compare")
        ->required()
        ->delimiter(',')
        ->check(CLI::IsMember({"mc_dropout", "coreset", "robust_coreset",
                               "hybrid_naive", "hybrid_clustering", "random",
                               "unlimited"}));
    simulate->add_option("--rounds", sim_rounds, "Selection rounds per run")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    simulate->add_option("--budget", sim_budget, "Labeling budget per round")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    simulate->add_option("--seeds", sim_seeds, "Run seeds")->required()->delimiter(',');
    simulate->add_option("--out", sim_out, "Output directory")->required();

    // genpool
    auto* genpool = app.add_subcommand(
        "genpool", "Write a synthetic pool's catalog and tensors to a directory");
    fs::path gen_config, gen_out;
    genpool->add_option("--config", gen_config, "Pool config (JSON)")->required();
    genpool->add_option("--out", gen_out, "Output directory")->required();

    for (auto* sub : app.get_subcommands([](CLI::App*) { return true; })) {
        sub->fallthrough();  // top-level flags like --threads work after the name
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*preselect) {
            return run_preselect(pre_catalog, pre_fraction, pre_out, pre_seed,
                                 pre_timestamp, threads);
        }
        if (*score) {
            return run_score(score_catalog, score_out, threads);
        }
        if (*embed) {
            return run_embed(embed_catalog, embed_out, embed_ids, embed_grid, threads);
        }
        if (*cluster) {
            return run_cluster(cluster_emb, cluster_ids, cluster_k, cluster_linkage,
                               cluster_out, threads);
        }
        if (*select) {
            return run_select(sel_strategy, sel_budget, sel_catalog, sel_emb,
                              sel_emb_ids, sel_scores, sel_anchors, sel_anchor_ids,
                              sel_linkage, sel_outliers, sel_seed, sel_timestamp,
                              sel_out, threads);
        }
        if (*eval) {
            return run_eval(eval_catalog, eval_out, eval_csv, eval_connectivity,
                            eval_thresholds, threads);
        }
        if (*simulate) {
            return run_simulate(sim_config, sim_strategies, sim_rounds, sim_budget,
                                sim_seeds, sim_out, threads);
        }
        if (*genpool) {
            return run_genpool(gen_config, gen_out, threads);
        }
    } catch (const alts::io_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const alts::precondition_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
