#pragma once

/// JSON persistence for trees, forests and calibrators.
///
/// Every document carries a "schema" tag ("clover.tree/1", "clover.forest/1",
/// "clover.calibrator/1", "clover.model/1"); loading a different tag fails.
/// Infinite cutoffs are written as null. Keys are emitted in sorted order and
/// doubles in shortest round-trip form, so identical models give identical bytes.
///
/// Tree nodes are stored as arrays in preorder, one per node, with the columns
///   [parent, left, right, leaf_id, feature, threshold, value, sse, count, depth]
/// where parent/left/right are node indices (-1 for none) and leaf_id is -1 on
/// internal nodes.

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "clover/conformal.hpp"
#include "clover/forest.hpp"
#include "clover/tree.hpp"

namespace clover {

using json = nlohmann::json;

inline constexpr const char* kTreeSchema = "clover.tree/1";
inline constexpr const char* kForestSchema = "clover.forest/1";
inline constexpr const char* kCalibratorSchema = "clover.calibrator/1";
inline constexpr const char* kModelSchema = "clover.model/1";

namespace detail {

inline void expect_schema(const json& j, const char* schema) {
    if (!j.is_object() || !j.contains("schema")) throw Error(std::string("missing schema tag, expected ") + schema);
    const auto found = j.at("schema").get<std::string>();
    if (found != schema) throw Error("schema mismatch: expected " + std::string(schema) + ", found " + found);
}

inline json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
inline double null_as_inf(const json& j) { return j.is_null() ? kInf : j.get<double>(); }

}  // namespace detail

inline json to_json(const TreeParams& p) {
    return {{"min_samples_split", p.min_samples_split},
            {"min_samples_leaf", p.min_samples_leaf},
            {"max_depth", p.max_depth == kUnbounded ? json(nullptr) : json(p.max_depth)}};
}

inline TreeParams tree_params_from_json(const json& j) {
    TreeParams p;
    p.min_samples_split = j.at("min_samples_split").get<std::size_t>();
    p.min_samples_leaf = j.at("min_samples_leaf").get<std::size_t>();
    p.max_depth = j.at("max_depth").is_null() ? kUnbounded : j.at("max_depth").get<std::size_t>();
    return p;
}

inline json to_json(const RegressionTree& t) {
    json nodes = json::array();
    for (const auto& n : t.nodes())
        nodes.push_back(json::array(
            {n.parent, n.left, n.right, n.leaf_id, n.feature, n.threshold, n.value, n.sse, n.count, n.depth}));
    return {{"schema", kTreeSchema}, {"n_features", t.n_features()}, {"params", to_json(t.params())}, {"nodes", nodes}};
}

inline RegressionTree tree_from_json(const json& j) {
    detail::expect_schema(j, kTreeSchema);
    std::vector<TreeNode> nodes;
    for (const auto& a : j.at("nodes")) {
        if (!a.is_array() || a.size() != 10) throw Error("tree node must have 10 columns");
        TreeNode n;
        n.parent = a[0].get<std::int32_t>();
        n.left = a[1].get<std::int32_t>();
        n.right = a[2].get<std::int32_t>();
        n.leaf_id = a[3].get<std::int32_t>();
        n.feature = a[4].get<std::uint32_t>();
        n.threshold = a[5].get<double>();
        n.value = a[6].get<double>();
        n.sse = a[7].get<double>();
        n.count = a[8].get<std::uint32_t>();
        n.depth = a[9].get<std::uint32_t>();
        nodes.push_back(n);
    }
    if (nodes.empty()) throw Error("tree has no nodes");
    const auto n_nodes = static_cast<std::int32_t>(nodes.size());
    for (const auto& n : nodes) {
        if ((n.left < 0) != (n.right < 0) || n.left >= n_nodes || n.right >= n_nodes) throw Error("tree has bad child links");
        if (n.left >= 0 && n.feature >= j.at("n_features").get<std::size_t>()) throw Error("tree split feature out of range");
    }
    return RegressionTree(tree_params_from_json(j.at("params")), j.at("n_features").get<std::size_t>(), std::move(nodes));
}

inline json to_json(const RandomForestRegressor& f) {
    json trees = json::array();
    for (const auto& t : f.trees()) trees.push_back(to_json(t));
    const auto& p = f.params();
    return {{"schema", kForestSchema},
            {"params", {{"n_estimators", p.n_estimators}, {"bootstrap", p.bootstrap}, {"tree", to_json(p.tree)}}},
            {"trees", trees}};
}

inline RandomForestRegressor forest_from_json(const json& j) {
    detail::expect_schema(j, kForestSchema);
    ForestParams p;
    p.n_estimators = j.at("params").at("n_estimators").get<std::size_t>();
    p.bootstrap = j.at("params").at("bootstrap").get<bool>();
    p.tree = tree_params_from_json(j.at("params").at("tree"));
    std::vector<RegressionTree> trees;
    for (const auto& t : j.at("trees")) trees.push_back(tree_from_json(t));
    return RandomForestRegressor(p, std::move(trees));
}

inline json to_json(const std::vector<LeafCutoff>& table) {
    json out = json::array();
    for (const auto& c : table) out.push_back({{"cutoff", detail::finite_or_null(c.cutoff)}, {"count", c.count}});
    return out;
}

inline std::vector<LeafCutoff> cutoffs_from_json(const json& j) {
    std::vector<LeafCutoff> out;
    for (const auto& c : j) out.push_back({detail::null_as_inf(c.at("cutoff")), c.at("count").get<std::size_t>()});
    return out;
}

inline std::string to_string(ScoreKind k) {
    return k == ScoreKind::weighted_residual ? "weighted_residual" : "regression_residual";
}

inline ScoreKind score_kind_from_string(const std::string& s) {
    if (s == "regression_residual") return ScoreKind::regression_residual;
    if (s == "weighted_residual") return ScoreKind::weighted_residual;
    throw Error("unknown score kind '" + s + "'");
}

inline std::string to_string(Augmentor a) { return a == Augmentor::mad ? "mad" : "forest_variance"; }

inline Augmentor augmentor_from_string(const std::string& s) {
    if (s == "forest_variance") return Augmentor::forest_variance;
    if (s == "mad") return Augmentor::mad;
    throw Error("unknown augmentor '" + s + "'");
}

/// `method` is the harness key the model was fitted under (e.g. "a-locart").
inline json to_json(const CalibratorModel& model, const std::string& method) {
    json j = {{"schema", kCalibratorSchema},
              {"method", method},
              {"alpha", model_alpha(model)},
              {"score", to_string(score_kind(model))}};
    std::visit(
        [&](const auto& m) {
            using M = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<M, SplitCalibrator>) {
                j["type"] = "split";
                j["cutoff"] = to_json(std::vector<LeafCutoff>{m.cutoff}).front();
            } else if constexpr (std::is_same_v<M, MondrianCalibrator>) {
                j["type"] = "mondrian";
                j["edges"] = m.edges;
                j["bins"] = to_json(m.bins);
            } else {
                json aug = json::array();
                for (auto a : m.augmentation) aug.push_back(to_string(a));
                j["augmentation"] = aug;
                if constexpr (std::is_same_v<M, LocartModel>) {
                    j["type"] = "locart";
                    j["tree"] = to_json(m.tree);
                    j["cutoffs"] = to_json(m.cutoffs);
                } else {
                    j["type"] = "loforest";
                    json trees = json::array(), tables = json::array();
                    for (std::size_t k = 0; k < m.trees.size(); ++k) {
                        trees.push_back(to_json(m.trees[k]));
                        tables.push_back(to_json(m.cutoffs[k]));
                    }
                    j["trees"] = trees;
                    j["cutoffs"] = tables;
                }
            }
        },
        model);
    return j;
}

inline CalibratorModel calibrator_from_json(const json& j, std::string* method = nullptr) {
    detail::expect_schema(j, kCalibratorSchema);
    if (method) *method = j.at("method").get<std::string>();
    const double alpha = j.at("alpha").get<double>();
    const ScoreKind score = score_kind_from_string(j.at("score").get<std::string>());
    const auto type = j.at("type").get<std::string>();
    auto augmentation = [&] {
        std::vector<Augmentor> out;
        for (const auto& a : j.at("augmentation")) out.push_back(augmentor_from_string(a.get<std::string>()));
        return out;
    };
    if (type == "split") {
        const auto c = j.at("cutoff");
        return SplitCalibrator{alpha, score, {detail::null_as_inf(c.at("cutoff")), c.at("count").get<std::size_t>()}};
    }
    if (type == "mondrian") {
        MondrianCalibrator m;
        m.alpha = alpha;
        m.score = score;
        m.edges = j.at("edges").get<std::vector<double>>();
        m.bins = cutoffs_from_json(j.at("bins"));
        if (m.edges.empty() || m.edges.size() != m.bins.size()) throw Error("mondrian edges and bins disagree");
        return m;
    }
    if (type == "locart") {
        LocartModel m;
        m.alpha = alpha;
        m.score = score;
        m.augmentation = augmentation();
        m.tree = tree_from_json(j.at("tree"));
        m.cutoffs = cutoffs_from_json(j.at("cutoffs"));
        if (m.cutoffs.size() != m.tree.leaf_count()) throw Error("locart cutoff table does not cover every leaf");
        return m;
    }
    if (type == "loforest") {
        LoforestModel m;
        m.alpha = alpha;
        m.score = score;
        m.augmentation = augmentation();
        for (const auto& t : j.at("trees")) m.trees.push_back(tree_from_json(t));
        for (const auto& c : j.at("cutoffs")) m.cutoffs.push_back(cutoffs_from_json(c));
        if (m.trees.empty() || m.trees.size() != m.cutoffs.size()) throw Error("loforest trees and tables disagree");
        for (std::size_t k = 0; k < m.trees.size(); ++k)
            if (m.cutoffs[k].size() != m.trees[k].leaf_count())
                throw Error("loforest cutoff table does not cover every leaf");
        return m;
    }
    throw Error("unknown calibrator type '" + type + "'");
}

/// Parses JSON text, turning syntax errors into an Error that names the byte offset.
inline json parse_json_text(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error("parse error at byte " + std::to_string(e.byte) + ": " + e.what());
    }
}

inline json read_json_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_json_text(ss.str());
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path + "'");
    out << text;
}

inline void save_calibrator(const CalibratorModel& model, const std::string& method, const std::string& path) {
    write_text_file(path, to_json(model, method).dump() + "\n");
}

inline CalibratorModel load_calibrator(const std::string& path, std::string* method = nullptr) {
    const auto j = read_json_file(path);
    try {
        return calibrator_from_json(j, method);
    } catch (const json::exception& e) {
        throw Error(std::string("malformed calibrator: ") + e.what());
    }
}

}  // namespace clover
