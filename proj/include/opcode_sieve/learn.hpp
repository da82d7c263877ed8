#pragma once

// Native classifiers: a C4.5-style decision tree (binary numeric splits at
// midpoints, gain-ratio criterion, unpruned) and a bagged random forest over
// it. Both live behind one serializable TrainedModel.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <variant>
#include <vector>

#include "opcode_sieve/features.hpp"

namespace opcode_sieve {

enum class ModelKind { tree, forest };
enum class SplitCriterion { gain_ratio };

struct TreeParams {
    int min_leaf = 2;
    int max_depth = -1;  // -1 = unlimited
    SplitCriterion criterion = SplitCriterion::gain_ratio;
};

struct ForestParams {
    int n_trees = 100;
    int features_per_split = 0;  // 0 = ceil(sqrt(n_features))
    bool bootstrap = true;
    std::uint64_t seed = 0;
    TreeParams tree{.min_leaf = 1};  // forest members grow fully by default
};

using ModelSpec = std::variant<TreeParams, ForestParams>;

ModelKind kind_of(const ModelSpec& spec);
std::string_view to_string(ModelKind kind);

struct TreeNode {
    std::int32_t feature = -1;
    double threshold = 0.0;
    std::int32_t left = -1;   // < 0 marks a leaf
    std::int32_t right = -1;
    std::uint32_t n_malware = 0;
    std::uint32_t n_benign = 0;

    bool is_leaf() const { return left < 0; }
    Label predicted() const {
        // ties go to malware: for a detector a false negative costs more
        return n_malware >= n_benign ? Label::malware : Label::benign;
    }
};

struct DecisionTree {
    std::vector<TreeNode> nodes;  // root at index 0

    const TreeNode& leaf_for(std::span<const double> values) const;
};

struct Prediction {
    Label label = Label::benign;
    double score = 0.0;
};

struct TrainedModel {
    ModelKind kind = ModelKind::tree;
    std::uint64_t feature_fingerprint = 0;
    std::size_t n_features = 0;
    TreeParams tree_params;      // meaningful when kind == tree
    ForestParams forest_params;  // meaningful when kind == forest
    std::vector<DecisionTree> trees;
};

/// Top-down induction over dense feature vectors. Stops on purity, depth,
/// the min_leaf floor or when no candidate split has positive gain.
TrainedModel train_tree(std::span<const FeatureVector> data,
                        const TreeParams& params = {},
                        std::uint64_t fingerprint = 0);

/// Bagging: n_trees trees, each on a bootstrap resample with a per-tree seed
/// derived from the master seed, considering a random feature subset at each
/// split. Pure function of (data order, params).
TrainedModel train_forest(std::span<const FeatureVector> data,
                          const ForestParams& params = {},
                          std::uint64_t fingerprint = 0);

TrainedModel train(std::span<const FeatureVector> data, const ModelSpec& spec,
                   std::uint64_t fingerprint = 0);

/// Tree: leaf class and leaf purity. Forest: majority vote and the fraction
/// of trees voting malware; vote ties go to malware.
Prediction predict(const TrainedModel& model, const FeatureVector& vec,
                   std::uint64_t fingerprint);

void save_model(const TrainedModel& model, std::ostream& out);
void save_model(const TrainedModel& model, const std::filesystem::path& path);
TrainedModel load_model(std::istream& in);
TrainedModel load_model(const std::filesystem::path& path);

} // namespace opcode_sieve
