#include "opcode_sieve/learn.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "opcode_sieve/rng.hpp"

namespace opcode_sieve {

namespace {

constexpr std::string_view kModelMagic = "opcode-sieve-model v1";
constexpr double kMinGain = 1e-12;

double entropy2(double a, double b) {
    if (a <= 0.0 || b <= 0.0) return 0.0;
    const double n = a + b;
    const double pa = a / n, pb = b / n;
    return -(pa * std::log2(pa) + pb * std::log2(pb));
}

struct SplitChoice {
    double ratio = 0.0;
    int feature = -1;
    double threshold = 0.0;
};

// Builds one tree over row indices into `data`. When `rng` is set, each
// split considers only a random subset of features of size
// `features_per_split`; otherwise all features are candidates.
class Inducer {
public:
    Inducer(std::span<const FeatureVector> data, const TreeParams& params,
            Rng* rng, int features_per_split)
        : data_(data), params_(params), rng_(rng),
          features_per_split_(features_per_split),
          n_features_(data.empty() ? 0 : static_cast<int>(data[0].values.size())) {}

    DecisionTree build(std::vector<std::uint32_t> rows) {
        tree_.nodes.clear();
        grow(std::move(rows), 0);
        return std::move(tree_);
    }

private:
    int make_leaf(std::uint32_t n_malware, std::uint32_t n_benign) {
        TreeNode node;
        node.n_malware = n_malware;
        node.n_benign = n_benign;
        tree_.nodes.push_back(node);
        return static_cast<int>(tree_.nodes.size()) - 1;
    }

    std::vector<int> candidate_features() {
        std::vector<int> all(static_cast<std::size_t>(n_features_));
        std::iota(all.begin(), all.end(), 0);
        if (!rng_ || features_per_split_ >= n_features_) return all;
        // partial Fisher-Yates, then ascending for a stable scan order
        for (int i = 0; i < features_per_split_; ++i) {
            const auto j = i + static_cast<int>(rng_->bounded(
                                   static_cast<std::uint64_t>(n_features_ - i)));
            std::swap(all[static_cast<std::size_t>(i)], all[static_cast<std::size_t>(j)]);
        }
        all.resize(static_cast<std::size_t>(features_per_split_));
        std::sort(all.begin(), all.end());
        return all;
    }

    // Best midpoint threshold for one feature by gain ratio. Returns false
    // when no cut of this feature has positive gain and legal child sizes.
    bool best_cut(const std::vector<std::uint32_t>& rows, int feature,
                  std::uint32_t n_malware, SplitChoice& best) {
        scratch_.clear();
        scratch_.reserve(rows.size());
        for (std::uint32_t r : rows)
            scratch_.emplace_back(data_[r].values[static_cast<std::size_t>(feature)],
                                  data_[r].label == Label::malware ? 1u : 0u);
        std::sort(scratch_.begin(), scratch_.end());

        const double n = static_cast<double>(rows.size());
        const double parent = entropy2(static_cast<double>(n_malware),
                                       n - static_cast<double>(n_malware));
        bool found = false;
        std::uint32_t left_malware = 0;
        for (std::size_t i = 0; i + 1 < scratch_.size(); ++i) {
            left_malware += scratch_[i].second;
            if (scratch_[i].first == scratch_[i + 1].first) continue;
            const double nl = static_cast<double>(i + 1);
            const double nr = n - nl;
            if (nl < params_.min_leaf || nr < params_.min_leaf) continue;
            const double ml = static_cast<double>(left_malware);
            const double mr = static_cast<double>(n_malware) - ml;
            const double cond = (nl / n) * entropy2(ml, nl - ml) +
                                (nr / n) * entropy2(mr, nr - mr);
            const double gain = parent - cond;
            if (gain <= kMinGain) continue;
            const double split_info = entropy2(nl, nr);
            const double ratio = gain / split_info;
            if (ratio > best.ratio) {
                best.ratio = ratio;
                best.feature = feature;
                best.threshold = (scratch_[i].first + scratch_[i + 1].first) / 2.0;
                found = true;
            }
        }
        return found;
    }

    int grow(std::vector<std::uint32_t> rows, int depth) {
        std::uint32_t n_malware = 0;
        for (std::uint32_t r : rows)
            if (data_[r].label == Label::malware) ++n_malware;
        const auto n = static_cast<std::uint32_t>(rows.size());
        const std::uint32_t n_benign = n - n_malware;

        const bool pure = n_malware == 0 || n_benign == 0;
        const bool too_small = n < 2u * static_cast<std::uint32_t>(params_.min_leaf);
        const bool at_depth = params_.max_depth >= 0 && depth >= params_.max_depth;
        if (pure || too_small || at_depth) return make_leaf(n_malware, n_benign);

        SplitChoice best;
        for (int feature : candidate_features()) best_cut(rows, feature, n_malware, best);
        if (best.feature < 0) return make_leaf(n_malware, n_benign);

        std::vector<std::uint32_t> left, right;
        for (std::uint32_t r : rows) {
            if (data_[r].values[static_cast<std::size_t>(best.feature)] <= best.threshold)
                left.push_back(r);
            else
                right.push_back(r);
        }
        rows.clear();
        rows.shrink_to_fit();

        TreeNode node;
        node.feature = best.feature;
        node.threshold = best.threshold;
        node.n_malware = n_malware;
        node.n_benign = n_benign;
        tree_.nodes.push_back(node);
        const auto self = static_cast<int>(tree_.nodes.size()) - 1;
        const int left_idx = grow(std::move(left), depth + 1);
        const int right_idx = grow(std::move(right), depth + 1);
        tree_.nodes[static_cast<std::size_t>(self)].left = left_idx;
        tree_.nodes[static_cast<std::size_t>(self)].right = right_idx;
        return self;
    }

    std::span<const FeatureVector> data_;
    const TreeParams& params_;
    Rng* rng_;
    int features_per_split_;
    int n_features_;
    DecisionTree tree_;
    std::vector<std::pair<double, std::uint32_t>> scratch_;
};

void check_training_set(std::span<const FeatureVector> data) {
    if (data.empty()) throw EmptyTrainingSet("no training rows");
    const std::size_t width = data[0].values.size();
    for (const auto& row : data)
        if (row.values.size() != width)
            throw InconsistentVectorLength("row '" + row.sample_id + "' has " +
                                           std::to_string(row.values.size()) +
                                           " values, expected " + std::to_string(width));
}

std::vector<std::uint32_t> identity_rows(std::size_t n) {
    std::vector<std::uint32_t> rows(n);
    std::iota(rows.begin(), rows.end(), 0u);
    return rows;
}

int resolve_features_per_split(const ForestParams& params, int n_features) {
    if (params.features_per_split > 0)
        return std::min(params.features_per_split, n_features);
    return static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n_features))));
}

} // namespace

ModelKind kind_of(const ModelSpec& spec) {
    return std::holds_alternative<TreeParams>(spec) ? ModelKind::tree
                                                    : ModelKind::forest;
}

std::string_view to_string(ModelKind kind) {
    return kind == ModelKind::tree ? "tree" : "forest";
}

const TreeNode& DecisionTree::leaf_for(std::span<const double> values) const {
    const TreeNode* node = &nodes[0];
    while (!node->is_leaf()) {
        const double v = values[static_cast<std::size_t>(node->feature)];
        node = &nodes[static_cast<std::size_t>(v <= node->threshold ? node->left
                                                                    : node->right)];
    }
    return *node;
}

TrainedModel train_tree(std::span<const FeatureVector> data,
                        const TreeParams& params, std::uint64_t fingerprint) {
    check_training_set(data);
    TrainedModel model;
    model.kind = ModelKind::tree;
    model.feature_fingerprint = fingerprint;
    model.n_features = data[0].values.size();
    model.tree_params = params;
    Inducer inducer(data, params, nullptr, 0);
    model.trees.push_back(inducer.build(identity_rows(data.size())));
    return model;
}

TrainedModel train_forest(std::span<const FeatureVector> data,
                          const ForestParams& params, std::uint64_t fingerprint) {
    check_training_set(data);
    if (params.n_trees < 1) throw InvalidSpec("n_trees must be >= 1");
    TrainedModel model;
    model.kind = ModelKind::forest;
    model.feature_fingerprint = fingerprint;
    model.n_features = data[0].values.size();
    model.forest_params = params;

    const int per_split = resolve_features_per_split(
        params, static_cast<int>(model.n_features));
    model.trees.reserve(static_cast<std::size_t>(params.n_trees));
    for (int t = 0; t < params.n_trees; ++t) {
        Rng rng(derive_seed(params.seed, static_cast<std::uint64_t>(t)));
        std::vector<std::uint32_t> rows;
        if (params.bootstrap) {
            rows.resize(data.size());
            for (auto& r : rows)
                r = static_cast<std::uint32_t>(rng.bounded(data.size()));
        } else {
            rows = identity_rows(data.size());
        }
        Inducer inducer(data, params.tree, &rng, per_split);
        model.trees.push_back(inducer.build(std::move(rows)));
    }
    return model;
}

TrainedModel train(std::span<const FeatureVector> data, const ModelSpec& spec,
                   std::uint64_t fingerprint) {
    if (const auto* tree = std::get_if<TreeParams>(&spec))
        return train_tree(data, *tree, fingerprint);
    return train_forest(data, std::get<ForestParams>(spec), fingerprint);
}

Prediction predict(const TrainedModel& model, const FeatureVector& vec,
                   std::uint64_t fingerprint) {
    if (fingerprint != model.feature_fingerprint)
        throw FingerprintMismatch("vector was built from a different feature set");
    if (vec.values.size() != model.n_features)
        throw InconsistentVectorLength("vector has " +
                                       std::to_string(vec.values.size()) +
                                       " values, model expects " +
                                       std::to_string(model.n_features));
    if (model.kind == ModelKind::tree) {
        const TreeNode& leaf = model.trees[0].leaf_for(vec.values);
        const double total = static_cast<double>(leaf.n_malware + leaf.n_benign);
        const Label label = leaf.predicted();
        const double purity =
            (label == Label::malware ? leaf.n_malware : leaf.n_benign) / total;
        return {label, purity};
    }
    std::size_t malware_votes = 0;
    for (const auto& tree : model.trees)
        if (tree.leaf_for(vec.values).predicted() == Label::malware) ++malware_votes;
    const double score =
        static_cast<double>(malware_votes) / static_cast<double>(model.trees.size());
    const Label label =
        2 * malware_votes >= model.trees.size() ? Label::malware : Label::benign;
    return {label, score};
}

namespace {

void write_node(const DecisionTree& tree, int index, std::ostream& out) {
    const TreeNode& node = tree.nodes[static_cast<std::size_t>(index)];
    if (node.is_leaf()) {
        out << "L " << node.n_malware << ' ' << node.n_benign << '\n';
        return;
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", node.threshold);
    out << "S " << node.feature << ' ' << buf << '\n';
    write_node(tree, node.left, out);
    write_node(tree, node.right, out);
}

int read_node(std::istream& in, DecisionTree& tree) {
    std::string line;
    if (!std::getline(in, line))
        throw MalformedRecord("model file ends inside a tree");
    std::istringstream fields(line);
    char tag = 0;
    fields >> tag;
    TreeNode node;
    if (tag == 'L') {
        if (!(fields >> node.n_malware >> node.n_benign))
            throw MalformedRecord("bad leaf line: " + line);
        tree.nodes.push_back(node);
        return static_cast<int>(tree.nodes.size()) - 1;
    }
    if (tag != 'S') throw MalformedRecord("bad node line: " + line);
    if (!(fields >> node.feature >> node.threshold))
        throw MalformedRecord("bad split line: " + line);
    tree.nodes.push_back(node);
    const auto self = static_cast<int>(tree.nodes.size()) - 1;
    const int left = read_node(in, tree);
    const int right = read_node(in, tree);
    tree.nodes[static_cast<std::size_t>(self)].left = left;
    tree.nodes[static_cast<std::size_t>(self)].right = right;
    // recover split-node class counts; they are not serialized
    const TreeNode& l = tree.nodes[static_cast<std::size_t>(left)];
    const TreeNode& r = tree.nodes[static_cast<std::size_t>(right)];
    tree.nodes[static_cast<std::size_t>(self)].n_malware = l.n_malware + r.n_malware;
    tree.nodes[static_cast<std::size_t>(self)].n_benign = l.n_benign + r.n_benign;
    return self;
}

} // namespace

void save_model(const TrainedModel& model, std::ostream& out) {
    out << kModelMagic << '\n';
    out << "kind " << to_string(model.kind) << '\n';
    char fp[24];
    std::snprintf(fp, sizeof fp, "%016llx",
                  static_cast<unsigned long long>(model.feature_fingerprint));
    out << "params n_features " << model.n_features << " fingerprint " << fp;
    if (model.kind == ModelKind::tree) {
        out << " min_leaf " << model.tree_params.min_leaf << " max_depth "
            << model.tree_params.max_depth;
    } else {
        const auto& p = model.forest_params;
        out << " trees " << p.n_trees << " features_per_split "
            << p.features_per_split << " bootstrap " << (p.bootstrap ? 1 : 0)
            << " seed " << p.seed << " min_leaf " << p.tree.min_leaf
            << " max_depth " << p.tree.max_depth;
    }
    out << '\n';
    for (const auto& tree : model.trees) write_node(tree, 0, out);
    if (!out) throw IoFailure("failed writing model");
}

void save_model(const TrainedModel& model, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoFailure("cannot open for write: " + path.string());
    save_model(model, out);
}

TrainedModel load_model(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != kModelMagic)
        throw FormatVersionMismatch("expected '" + std::string(kModelMagic) +
                                    "', got '" + line + "'");
    TrainedModel model;
    if (!std::getline(in, line))
        throw MalformedRecord("missing kind line");
    {
        std::istringstream fields(line);
        std::string word, kind;
        fields >> word >> kind;
        if (word != "kind" || (kind != "tree" && kind != "forest"))
            throw MalformedRecord("bad kind line: " + line);
        model.kind = kind == "tree" ? ModelKind::tree : ModelKind::forest;
    }
    if (!std::getline(in, line))
        throw MalformedRecord("missing params line");
    int n_trees = 1;
    {
        std::istringstream fields(line);
        std::string word;
        fields >> word;
        if (word != "params") throw MalformedRecord("bad params line: " + line);
        std::string key;
        while (fields >> key) {
            if (key == "n_features") {
                fields >> model.n_features;
            } else if (key == "fingerprint") {
                std::string hex;
                fields >> hex;
                model.feature_fingerprint = std::stoull(hex, nullptr, 16);
            } else if (key == "min_leaf") {
                int v = 0;
                fields >> v;
                (model.kind == ModelKind::tree ? model.tree_params.min_leaf
                                               : model.forest_params.tree.min_leaf) = v;
            } else if (key == "max_depth") {
                int v = 0;
                fields >> v;
                (model.kind == ModelKind::tree ? model.tree_params.max_depth
                                               : model.forest_params.tree.max_depth) = v;
            } else if (key == "trees") {
                fields >> model.forest_params.n_trees;
                n_trees = model.forest_params.n_trees;
            } else if (key == "features_per_split") {
                fields >> model.forest_params.features_per_split;
            } else if (key == "bootstrap") {
                int v = 1;
                fields >> v;
                model.forest_params.bootstrap = v != 0;
            } else if (key == "seed") {
                fields >> model.forest_params.seed;
            } else {
                throw MalformedRecord("unknown model param: " + key);
            }
            if (!fields && !fields.eof())
                throw MalformedRecord("bad params line: " + line);
        }
    }
    if (model.kind == ModelKind::tree) n_trees = 1;
    for (int t = 0; t < n_trees; ++t) {
        DecisionTree tree;
        read_node(in, tree);
        model.trees.push_back(std::move(tree));
    }
    while (std::getline(in, line))
        if (!line.empty())
            throw MalformedRecord("trailing content after trees: " + line);
    return model;
}

TrainedModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoFailure("cannot open for read: " + path.string());
    return load_model(in);
}

} // namespace opcode_sieve
