#pragma once

/// CART regression trees: greedy variance-reduction splits, pre-pruning through
/// size/depth limits, minimal cost-complexity post-pruning, and the
/// point-to-leaf map that Locart uses as its feature-space partition.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "clover/data.hpp"

namespace clover {

inline constexpr std::size_t kUnbounded = std::numeric_limits<std::size_t>::max();

struct TreeParams {
    std::size_t min_samples_split = 100;
    std::size_t min_samples_leaf = 1;
    std::size_t max_depth = kUnbounded;

    friend bool operator==(const TreeParams&, const TreeParams&) = default;
};

struct SplitRule {
    std::size_t feature = 0;
    double threshold = 0.0;

    friend bool operator==(const SplitRule&, const SplitRule&) = default;
};

struct SplitCandidate {
    SplitRule rule;
    double child_sse = 0.0;
};

struct TreeNode {
    std::int32_t parent = -1;
    std::int32_t left = -1;
    std::int32_t right = -1;
    std::int32_t leaf_id = -1;  // dense 0..L-1 over leaves, -1 on internal nodes
    std::uint32_t feature = 0;
    double threshold = 0.0;
    double value = 0.0;  // mean response of the node's rows
    double sse = 0.0;    // sum of squared deviations from `value`
    std::uint32_t count = 0;
    std::uint32_t depth = 0;

    bool is_leaf() const noexcept { return left < 0; }
    friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

/// Split threshold strictly separating a < b: the midpoint, pulled back to `a`
/// when rounding would land it on `b`.
inline double midpoint_threshold(double a, double b) noexcept {
    double t = a / 2.0 + b / 2.0;
    if (!(t >= a && t < b)) t = a;
    return t;
}

/// Mean and SSE accumulated in the given row order; this is the exact SSE that
/// split selection and pruning compare.
inline std::pair<double, double> mean_and_sse(std::span<const double> y, std::span<const std::size_t> rows) {
    double sum = 0.0;
    for (auto r : rows) sum += y[r];
    const double mean = sum / static_cast<double>(rows.size());
    double sse = 0.0;
    for (auto r : rows) {
        const double d = y[r] - mean;
        sse += d * d;
    }
    return {mean, sse};
}

/// A split is admissible only if it lowers the node SSE by more than rounding noise.
inline bool reduces_sse(double child_sse, double node_sse) noexcept {
    return child_sse < node_sse * (1.0 - 1e-12);
}

class RegressionTree {
public:
    RegressionTree() = default;
    RegressionTree(TreeParams params, std::size_t n_features, std::vector<TreeNode> nodes)
        : params_(params), n_features_(n_features), nodes_(std::move(nodes)) {
        index_leaves();
    }

    const TreeParams& params() const noexcept { return params_; }
    std::size_t n_features() const noexcept { return n_features_; }
    const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }
    std::size_t leaf_count() const noexcept { return leaf_nodes_.size(); }
    /// Node index of each leaf, ordered by leaf id.
    const std::vector<std::int32_t>& leaf_nodes() const noexcept { return leaf_nodes_; }
    const TreeNode& root() const { return nodes_.front(); }

    /// Leaf id reached by descending x; x_j <= threshold goes left.
    std::size_t assign_leaf(std::span<const double> x) const {
        check_dim(x);
        return static_cast<std::size_t>(nodes_[descend(x)].leaf_id);
    }

    double predict(std::span<const double> x) const {
        check_dim(x);
        return nodes_[descend(x)].value;
    }

    /// Unchecked descent returning the node index; hot loops call this directly.
    std::size_t descend(std::span<const double> x) const noexcept {
        std::size_t i = 0;
        while (nodes_[i].left >= 0) {
            const auto& n = nodes_[i];
            i = static_cast<std::size_t>(x[n.feature] <= n.threshold ? n.left : n.right);
        }
        return i;
    }

    std::size_t leaf_of(std::span<const double> x) const noexcept {
        return static_cast<std::size_t>(nodes_[descend(x)].leaf_id);
    }

    friend bool operator==(const RegressionTree& a, const RegressionTree& b) {
        return a.params_ == b.params_ && a.n_features_ == b.n_features_ && a.nodes_ == b.nodes_;
    }

private:
    void check_dim(std::span<const double> x) const {
        if (x.size() != n_features_) throw Error("feature dimension mismatch");
    }

    void index_leaves() {
        leaf_nodes_.clear();
        for (std::size_t i = 0; i < nodes_.size(); ++i)
            if (nodes_[i].is_leaf()) {
                const auto id = static_cast<std::size_t>(nodes_[i].leaf_id);
                if (leaf_nodes_.size() <= id) leaf_nodes_.resize(id + 1, -1);
                leaf_nodes_[id] = static_cast<std::int32_t>(i);
            }
        for (auto n : leaf_nodes_)
            if (n < 0) throw Error("tree leaf ids are not dense");
    }

    TreeParams params_;
    std::size_t n_features_ = 0;
    std::vector<TreeNode> nodes_;
    std::vector<std::int32_t> leaf_nodes_;
};

namespace detail {

/// Presorted CART builder. Every per-feature order array and the
/// position-ordered array are partitioned in lockstep, so a node owns the same
/// [begin, end) segment in each of them.
class TreeBuilder {
public:
    TreeBuilder(const Matrix& X, std::span<const double> y, std::span<const std::size_t> rows, TreeParams params)
        : params_(params), d_(X.cols()), m_(rows.size()) {
        ys_.resize(m_);
        xcol_.assign(d_, std::vector<double>(m_));
        for (std::size_t p = 0; p < m_; ++p) {
            ys_[p] = y[rows[p]];
            const auto xr = X.row(rows[p]);
            for (std::size_t f = 0; f < d_; ++f) xcol_[f][p] = xr[f];
        }
        pos_.resize(m_);
        std::iota(pos_.begin(), pos_.end(), std::uint32_t{0});
        order_.assign(d_, pos_);
        xsorted_.assign(d_, std::vector<double>(m_));
        ysorted_.assign(d_, std::vector<double>(m_));
        for (std::size_t f = 0; f < d_; ++f) {
            const auto& xc = xcol_[f];
            std::stable_sort(order_[f].begin(), order_[f].end(),
                             [&xc](std::uint32_t a, std::uint32_t b) { return xc[a] < xc[b]; });
            for (std::size_t k = 0; k < m_; ++k) {
                xsorted_[f][k] = xc[order_[f][k]];
                ysorted_[f][k] = ys_[order_[f][k]];
            }
        }
        left_mask_.resize(m_);
        scratch_.resize(m_);
        scratch_x_.resize(m_);
        scratch_y_.resize(m_);
    }

    std::optional<SplitCandidate> root_split() {
        const auto [mean, sse] = segment_stats(0, m_);
        if (is_constant(0, m_)) return std::nullopt;
        return find_split(0, m_, mean, sse);
    }

    RegressionTree build() {
        struct Pending {
            std::size_t begin, end;
            std::int32_t parent;
            bool is_left;
            std::uint32_t depth;
        };
        std::vector<TreeNode> nodes;
        std::vector<Pending> stack{{0, m_, -1, false, 0}};
        std::int32_t next_leaf = 0;
        while (!stack.empty()) {
            const Pending job = stack.back();
            stack.pop_back();
            const auto id = static_cast<std::int32_t>(nodes.size());
            if (job.parent >= 0) (job.is_left ? nodes[job.parent].left : nodes[job.parent].right) = id;

            TreeNode node;
            node.parent = job.parent;
            node.depth = job.depth;
            node.count = static_cast<std::uint32_t>(job.end - job.begin);
            const bool constant = is_constant(job.begin, job.end);
            auto [mean, sse] = segment_stats(job.begin, job.end);
            if (constant) {
                mean = ys_[pos_[job.begin]];
                sse = 0.0;
            }
            node.value = mean;
            node.sse = sse;

            std::optional<SplitCandidate> split;
            const std::size_t count = job.end - job.begin;
            const bool depth_ok = params_.max_depth == kUnbounded || job.depth < params_.max_depth;
            if (count >= params_.min_samples_split && count >= 2 * params_.min_samples_leaf && depth_ok && !constant)
                split = find_split(job.begin, job.end, mean, sse);

            if (!split) {
                node.leaf_id = next_leaf++;
                nodes.push_back(node);
                continue;
            }
            node.feature = static_cast<std::uint32_t>(split->rule.feature);
            node.threshold = split->rule.threshold;
            nodes.push_back(node);
            const std::size_t mid = partition(job.begin, job.end, split->rule);
            stack.push_back({mid, job.end, id, false, job.depth + 1});
            stack.push_back({job.begin, mid, id, true, job.depth + 1});
        }
        return RegressionTree(params_, d_, std::move(nodes));
    }

private:
    struct Candidate {
        std::uint32_t feature;
        std::uint32_t index;  // last position (within the segment) of the left child
        double proxy;
    };

    std::pair<double, double> segment_stats(std::size_t begin, std::size_t end) const {
        double sum = 0.0;
        for (std::size_t k = begin; k < end; ++k) sum += ys_[pos_[k]];
        const double mean = sum / static_cast<double>(end - begin);
        double sse = 0.0;
        for (std::size_t k = begin; k < end; ++k) {
            const double dv = ys_[pos_[k]] - mean;
            sse += dv * dv;
        }
        return {mean, sse};
    }

    bool is_constant(std::size_t begin, std::size_t end) const {
        const double first = ys_[pos_[begin]];
        for (std::size_t k = begin + 1; k < end; ++k)
            if (ys_[pos_[k]] != first) return false;
        return true;
    }

    /// Screens every (feature, boundary) with running sums of centred responses,
    /// keeps all candidates within a rounding band of the best, and settles the
    /// choice with the exact two-pass SSE and the (sse, feature, threshold) order.
    std::optional<SplitCandidate> find_split(std::size_t begin, std::size_t end, double mean, double node_sse) {
        const std::size_t m = end - begin;
        const std::size_t min_leaf = std::max<std::size_t>(1, params_.min_samples_leaf);
        double total = 0.0, total_sq = 0.0;
        for (std::size_t k = begin; k < end; ++k) {
            const double v = ys_[pos_[k]] - mean;
            total += v;
            total_sq += v * v;
        }
        const double band = 1e-9 * node_sse;
        double best = std::numeric_limits<double>::infinity();
        cands_.clear();

        for (std::size_t f = 0; f < d_; ++f) {
            const double* xs = xsorted_[f].data() + begin;
            const double* yv = ysorted_[f].data() + begin;
            if (xs[0] == xs[m - 1]) continue;
            double sl = 0.0, ql = 0.0;
            for (std::size_t i = 0; i + 1 < m; ++i) {
                const double v = yv[i] - mean;
                sl += v;
                ql += v * v;
                const std::size_t nl = i + 1;
                const std::size_t nr = m - nl;
                if (nl < min_leaf) continue;
                if (nr < min_leaf) break;
                if (!(xs[i] < xs[i + 1])) continue;
                const double sr = total - sl;
                const double qr = total_sq - ql;
                const double proxy = (ql - sl * sl / static_cast<double>(nl)) + (qr - sr * sr / static_cast<double>(nr));
                if (proxy > best + band) continue;
                if (proxy < best) {
                    best = proxy;
                    std::erase_if(cands_, [&](const Candidate& c) { return c.proxy > best + band; });
                }
                cands_.push_back({static_cast<std::uint32_t>(f), static_cast<std::uint32_t>(i), proxy});
            }
        }
        if (cands_.empty()) return std::nullopt;

        std::optional<SplitCandidate> chosen;
        for (const auto& c : cands_) {
            if (c.proxy > best + band) continue;
            const auto& xs = xsorted_[c.feature];
            const double thr = midpoint_threshold(xs[begin + c.index], xs[begin + c.index + 1]);
            const double sse = exact_child_sse(begin, end, c.feature, thr);
            const SplitCandidate cand{{c.feature, thr}, sse};
            if (!chosen || sse < chosen->child_sse ||
                (sse == chosen->child_sse &&
                 (cand.rule.feature < chosen->rule.feature ||
                  (cand.rule.feature == chosen->rule.feature && thr < chosen->rule.threshold))))
                chosen = cand;
        }
        if (!chosen || !reduces_sse(chosen->child_sse, node_sse)) return std::nullopt;
        return chosen;
    }

    double exact_child_sse(std::size_t begin, std::size_t end, std::size_t f, double thr) {
        const auto& xc = xcol_[f];
        double sum_l = 0.0, sum_r = 0.0;
        std::size_t nl = 0, nr = 0;
        for (std::size_t k = begin; k < end; ++k) {
            const auto p = pos_[k];
            if (xc[p] <= thr) {
                sum_l += ys_[p];
                ++nl;
            } else {
                sum_r += ys_[p];
                ++nr;
            }
        }
        const double ml = sum_l / static_cast<double>(nl);
        const double mr = sum_r / static_cast<double>(nr);
        double sse_l = 0.0, sse_r = 0.0;
        for (std::size_t k = begin; k < end; ++k) {
            const auto p = pos_[k];
            if (xc[p] <= thr) {
                const double dv = ys_[p] - ml;
                sse_l += dv * dv;
            } else {
                const double dv = ys_[p] - mr;
                sse_r += dv * dv;
            }
        }
        return sse_l + sse_r;
    }

    std::size_t partition(std::size_t begin, std::size_t end, const SplitRule& rule) {
        const auto& xc = xcol_[rule.feature];
        for (std::size_t k = begin; k < end; ++k) left_mask_[pos_[k]] = xc[pos_[k]] <= rule.threshold;
        std::size_t mid = begin;
        auto split_segment = [&](std::vector<std::uint32_t>& arr) {
            std::size_t l = begin, r = 0;
            for (std::size_t k = begin; k < end; ++k) {
                const auto p = arr[k];
                if (left_mask_[p])
                    arr[l++] = p;
                else
                    scratch_[r++] = p;
            }
            std::copy(scratch_.begin(), scratch_.begin() + static_cast<std::ptrdiff_t>(r),
                      arr.begin() + static_cast<std::ptrdiff_t>(l));
            mid = l;
        };
        split_segment(pos_);
        for (std::size_t f = 0; f < d_; ++f) {
            auto& ord = order_[f];
            auto& xs = xsorted_[f];
            auto& yv = ysorted_[f];
            std::size_t l = begin, r = 0;
            for (std::size_t k = begin; k < end; ++k) {
                const auto p = ord[k];
                if (left_mask_[p]) {
                    ord[l] = p;
                    xs[l] = xs[k];
                    yv[l] = yv[k];
                    ++l;
                } else {
                    scratch_[r] = p;
                    scratch_x_[r] = xs[k];
                    scratch_y_[r] = yv[k];
                    ++r;
                }
            }
            std::copy_n(scratch_.begin(), r, ord.begin() + static_cast<std::ptrdiff_t>(l));
            std::copy_n(scratch_x_.begin(), r, xs.begin() + static_cast<std::ptrdiff_t>(l));
            std::copy_n(scratch_y_.begin(), r, yv.begin() + static_cast<std::ptrdiff_t>(l));
        }
        return mid;
    }

    TreeParams params_;
    std::size_t d_;
    std::size_t m_;
    std::vector<double> ys_;
    std::vector<std::vector<double>> xcol_;
    std::vector<std::uint32_t> pos_;
    std::vector<std::vector<std::uint32_t>> order_;
    std::vector<std::vector<double>> xsorted_;  // x values in order_[f] order
    std::vector<std::vector<double>> ysorted_;  // responses in order_[f] order
    std::vector<char> left_mask_;
    std::vector<std::uint32_t> scratch_;
    std::vector<double> scratch_x_, scratch_y_;
    std::vector<Candidate> cands_;
};

inline std::vector<std::size_t> all_rows(std::size_t n) {
    std::vector<std::size_t> rows(n);
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    return rows;
}

}  // namespace detail

/// Best variance-reduction split of the given rows (a multiset of row indices).
/// Ties go to the lowest feature index, then the smallest threshold. Returns
/// nothing when no admissible split strictly lowers the SSE.
inline std::optional<SplitCandidate> best_split(const Matrix& X, std::span<const double> y,
                                                std::span<const std::size_t> rows, const TreeParams& params) {
    if (rows.size() < 2) return std::nullopt;
    detail::TreeBuilder builder(X, y, rows, params);
    return builder.root_split();
}

inline RegressionTree fit_tree(const Matrix& X, std::span<const double> y, const TreeParams& params,
                               std::span<const std::size_t> rows) {
    if (rows.empty()) throw Error("fit_tree: empty dataset");
    if (X.cols() == 0) throw Error("fit_tree: no features");
    if (X.rows() != y.size()) throw Error("fit_tree: feature rows and response length differ");
    detail::TreeBuilder builder(X, y, rows, params);
    return builder.build();
}

inline RegressionTree fit_tree(const Matrix& X, std::span<const double> y, const TreeParams& params) {
    const auto rows = detail::all_rows(X.rows());
    return fit_tree(X, y, params, rows);
}

// ---------------------------------------------------------------------------
// Cost-complexity pruning

struct PruningStep {
    double alpha = 0.0;
    RegressionTree tree;
};

/// Copy of `tree` with every node flagged in `collapsed` turned into a leaf.
/// Node order stays preorder and leaf ids are renumbered densely.
inline RegressionTree collapse_nodes(const RegressionTree& tree, const std::vector<char>& collapsed) {
    const auto& src = tree.nodes();
    std::vector<std::int32_t> remap(src.size(), -1);
    std::vector<TreeNode> out;
    std::int32_t next_leaf = 0;
    for (std::size_t i = 0; i < src.size(); ++i) {
        const auto& n = src[i];
        if (n.parent >= 0) {
            const auto& par = src[static_cast<std::size_t>(n.parent)];
            if (remap[static_cast<std::size_t>(n.parent)] < 0 || collapsed[static_cast<std::size_t>(n.parent)] ||
                par.is_leaf())
                continue;
        }
        remap[i] = static_cast<std::int32_t>(out.size());
        TreeNode copy = n;
        copy.parent = n.parent >= 0 ? remap[static_cast<std::size_t>(n.parent)] : -1;
        if (n.is_leaf() || collapsed[i]) {
            copy.left = copy.right = -1;
            copy.feature = 0;
            copy.threshold = 0.0;
            copy.leaf_id = next_leaf++;
        }
        out.push_back(copy);
    }
    // Children were emitted after their parents; patch the links.
    for (std::size_t i = 0; i < src.size(); ++i) {
        if (remap[i] < 0) continue;
        auto& n = out[static_cast<std::size_t>(remap[i])];
        if (n.left >= 0) {
            n.left = remap[static_cast<std::size_t>(src[i].left)];
            n.right = remap[static_cast<std::size_t>(src[i].right)];
        }
    }
    return RegressionTree(tree.params(), tree.n_features(), std::move(out));
}

/// Minimal cost-complexity pruning sequence. Each step collapses every internal
/// node whose g(t) = (SSE(t) - SSE(T_t)) / (|T_t| - 1) attains the current
/// minimum; the first element is (0, full tree) and the last is the root alone.
inline std::vector<PruningStep> pruning_path(const RegressionTree& tree) {
    std::vector<PruningStep> path{{0.0, tree}};
    const auto& nodes = tree.nodes();
    const std::size_t n = nodes.size();
    if (n <= 1) return path;

    std::vector<char> collapsed(n, 0);
    std::vector<char> active(n, 0);
    std::vector<double> subtree_sse(n);
    std::vector<std::size_t> subtree_leaves(n);
    std::vector<double> g(n);

    auto refresh = [&] {
        for (std::size_t i = 0; i < n; ++i) {
            const auto& nd = nodes[i];
            active[i] = nd.parent < 0 || (active[static_cast<std::size_t>(nd.parent)] &&
                                          !collapsed[static_cast<std::size_t>(nd.parent)]);
        }
        for (std::size_t k = n; k-- > 0;) {
            const auto& nd = nodes[k];
            if (nd.is_leaf() || collapsed[k]) {
                subtree_sse[k] = nd.sse;
                subtree_leaves[k] = 1;
            } else {
                const auto l = static_cast<std::size_t>(nd.left), r = static_cast<std::size_t>(nd.right);
                subtree_sse[k] = subtree_sse[l] + subtree_sse[r];
                subtree_leaves[k] = subtree_leaves[l] + subtree_leaves[r];
            }
            g[k] = std::numeric_limits<double>::infinity();
            if (active[k] && !nd.is_leaf() && !collapsed[k])
                g[k] = std::max(0.0, nd.sse - subtree_sse[k]) / static_cast<double>(subtree_leaves[k] - 1);
        }
    };

    double last_alpha = 0.0;
    while (!collapsed[0]) {
        refresh();
        const double alpha = *std::min_element(g.begin(), g.end());
        const double band = alpha + 1e-12 * std::max(1.0, std::abs(alpha));
        // Collapsing can drop an ancestor's g onto the same level; sweep until stable.
        for (bool changed = true; changed;) {
            changed = false;
            for (std::size_t k = 0; k < n; ++k)
                if (g[k] <= band) {
                    collapsed[k] = 1;
                    changed = true;
                }
            if (changed) refresh();
            if (collapsed[0]) break;
        }
        last_alpha = std::max(alpha, last_alpha);
        path.push_back({last_alpha, collapse_nodes(tree, collapsed)});
    }
    return path;
}

inline double mean_squared_error(const RegressionTree& tree, const Matrix& X, std::span<const double> y) {
    double acc = 0.0;
    for (std::size_t i = 0; i < X.rows(); ++i) {
        const double e = y[i] - tree.nodes()[tree.descend(X.row(i))].value;
        acc += e * e;
    }
    return acc / static_cast<double>(X.rows());
}

/// Subtree on the pruning path with the lowest validation MSE; ties go to the
/// smaller tree.
inline RegressionTree select_pruned_tree(const RegressionTree& tree, const Matrix& X_val, std::span<const double> y_val) {
    if (X_val.rows() == 0) throw Error("select_pruned_tree: empty validation set");
    auto path = pruning_path(tree);
    std::size_t best = 0;
    double best_mse = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < path.size(); ++k) {
        const double mse = mean_squared_error(path[k].tree, X_val, y_val);
        if (mse < best_mse || (mse == best_mse && path[k].tree.leaf_count() < path[best].tree.leaf_count())) {
            best = k;
            best_mse = mse;
        }
    }
    return std::move(path[best].tree);
}

}  // namespace clover
