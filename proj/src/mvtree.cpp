#include "mgpatree/mvtree.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <iomanip>
#include <sstream>

#include "mgpatree/errors.hpp"

namespace mgpa {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Rows = std::vector<Eigen::Index>;

// Gains within this relative distance are ties; the lower annotation index wins.
constexpr double kTieTolerance = 1e-10;
// Splits must beat this fraction of the root deviance to count as positive.
constexpr double kMinGainFraction = 1e-12;
// Responses live in [0,1]; a deviance below this per cell is rounding residue.
constexpr double kZeroDeviancePerCell = 1e-24;

class Grower {
 public:
  Grower(const BinaryMatrix& annotations, const Matrix& responses, const TreeConfig& config)
      : annotations_(annotations),
        responses_(responses),
        config_(config),
        states_(static_cast<int>(responses.cols())),
        used_(static_cast<std::size_t>(annotations.cols()), false) {}

  std::vector<TreeNode> build(Rows rows) {
    build_node(rows, 0);
    return std::move(nodes_);
  }

  double root_deviance() const { return root_deviance_; }

 private:
  int build_node(const Rows& rows, int depth) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    const auto n = static_cast<double>(rows.size());

    std::vector<double> total(static_cast<std::size_t>(states_), 0.0);
    for (Eigen::Index r : rows) {
      for (int s = 0; s < states_; ++s) total[static_cast<std::size_t>(s)] += responses_(r, s);
    }
    std::vector<double> mean(total);
    for (double& m : mean) m /= n;
    double deviance = 0.0;
    for (Eigen::Index r : rows) {
      for (int s = 0; s < states_; ++s) {
        const double e = responses_(r, s) - mean[static_cast<std::size_t>(s)];
        deviance += e * e;
      }
    }
    if (id == 0) root_deviance_ = deviance;
    {
      TreeNode& node = nodes_[static_cast<std::size_t>(id)];
      node.depth = depth;
      node.count = rows.size();
      node.deviance = deviance;
      node.mean = mean;
    }

    if (depth >= config_.max_depth || rows.size() < 2 * config_.min_leaf ||
        root_deviance_ <= kZeroDeviancePerCell * static_cast<double>(responses_.size())) {
      return id;
    }

    const double min_gain = kMinGainFraction * root_deviance_;
    int best = -1;
    double best_gain = min_gain;
    std::vector<double> sum1(static_cast<std::size_t>(states_));
    for (Eigen::Index k = 0; k < annotations_.cols(); ++k) {
      if (used_[static_cast<std::size_t>(k)]) continue;
      std::fill(sum1.begin(), sum1.end(), 0.0);
      std::size_t n1 = 0;
      for (Eigen::Index r : rows) {
        if (annotations_(r, k) == 0) continue;
        ++n1;
        for (int s = 0; s < states_; ++s) sum1[static_cast<std::size_t>(s)] += responses_(r, s);
      }
      const std::size_t n0 = rows.size() - n1;
      if (n0 < config_.min_leaf || n1 < config_.min_leaf) continue;
      // SSE(node) - SSE(left) - SSE(right) = n0 n1 / n * |mean0 - mean1|^2
      double dist = 0.0;
      for (int s = 0; s < states_; ++s) {
        const auto si = static_cast<std::size_t>(s);
        const double m1 = sum1[si] / static_cast<double>(n1);
        const double m0 = (total[si] - sum1[si]) / static_cast<double>(n0);
        dist += (m0 - m1) * (m0 - m1);
      }
      const double gain = static_cast<double>(n0) * static_cast<double>(n1) / n * dist;
      if (gain > best_gain * (1.0 + kTieTolerance)) {
        best = static_cast<int>(k);
        best_gain = gain;
      }
    }
    if (best < 0) return id;

    Rows left, right;
    left.reserve(rows.size());
    right.reserve(rows.size());
    for (Eigen::Index r : rows) (annotations_(r, best) ? right : left).push_back(r);

    used_[static_cast<std::size_t>(best)] = true;
    const int left_id = build_node(left, depth + 1);
    const int right_id = build_node(right, depth + 1);
    used_[static_cast<std::size_t>(best)] = false;

    TreeNode& node = nodes_[static_cast<std::size_t>(id)];
    node.annotation = best;
    node.improvement = best_gain;
    node.left = left_id;
    node.right = right_id;
    return id;
  }

  const BinaryMatrix& annotations_;
  RowMatrix responses_;
  const TreeConfig& config_;
  int states_;
  std::vector<bool> used_;
  std::vector<TreeNode> nodes_;
  double root_deviance_ = 0.0;
};

std::string format_number(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

}  // namespace

std::size_t default_min_leaf(std::size_t snps) {
  const auto scaled = static_cast<std::size_t>(std::ceil(0.001 * static_cast<double>(snps)));
  return std::max<std::size_t>(20, scaled);
}

TreeConfig TreeConfig::defaults_for(std::size_t snps) {
  TreeConfig config;
  config.min_leaf = default_min_leaf(snps);
  return config;
}

void TreeConfig::validate() const {
  if (!(cp >= 0.0 && cp < 1.0)) throw ConfigError("cp must be in [0, 1)");
  if (min_leaf < 1) throw ConfigError("min_leaf must be >= 1");
  if (max_depth < 1) throw ConfigError("max_depth must be >= 1");
}

AnnotationTree::AnnotationTree(std::vector<TreeNode> nodes, std::vector<std::string> annotation_names,
                               double root_deviance)
    : nodes_(std::move(nodes)),
      annotation_names_(std::move(annotation_names)),
      root_deviance_(root_deviance) {
  if (nodes_.empty()) throw ShapeError("tree has no nodes");
  for (const auto& node : nodes_) {
    if (!node.is_leaf() && (node.annotation >= static_cast<int>(annotation_names_.size()) ||
                            node.left <= 0 || node.right <= 0)) {
      throw ShapeError("malformed tree node");
    }
  }
}

AnnotationTree AnnotationTree::single_leaf(const Vector& mean, std::size_t count,
                                           std::vector<std::string> annotation_names) {
  TreeNode leaf;
  leaf.count = count;
  leaf.mean.assign(mean.data(), mean.data() + mean.size());
  return AnnotationTree({leaf}, std::move(annotation_names), 0.0);
}

std::size_t AnnotationTree::leaf_count() const {
  return static_cast<std::size_t>(
      std::count_if(nodes_.begin(), nodes_.end(), [](const TreeNode& n) { return n.is_leaf(); }));
}

int AnnotationTree::route(const BinaryMatrix& values, Eigen::Index row) const {
  int id = 0;
  while (!nodes_[static_cast<std::size_t>(id)].is_leaf()) {
    const TreeNode& node = nodes_[static_cast<std::size_t>(id)];
    if (node.annotation >= values.cols()) {
      throw ShapeError("tree splits on annotation " + std::to_string(node.annotation) +
                       " but panel has " + std::to_string(values.cols()));
    }
    id = values(row, node.annotation) ? node.right : node.left;
  }
  return id;
}

std::string AnnotationTree::to_text() const {
  std::ostringstream os;
  std::function<void(int, const std::string&)> emit = [&](int id, const std::string& label) {
    const TreeNode& node = nodes_[static_cast<std::size_t>(id)];
    os << std::string(static_cast<std::size_t>(2 * node.depth), ' ') << label
       << " n=" << node.count << " dev=" << format_number(node.deviance);
    if (node.is_leaf()) {
      os << " mean=(";
      for (std::size_t s = 0; s < node.mean.size(); ++s) {
        os << (s ? ", " : "") << format_number(node.mean[s]);
      }
      os << ")\n";
      return;
    }
    const std::string& name = annotation_names_[static_cast<std::size_t>(node.annotation)];
    os << " split=" << name << " improvement=" << format_number(node.improvement) << "\n";
    emit(node.left, name + "=0");
    emit(node.right, name + "=1");
  };
  emit(0, "root");
  return os.str();
}

nlohmann::json AnnotationTree::to_json() const {
  nlohmann::json out;
  out["root_deviance"] = root_deviance_;
  out["leaves"] = leaf_count();
  auto& list = out["nodes"] = nlohmann::json::array();
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    const TreeNode& node = nodes_[id];
    nlohmann::json j;
    j["id"] = id;
    j["depth"] = node.depth;
    j["count"] = node.count;
    j["deviance"] = node.deviance;
    j["mean"] = node.mean;
    if (node.is_leaf()) {
      j["annotation"] = nullptr;
    } else {
      j["annotation"] = annotation_names_[static_cast<std::size_t>(node.annotation)];
      j["improvement"] = node.improvement;
      j["left"] = node.left;
      j["right"] = node.right;
    }
    list.push_back(std::move(j));
  }
  return out;
}

AnnotationTree grow(const AnnotationPanel& annotations, const ProbMatrix& responses,
                    const TreeConfig& config) {
  config.validate();
  if (annotations.snps() != responses.rows()) {
    throw ShapeError("annotation rows (" + std::to_string(annotations.snps()) +
                     ") != response rows (" + std::to_string(responses.rows()) + ")");
  }
  Rows rows(annotations.snps());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = static_cast<Eigen::Index>(i);
  Grower grower(annotations.values(), responses.values(), config);
  auto nodes = grower.build(std::move(rows));
  return AnnotationTree(std::move(nodes), annotations.names(), grower.root_deviance());
}

AnnotationTree prune(const AnnotationTree& tree, double cp) {
  if (!(cp >= 0.0 && cp < 1.0)) throw ConfigError("cp must be in [0, 1)");
  const double threshold = cp * tree.root_deviance();
  const auto& source = tree.nodes();
  std::vector<TreeNode> kept;
  // Pre-order copy; a node below threshold becomes a leaf and its subtree is dropped.
  std::function<int(int)> copy = [&](int id) {
    const TreeNode& node = source[static_cast<std::size_t>(id)];
    const int new_id = static_cast<int>(kept.size());
    kept.push_back(node);
    if (node.is_leaf()) return new_id;
    if (node.improvement < threshold) {
      TreeNode& leaf = kept.back();
      leaf.annotation = -1;
      leaf.left = leaf.right = -1;
      leaf.improvement = 0.0;
      return new_id;
    }
    const int left = copy(node.left);
    const int right = copy(node.right);
    kept[static_cast<std::size_t>(new_id)].left = left;
    kept[static_cast<std::size_t>(new_id)].right = right;
    return new_id;
  };
  copy(0);
  return AnnotationTree(std::move(kept), tree.annotation_names(), tree.root_deviance());
}

ProbMatrix predict(const AnnotationTree& tree, const AnnotationPanel& annotations) {
  const auto rows = static_cast<Eigen::Index>(annotations.snps());
  Matrix out(rows, tree.states());
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& mean = tree.nodes()[static_cast<std::size_t>(tree.route(annotations.values(), i))].mean;
    for (int s = 0; s < tree.states(); ++s) out(i, s) = mean[static_cast<std::size_t>(s)];
  }
  return ProbMatrix(std::move(out), ProbRole::kPrior);
}

std::vector<std::string> selected_annotations(const AnnotationTree& tree) {
  std::vector<std::string> out;
  std::deque<int> queue{0};
  while (!queue.empty()) {
    const TreeNode& node = tree.nodes()[static_cast<std::size_t>(queue.front())];
    queue.pop_front();
    if (node.is_leaf()) continue;
    const auto& name = tree.annotation_names()[static_cast<std::size_t>(node.annotation)];
    if (std::find(out.begin(), out.end(), name) == out.end()) out.push_back(name);
    queue.push_back(node.left);
    queue.push_back(node.right);
  }
  return out;
}

}  // namespace mgpa
