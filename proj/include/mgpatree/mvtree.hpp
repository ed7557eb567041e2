#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

#include "mgpatree/model.hpp"

namespace mgpa {

// Multivariate regression tree over binary annotations. Responses are the
// S columns of a row-stochastic matrix; impurity is the summed per-column SSE.

std::size_t default_min_leaf(std::size_t snps);

struct TreeConfig {
  double cp = 0.01;           // fraction of root deviance a split must explain
  std::size_t min_leaf = 20;  // minimum training rows per leaf
  int max_depth = 10;         // root has depth 0

  static TreeConfig defaults_for(std::size_t snps);
  void validate() const;
};

struct TreeNode {
  int annotation = -1;  // split annotation index, -1 for a leaf
  int left = -1;        // child with annotation == 0
  int right = -1;       // child with annotation == 1
  int depth = 0;
  std::size_t count = 0;
  double deviance = 0.0;
  double improvement = 0.0;
  std::vector<double> mean;  // column means of the node's training rows

  bool is_leaf() const { return annotation < 0; }
  bool operator==(const TreeNode&) const = default;
};

class AnnotationTree {
 public:
  AnnotationTree(std::vector<TreeNode> nodes, std::vector<std::string> annotation_names,
                 double root_deviance);

  static AnnotationTree single_leaf(const Vector& mean, std::size_t count,
                                    std::vector<std::string> annotation_names);

  // nodes()[0] is the root; children follow in pre-order.
  const std::vector<TreeNode>& nodes() const { return nodes_; }
  const TreeNode& root() const { return nodes_.front(); }
  const std::vector<std::string>& annotation_names() const { return annotation_names_; }
  double root_deviance() const { return root_deviance_; }
  int states() const { return static_cast<int>(root().mean.size()); }
  std::size_t leaf_count() const;
  std::size_t internal_count() const { return nodes_.size() - leaf_count(); }

  // Index of the leaf reached by row `row` of `values`.
  int route(const BinaryMatrix& values, Eigen::Index row) const;

  std::string to_text() const;
  nlohmann::json to_json() const;

  bool operator==(const AnnotationTree&) const = default;

 private:
  std::vector<TreeNode> nodes_;
  std::vector<std::string> annotation_names_;
  double root_deviance_;
};

AnnotationTree grow(const AnnotationPanel& annotations, const ProbMatrix& responses,
                    const TreeConfig& config);
AnnotationTree prune(const AnnotationTree& tree, double cp);
ProbMatrix predict(const AnnotationTree& tree, const AnnotationPanel& annotations);
std::vector<std::string> selected_annotations(const AnnotationTree& tree);

}  // namespace mgpa
