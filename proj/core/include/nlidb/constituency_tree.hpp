#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace nlidb {

/// Rooted ordered tree read from PTB-style brackets. Terminals become leaves,
/// one per question token, in reading order. The root has depth 0.
class ConstituencyTree {
 public:
  struct Node {
    std::string label;
    int parent = -1;
    int depth = 0;
  };

  /// Throws std::invalid_argument on unbalanced or empty input.
  static ConstituencyTree parse(std::string_view bracketed);

  int leaf_count() const { return static_cast<int>(leaves_.size()); }
  const std::vector<Node>& nodes() const { return nodes_; }
  const std::string& leaf_label(int i) const { return nodes_.at(leaves_.at(i)).label; }
  int leaf_depth(int i) const { return nodes_.at(leaves_.at(i)).depth; }

  /// Depth of the lowest common ancestor of leaves i and j. Throws
  /// std::out_of_range for bad indices.
  int lca_depth(int i, int j) const;

 private:
  std::vector<Node> nodes_;
  std::vector<int> leaves_;
};

} // namespace nlidb
