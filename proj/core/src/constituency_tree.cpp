#include "nlidb/constituency_tree.hpp"

#include <cctype>
#include <stdexcept>

namespace nlidb {

ConstituencyTree ConstituencyTree::parse(std::string_view s) {
  ConstituencyTree tree;
  std::vector<int> stack;
  std::size_t i = 0;
  const std::size_t n = s.size();
  auto skip_ws = [&] {
    while (i < n && std::isspace(static_cast<unsigned char>(s[i])) != 0) {
      ++i;
    }
  };
  auto read_atom = [&] {
    std::size_t start = i;
    while (i < n && s[i] != '(' && s[i] != ')' && std::isspace(static_cast<unsigned char>(s[i])) == 0) {
      ++i;
    }
    return std::string(s.substr(start, i - start));
  };
  auto add_node = [&](std::string label) {
    Node node;
    node.label = std::move(label);
    if (!stack.empty()) {
      node.parent = stack.back();
      node.depth = tree.nodes_[static_cast<std::size_t>(node.parent)].depth + 1;
    }
    tree.nodes_.push_back(std::move(node));
    return static_cast<int>(tree.nodes_.size()) - 1;
  };

  skip_ws();
  while (i < n) {
    if (s[i] == '(') {
      if (stack.empty() && !tree.nodes_.empty()) {
        throw std::invalid_argument("constituency tree has more than one root");
      }
      ++i;
      skip_ws();
      std::string label = (i < n && s[i] != '(' && s[i] != ')') ? read_atom() : std::string();
      stack.push_back(add_node(std::move(label)));
    } else if (s[i] == ')') {
      if (stack.empty()) {
        throw std::invalid_argument("unbalanced ')' in constituency tree");
      }
      stack.pop_back();
      ++i;
    } else {
      if (stack.empty()) {
        throw std::invalid_argument("terminal outside of brackets in constituency tree");
      }
      int leaf = add_node(read_atom());
      tree.leaves_.push_back(leaf);
    }
    skip_ws();
  }
  if (!stack.empty()) {
    throw std::invalid_argument("unbalanced '(' in constituency tree");
  }
  if (tree.nodes_.empty()) {
    throw std::invalid_argument("empty constituency tree");
  }
  return tree;
}

int ConstituencyTree::lca_depth(int i, int j) const {
  if (i < 0 || j < 0 || i >= leaf_count() || j >= leaf_count()) {
    throw std::out_of_range("leaf index out of range");
  }
  int a = leaves_[static_cast<std::size_t>(i)];
  int b = leaves_[static_cast<std::size_t>(j)];
  while (nodes_[static_cast<std::size_t>(a)].depth > nodes_[static_cast<std::size_t>(b)].depth) {
    a = nodes_[static_cast<std::size_t>(a)].parent;
  }
  while (nodes_[static_cast<std::size_t>(b)].depth > nodes_[static_cast<std::size_t>(a)].depth) {
    b = nodes_[static_cast<std::size_t>(b)].parent;
  }
  while (a != b) {
    a = nodes_[static_cast<std::size_t>(a)].parent;
    b = nodes_[static_cast<std::size_t>(b)].parent;
  }
  return nodes_[static_cast<std::size_t>(a)].depth;
}

} // namespace nlidb
