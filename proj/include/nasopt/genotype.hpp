#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nasopt/rng.hpp"

namespace nasopt {

// Cell layout: node 1 is the cell input, node 7 the cell output, nodes 2..6
// are intermediate. Edges run from lower to higher index only.
inline constexpr int kCellNodes = 7;
inline constexpr int kIntermediateNodes = 5;
inline constexpr int kEdgeGenes = 21;
inline constexpr int kOpGenes = 5;
inline constexpr int kGenotypeLength = kEdgeGenes + kOpGenes + 1;

enum class CellOp : std::uint8_t { conv3x3 = 0, max_pool3x3 = 1, avg_pool3x3 = 2 };

/// Position of edge (i, j), 1 <= i < j <= 7, in the lexicographic edge order.
int edge_index(int i, int j);

/// Alphabet size of each of the 27 genes (2 for edges and batch, 3 for ops).
std::span<const int> gene_alphabets();

struct Genotype {
  std::array<std::uint8_t, kEdgeGenes> edges{};
  std::array<std::uint8_t, kOpGenes> ops{};  // nodes 2..6
  std::uint8_t batch = 0;                    // 0 -> batch size 1, 1 -> 32

  /// Parses `E:<21 x 0/1>|O:<5 x 0/1/2>|B:<0|1>`. Throws ParseError.
  static Genotype parse(std::string_view text);
  /// Builds from the flat 27-gene vector. Throws ParseError on alphabet violations.
  static Genotype from_genes(std::span<const int> genes);

  std::string str() const;
  std::array<int, kGenotypeLength> genes() const;
  int batch_size() const noexcept { return batch ? 32 : 1; }
  bool edge(int i, int j) const { return edges[edge_index(i, j)] != 0; }

  friend bool operator==(const Genotype&, const Genotype&) = default;
};

/// Decoded DAG over nodes 1..7 (1-based accessors).
class CellGraph {
 public:
  bool edge(int i, int j) const { return adj_[i - 1][j - 1]; }
  void set_edge(int i, int j, bool on);
  CellOp op(int node) const { return ops_[node - 2]; }
  void set_op(int node, CellOp op) { ops_[node - 2] = op; }
  std::uint8_t batch() const noexcept { return batch_; }
  void set_batch(std::uint8_t b) noexcept { batch_ = b; }

  int edge_count() const;
  /// Node lies on some input -> output path (nodes 1 and 7 included).
  bool on_io_path(int node) const;
  bool has_io_path() const { return on_io_path(1); }
  /// Intermediate node touched by at least one edge.
  bool connected(int node) const;
  /// Intermediate nodes on an input -> output path, ascending.
  std::vector<int> active_intermediates() const;
  std::vector<int> predecessors(int node) const;

  /// Copy with the ops of isolated intermediate nodes reset to conv, so graphs
  /// that differ only in unused ops compare equal.
  CellGraph normalized() const;

  friend bool operator==(const CellGraph&, const CellGraph&) = default;

 private:
  void refresh_paths();

  std::array<std::array<bool, kCellNodes>, kCellNodes> adj_{};
  std::array<CellOp, kIntermediateNodes> ops_{};
  std::uint8_t batch_ = 0;
  std::array<bool, kCellNodes> from_input_{};
  std::array<bool, kCellNodes> to_output_{};
};

CellGraph decode(const Genotype& genotype);
Genotype encode(const CellGraph& graph);

struct PenaltyConfig {
  double eta1 = 1e6;  // per edge above the limit
  double eta2 = 1e6;  // per dangling node

  void validate() const;
};

inline constexpr int kMaxEdges = 9;
/// Kappa charged when no input -> output path exists.
inline constexpr int kNoPathKappa = 6;
/// Added to the penalty of a genotype that is never trained, so any trained
/// cost dominates it.
inline constexpr double kInvalidCostOffset = 1e12;

struct ValidityReport {
  int edge_count = 0;
  bool has_io_path = false;
  int kappa = 0;  // connected intermediates off every io path (6 if no path)
  double penalty = 0.0;

  bool valid() const noexcept { return penalty == 0.0; }
};

ValidityReport validate(const CellGraph& graph, const PenaltyConfig& cfg = {});

/// Each gene independently uniform over its alphabet.
Genotype sample_uniform(Rng& rng);
Genotype sample_uniform(std::uint64_t seed);

/// 2^21 * 3^5 * 2.
std::uint64_t space_size();

/// Key shared by exactly the graphs that are equal up to a relabeling of the
/// intermediate nodes (edges, per-node ops and batch gene preserved).
/// Colour refinement over in/out neighbourhoods, then the lexicographically
/// smallest adjacency code over orderings of the remaining colour ties.
std::string canonical_form(const CellGraph& graph);
/// canonical_form of the normalized graph; used for search deduplication.
std::string dedup_key(const Genotype& genotype);

/// Every genotype of the reduced space with `max_nodes` nodes (input, output
/// and max_nodes-2 intermediates), embedded in the 7-node layout: reduced node
/// k < max_nodes maps to node k, the reduced output maps to node 7, unused
/// intermediates stay isolated with op 0, batch gene fixed at 0.
/// Throws CapacityError for max_nodes > 5 and ConfigError for max_nodes < 2.
std::vector<Genotype> enumerate_reduced(int max_nodes);

}  // namespace nasopt
