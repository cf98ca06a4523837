#include "nasopt/genotype.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <tuple>

#include "nasopt/errors.hpp"

namespace nasopt {

namespace {

constexpr std::array<int, kGenotypeLength> kAlphabets = [] {
  std::array<int, kGenotypeLength> a{};
  for (int i = 0; i < kEdgeGenes; ++i) a[i] = 2;
  for (int i = 0; i < kOpGenes; ++i) a[kEdgeGenes + i] = 3;
  a[kGenotypeLength - 1] = 2;
  return a;
}();

}  // namespace

int edge_index(int i, int j) {
  if (i < 1 || j > kCellNodes || i >= j) {
    throw DomainError("edge (" + std::to_string(i) + "," + std::to_string(j) + ") is not a forward edge");
  }
  // rows 1..i-1 contribute (7-r) edges each
  int idx = 0;
  for (int r = 1; r < i; ++r) idx += kCellNodes - r;
  return idx + (j - i - 1);
}

std::span<const int> gene_alphabets() { return kAlphabets; }

// ------------------------------------------------------------------ Genotype

Genotype Genotype::parse(std::string_view text) {
  constexpr std::size_t kLen = 2 + kEdgeGenes + 3 + kOpGenes + 3 + 1;
  auto fail = [&](const std::string& why) -> ParseError {
    return ParseError("malformed genotype '" + std::string(text) + "': " + why);
  };
  if (text.size() != kLen) throw fail("expected " + std::to_string(kLen) + " characters");
  if (text.substr(0, 2) != "E:" || text.substr(2 + kEdgeGenes, 3) != "|O:" ||
      text.substr(2 + kEdgeGenes + 3 + kOpGenes, 3) != "|B:") {
    throw fail("expected layout E:<21>|O:<5>|B:<1>");
  }
  Genotype g;
  for (int i = 0; i < kEdgeGenes; ++i) {
    const char c = text[2 + i];
    if (c != '0' && c != '1') throw fail("edge gene " + std::to_string(i) + " must be 0 or 1");
    g.edges[i] = static_cast<std::uint8_t>(c - '0');
  }
  for (int i = 0; i < kOpGenes; ++i) {
    const char c = text[2 + kEdgeGenes + 3 + i];
    if (c < '0' || c > '2') throw fail("op gene " + std::to_string(i) + " must be 0, 1 or 2");
    g.ops[i] = static_cast<std::uint8_t>(c - '0');
  }
  const char b = text.back();
  if (b != '0' && b != '1') throw fail("batch gene must be 0 or 1");
  g.batch = static_cast<std::uint8_t>(b - '0');
  return g;
}

Genotype Genotype::from_genes(std::span<const int> genes) {
  if (genes.size() != kGenotypeLength) {
    throw ParseError("genotype needs " + std::to_string(kGenotypeLength) + " genes, got " +
                     std::to_string(genes.size()));
  }
  for (int i = 0; i < kGenotypeLength; ++i) {
    if (genes[i] < 0 || genes[i] >= kAlphabets[i]) {
      throw ParseError("gene " + std::to_string(i) + " value " + std::to_string(genes[i]) + " outside alphabet");
    }
  }
  Genotype g;
  for (int i = 0; i < kEdgeGenes; ++i) g.edges[i] = static_cast<std::uint8_t>(genes[i]);
  for (int i = 0; i < kOpGenes; ++i) g.ops[i] = static_cast<std::uint8_t>(genes[kEdgeGenes + i]);
  g.batch = static_cast<std::uint8_t>(genes[kGenotypeLength - 1]);
  return g;
}

std::string Genotype::str() const {
  std::string s = "E:";
  for (auto e : edges) s += static_cast<char>('0' + e);
  s += "|O:";
  for (auto o : ops) s += static_cast<char>('0' + o);
  s += "|B:";
  s += static_cast<char>('0' + batch);
  return s;
}

std::array<int, kGenotypeLength> Genotype::genes() const {
  std::array<int, kGenotypeLength> out{};
  for (int i = 0; i < kEdgeGenes; ++i) out[i] = edges[i];
  for (int i = 0; i < kOpGenes; ++i) out[kEdgeGenes + i] = ops[i];
  out[kGenotypeLength - 1] = batch;
  return out;
}

// ----------------------------------------------------------------- CellGraph

void CellGraph::set_edge(int i, int j, bool on) {
  edge_index(i, j);  // validates orientation
  adj_[i - 1][j - 1] = on;
  refresh_paths();
}

void CellGraph::refresh_paths() {
  from_input_.fill(false);
  to_output_.fill(false);
  from_input_[0] = true;
  for (int j = 1; j < kCellNodes; ++j) {
    for (int i = 0; i < j; ++i) {
      if (adj_[i][j] && from_input_[i]) {
        from_input_[j] = true;
        break;
      }
    }
  }
  to_output_[kCellNodes - 1] = true;
  for (int i = kCellNodes - 2; i >= 0; --i) {
    for (int j = i + 1; j < kCellNodes; ++j) {
      if (adj_[i][j] && to_output_[j]) {
        to_output_[i] = true;
        break;
      }
    }
  }
}

int CellGraph::edge_count() const {
  int n = 0;
  for (const auto& row : adj_) n += static_cast<int>(std::count(row.begin(), row.end(), true));
  return n;
}

bool CellGraph::on_io_path(int node) const { return from_input_[node - 1] && to_output_[node - 1]; }

bool CellGraph::connected(int node) const {
  for (int k = 1; k <= kCellNodes; ++k) {
    if (adj_[node - 1][k - 1] || adj_[k - 1][node - 1]) return true;
  }
  return false;
}

std::vector<int> CellGraph::active_intermediates() const {
  std::vector<int> out;
  for (int v = 2; v <= 6; ++v) {
    if (on_io_path(v)) out.push_back(v);
  }
  return out;
}

std::vector<int> CellGraph::predecessors(int node) const {
  std::vector<int> out;
  for (int i = 1; i < node; ++i) {
    if (adj_[i - 1][node - 1]) out.push_back(i);
  }
  return out;
}

CellGraph CellGraph::normalized() const {
  CellGraph g = *this;
  for (int v = 2; v <= 6; ++v) {
    if (!connected(v)) g.set_op(v, CellOp::conv3x3);
  }
  return g;
}

CellGraph decode(const Genotype& genotype) {
  CellGraph g;
  for (int i = 1; i < kCellNodes; ++i) {
    for (int j = i + 1; j <= kCellNodes; ++j) {
      const auto bit = genotype.edges[edge_index(i, j)];
      if (bit > 1) throw ParseError("edge gene outside {0,1}");
      if (bit) g.set_edge(i, j, true);
    }
  }
  for (int k = 0; k < kOpGenes; ++k) {
    if (genotype.ops[k] > 2) throw ParseError("op gene outside {0,1,2}");
    g.set_op(k + 2, static_cast<CellOp>(genotype.ops[k]));
  }
  if (genotype.batch > 1) throw ParseError("batch gene outside {0,1}");
  g.set_batch(genotype.batch);
  return g;
}

Genotype encode(const CellGraph& graph) {
  Genotype g;
  for (int i = 1; i < kCellNodes; ++i) {
    for (int j = i + 1; j <= kCellNodes; ++j) g.edges[edge_index(i, j)] = graph.edge(i, j) ? 1 : 0;
  }
  for (int v = 2; v <= 6; ++v) g.ops[v - 2] = static_cast<std::uint8_t>(graph.op(v));
  g.batch = graph.batch();
  return g;
}

// ---------------------------------------------------------------- validation

void PenaltyConfig::validate() const {
  if (!(eta1 > 0) || !(eta2 > 0)) throw ConfigError("penalty coefficients must be > 0");
}

ValidityReport validate(const CellGraph& graph, const PenaltyConfig& cfg) {
  ValidityReport r;
  r.edge_count = graph.edge_count();
  r.has_io_path = graph.has_io_path();
  if (!r.has_io_path) {
    r.kappa = kNoPathKappa;
  } else {
    for (int v = 2; v <= 6; ++v) {
      if (graph.connected(v) && !graph.on_io_path(v)) ++r.kappa;
    }
  }
  if (r.edge_count > kMaxEdges) {
    r.penalty = (r.edge_count - kMaxEdges) * cfg.eta1;
  } else {
    r.penalty = r.kappa * cfg.eta2;
  }
  return r;
}

// ------------------------------------------------------------------ sampling

Genotype sample_uniform(Rng& rng) {
  std::array<int, kGenotypeLength> genes{};
  for (int i = 0; i < kGenotypeLength; ++i) {
    genes[i] = std::uniform_int_distribution<int>(0, kAlphabets[i] - 1)(rng);
  }
  return Genotype::from_genes(genes);
}

Genotype sample_uniform(std::uint64_t seed) {
  Rng rng(seed);
  return sample_uniform(rng);
}

std::uint64_t space_size() {
  std::uint64_t n = 1;
  for (int a : kAlphabets) n *= static_cast<std::uint64_t>(a);
  return n;
}

// ---------------------------------------------------------- canonical form

namespace {

using Colors = std::array<int, kCellNodes>;

Colors refine_colors(const CellGraph& g) {
  Colors color{};
  color[0] = 0;
  color[kCellNodes - 1] = 1;
  for (int v = 2; v <= 6; ++v) color[v - 1] = 2 + static_cast<int>(g.op(v));

  for (int round = 0; round < kCellNodes; ++round) {
    using Signature = std::tuple<int, std::vector<int>, std::vector<int>>;
    std::array<Signature, kCellNodes> sig;
    for (int v = 1; v <= kCellNodes; ++v) {
      std::vector<int> in, out;
      for (int u = 1; u <= kCellNodes; ++u) {
        if (u < v && g.edge(u, v)) in.push_back(color[u - 1]);
        if (u > v && g.edge(v, u)) out.push_back(color[u - 1]);
      }
      std::sort(in.begin(), in.end());
      std::sort(out.begin(), out.end());
      sig[v - 1] = {color[v - 1], std::move(in), std::move(out)};
    }
    std::vector<Signature> distinct(sig.begin(), sig.end());
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    Colors next{};
    for (int v = 0; v < kCellNodes; ++v) {
      next[v] = static_cast<int>(std::lower_bound(distinct.begin(), distinct.end(), sig[v]) - distinct.begin());
    }
    const auto classes = [](const Colors& c) {
      std::vector<int> s(c.begin(), c.end());
      std::sort(s.begin(), s.end());
      return std::unique(s.begin(), s.end()) - s.begin();
    };
    const bool stable = classes(next) == classes(color);
    color = next;
    if (stable) break;
  }
  return color;
}

// Code of the graph when old node order[k] takes new label k+1.
std::string relabeled_code(const CellGraph& g, const std::array<int, kCellNodes>& order) {
  std::string code;
  code.reserve(kCellNodes * kCellNodes + kOpGenes);
  for (int a = 0; a < kCellNodes; ++a) {
    for (int b = 0; b < kCellNodes; ++b) {
      const int u = order[a], v = order[b];
      code += (u < v && g.edge(u, v)) ? '1' : '0';
    }
  }
  code += '|';
  for (int a = 1; a <= kIntermediateNodes; ++a) code += static_cast<char>('0' + static_cast<int>(g.op(order[a])));
  return code;
}

std::string to_key(const std::string& code, std::uint8_t batch) {
  // 49 adjacency bits as hex, then ops and batch.
  std::uint64_t bits = 0;
  for (int i = 0; i < kCellNodes * kCellNodes; ++i) bits = (bits << 1) | (code[i] == '1' ? 1u : 0u);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string key = "K";
  for (int shift = 48; shift >= 0; shift -= 4) key += kHex[(bits >> shift) & 0xF];
  key += '.';
  key += code.substr(kCellNodes * kCellNodes + 1);
  key += '.';
  key += static_cast<char>('0' + batch);
  return key;
}

}  // namespace

std::string canonical_form(const CellGraph& graph) {
  const Colors color = refine_colors(graph);

  std::vector<int> inter = {2, 3, 4, 5, 6};
  std::stable_sort(inter.begin(), inter.end(), [&](int a, int b) { return color[a - 1] < color[b - 1]; });

  // Tie groups: maximal runs of equal colour.
  std::vector<std::pair<std::size_t, std::size_t>> groups;
  for (std::size_t s = 0; s < inter.size();) {
    std::size_t e = s + 1;
    while (e < inter.size() && color[inter[e] - 1] == color[inter[s] - 1]) ++e;
    if (e - s > 1) groups.emplace_back(s, e);
    s = e;
  }
  for (auto [s, e] : groups) std::sort(inter.begin() + s, inter.begin() + e);

  std::string best;
  // Odometer over the permutations of every tie group.
  while (true) {
    std::array<int, kCellNodes> order{};
    order[0] = 1;
    order[kCellNodes - 1] = kCellNodes;
    for (int k = 0; k < kIntermediateNodes; ++k) order[k + 1] = inter[k];
    std::string code = relabeled_code(graph, order);
    if (best.empty() || code < best) best = std::move(code);

    std::size_t gi = 0;
    for (; gi < groups.size(); ++gi) {
      auto [s, e] = groups[gi];
      if (std::next_permutation(inter.begin() + s, inter.begin() + e)) break;
      // wrapped to sorted order; carry into the next group
    }
    if (gi == groups.size()) break;
  }
  return to_key(best, graph.batch());
}

std::string dedup_key(const Genotype& genotype) { return canonical_form(decode(genotype).normalized()); }

// --------------------------------------------------------------- enumeration

std::vector<Genotype> enumerate_reduced(int max_nodes) {
  if (max_nodes > 5) throw CapacityError("reduced-space enumeration supports at most 5 nodes");
  if (max_nodes < 2) throw ConfigError("reduced space needs at least input and output nodes");
  const int inter = max_nodes - 2;
  // Reduced node k (1..max_nodes) -> 7-node label.
  auto label = [&](int k) { return k == max_nodes ? kCellNodes : k; };
  std::vector<std::pair<int, int>> edges;
  for (int i = 1; i < max_nodes; ++i) {
    for (int j = i + 1; j <= max_nodes; ++j) edges.emplace_back(label(i), label(j));
  }
  const std::uint64_t edge_combos = std::uint64_t{1} << edges.size();
  std::uint64_t op_combos = 1;
  for (int k = 0; k < inter; ++k) op_combos *= 3;

  std::vector<Genotype> out;
  out.reserve(edge_combos * op_combos);
  for (std::uint64_t em = 0; em < edge_combos; ++em) {
    for (std::uint64_t om = 0; om < op_combos; ++om) {
      Genotype g;
      for (std::size_t e = 0; e < edges.size(); ++e) {
        if ((em >> e) & 1u) g.edges[edge_index(edges[e].first, edges[e].second)] = 1;
      }
      std::uint64_t rest = om;
      for (int k = 0; k < inter; ++k) {
        g.ops[k] = static_cast<std::uint8_t>(rest % 3);
        rest /= 3;
      }
      out.push_back(g);
    }
  }
  return out;
}

}  // namespace nasopt
