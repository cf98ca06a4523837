#include "nasopt/protein.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "nasopt/errors.hpp"

namespace nasopt {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;
constexpr double kOverlap = 1e-12;

const std::vector<ProteinInstance> kBuiltin = {
    {"1BXP", "ABBBBBBABBBAB"},
    {"1CB3", "BABBBAABBAAAB"},
    {"1BXL", "ABAABBAAAAABBABB"},
    {"1EDP", "ABABBAABBBAABBABA"},
    {"2ZNF", "ABABBAABBABAABBABA"},
    {"1EDN", "ABABBAABBBAABBABABAAB"},
    {"1DSQ", "BAAAABBAABBABABBBABBB"},
    {"1SP7", "AAAAAAAABAAABAABBAAAABBB"},
    {"2H3S", "AABBAABBBBBABBBABAABBBBBB"},
    {"1FYG", "ABAAABAABBAABBAABABABBABA"},
    {"1T2Y", "ABAAABAABBABAABAABABBAABB"},
    {"2KPA", "ABABABBBAAAABBBBABABBBBBBA"},
    {"1ARE", "BBBAABAABBABABBBAABBBBBBBBBBB"},
    {"1K48", "BAAAAAABBAAAABABBAAABABBAAABB"},
    {"1N1U", "AABBAAAABABBAAABABBAAABBBAAAA"},
    {"1PT4", "AABBABAABABBAAABABBAAABBBAAAA"},
};

void check_angles(const ProteinModel& model, std::span<const double> angles) {
  if (angles.size() != model.angle_count()) {
    throw DomainError("protein " + model.sequence() + " needs " + std::to_string(model.angle_count()) +
                      " angles, got " + std::to_string(angles.size()));
  }
  for (std::size_t k = 0; k < angles.size(); ++k) {
    if (!std::isfinite(angles[k]) || angles[k] < -180.0 || angles[k] > 180.0) {
      throw DomainError("protein angle " + std::to_string(k) + " outside [-180, 180]");
    }
  }
}

}  // namespace

ProteinModel::ProteinModel(std::string sequence) : sequence_(std::move(sequence)) {
  if (sequence_.size() < 3) throw DomainError("protein sequence needs at least 3 monomers");
  if (sequence_.find_first_not_of("AB") != std::string::npos) {
    throw DomainError("protein sequence may only contain A and B: " + sequence_);
  }
}

double ProteinModel::pair_coefficient(std::size_t i, std::size_t j) const {
  const double zi = species(i), zj = species(j);
  return (1.0 + zi + zj + 5.0 * zi * zj) / 8.0;
}

std::vector<Point2> protein_positions(const ProteinModel& model, std::span<const double> angles_deg) {
  check_angles(model, angles_deg);
  std::vector<Point2> p(model.length());
  p[0] = {0.0, 0.0};
  p[1] = {1.0, 0.0};
  double heading = 0.0;
  for (std::size_t k = 0; k < angles_deg.size(); ++k) {
    heading += angles_deg[k] * kDeg;
    p[k + 2] = {p[k + 1][0] + std::cos(heading), p[k + 1][1] + std::sin(heading)};
  }
  return p;
}

ProteinEnergy protein_energy(const ProteinModel& model, std::span<const double> angles_deg) {
  const auto p = protein_positions(model, angles_deg);
  ProteinEnergy e;
  for (double a : angles_deg) e.value += (1.0 - std::cos(a * kDeg)) / 4.0;
  const std::size_t n = p.size();
  for (std::size_t i = 0; i + 2 < n; ++i) {
    for (std::size_t j = i + 2; j < n; ++j) {
      const double dx = p[i][0] - p[j][0], dy = p[i][1] - p[j][1];
      const double r2 = dx * dx + dy * dy;
      if (r2 < kOverlap * kOverlap) {
        e.overlap = true;
        e.value = std::numeric_limits<double>::infinity();
        return e;
      }
      const double inv6 = 1.0 / (r2 * r2 * r2);
      e.value += inv6 * inv6 - model.pair_coefficient(i, j) * inv6;
    }
  }
  return e;
}

std::vector<double> protein_gradient(const ProteinModel& model, std::span<const double> angles_deg) {
  const auto p = protein_positions(model, angles_deg);
  const std::size_t n = p.size();
  // position gradient of the pair terms
  std::vector<Point2> g(n, Point2{0.0, 0.0});
  for (std::size_t i = 0; i + 2 < n; ++i) {
    for (std::size_t j = i + 2; j < n; ++j) {
      const double dx = p[i][0] - p[j][0], dy = p[i][1] - p[j][1];
      const double r2 = dx * dx + dy * dy;
      if (r2 < kOverlap * kOverlap) throw NumericError("protein gradient at overlapping conformation");
      const double inv2 = 1.0 / r2;
      const double inv6 = inv2 * inv2 * inv2;
      const double ds = (-6.0 * inv6 * inv6 + 3.0 * model.pair_coefficient(i, j) * inv6) * inv2;
      g[i][0] += 2.0 * ds * dx;
      g[i][1] += 2.0 * ds * dy;
      g[j][0] -= 2.0 * ds * dx;
      g[j][1] -= 2.0 * ds * dy;
    }
  }
  // angle k turns every point m >= k + 2 about p[k + 1]:
  // dE/dtheta_k = sum_m g_m . J (p_m - p_{k+1}),  J(x, y) = (-y, x)
  const std::size_t d = angles_deg.size();
  std::vector<double> out(d);
  double s1 = 0.0, sx = 0.0, sy = 0.0;
  for (std::size_t k = d; k-- > 0;) {
    const std::size_t m = k + 2;
    s1 += -g[m][0] * p[m][1] + g[m][1] * p[m][0];
    sx += g[m][0];
    sy += g[m][1];
    const double cx = p[k + 1][0], cy = p[k + 1][1];
    const double lj = s1 - (-sx * cy + sy * cx);
    out[k] = (std::sin(angles_deg[k] * kDeg) / 4.0 + lj) * kDeg;
  }
  return out;
}

std::span<const ProteinInstance> builtin_proteins() { return kBuiltin; }

std::vector<ProteinInstance> read_protein_instances(std::istream& in) {
  std::vector<ProteinInstance> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    ProteinInstance inst;
    if (!(ls >> inst.id)) continue;
    std::string extra;
    if (!(ls >> inst.sequence) || (ls >> extra)) {
      throw ParseError("protein list line " + std::to_string(lineno) + ": expected '<id> <sequence>'");
    }
    if (inst.sequence.size() < 3 || inst.sequence.find_first_not_of("AB") != std::string::npos) {
      throw ParseError("protein list line " + std::to_string(lineno) + ": bad sequence '" + inst.sequence + "'");
    }
    out.push_back(std::move(inst));
  }
  return out;
}

const ProteinInstance& find_protein(std::string_view id) {
  for (const auto& inst : kBuiltin) {
    if (inst.id == id) return inst;
  }
  throw ConfigError("unknown protein id '" + std::string(id) + "'");
}

ProteinObjective::ProteinObjective(std::string id, ProteinModel model)
    : Objective(std::move(id), Bounds::uniform(model.angle_count(), -180.0, 180.0)), model_(std::move(model)) {}

double ProteinObjective::compute(std::span<const double> x, std::span<double> grad) const {
  const ProteinEnergy e = protein_energy(model_, x);
  if (grad.empty()) return e.value;
  if (e.overlap) {
    std::fill(grad.begin(), grad.end(), 0.0);
    return e.value;
  }
  const auto g = protein_gradient(model_, x);
  std::copy(g.begin(), g.end(), grad.begin());
  return e.value;
}

}  // namespace nasopt
