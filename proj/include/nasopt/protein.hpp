#pragma once

#include <array>
#include <cstddef>
#include <istream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nasopt/objectives.hpp"

namespace nasopt {

/// Planar AB off-lattice chain: L monomers of species A (+1) or B (-1),
/// unit bonds, D = L - 2 bond angles in degrees.
class ProteinModel {
 public:
  explicit ProteinModel(std::string sequence);

  const std::string& sequence() const noexcept { return sequence_; }
  std::size_t length() const noexcept { return sequence_.size(); }
  std::size_t angle_count() const noexcept { return sequence_.size() - 2; }
  int species(std::size_t i) const { return sequence_.at(i) == 'A' ? 1 : -1; }
  /// (1 + zi + zj + 5 zi zj) / 8: AA = 1, BB = 0.5, AB = -0.5.
  double pair_coefficient(std::size_t i, std::size_t j) const;

 private:
  std::string sequence_;
};

using Point2 = std::array<double, 2>;

/// p1 = (0,0), p2 = (1,0); each angle turns the heading before the next bond.
/// Throws DomainError for angles outside [-180, 180] or a length mismatch.
std::vector<Point2> protein_positions(const ProteinModel& model, std::span<const double> angles_deg);

struct ProteinEnergy {
  double value = 0.0;
  bool overlap = false;  // two monomers closer than 1e-12; value is +inf
};

ProteinEnergy protein_energy(const ProteinModel& model, std::span<const double> angles_deg);
/// dE/dtheta per angle (per degree). Throws NumericError on overlap.
std::vector<double> protein_gradient(const ProteinModel& model, std::span<const double> angles_deg);

struct ProteinInstance {
  std::string id;
  std::string sequence;
};

/// The sixteen benchmark sequences, shortest first.
std::span<const ProteinInstance> builtin_proteins();
/// Lines of `<PDB-ID> <SEQUENCE>`; blank lines and '#' comments skipped.
std::vector<ProteinInstance> read_protein_instances(std::istream& in);
/// Throws ConfigError if the id is unknown.
const ProteinInstance& find_protein(std::string_view id);

/// Energy minimisation over the angle vector on [-180, 180]^D.
class ProteinObjective final : public Objective {
 public:
  ProteinObjective(std::string id, ProteinModel model);
  const ProteinModel& model() const noexcept { return model_; }

 protected:
  /// Returns +inf (and a zero gradient) at overlapping conformations.
  double compute(std::span<const double> x, std::span<double> grad) const override;

 private:
  ProteinModel model_;
};

}  // namespace nasopt
