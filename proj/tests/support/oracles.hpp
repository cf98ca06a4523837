#pragma once

// Reference implementations written independently of the library code paths
// they check: direct-formula layers, central differences, a complex-number
// protein chain and a brute-force isomorphism signature.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nasopt/genotype.hpp"
#include "nasopt/tensor.hpp"

namespace oracle {

using nasopt::Tensor;

/// floor((n - k + 2p) / s) + 1 evaluated in signed arithmetic.
long output_size(long n, long k, long s, long p);

/// Per-element conv2d straight from the definition (zero padding).
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride, std::size_t pad);
Tensor max_pool2d(const Tensor& x, std::size_t k, std::size_t stride);
Tensor avg_pool2d(const Tensor& x, std::size_t k, std::size_t stride);

/// Central differences of f at x with step h.
std::vector<double> central_diff(const std::function<double(std::span<const double>)>& f, std::span<const double> x,
                                 double h);

/// |a - b| / max(1, |b|).
double rel_err(double a, double b);

/// AB model energy from positions built with complex unit steps.
double protein_energy(std::string_view sequence, std::span<const double> angles_deg);

/// Smallest encoding of the full 7 x 7 adjacency (any direction) plus node
/// ops and batch over all 120 relabelings of the intermediate nodes.
std::string iso_signature(const nasopt::CellGraph& g);
std::size_t iso_class_count(std::span<const nasopt::Genotype> genotypes);

}  // namespace oracle
