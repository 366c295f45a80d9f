#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "semirobust/tensor.hpp"

namespace semirobust {

// Grid hashing for one variable. Cells are floor((Px + shift) / bandwidth)
// per coordinate, tupled into one 64-bit key. An empty shift is filled with
// seeded uniforms in [0, bandwidth)^d; projection (when configured and the
// variable is wider) applies a seeded Gaussian matrix before hashing.
struct HashConfig {
  double bandwidth = 1.0;
  std::vector<double> shift;  // empty = derive from seed
  std::optional<std::size_t> projection_dim;
  std::uint64_t seed = 0;
};

// integer grid cells per sample (post-projection), one row per sample
std::vector<std::vector<std::int64_t>> grid_cells(const Tensor& x, const HashConfig& cfg);

// grid cells mixed into one bucket key per sample
std::vector<std::uint64_t> hash_samples(const Tensor& x, const HashConfig& cfg);

// Bucket keys compressed into at most max_slots histogram slots: an exact
// (sorted-unique rank) interning when the keys already fit, otherwise a
// seeded universal hash mod max_slots.
std::vector<std::size_t> slot_ids(const std::vector<std::uint64_t>& keys, std::size_t max_slots,
                                  std::uint64_t seed);

struct JointHistogram {
  std::size_t n = 0;
  std::vector<std::size_t> x_counts;  // per x slot
  std::vector<std::size_t> y_counts;  // per y slot
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> joint;

  std::size_t occupied_joint() const { return joint.size(); }
  std::size_t occupied_x() const;
  std::size_t occupied_y() const;
};

JointHistogram build_histogram(const std::vector<std::size_t>& x_slots,
                               const std::vector<std::size_t>& y_slots);

// plug-in estimate sum (N_ij/n) ln(n N_ij / (N_i M_j)) in nats; >= 0
double base_mi(const JointHistogram& hist);

struct EdgeConfig {
  std::size_t projection_dim = 8;      // project variables wider than this
  bool bias_correction = true;         // small-sample occupancy correction per rung
  std::size_t min_class_samples = 50;  // conditional floor per class
  std::vector<double> weights;         // ensemble weights; empty = uniform
  std::uint64_t seed = 0;
};

struct MIEstimate {
  double value_nats = 0.0;  // clamped at 0
  double raw_value = 0.0;
  std::vector<double> bandwidths;      // rung scales used
  double x_base_width = 0.0;           // auto-selected cell width at scale 1
  double y_base_width = 0.0;
  std::vector<double> weights;         // ensemble weights, sum 1
  std::vector<double> per_bandwidth;   // per-rung values entering the ensemble
  double ratio_expectation = 0.0;      // weighted E[n N_ij / (N_i M_j)]; 1 when independent
  std::vector<double> per_bandwidth_ratio;
  std::size_t sample_count = 0;
};

// default rung scales {1, 2, 4, 8}
std::vector<double> default_bandwidth_scales();

// Ensemble MI estimate between row-aligned X and Y in nats. `bandwidth_scales`
// multiply each variable's auto-selected base cell width (median per-dim IQR
// / 8, widened until a zero-shift grid occupies at most the slot budget).
MIEstimate edge_mi(const Tensor& x, const Tensor& y, const std::vector<double>& bandwidth_scales,
                   const EdgeConfig& cfg);

struct ConditionalMIEstimate {
  double total_nats = 0.0;              // prior-weighted over retained classes
  double raw_total_nats = 0.0;          // prior-weighted raw (pre-clamp) values
  double ratio_expectation = 0.0;       // prior-weighted ratio expectation
  std::map<int, MIEstimate> per_class;
  std::map<int, double> priors;         // renormalized over retained classes
  std::vector<std::string> warnings;    // classes skipped for sparsity
};

// class-conditional estimate: edge_mi per class, weighted by empirical
// priors; classes with fewer than cfg.min_class_samples rows are skipped
// with a warning, and all classes skipped is an error
ConditionalMIEstimate conditional_mi(const Tensor& x, const Tensor& y,
                                     const std::vector<int>& labels,
                                     const std::vector<double>& bandwidth_scales,
                                     const EdgeConfig& cfg);

}  // namespace semirobust
