#include "semirobust/mi.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "semirobust/rng.hpp"

namespace semirobust {

namespace {

void check_samples(const Tensor& x, const char* ctx) {
  if (x.rank() != 2 || x.rows() == 0 || x.cols() == 0) {
    throw std::invalid_argument(std::string(ctx) + " expects a non-empty [samples, dim] matrix");
  }
}

// seeded Gaussian projection to cfg dims when the variable is wider
Tensor maybe_project(const Tensor& x, std::optional<std::size_t> projection_dim,
                     std::uint64_t seed) {
  if (!projection_dim.has_value() || x.cols() <= *projection_dim) return x;
  const std::size_t d = x.cols();
  const std::size_t p = *projection_dim;
  if (p == 0) throw std::invalid_argument("projection_dim must be >= 1");
  RandomStream rng(derive_seed(seed, "projection"));
  Tensor proj({p, d});
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  for (std::size_t i = 0; i < proj.size(); ++i) proj[i] = scale * rng.normal();
  Tensor out({x.rows(), p});
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t o = 0; o < p; ++o) {
      double acc = 0.0;
      for (std::size_t c = 0; c < d; ++c) acc += proj.at(o, c) * x.at(r, c);
      out.at(r, o) = acc;
    }
  }
  return out;
}

std::vector<double> shift_for(const HashConfig& cfg, std::size_t dim) {
  if (!cfg.shift.empty()) {
    if (cfg.shift.size() != dim) {
      throw std::invalid_argument("hash shift has " + std::to_string(cfg.shift.size()) +
                                  " entries for " + std::to_string(dim) + " dims");
    }
    return cfg.shift;
  }
  RandomStream rng(derive_seed(cfg.seed, "hash-shift"));
  std::vector<double> shift(dim);
  for (double& s : shift) s = rng.uniform(0.0, cfg.bandwidth);
  return shift;
}

std::uint64_t mix_cells(const std::vector<std::int64_t>& cells) {
  std::uint64_t key = 0;
  for (std::int64_t cell : cells) {
    key = (key * 0x9E3779B97F4A7C15ull) ^ (static_cast<std::uint64_t>(cell) * 0xBF58476D1CE4E5B9ull);
    key ^= key >> 31;
  }
  return key;
}

std::size_t distinct_keys(std::vector<std::uint64_t> keys) {
  std::sort(keys.begin(), keys.end());
  return static_cast<std::size_t>(std::unique(keys.begin(), keys.end()) - keys.begin());
}

// median of per-dimension interquartile ranges (linear-interpolated quantiles)
double median_iqr(const Tensor& x) {
  auto quantile = [](std::vector<double>& sorted, double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
  };
  std::vector<double> iqrs;
  std::vector<double> column(x.rows());
  for (std::size_t c = 0; c < x.cols(); ++c) {
    for (std::size_t r = 0; r < x.rows(); ++r) column[r] = x.at(r, c);
    std::sort(column.begin(), column.end());
    iqrs.push_back(quantile(column, 0.75) - quantile(column, 0.25));
  }
  std::sort(iqrs.begin(), iqrs.end());
  const std::size_t m = iqrs.size();
  return m % 2 == 1 ? iqrs[m / 2] : 0.5 * (iqrs[m / 2 - 1] + iqrs[m / 2]);
}

// smallest (median IQR / 8) * 2^m whose zero-shift grid fits the slot budget
double base_width(const Tensor& x, std::size_t max_slots) {
  double spread = median_iqr(x);
  if (spread <= 0.0) spread = 1.0;
  double width = spread / 8.0;
  HashConfig probe;
  probe.shift.assign(x.cols(), 0.0);
  for (int step = 0; step < 60; ++step) {
    probe.bandwidth = width;
    if (distinct_keys(hash_samples(x, probe)) <= max_slots) break;
    width *= 2.0;
  }
  return width;
}

std::size_t slot_budget(std::size_t n) {
  const auto f = static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(n) / 4.0)));
  return std::clamp<std::size_t>(f, 8, 64);
}

struct SlotHashParams {
  std::uint64_t a = 1;
  std::uint64_t b = 0;
};

SlotHashParams slot_hash_params(std::uint64_t seed) {
  RandomStream rng(derive_seed(seed, "slot-hash"));
  SlotHashParams p;
  p.a = rng.next_u64() | 1ull;  // odd multiplier
  p.b = rng.next_u64();
  return p;
}

std::vector<std::size_t> slot_ids_with(const std::vector<std::uint64_t>& keys,
                                       std::size_t max_slots, const SlotHashParams& params) {
  if (max_slots == 0) throw std::invalid_argument("slot budget must be >= 1");
  std::vector<std::uint64_t> uniq(keys);
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  std::vector<std::size_t> slots(keys.size());
  if (uniq.size() <= max_slots) {
    for (std::size_t i = 0; i < keys.size(); ++i) {
      slots[i] = static_cast<std::size_t>(
          std::lower_bound(uniq.begin(), uniq.end(), keys[i]) - uniq.begin());
    }
    return slots;
  }
  for (std::size_t i = 0; i < keys.size(); ++i) {
    std::uint64_t h = keys[i] * params.a + params.b;
    h ^= h >> 33;
    slots[i] = static_cast<std::size_t>(h % max_slots);
  }
  return slots;
}

}  // namespace

std::vector<std::vector<std::int64_t>> grid_cells(const Tensor& x, const HashConfig& cfg) {
  check_samples(x, "grid_cells");
  if (cfg.bandwidth <= 0.0) throw std::invalid_argument("hash bandwidth must be > 0");
  const Tensor projected = maybe_project(x, cfg.projection_dim, cfg.seed);
  const std::vector<double> shift = shift_for(cfg, projected.cols());
  std::vector<std::vector<std::int64_t>> cells(projected.rows());
  for (std::size_t r = 0; r < projected.rows(); ++r) {
    cells[r].resize(projected.cols());
    for (std::size_t c = 0; c < projected.cols(); ++c) {
      cells[r][c] =
          static_cast<std::int64_t>(std::floor((projected.at(r, c) + shift[c]) / cfg.bandwidth));
    }
  }
  return cells;
}

std::vector<std::uint64_t> hash_samples(const Tensor& x, const HashConfig& cfg) {
  const auto cells = grid_cells(x, cfg);
  std::vector<std::uint64_t> keys(cells.size());
  for (std::size_t r = 0; r < cells.size(); ++r) keys[r] = mix_cells(cells[r]);
  return keys;
}

std::vector<std::size_t> slot_ids(const std::vector<std::uint64_t>& keys, std::size_t max_slots,
                                  std::uint64_t seed) {
  return slot_ids_with(keys, max_slots, slot_hash_params(seed));
}

std::size_t JointHistogram::occupied_x() const {
  std::size_t k = 0;
  for (std::size_t c : x_counts) k += c > 0 ? 1 : 0;
  return k;
}

std::size_t JointHistogram::occupied_y() const {
  std::size_t k = 0;
  for (std::size_t c : y_counts) k += c > 0 ? 1 : 0;
  return k;
}

JointHistogram build_histogram(const std::vector<std::size_t>& x_slots,
                               const std::vector<std::size_t>& y_slots) {
  if (x_slots.size() != y_slots.size() || x_slots.empty()) {
    throw std::invalid_argument("histogram slot sequences must be non-empty and row-aligned");
  }
  JointHistogram hist;
  hist.n = x_slots.size();
  for (std::size_t i = 0; i < x_slots.size(); ++i) {
    const std::size_t xs = x_slots[i];
    const std::size_t ys = y_slots[i];
    if (xs >= hist.x_counts.size()) hist.x_counts.resize(xs + 1, 0);
    if (ys >= hist.y_counts.size()) hist.y_counts.resize(ys + 1, 0);
    ++hist.x_counts[xs];
    ++hist.y_counts[ys];
    ++hist.joint[{xs, ys}];
  }
  return hist;
}

double base_mi(const JointHistogram& hist) {
  if (hist.n == 0) throw std::invalid_argument("base_mi on an empty histogram");
  const auto n = static_cast<double>(hist.n);
  double mi = 0.0;
  for (const auto& [cell, count] : hist.joint) {
    const auto c = static_cast<double>(count);
    const auto nx = static_cast<double>(hist.x_counts[cell.first]);
    const auto my = static_cast<double>(hist.y_counts[cell.second]);
    mi += (c / n) * std::log(n * c / (nx * my));
  }
  return mi;
}

std::vector<double> default_bandwidth_scales() { return {1.0, 2.0, 4.0, 8.0}; }

MIEstimate edge_mi(const Tensor& x, const Tensor& y, const std::vector<double>& bandwidth_scales,
                   const EdgeConfig& cfg) {
  check_samples(x, "edge_mi x");
  check_samples(y, "edge_mi y");
  if (x.rows() != y.rows()) {
    throw std::invalid_argument("edge_mi: X has " + std::to_string(x.rows()) + " rows, Y has " +
                                std::to_string(y.rows()));
  }
  if (bandwidth_scales.empty()) throw std::invalid_argument("edge_mi needs >= 1 bandwidth scale");
  for (double s : bandwidth_scales) {
    if (s <= 0.0) throw std::invalid_argument("bandwidth scales must be > 0");
  }
  std::vector<double> weights = cfg.weights;
  if (weights.empty()) {
    weights.assign(bandwidth_scales.size(), 1.0 / static_cast<double>(bandwidth_scales.size()));
  } else {
    if (weights.size() != bandwidth_scales.size()) {
      throw std::invalid_argument("ensemble weights and bandwidth scales differ in length");
    }
    double sum = 0.0;
    for (double w : weights) {
      if (w < 0.0) throw std::invalid_argument("ensemble weights must be >= 0");
      sum += w;
    }
    if (sum <= 0.0) throw std::invalid_argument("ensemble weights must not all be 0");
    for (double& w : weights) w /= sum;
  }

  const Tensor px = maybe_project(x, cfg.projection_dim, derive_seed(cfg.seed, "variable-x"));
  const Tensor py = maybe_project(y, cfg.projection_dim, derive_seed(cfg.seed, "variable-y"));
  const std::size_t n = px.rows();
  const std::size_t budget = slot_budget(n);
  const SlotHashParams slot_params = slot_hash_params(cfg.seed);  // shared by both variables

  MIEstimate est;
  est.bandwidths = bandwidth_scales;
  est.weights = weights;
  est.sample_count = n;
  est.x_base_width = base_width(px, budget);
  est.y_base_width = base_width(py, budget);

  auto rung_slots = [&](const Tensor& v, double width, std::uint64_t shift_seed) {
    HashConfig hcfg;
    hcfg.bandwidth = width;
    hcfg.seed = shift_seed;
    return slot_ids_with(hash_samples(v, hcfg), budget, slot_params);
  };

  double raw = 0.0;
  double ratio = 0.0;
  for (std::size_t k = 0; k < bandwidth_scales.size(); ++k) {
    const double scale = bandwidth_scales[k];
    const auto xs = rung_slots(px, est.x_base_width * scale, derive_seed(cfg.seed, "rung-x", k));
    const auto ys = rung_slots(py, est.y_base_width * scale, derive_seed(cfg.seed, "rung-y", k));
    const JointHistogram hist = build_histogram(xs, ys);
    double value = base_mi(hist);
    if (cfg.bias_correction) {
      const double kxy = static_cast<double>(hist.occupied_joint());
      const double kx = static_cast<double>(hist.occupied_x());
      const double ky = static_cast<double>(hist.occupied_y());
      value -= (kxy - kx - ky + 1.0) / (2.0 * static_cast<double>(n));
    }
    // same histogram, no logarithm: E over samples of the joint/marginal ratio
    double rung_ratio = 0.0;
    const auto dn = static_cast<double>(hist.n);
    for (const auto& [cell, count] : hist.joint) {
      const auto c = static_cast<double>(count);
      const auto nx = static_cast<double>(hist.x_counts[cell.first]);
      const auto my = static_cast<double>(hist.y_counts[cell.second]);
      rung_ratio += (c / dn) * (dn * c / (nx * my));
    }
    est.per_bandwidth.push_back(value);
    est.per_bandwidth_ratio.push_back(rung_ratio);
    raw += weights[k] * value;
    ratio += weights[k] * rung_ratio;
  }
  est.raw_value = raw;
  est.value_nats = std::max(0.0, raw);
  est.ratio_expectation = ratio;
  return est;
}

ConditionalMIEstimate conditional_mi(const Tensor& x, const Tensor& y,
                                     const std::vector<int>& labels,
                                     const std::vector<double>& bandwidth_scales,
                                     const EdgeConfig& cfg) {
  check_samples(x, "conditional_mi x");
  check_samples(y, "conditional_mi y");
  if (labels.size() != x.rows() || x.rows() != y.rows()) {
    throw std::invalid_argument("conditional_mi: labels and samples must be row-aligned");
  }
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);

  ConditionalMIEstimate result;
  std::map<int, std::size_t> retained;
  for (const auto& [label, rows] : by_class) {
    if (rows.size() < cfg.min_class_samples) {
      result.warnings.push_back("class " + std::to_string(label) + " skipped: " +
                                std::to_string(rows.size()) + " samples < " +
                                std::to_string(cfg.min_class_samples));
      continue;
    }
    Tensor cx({rows.size(), x.cols()});
    Tensor cy({rows.size(), y.cols()});
    for (std::size_t r = 0; r < rows.size(); ++r) {
      for (std::size_t c = 0; c < x.cols(); ++c) cx.at(r, c) = x.at(rows[r], c);
      for (std::size_t c = 0; c < y.cols(); ++c) cy.at(r, c) = y.at(rows[r], c);
    }
    result.per_class[label] = edge_mi(cx, cy, bandwidth_scales, cfg);
    retained[label] = rows.size();
  }
  if (retained.empty()) {
    throw std::runtime_error("conditional_mi: every class fell below the sample floor");
  }
  std::size_t total = 0;
  for (const auto& [label, count] : retained) total += count;
  for (const auto& [label, count] : retained) {
    const double prior = static_cast<double>(count) / static_cast<double>(total);
    result.priors[label] = prior;
    const MIEstimate& est = result.per_class[label];
    result.total_nats += prior * est.value_nats;
    result.raw_total_nats += prior * est.raw_value;
    result.ratio_expectation += prior * est.ratio_expectation;
  }
  return result;
}

}  // namespace semirobust
