#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "semirobust/tensor.hpp"

namespace semirobust {

struct Dataset {
  Tensor features;          // [samples, dim]
  std::vector<int> labels;  // class ids in [0, num_classes)
  std::size_t num_classes = 2;
  std::string split;      // "train" / "test" / ""
  std::string generator;  // kind name or source file
  std::uint64_t seed = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return features.rank() == 2 ? features.cols() : 0; }
};

// binary labels remapped 0 -> -1, 1 -> +1
std::vector<int> pm_one_labels(const Dataset& data);

enum class DatasetKind { two_gaussians, moons, spirals, xor_grid };

std::string dataset_kind_name(DatasetKind kind);
DatasetKind dataset_kind_from_name(const std::string& name);

// Synthetic 2-class 2-D sets, deterministic per seed; needs n >= 100.
// `knob` is the per-kind shape parameter: class-mean separation in sigma
// units for two_gaussians, coordinate noise stddev for the other kinds.
Dataset generate_dataset(DatasetKind kind, std::size_t n, double knob, std::uint64_t seed);

enum class ImageFormat { idx, csv };

// Small image sets scaled to [0,1]. `idx` reads an images file in the
// ubyte-IDX layout with its label file found by replacing "images"->"labels"
// and "idx3"->"idx1" in the name; `csv` reads one row per sample with the
// label in the first column and byte-valued pixels after it. limit = 0 loads
// everything; otherwise the first `limit` samples in file order.
Dataset load_small_images(const std::string& path, ImageFormat format, std::size_t limit = 0);

}  // namespace semirobust
