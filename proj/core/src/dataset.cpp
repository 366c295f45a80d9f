#include "semirobust/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <utility>

#include "semirobust/rng.hpp"

namespace semirobust {

std::vector<int> pm_one_labels(const Dataset& data) {
  if (data.num_classes != 2) {
    throw std::invalid_argument("pm_one_labels needs a 2-class dataset");
  }
  std::vector<int> out(data.labels.size());
  for (std::size_t i = 0; i < data.labels.size(); ++i) {
    out[i] = data.labels[i] == 1 ? 1 : -1;
  }
  return out;
}

std::string dataset_kind_name(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::two_gaussians:
      return "two_gaussians";
    case DatasetKind::moons:
      return "moons";
    case DatasetKind::spirals:
      return "spirals";
    case DatasetKind::xor_grid:
      return "xor_grid";
  }
  throw std::invalid_argument("unknown dataset kind enum value");
}

DatasetKind dataset_kind_from_name(const std::string& name) {
  if (name == "two_gaussians") return DatasetKind::two_gaussians;
  if (name == "moons") return DatasetKind::moons;
  if (name == "spirals") return DatasetKind::spirals;
  if (name == "xor_grid") return DatasetKind::xor_grid;
  throw std::invalid_argument("unknown dataset kind: " + name);
}

Dataset generate_dataset(DatasetKind kind, std::size_t n, double knob, std::uint64_t seed) {
  if (n < 100) throw std::invalid_argument("generate_dataset needs n >= 100");
  if (knob < 0.0) throw std::invalid_argument("generate_dataset knob must be >= 0");
  Dataset data;
  data.features = Tensor({n, 2});
  data.labels.resize(n);
  data.num_classes = 2;
  data.generator = dataset_kind_name(kind);
  data.seed = seed;
  RandomStream rng(derive_seed(seed, "dataset"));

  switch (kind) {
    case DatasetKind::two_gaussians:
      for (std::size_t i = 0; i < n; ++i) {
        const int y = static_cast<int>(rng.bounded(2));
        data.labels[i] = y;
        const double mean = (y == 1 ? 0.5 : -0.5) * knob;
        data.features.at(i, 0) = mean + rng.normal();
        data.features.at(i, 1) = rng.normal();
      }
      break;
    case DatasetKind::moons:
      for (std::size_t i = 0; i < n; ++i) {
        const int y = static_cast<int>(rng.bounded(2));
        data.labels[i] = y;
        const double t = rng.uniform(0.0, std::numbers::pi);
        double px = std::cos(t);
        double py = std::sin(t);
        if (y == 1) {
          px = 1.0 - px;
          py = 0.5 - py;
        }
        data.features.at(i, 0) = px + knob * rng.normal();
        data.features.at(i, 1) = py + knob * rng.normal();
      }
      break;
    case DatasetKind::spirals:
      for (std::size_t i = 0; i < n; ++i) {
        const int y = static_cast<int>(rng.bounded(2));
        data.labels[i] = y;
        const double t = rng.uniform(0.25, 3.0);  // radius and phase grow together
        const double angle = 2.0 * t + (y == 1 ? std::numbers::pi : 0.0);
        data.features.at(i, 0) = t * std::cos(angle) + knob * rng.normal();
        data.features.at(i, 1) = t * std::sin(angle) + knob * rng.normal();
      }
      break;
    case DatasetKind::xor_grid:
      for (std::size_t i = 0; i < n; ++i) {
        const double px = rng.uniform(-1.0, 1.0);
        const double py = rng.uniform(-1.0, 1.0);
        data.labels[i] = (px > 0.0) != (py > 0.0) ? 1 : 0;
        data.features.at(i, 0) = px + knob * rng.normal();
        data.features.at(i, 1) = py + knob * rng.normal();
      }
      break;
  }
  data.features.ensure_finite("generate_dataset features");
  return data;
}

namespace {

std::uint32_t read_u32_be(std::istream& in, const std::string& path) {
  unsigned char bytes[4];
  in.read(reinterpret_cast<char*>(bytes), 4);
  if (!in) throw std::runtime_error("truncated IDX header in " + path);
  return (static_cast<std::uint32_t>(bytes[0]) << 24) | (static_cast<std::uint32_t>(bytes[1]) << 16) |
         (static_cast<std::uint32_t>(bytes[2]) << 8) | static_cast<std::uint32_t>(bytes[3]);
}

std::string idx_labels_path(std::string path) {
  bool changed = false;
  for (const auto& [from, to] :
       {std::pair<std::string, std::string>{"images", "labels"}, {"idx3", "idx1"}}) {
    const auto pos = path.find(from);
    if (pos != std::string::npos) {
      path.replace(pos, from.size(), to);
      changed = true;
    }
  }
  if (!changed) {
    throw std::invalid_argument("cannot derive IDX label file name from " + path);
  }
  return path;
}

Dataset load_idx(const std::string& path, std::size_t limit) {
  std::ifstream images(path, std::ios::binary);
  if (!images) throw std::runtime_error("cannot open IDX image file " + path);
  if (read_u32_be(images, path) != 0x00000803u) {
    throw std::runtime_error("bad IDX image magic in " + path);
  }
  const std::size_t count = read_u32_be(images, path);
  const std::size_t rows = read_u32_be(images, path);
  const std::size_t cols = read_u32_be(images, path);
  if (count == 0 || rows == 0 || cols == 0) {
    throw std::runtime_error("empty IDX image file " + path);
  }
  const std::string labels_path = idx_labels_path(path);
  std::ifstream labels(labels_path, std::ios::binary);
  if (!labels) throw std::runtime_error("cannot open IDX label file " + labels_path);
  if (read_u32_be(labels, labels_path) != 0x00000801u) {
    throw std::runtime_error("bad IDX label magic in " + labels_path);
  }
  if (read_u32_be(labels, labels_path) != count) {
    throw std::runtime_error("IDX image/label counts differ for " + path);
  }

  const std::size_t take = limit == 0 ? count : std::min(limit, count);
  Dataset data;
  data.features = Tensor({take, rows * cols});
  data.labels.resize(take);
  data.generator = path;
  int max_label = 0;
  std::vector<unsigned char> pixel_row(rows * cols);
  for (std::size_t i = 0; i < take; ++i) {
    images.read(reinterpret_cast<char*>(pixel_row.data()),
                static_cast<std::streamsize>(pixel_row.size()));
    if (!images) throw std::runtime_error("truncated IDX image payload in " + path);
    for (std::size_t p = 0; p < pixel_row.size(); ++p) {
      data.features.at(i, p) = static_cast<double>(pixel_row[p]) / 255.0;
    }
    unsigned char label;
    labels.read(reinterpret_cast<char*>(&label), 1);
    if (!labels) throw std::runtime_error("truncated IDX label payload in " + labels_path);
    data.labels[i] = static_cast<int>(label);
    max_label = std::max(max_label, data.labels[i]);
  }
  data.num_classes = static_cast<std::size_t>(max_label) + 1;
  return data;
}

Dataset load_csv(const std::string& path, std::size_t limit) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open CSV file " + path);
  std::vector<std::vector<double>> pixel_rows;
  std::vector<int> labels;
  std::string line;
  std::size_t width = 0;
  while (std::getline(in, line) && (limit == 0 || labels.size() < limit)) {
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string cell;
    std::vector<double> values;
    while (std::getline(row, cell, ',')) {
      try {
        values.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw std::runtime_error("non-numeric CSV cell '" + cell + "' in " + path);
      }
    }
    if (values.size() < 2) throw std::runtime_error("CSV row without pixels in " + path);
    if (width == 0) {
      width = values.size() - 1;
    } else if (values.size() - 1 != width) {
      throw std::runtime_error("ragged CSV rows in " + path);
    }
    labels.push_back(static_cast<int>(values[0]));
    values.erase(values.begin());
    for (double& v : values) v /= 255.0;
    pixel_rows.push_back(std::move(values));
  }
  if (labels.empty()) throw std::runtime_error("no samples in CSV file " + path);

  Dataset data;
  data.features = Tensor({labels.size(), width});
  data.labels = labels;
  data.generator = path;
  int max_label = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0) throw std::runtime_error("negative CSV label in " + path);
    max_label = std::max(max_label, labels[i]);
    for (std::size_t p = 0; p < width; ++p) data.features.at(i, p) = pixel_rows[i][p];
  }
  data.num_classes = static_cast<std::size_t>(max_label) + 1;
  return data;
}

}  // namespace

Dataset load_small_images(const std::string& path, ImageFormat format, std::size_t limit) {
  Dataset data = format == ImageFormat::idx ? load_idx(path, limit) : load_csv(path, limit);
  data.features.ensure_finite("load_small_images features");
  return data;
}

}  // namespace semirobust
