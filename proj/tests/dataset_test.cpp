#include "semirobust/dataset.hpp"

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <gtest/gtest.h>

namespace semirobust {
namespace {

void expect_well_formed(const Dataset& data, std::size_t n, const std::string& kind_name) {
  EXPECT_EQ(data.size(), n);
  ASSERT_EQ(data.features.rank(), 2u);
  EXPECT_EQ(data.features.rows(), n);
  EXPECT_EQ(data.dim(), 2u);
  EXPECT_EQ(data.num_classes, 2u);
  EXPECT_EQ(data.generator, kind_name);
  for (int label : data.labels) {
    EXPECT_TRUE(label == 0 || label == 1);
  }
}

TEST(dataset, every_generator_produces_a_well_formed_two_class_set) {
  for (DatasetKind kind : {DatasetKind::two_gaussians, DatasetKind::moons, DatasetKind::spirals,
                           DatasetKind::xor_grid}) {
    SCOPED_TRACE(dataset_kind_name(kind));
    const Dataset data = generate_dataset(kind, 500, 0.1, 42);
    expect_well_formed(data, 500, dataset_kind_name(kind));
    EXPECT_EQ(data.seed, 42u);
  }
}

TEST(dataset, generation_is_deterministic_per_seed) {
  const Dataset a = generate_dataset(DatasetKind::moons, 300, 0.1, 9);
  const Dataset b = generate_dataset(DatasetKind::moons, 300, 0.1, 9);
  const Dataset c = generate_dataset(DatasetKind::moons, 300, 0.1, 10);
  EXPECT_EQ(a.labels, b.labels);
  ASSERT_EQ(a.features.size(), b.features.size());
  for (std::size_t i = 0; i < a.features.size(); ++i) EXPECT_EQ(a.features[i], b.features[i]);
  bool any_difference = false;
  for (std::size_t i = 0; i < a.features.size() && !any_difference; ++i) {
    any_difference = a.features[i] != c.features[i];
  }
  EXPECT_TRUE(any_difference);
}

TEST(dataset, widely_separated_gaussians_split_on_the_first_coordinate) {
  // means at -2 and +2 with unit noise: thresholding x0 at zero is right
  // about 97.7% of the time
  const Dataset data = generate_dataset(DatasetKind::two_gaussians, 5000, 4.0, 3);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const int predicted = data.features.at(i, 0) > 0.0 ? 1 : 0;
    if (predicted == data.labels[i]) ++correct;
  }
  EXPECT_GE(static_cast<double>(correct) / static_cast<double>(data.size()), 0.96);
}

TEST(dataset, class_draws_are_roughly_balanced) {
  const Dataset data = generate_dataset(DatasetKind::moons, 4000, 0.1, 4);
  std::size_t ones = 0;
  for (int label : data.labels) ones += static_cast<std::size_t>(label);
  EXPECT_GT(ones, 1800u);
  EXPECT_LT(ones, 2200u);
}

TEST(dataset, noiseless_xor_grid_labels_match_the_quadrant) {
  const Dataset data = generate_dataset(DatasetKind::xor_grid, 400, 0.0, 5);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const bool odd_quadrant =
        (data.features.at(i, 0) > 0.0) != (data.features.at(i, 1) > 0.0);
    EXPECT_EQ(data.labels[i], odd_quadrant ? 1 : 0);
  }
}

TEST(dataset, generator_rejects_tiny_or_negative_requests) {
  EXPECT_THROW(generate_dataset(DatasetKind::moons, 99, 0.1, 0), std::invalid_argument);
  EXPECT_THROW(generate_dataset(DatasetKind::moons, 200, -0.1, 0), std::invalid_argument);
}

TEST(dataset, pm_one_labels_remap_binary_classes) {
  Dataset data;
  data.features = Tensor({4, 1});
  data.labels = {0, 1, 1, 0};
  data.num_classes = 2;
  EXPECT_EQ(pm_one_labels(data), (std::vector<int>{-1, 1, 1, -1}));
  data.num_classes = 3;
  EXPECT_THROW(pm_one_labels(data), std::invalid_argument);
}

TEST(dataset, kind_names_round_trip) {
  for (DatasetKind kind : {DatasetKind::two_gaussians, DatasetKind::moons, DatasetKind::spirals,
                           DatasetKind::xor_grid}) {
    EXPECT_EQ(dataset_kind_from_name(dataset_kind_name(kind)), kind);
  }
  EXPECT_THROW(dataset_kind_from_name("circles"), std::invalid_argument);
}

// ---- file loaders ---------------------------------------------------------

void write_u32_be(std::ofstream& out, std::uint32_t v) {
  const unsigned char bytes[4] = {static_cast<unsigned char>(v >> 24),
                                  static_cast<unsigned char>(v >> 16),
                                  static_cast<unsigned char>(v >> 8),
                                  static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(bytes), 4);
}

struct IdxFixture {
  std::string images_path;
  std::string labels_path;

  // three 2x2 images with pixel value = 10*sample + position, labels 0,1,2
  explicit IdxFixture(const std::string& stem) {
    images_path = ::testing::TempDir() + stem + "-images-idx3.bin";
    labels_path = ::testing::TempDir() + stem + "-labels-idx1.bin";
    std::ofstream images(images_path, std::ios::binary);
    write_u32_be(images, 0x00000803u);
    write_u32_be(images, 3);
    write_u32_be(images, 2);
    write_u32_be(images, 2);
    for (unsigned sample = 0; sample < 3; ++sample) {
      for (unsigned pos = 0; pos < 4; ++pos) {
        const unsigned char pixel = static_cast<unsigned char>(10 * sample + pos);
        images.write(reinterpret_cast<const char*>(&pixel), 1);
      }
    }
    std::ofstream labels(labels_path, std::ios::binary);
    write_u32_be(labels, 0x00000801u);
    write_u32_be(labels, 3);
    for (unsigned char label : {0, 1, 2}) {
      labels.write(reinterpret_cast<const char*>(&label), 1);
    }
  }

  ~IdxFixture() {
    std::remove(images_path.c_str());
    std::remove(labels_path.c_str());
  }
};

TEST(dataset, idx_loader_reads_pixels_labels_and_scales) {
  const IdxFixture fixture("idx_ok");
  const Dataset data = load_small_images(fixture.images_path, ImageFormat::idx);
  ASSERT_EQ(data.size(), 3u);
  EXPECT_EQ(data.dim(), 4u);
  EXPECT_EQ(data.labels, (std::vector<int>{0, 1, 2}));
  EXPECT_EQ(data.num_classes, 3u);
  EXPECT_EQ(data.generator, fixture.images_path);
  for (std::size_t sample = 0; sample < 3; ++sample) {
    for (std::size_t pos = 0; pos < 4; ++pos) {
      EXPECT_DOUBLE_EQ(data.features.at(sample, pos),
                       static_cast<double>(10 * sample + pos) / 255.0);
    }
  }
}

TEST(dataset, idx_loader_honors_the_sample_limit) {
  const IdxFixture fixture("idx_limit");
  const Dataset data = load_small_images(fixture.images_path, ImageFormat::idx, 2);
  EXPECT_EQ(data.size(), 2u);
  EXPECT_EQ(data.labels, (std::vector<int>{0, 1}));
}

TEST(dataset, idx_loader_reports_missing_and_malformed_files) {
  EXPECT_THROW(load_small_images("/nonexistent/images-idx3.bin", ImageFormat::idx),
               std::runtime_error);

  // a path the label-name rewrite cannot handle
  const std::string opaque = ::testing::TempDir() + "idx_opaque.bin";
  {
    std::ofstream out(opaque, std::ios::binary);
    write_u32_be(out, 0x00000803u);
    write_u32_be(out, 1);
    write_u32_be(out, 1);
    write_u32_be(out, 1);
    const char pixel = 0;
    out.write(&pixel, 1);
  }
  EXPECT_THROW(load_small_images(opaque, ImageFormat::idx), std::invalid_argument);
  std::remove(opaque.c_str());

  // wrong magic number
  const std::string bad_magic = ::testing::TempDir() + "bad-images-idx3.bin";
  {
    std::ofstream out(bad_magic, std::ios::binary);
    write_u32_be(out, 0xDEADBEEFu);
    write_u32_be(out, 1);
    write_u32_be(out, 1);
    write_u32_be(out, 1);
  }
  try {
    load_small_images(bad_magic, ImageFormat::idx);
    FAIL() << "expected bad magic error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("magic"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find(bad_magic), std::string::npos);
  }
  std::remove(bad_magic.c_str());

  // header promises more images than the payload holds
  const std::string short_images = ::testing::TempDir() + "short-images-idx3.bin";
  const std::string short_labels = ::testing::TempDir() + "short-labels-idx1.bin";
  {
    std::ofstream images(short_images, std::ios::binary);
    write_u32_be(images, 0x00000803u);
    write_u32_be(images, 3);
    write_u32_be(images, 2);
    write_u32_be(images, 2);
    const char pixels[4] = {1, 2, 3, 4};
    images.write(pixels, 4);  // one image instead of three
    std::ofstream labels(short_labels, std::ios::binary);
    write_u32_be(labels, 0x00000801u);
    write_u32_be(labels, 3);
    const char raw[3] = {0, 1, 0};
    labels.write(raw, 3);
  }
  try {
    load_small_images(short_images, ImageFormat::idx);
    FAIL() << "expected truncation error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("truncated"), std::string::npos);
  }
  std::remove(short_images.c_str());
  std::remove(short_labels.c_str());
}

TEST(dataset, idx_loader_rejects_image_label_count_mismatch) {
  const IdxFixture fixture("idx_mismatch");
  {
    std::ofstream labels(fixture.labels_path, std::ios::binary);
    write_u32_be(labels, 0x00000801u);
    write_u32_be(labels, 7);  // disagrees with the 3 images
  }
  try {
    load_small_images(fixture.images_path, ImageFormat::idx);
    FAIL() << "expected count mismatch error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("counts differ"), std::string::npos);
  }
}

TEST(dataset, csv_loader_reads_label_then_byte_pixels) {
  const std::string path = ::testing::TempDir() + "images_test.csv";
  {
    std::ofstream out(path);
    out << "1,0,128,255\n";
    out << "0,64,32,16\n";
    out << "\n";  // blank lines are skipped
    out << "2,255,255,255\n";
  }
  const Dataset data = load_small_images(path, ImageFormat::csv);
  ASSERT_EQ(data.size(), 3u);
  EXPECT_EQ(data.dim(), 3u);
  EXPECT_EQ(data.labels, (std::vector<int>{1, 0, 2}));
  EXPECT_EQ(data.num_classes, 3u);
  EXPECT_DOUBLE_EQ(data.features.at(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(data.features.at(0, 1), 128.0 / 255.0);
  EXPECT_DOUBLE_EQ(data.features.at(0, 2), 1.0);
  EXPECT_DOUBLE_EQ(data.features.at(1, 0), 64.0 / 255.0);

  const Dataset limited = load_small_images(path, ImageFormat::csv, 2);
  EXPECT_EQ(limited.size(), 2u);
  std::remove(path.c_str());
}

TEST(dataset, csv_loader_reports_malformed_rows) {
  const auto write_and_expect_error = [](const std::string& stem, const std::string& body,
                                         const std::string& needle) {
    const std::string path = ::testing::TempDir() + stem + ".csv";
    {
      std::ofstream out(path);
      out << body;
    }
    try {
      load_small_images(path, ImageFormat::csv);
      FAIL() << "expected error for " << stem;
    } catch (const std::runtime_error& e) {
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
    std::remove(path.c_str());
  };
  write_and_expect_error("csv_ragged", "1,10,20\n0,30\n", "ragged");
  write_and_expect_error("csv_text", "1,10,twenty\n", "non-numeric");
  write_and_expect_error("csv_bare_label", "1\n", "without pixels");
  write_and_expect_error("csv_empty", "", "no samples");
  write_and_expect_error("csv_negative", "-1,10,20\n", "negative");
  EXPECT_THROW(load_small_images("/nonexistent/file.csv", ImageFormat::csv), std::runtime_error);
}

}  // namespace
}  // namespace semirobust
