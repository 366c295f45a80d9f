#include "semirobust/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

#include <nlohmann/json.hpp>

namespace semirobust {

namespace {

constexpr const char* kFormatTag = "semirobust-checkpoint-v1";

void write_f64_le(std::ostream& out, double value) {
  const auto bits = std::bit_cast<std::uint64_t>(value);
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xFF);
  out.write(reinterpret_cast<const char*>(bytes), 8);
}

double read_f64_le(std::istream& in) {
  unsigned char bytes[8];
  in.read(reinterpret_cast<char*>(bytes), 8);
  if (!in) throw std::runtime_error("checkpoint blob ended early");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace

std::string provenance_name(Provenance p) {
  switch (p) {
    case Provenance::standard:
      return "standard";
    case Provenance::adversarial:
      return "adversarial";
    case Provenance::finetuned:
      return "finetuned";
  }
  throw std::invalid_argument("unknown provenance enum value");
}

Provenance provenance_from_name(const std::string& name) {
  if (name == "standard") return Provenance::standard;
  if (name == "adversarial") return Provenance::adversarial;
  if (name == "finetuned") return Provenance::finetuned;
  throw std::invalid_argument("unknown provenance name: " + name);
}

void save_checkpoint(const Network& net, const std::string& path, Provenance provenance,
                     std::uint64_t seed) {
  if (net.depth() == 0) throw std::invalid_argument("save_checkpoint: empty network");
  nlohmann::json header;
  header["format"] = kFormatTag;
  header["dims"] = net.dims();
  std::vector<std::string> acts;
  for (Activation a : net.activations()) acts.push_back(activation_name(a));
  header["activations"] = acts;
  header["provenance"] = provenance_name(provenance);
  header["seed"] = seed;
  const std::size_t count = net.param_count(1, net.depth());
  header["value_count"] = count;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
  out << header.dump() << '\n';
  for (std::size_t j = 1; j <= net.depth(); ++j) {
    const DenseLayer& layer = net.layer(j);
    for (std::size_t i = 0; i < layer.weights.size(); ++i) write_f64_le(out, layer.weights[i]);
    for (std::size_t i = 0; i < layer.bias.size(); ++i) write_f64_le(out, layer.bias[i]);
  }
  if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  std::string header_line;
  if (!std::getline(in, header_line)) {
    throw std::runtime_error("load_checkpoint: missing header in " + path);
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_line);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error("load_checkpoint: bad header JSON in " + path + ": " + e.what());
  }
  if (!header.contains("format") || header["format"] != kFormatTag) {
    throw std::runtime_error("load_checkpoint: " + path + " is not a recognized checkpoint");
  }
  const auto dims = header.at("dims").get<std::vector<std::size_t>>();
  const auto act_names = header.at("activations").get<std::vector<std::string>>();
  std::vector<Activation> acts;
  for (const auto& name : act_names) acts.push_back(activation_from_name(name));

  Checkpoint ckpt;
  ckpt.network = Network::build(dims, acts, 0);
  ckpt.provenance = provenance_from_name(header.at("provenance").get<std::string>());
  ckpt.seed = header.at("seed").get<std::uint64_t>();

  const std::size_t count = header.at("value_count").get<std::size_t>();
  const std::size_t expected = ckpt.network.param_count(1, ckpt.network.depth());
  if (count != expected) {
    throw std::runtime_error("load_checkpoint: header claims " + std::to_string(count) +
                             " values but the architecture holds " + std::to_string(expected));
  }
  for (std::size_t j = 1; j <= ckpt.network.depth(); ++j) {
    DenseLayer& layer = ckpt.network.layer(j);
    for (std::size_t i = 0; i < layer.weights.size(); ++i) layer.weights[i] = read_f64_le(in);
    for (std::size_t i = 0; i < layer.bias.size(); ++i) layer.bias[i] = read_f64_le(in);
  }
  char extra;
  if (in.read(&extra, 1)) {
    throw std::runtime_error("load_checkpoint: trailing bytes after blob in " + path);
  }
  return ckpt;
}

}  // namespace semirobust
