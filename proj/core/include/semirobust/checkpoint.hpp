#pragma once

#include <cstdint>
#include <string>

#include "semirobust/network.hpp"

namespace semirobust {

// how the stored weights were produced
enum class Provenance { standard, adversarial, finetuned };

std::string provenance_name(Provenance p);
Provenance provenance_from_name(const std::string& name);

struct Checkpoint {
  Network network;
  Provenance provenance = Provenance::standard;
  std::uint64_t seed = 0;
};

// One-line JSON header (architecture, provenance, seed, value count) followed
// by a newline and the parameters as little-endian float64, weights row-major
// then bias per layer. Round-trips bit-exactly.
void save_checkpoint(const Network& net, const std::string& path, Provenance provenance,
                     std::uint64_t seed);

Checkpoint load_checkpoint(const std::string& path);

}  // namespace semirobust
