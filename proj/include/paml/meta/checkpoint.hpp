#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "paml/meta/trainer.hpp"

namespace paml::meta {

/// 64-bit FNV-1a, used to fingerprint configs.
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Text dump of theta, psi and the meta-sgd rates with hex-float values.
void save_checkpoint(const TrainedModel& model, const std::filesystem::path& path, std::uint64_t config_hash);

/// Loads values into `model`, whose layouts must match the dump.
/// Returns the stored config hash.
std::uint64_t load_checkpoint(const std::filesystem::path& path, TrainedModel& model);

}  // namespace paml::meta
