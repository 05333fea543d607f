#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sm4/model.hpp"

namespace sm4 {

// Everything needed to resume training bit-for-bit or to run prediction.
struct Checkpoint {
  static constexpr int kFormatVersion = 1;

  std::vector<std::string> vocab;
  std::vector<std::string> user_ids;
  Hyperparams hyper;
  std::vector<double> nu;
  double sigma2 = 1.0;
  CountCache counts;
  LatentState state;

  std::uint64_t seed = 0;
  std::string rng_state;
  int iteration = 0;
  double initial_log_likelihood = 0.0;
  std::vector<double> log_likelihood_trace;

  bool operator==(const Checkpoint&) const = default;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string checkpoint_to_string(const Checkpoint& ckpt);
Checkpoint checkpoint_from_string(const std::string& text);

}  // namespace sm4
