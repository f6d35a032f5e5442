#pragma once

// Cohort tensors and their on-disk layout, patient-wise splits, forward-fill
// imputation with an exponential decay channel, and the seeded synthetic
// cohort generator.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "s2g/graph/graph_builder.hpp"

namespace s2g::data {

inline constexpr std::size_t kSteps = 48;

/// Half-open column range [begin, end) of the static matrix.
struct FeatureGroup {
  std::string name;
  std::size_t begin = 0;
  std::size_t end = 0;
};

struct Cohort {
  std::size_t n = 0;
  std::size_t steps = kSteps;
  std::size_t d_ts = 0;
  std::size_t d_flat = 0;
  std::vector<float> ts;            // n x steps x d_ts, 0 where unobserved
  std::vector<std::uint8_t> mask;   // n x steps x d_ts
  std::vector<float> flat;          // n x d_flat
  std::vector<float> labels;        // days, > 0
  graph::DiagnosisMatrix codes;
  graph::EmbeddingMatrix emb;
  std::vector<FeatureGroup> static_groups;
  /// Planted latent severity (generator output only; not persisted).
  std::vector<double> severity;

  /// Throws DataError on inconsistent sizes, non-finite values, labels <= 0
  /// or a stay without any observation.
  void validate() const;
  const FeatureGroup& group(const std::string& name) const;
};

struct SynthConfig {
  std::uint64_t seed = 0;
  std::size_t n_stays = 2000;
  std::size_t d_ts = 16;
  std::size_t d_flat = 8;
  std::size_t d_codes = 64;
  std::size_t emb_dim = 16;
  std::size_t phenotypes = 8;
};

Cohort generate_cohort(const SynthConfig& cfg);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

/// Seeded shuffle; train = floor(f_train n), val = floor(f_val n), test gets
/// the remainder. Requires n >= 3.
Split split_patients(std::size_t n, std::uint64_t seed, double f_train = 0.70, double f_val = 0.15);

struct Imputed {
  std::vector<double> values;  // same layout as the input
  std::vector<double> decay;   // exp(-hours since last observation / tau), 0 before the first
};

/// Per stay and channel: carry the last observation forward (0 before the
/// first one).
Imputed impute_forward_fill(std::span<const float> ts, std::span<const std::uint8_t> mask, std::size_t n,
                            std::size_t steps, std::size_t d, double tau_hours = 12.0);

/// Directory with manifest.txt, ts.bin, mask.bin, static.bin, labels.bin,
/// codes.txt and emb.bin.
void write_cohort(const std::filesystem::path& dir, const Cohort& c);
Cohort read_cohort(const std::filesystem::path& dir);

}  // namespace s2g::data
