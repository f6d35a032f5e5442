#include "s2g/data/cohort.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "s2g/core/io.hpp"
#include "s2g/core/rng.hpp"
#include "s2g/core/tensor.hpp"

namespace s2g::data {

namespace {

constexpr const char* kFormat = "s2g-cohort";
constexpr int kVersion = 1;

enum class Channel { lab, phenotype, vital, noise };

// Labs are only drawn in the first hours of the stay; phenotype channels carry
// a per-stay offset that only averaging over similar stays removes.
Channel channel_role(std::size_t c) {
  switch (c % 4) {
    case 0: return Channel::lab;
    case 1: return Channel::phenotype;
    case 2: return Channel::vital;
    default: return Channel::noise;
  }
}

const char* role_name(Channel r) {
  switch (r) {
    case Channel::lab: return "lab";
    case Channel::phenotype: return "phenotype";
    case Channel::vital: return "vital";
    default: return "noise";
  }
}

std::vector<FeatureGroup> static_layout(std::size_t d) {
  const std::size_t phys = std::min(d, (3 * d + 7) / 8);
  const std::size_t vit = std::min(d - phys, (3 * d + 7) / 8);
  std::vector<FeatureGroup> g;
  if (phys > 0) g.push_back({"physiology", 0, phys});
  if (vit > 0) g.push_back({"vitals", phys, phys + vit});
  if (phys + vit < d) g.push_back({"ethnicity", phys + vit, d});
  return g;
}

float f32(double v) { return static_cast<float>(v); }

std::string groups_to_string(const std::vector<FeatureGroup>& g) {
  std::ostringstream os;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (i) os << ',';
    os << g[i].name << ':' << g[i].begin << ':' << g[i].end;
  }
  return os.str();
}

std::vector<FeatureGroup> groups_from_string(const std::string& s) {
  std::vector<FeatureGroup> out;
  std::istringstream is(s);
  std::string item;
  while (std::getline(is, item, ',')) {
    const auto a = item.find(':'), b = item.rfind(':');
    if (a == std::string::npos || a == b) throw DataError("manifest: bad static group '" + item + "'");
    try {
      out.push_back({item.substr(0, a), std::stoul(item.substr(a + 1, b - a - 1)), std::stoul(item.substr(b + 1))});
    } catch (const std::logic_error&) {
      throw DataError("manifest: bad static group '" + item + "'");
    }
  }
  return out;
}

std::size_t manifest_size(const KeyValues& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) throw DataError("manifest: missing '" + key + "'");
  try {
    std::size_t pos = 0;
    const auto v = std::stoull(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument(key);
    return v;
  } catch (const std::logic_error&) {
    throw DataError("manifest: '" + key + "' is not an unsigned integer");
  }
}

void expect_shape(const std::string& file, std::size_t count, std::size_t dim, std::size_t want_count,
                  std::size_t want_dim) {
  if (count != want_count || dim != want_dim) {
    throw DataError(file + ": header says " + std::to_string(count) + "x" + std::to_string(dim) + ", manifest implies " +
                    std::to_string(want_count) + "x" + std::to_string(want_dim));
  }
}

}  // namespace

void Cohort::validate() const {
  if (n == 0) throw DataError("cohort: no stays");
  const std::size_t cells = n * steps * d_ts;
  if (ts.size() != cells || mask.size() != cells) throw DataError("cohort: time-series size mismatch");
  if (flat.size() != n * d_flat) throw DataError("cohort: static size mismatch");
  if (labels.size() != n) throw DataError("cohort: label count mismatch");
  if (codes.row_count() != n) throw DataError("cohort: diagnosis row count mismatch");
  if (emb.rows != n) throw DataError("cohort: embedding row count mismatch");
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(labels[i]) || labels[i] <= 0.0f) {
      throw DataError("cohort: label of stay " + std::to_string(i) + " is not a positive finite number");
    }
    const auto row = mask.begin() + static_cast<std::ptrdiff_t>(i * steps * d_ts);
    if (std::none_of(row, row + static_cast<std::ptrdiff_t>(steps * d_ts), [](std::uint8_t m) { return m != 0; })) {
      throw DataError("cohort: stay " + std::to_string(i) + " has no observations");
    }
  }
  for (float v : ts) {
    if (!std::isfinite(v)) throw DataError("cohort: non-finite time-series value");
  }
  for (float v : flat) {
    if (!std::isfinite(v)) throw DataError("cohort: non-finite static value");
  }
  for (std::uint8_t m : mask) {
    if (m > 1) throw DataError("cohort: mask entries must be 0 or 1");
  }
  for (const auto& g : static_groups) {
    if (g.begin >= g.end || g.end > d_flat) throw DataError("cohort: static group '" + g.name + "' out of range");
  }
}

const FeatureGroup& Cohort::group(const std::string& name) const {
  for (const auto& g : static_groups) {
    if (g.name == name) return g;
  }
  std::string valid;
  for (const auto& g : static_groups) valid += (valid.empty() ? "" : ", ") + g.name;
  throw std::invalid_argument("unknown feature group '" + name + "' (valid: " + valid + ")");
}

Cohort generate_cohort(const SynthConfig& cfg) {
  if (cfg.n_stays == 0 || cfg.d_ts == 0 || cfg.d_flat == 0 || cfg.d_codes == 0 || cfg.emb_dim == 0 ||
      cfg.phenotypes == 0) {
    throw std::invalid_argument("generate_cohort: all sizes must be >= 1");
  }
  const std::size_t n = cfg.n_stays, T = kSteps, d = cfg.d_ts, P = cfg.phenotypes;
  Rng latent(mix_seed(cfg.seed, 1)), series(mix_seed(cfg.seed, 2)), stat(mix_seed(cfg.seed, 3)),
      code_rng(mix_seed(cfg.seed, 4)), emb_rng(mix_seed(cfg.seed, 5));

  // Phenotype effects, standardized so the planted variance split is fixed.
  std::vector<double> effect(P);
  for (double& e : effect) e = latent.normal();
  if (P > 1) {
    const double m = std::accumulate(effect.begin(), effect.end(), 0.0) / static_cast<double>(P);
    double ss = 0.0;
    for (double e : effect) ss += (e - m) * (e - m);
    const double sd = std::sqrt(ss / static_cast<double>(P));
    for (double& e : effect) e = sd > 0.0 ? (e - m) / sd : 0.0;
  } else {
    effect[0] = 0.0;
  }

  Cohort c;
  c.n = n;
  c.d_ts = d;
  c.d_flat = cfg.d_flat;
  c.static_groups = static_layout(cfg.d_flat);
  c.ts.assign(n * T * d, 0.0f);
  c.mask.assign(n * T * d, 0);
  c.flat.assign(n * cfg.d_flat, 0.0f);
  c.labels.resize(n);
  c.severity.resize(n);

  std::vector<std::size_t> phen(n);
  std::vector<double> adm(n);
  for (std::size_t i = 0; i < n; ++i) {
    phen[i] = static_cast<std::size_t>(latent.below(P));
    c.severity[i] = latent.normal();
    adm[i] = latent.normal();
    const double log_y = std::log(2.0) + 0.6 * c.severity[i] + 0.35 * adm[i] + 0.5 * effect[phen[i]] +
                         0.25 * latent.normal();
    c.labels[i] = f32(std::exp(log_y));
  }

  for (std::size_t i = 0; i < n; ++i) {
    const double s = c.severity[i];
    const double offset = series.normal();  // shared by every phenotype channel of this stay
    for (std::size_t ch = 0; ch < d; ++ch) {
      const Channel role = channel_role(ch);
      double ar = series.normal();
      for (std::size_t t = 0; t < T; ++t) {
        const std::size_t at = (i * T + t) * d + ch;
        double v = 0.0, p_obs = 0.0;
        switch (role) {
          case Channel::lab:
            v = s + 0.4 * series.normal();
            p_obs = t < 12 ? 0.35 : 0.0;
            break;
          case Channel::phenotype:
            v = effect[phen[i]] + offset + 0.3 * series.normal();
            p_obs = 0.5;
            break;
          case Channel::vital:
            ar = 0.8 * ar + 0.6 * series.normal();
            v = 0.35 * s + ar;
            p_obs = 0.9;
            break;
          case Channel::noise:
            ar = 0.8 * ar + 0.6 * series.normal();
            v = ar;
            p_obs = 0.6;
            break;
        }
        const bool obs = series.uniform() < p_obs;
        c.ts[at] = f32(v);
        c.mask[at] = obs ? 1 : 0;
      }
    }
    const auto row = c.mask.begin() + static_cast<std::ptrdiff_t>(i * T * d);
    if (std::none_of(row, row + static_cast<std::ptrdiff_t>(T * d), [](std::uint8_t m) { return m != 0; })) {
      c.mask[((i + 1) * T - 1) * d] = 1;
    }
    for (std::size_t k = 0; k < T * d; ++k) {
      if (!c.mask[i * T * d + k]) c.ts[i * T * d + k] = 0.0f;
    }
  }

  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& g : c.static_groups) {
      for (std::size_t j = g.begin; j < g.end; ++j) {
        double v = 0.0;
        if (g.name == "physiology") {
          v = (j - g.begin) % 2 == 0 ? adm[i] + 0.3 * stat.normal() : 0.5 * adm[i] + stat.normal();
        } else if (g.name == "vitals") {
          v = 0.3 * c.severity[i] + stat.normal();
        } else {
          v = stat.uniform() < 0.3 ? 1.0 : 0.0;
        }
        c.flat[i * cfg.d_flat + j] = f32(v);
      }
    }
  }

  const std::size_t block = std::max<std::size_t>(1, cfg.d_codes / P);
  std::vector<std::vector<std::uint32_t>> rows(n);
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned count = 1 + code_rng.poisson(3.0);
    for (unsigned k = 0; k < count; ++k) {
      std::size_t code = 0;
      if (code_rng.uniform() < 0.8) {
        code = (phen[i] * block + code_rng.below(block)) % cfg.d_codes;
      } else {
        code = code_rng.below(cfg.d_codes);
      }
      rows[i].push_back(static_cast<std::uint32_t>(code));
    }
  }
  c.codes = graph::DiagnosisMatrix::from_rows(std::move(rows), cfg.d_codes);

  std::vector<double> centroids(P * cfg.emb_dim);
  for (double& v : centroids) v = emb_rng.normal();
  c.emb.rows = n;
  c.emb.dim = cfg.emb_dim;
  c.emb.data.resize(n * cfg.emb_dim);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < cfg.emb_dim; ++k) {
      c.emb.data[i * cfg.emb_dim + k] = f32(centroids[phen[i] * cfg.emb_dim + k] + 0.6 * emb_rng.normal());
    }
  }
  c.validate();
  return c;
}

Split split_patients(std::size_t n, std::uint64_t seed, double f_train, double f_val) {
  if (n < 3) throw std::invalid_argument("split_patients: need at least 3 stays");
  if (f_train < 0.0 || f_val < 0.0 || f_train + f_val > 1.0) throw std::invalid_argument("split_patients: bad fractions");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(order);
  const auto n_train = static_cast<std::size_t>(std::floor(f_train * static_cast<double>(n) + 1e-9));
  const auto n_val = static_cast<std::size_t>(std::floor(f_val * static_cast<double>(n) + 1e-9));
  Split s;
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
               order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
  return s;
}

Imputed impute_forward_fill(std::span<const float> ts, std::span<const std::uint8_t> mask, std::size_t n,
                            std::size_t steps, std::size_t d, double tau_hours) {
  if (ts.size() != n * steps * d || mask.size() != ts.size()) throw ShapeError("impute_forward_fill: size mismatch");
  if (!(tau_hours > 0.0)) throw std::invalid_argument("impute_forward_fill: tau must be > 0");
  Imputed out;
  out.values.assign(ts.size(), 0.0);
  out.decay.assign(ts.size(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t ch = 0; ch < d; ++ch) {
      double last = 0.0;
      long last_t = -1;
      for (std::size_t t = 0; t < steps; ++t) {
        const std::size_t at = (i * steps + t) * d + ch;
        if (mask[at]) {
          last = ts[at];
          last_t = static_cast<long>(t);
        }
        out.values[at] = last;
        out.decay[at] = last_t < 0 ? 0.0 : std::exp(-static_cast<double>(static_cast<long>(t) - last_t) / tau_hours);
      }
    }
  }
  return out;
}

void write_cohort(const std::filesystem::path& dir, const Cohort& c) {
  c.validate();
  std::filesystem::create_directories(dir);
  KeyValues kv;
  kv["format"] = kFormat;
  kv["version"] = std::to_string(kVersion);
  kv["n"] = std::to_string(c.n);
  kv["steps"] = std::to_string(c.steps);
  kv["d_ts"] = std::to_string(c.d_ts);
  kv["d_flat"] = std::to_string(c.d_flat);
  kv["d_codes"] = std::to_string(c.codes.cols);
  kv["emb_dim"] = std::to_string(c.emb.dim);
  kv["static_groups"] = groups_to_string(c.static_groups);
  std::string roles;
  for (std::size_t ch = 0; ch < c.d_ts; ++ch) roles += (ch ? "," : "") + std::string(role_name(channel_role(ch)));
  kv["channel_roles"] = roles;
  write_key_values(dir / "manifest.txt", kv);

  const auto u32 = [](std::size_t v) { return static_cast<std::uint32_t>(v); };
  write_f32_array(dir / "ts.bin", u32(c.n), u32(c.steps * c.d_ts), c.ts);
  write_u8_array(dir / "mask.bin", u32(c.n), u32(c.steps * c.d_ts), c.mask);
  write_f32_array(dir / "static.bin", u32(c.n), u32(c.d_flat), c.flat);
  write_f32_array(dir / "labels.bin", u32(c.n), 1, c.labels);
  graph::write_diagnosis_triplets(dir / "codes.txt", c.codes);
  graph::write_embeddings(dir / "emb.bin", c.emb);
}

Cohort read_cohort(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw DataError("cohort directory not found: " + dir.string());
  const KeyValues kv = read_key_values(dir / "manifest.txt");
  if (auto it = kv.find("format"); it == kv.end() || it->second != kFormat) {
    throw DataError("manifest.txt: not a cohort manifest (format != " + std::string(kFormat) + ")");
  }
  if (manifest_size(kv, "version") != static_cast<std::size_t>(kVersion)) {
    throw DataError("manifest.txt: unsupported version");
  }
  Cohort c;
  c.n = manifest_size(kv, "n");
  c.steps = manifest_size(kv, "steps");
  c.d_ts = manifest_size(kv, "d_ts");
  c.d_flat = manifest_size(kv, "d_flat");
  const std::size_t d_codes = manifest_size(kv, "d_codes");
  const std::size_t emb_dim = manifest_size(kv, "emb_dim");
  if (auto it = kv.find("static_groups"); it != kv.end() && !it->second.empty()) {
    c.static_groups = groups_from_string(it->second);
  }

  auto ts = read_f32_array(dir / "ts.bin");
  expect_shape("ts.bin", ts.count, ts.dim, c.n, c.steps * c.d_ts);
  c.ts = std::move(ts.values);
  auto mask = read_u8_array(dir / "mask.bin");
  expect_shape("mask.bin", mask.count, mask.dim, c.n, c.steps * c.d_ts);
  c.mask = std::move(mask.values);
  auto flat = read_f32_array(dir / "static.bin");
  expect_shape("static.bin", flat.count, flat.dim, c.n, c.d_flat);
  c.flat = std::move(flat.values);
  auto labels = read_f32_array(dir / "labels.bin");
  expect_shape("labels.bin", labels.count, labels.dim, c.n, 1);
  c.labels = std::move(labels.values);
  for (std::size_t i = 0; i < c.n; ++i) {
    if (!std::isfinite(c.labels[i])) throw DataError("labels.bin: non-finite label at row " + std::to_string(i));
  }
  c.codes = graph::read_diagnosis_triplets(dir / "codes.txt");
  if (c.codes.row_count() < c.n) c.codes.rows.resize(c.n);
  if (c.codes.row_count() != c.n || c.codes.cols > d_codes) throw DataError("codes.txt: does not match manifest");
  c.codes.cols = d_codes;
  c.emb = graph::read_embeddings(dir / "emb.bin");
  expect_shape("emb.bin", c.emb.rows, c.emb.dim, c.n, emb_dim);
  c.validate();
  return c;
}

}  // namespace s2g::data
