#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "s2g/core/io.hpp"
#include "s2g/data/cohort.hpp"

using namespace s2g;
using namespace s2g::data;

namespace {

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& name) : path(std::filesystem::temp_directory_path() / ("s2g_" + name)) {
    std::filesystem::remove_all(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

SynthConfig small(std::uint64_t seed, std::size_t n) {
  SynthConfig s;
  s.seed = seed;
  s.n_stays = n;
  return s;
}

double skewness(const std::vector<float>& v) {
  const double n = static_cast<double>(v.size());
  double m = 0;
  for (float x : v) m += x / n;
  double m2 = 0, m3 = 0;
  for (float x : v) {
    m2 += (x - m) * (x - m) / n;
    m3 += (x - m) * (x - m) * (x - m) / n;
  }
  return m3 / std::pow(m2, 1.5);
}

void check_same(const Cohort& a, const Cohort& b) {
  CHECK(a.n == b.n);
  CHECK(a.ts == b.ts);
  CHECK(a.mask == b.mask);
  CHECK(a.flat == b.flat);
  CHECK(a.labels == b.labels);
  CHECK(a.codes.rows == b.codes.rows);
  CHECK(a.codes.cols == b.codes.cols);
  CHECK(a.emb.data == b.emb.data);
  REQUIRE(a.static_groups.size() == b.static_groups.size());
  for (std::size_t g = 0; g < a.static_groups.size(); ++g) {
    CHECK(a.static_groups[g].name == b.static_groups[g].name);
    CHECK(a.static_groups[g].begin == b.static_groups[g].begin);
    CHECK(a.static_groups[g].end == b.static_groups[g].end);
  }
}

}  // namespace

TEST_CASE("generator determinism and shape") {
  const auto a = generate_cohort(small(3, 200));
  const auto b = generate_cohort(small(3, 200));
  check_same(a, b);
  CHECK(a.severity == b.severity);
  CHECK(generate_cohort(small(4, 200)).labels != a.labels);

  const auto one = generate_cohort(small(1, 1));
  CHECK(one.n == 1);
  CHECK_NOTHROW(one.validate());
  CHECK(one.ts.size() == kSteps * one.d_ts);

  // Degenerate sizes still produce a valid cohort.
  SynthConfig tiny{5, 3, 1, 1, 1, 1, 1};
  CHECK_NOTHROW(generate_cohort(tiny).validate());
  tiny.d_ts = 0;
  CHECK_THROWS(generate_cohort(tiny));
}

TEST_CASE("planted signal") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto c = generate_cohort(small(seed, 1000));
    CHECK(skewness(c.labels) > 0.0);
    std::vector<float> sorted = c.labels;
    std::sort(sorted.begin(), sorted.end());
    double mean = 0;
    for (float y : c.labels) mean += y / 1000.0;
    CHECK(sorted[500] < mean);
  }
  const auto c = generate_cohort(small(11, 2000));
  double my = 0, ms = 0;
  for (std::size_t i = 0; i < c.n; ++i) {
    my += c.labels[i] / 2000.0;
    ms += c.severity[i] / 2000.0;
  }
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < c.n; ++i) {
    sxy += (c.labels[i] - my) * (c.severity[i] - ms);
    syy += (c.labels[i] - my) * (c.labels[i] - my);
    sxx += (c.severity[i] - ms) * (c.severity[i] - ms);
  }
  CHECK(sxy / std::sqrt(sxx * syy) > 0.5);

  // Lab channels are only ever observed during the first 12 hours.
  for (std::size_t i = 0; i < c.n; ++i) {
    for (std::size_t t = 12; t < kSteps; ++t) CHECK_FALSE(c.mask[(i * kSteps + t) * c.d_ts + 0]);
  }
  CHECK(c.group("physiology").begin == 0);
  CHECK_THROWS_WITH_AS(c.group("labs"), doctest::Contains("physiology"), std::invalid_argument);
}

TEST_CASE("patient split") {
  auto s = split_patients(100, 1);
  CHECK(s.train.size() == 70);
  CHECK(s.val.size() == 15);
  CHECK(s.test.size() == 15);
  auto t = split_patients(10, 1);
  CHECK(t.train.size() == 7);
  CHECK(t.val.size() == 1);
  CHECK(t.test.size() == 2);
  for (std::size_t n : {3, 17, 100, 2000}) {
    auto p = split_patients(n, 9);
    std::set<std::size_t> all(p.train.begin(), p.train.end());
    all.insert(p.val.begin(), p.val.end());
    all.insert(p.test.begin(), p.test.end());
    CHECK(all.size() == n);
    CHECK(p.train.size() + p.val.size() + p.test.size() == n);
    auto q = split_patients(n, 9);
    CHECK(p.train == q.train);
    CHECK(p.test == q.test);
  }
  CHECK(split_patients(100, 2).train != s.train);
  CHECK_THROWS(split_patients(2, 1));
}

TEST_CASE("forward fill with decay") {
  // 1 stay, 5 steps, 3 channels: fully observed / observed at t=0 only / never.
  const std::size_t T = 5, d = 3;
  std::vector<float> ts(T * d, 0.0f);
  std::vector<std::uint8_t> mask(T * d, 0);
  for (std::size_t t = 0; t < T; ++t) {
    ts[t * d] = static_cast<float>(t) + 0.5f;
    mask[t * d] = 1;
  }
  ts[1] = 7.0f;
  mask[1] = 1;
  const auto r = impute_forward_fill(ts, mask, 1, T, d);
  for (std::size_t t = 0; t < T; ++t) {
    CHECK(r.values[t * d] == ts[t * d]);
    CHECK(r.decay[t * d] == 1.0);
    CHECK(r.values[t * d + 1] == 7.0);
    CHECK(r.decay[t * d + 1] == doctest::Approx(std::exp(-double(t) / 12.0)).epsilon(1e-15));
    CHECK(r.values[t * d + 2] == 0.0);
    CHECK(r.decay[t * d + 2] == 0.0);
  }

  // Observed entries are untouched and decay stays in [0, 1].
  const auto c = generate_cohort(small(2, 50));
  const auto f = impute_forward_fill(c.ts, c.mask, c.n, kSteps, c.d_ts);
  for (std::size_t k = 0; k < c.ts.size(); ++k) {
    if (c.mask[k]) {
      CHECK(f.values[k] == double(c.ts[k]));
      CHECK(f.decay[k] == 1.0);
    }
    CHECK(f.decay[k] >= 0.0);
    CHECK(f.decay[k] <= 1.0);
  }
  CHECK_THROWS(impute_forward_fill(ts, std::vector<std::uint8_t>(3), 1, T, d));
}

TEST_CASE("cohort files round trip") {
  TempDir dir("cohort_rt");
  const auto c = generate_cohort(small(6, 3));
  write_cohort(dir.path, c);
  for (const char* f : {"manifest.txt", "ts.bin", "mask.bin", "static.bin", "labels.bin", "codes.txt", "emb.bin"}) {
    CHECK(std::filesystem::exists(dir.path / f));
  }
  const auto back = read_cohort(dir.path);
  check_same(c, back);

  // Mask bytes on disk: 8-byte header then one byte per cell.
  std::ifstream is(dir.path / "mask.bin", std::ios::binary);
  std::vector<char> bytes((std::istreambuf_iterator<char>(is)), {});
  REQUIRE(bytes.size() == 8 + c.mask.size());
  for (std::size_t k = 0; k < c.mask.size(); ++k) CHECK(static_cast<std::uint8_t>(bytes[8 + k]) == c.mask[k]);

  const auto big = generate_cohort(small(6, 300));
  TempDir dir2("cohort_rt2");
  write_cohort(dir2.path, big);
  check_same(big, read_cohort(dir2.path));
}

TEST_CASE("malformed cohort files") {
  TempDir dir("cohort_bad");
  const auto c = generate_cohort(small(8, 20));
  write_cohort(dir.path, c);

  const auto labels = dir.path / "labels.bin";
  const auto size = std::filesystem::file_size(labels);
  std::filesystem::resize_file(labels, size - 4);
  CHECK_THROWS_WITH_AS(read_cohort(dir.path), doctest::Contains("labels.bin"), DataError);
  std::filesystem::resize_file(labels, 4);
  CHECK_THROWS_WITH_AS(read_cohort(dir.path), doctest::Contains("header"), DataError);

  std::vector<float> nan_labels(c.labels);
  nan_labels[3] = std::nanf("");
  write_f32_array(labels, 20, 1, nan_labels);
  CHECK_THROWS_WITH_AS(read_cohort(dir.path), doctest::Contains("non-finite"), DataError);

  write_cohort(dir.path, c);
  write_f32_array(dir.path / "static.bin", 19, static_cast<std::uint32_t>(c.d_flat),
                  std::vector<float>(19 * c.d_flat, 0.0f));
  CHECK_THROWS_WITH_AS(read_cohort(dir.path), doctest::Contains("static.bin"), DataError);

  write_cohort(dir.path, c);
  auto kv = read_key_values(dir.path / "manifest.txt");
  kv["format"] = "other";
  write_key_values(dir.path / "manifest.txt", kv);
  CHECK_THROWS_AS(read_cohort(dir.path), DataError);
  CHECK_THROWS_AS(read_cohort(dir.path / "missing"), DataError);
}
