#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "s2g/cli/harness.hpp"

namespace s2g::harness {

namespace {

struct LoadedRun {
  std::string name;  // path relative to the report root
  RunRecord record;
};

std::string variant_of(const RunConfig& c) {
  std::vector<std::string> parts;
  if (!c.model.use_graph) parts.push_back("no_graph");
  if (!c.model.use_ts) parts.push_back("no_ts");
  if (!c.model.use_static) parts.push_back("no_static");
  if (c.window_hours != data::kSteps) parts.push_back("window_hours=" + std::to_string(c.window_hours));
  if (c.edge_dropout > 0.0) parts.push_back("edge_dropout=" + format_double(c.edge_dropout));
  for (const auto& g : c.drop_groups) parts.push_back("drop=" + g);
  if (parts.empty()) return "baseline";
  std::string s;
  for (std::size_t i = 0; i < parts.size(); ++i) s += (i ? "," : "") + parts[i];
  return s;
}

std::string num(double v) {
  if (!std::isfinite(v)) return format_double(v);
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  os << text;
  if (!os) throw DataError(path.string() + ": cannot write");
}

// Minimal SVG plotting on a fixed 480x320 canvas.
class Plot {
 public:
  Plot(std::string title, std::string xlabel, std::string ylabel, double x0, double x1, double y0, double y1)
      : x0_(x0), x1_(x1 > x0 ? x1 : x0 + 1.0), y0_(y0), y1_(y1 > y0 ? y1 : y0 + 1.0) {
    os_ << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"480\" height=\"320\" font-family=\"sans-serif\" "
           "font-size=\"11\">\n"
        << "<rect width=\"480\" height=\"320\" fill=\"white\"/>\n"
        << "<text x=\"240\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">" << title << "</text>\n"
        << "<line x1=\"60\" y1=\"280\" x2=\"460\" y2=\"280\" stroke=\"black\"/>\n"
        << "<line x1=\"60\" y1=\"40\" x2=\"60\" y2=\"280\" stroke=\"black\"/>\n"
        << "<text x=\"260\" y=\"310\" text-anchor=\"middle\">" << xlabel << "</text>\n"
        << "<text x=\"14\" y=\"160\" text-anchor=\"middle\" transform=\"rotate(-90 14 160)\">" << ylabel
        << "</text>\n";
    for (int i = 0; i <= 4; ++i) {
      const double fx = x0_ + (x1_ - x0_) * i / 4.0, fy = y0_ + (y1_ - y0_) * i / 4.0;
      os_ << "<text x=\"" << px(fx) << "\" y=\"294\" text-anchor=\"middle\">" << num(fx) << "</text>\n"
          << "<text x=\"56\" y=\"" << py(fy) + 4 << "\" text-anchor=\"end\">" << num(fy) << "</text>\n";
    }
  }

  double px(double x) const { return 60.0 + 400.0 * (x - x0_) / (x1_ - x0_); }
  double py(double y) const { return 280.0 - 240.0 * (y - y0_) / (y1_ - y0_); }

  void point(double x, double y, const std::string& label = {}) {
    if (!std::isfinite(x) || !std::isfinite(y)) return;
    os_ << "<circle cx=\"" << num(px(x)) << "\" cy=\"" << num(py(y)) << "\" r=\"3\" fill=\"steelblue\">";
    if (!label.empty()) os_ << "<title>" << label << "</title>";
    os_ << "</circle>\n";
  }

  void line(double xa, double ya, double xb, double yb, const std::string& style) {
    os_ << "<line x1=\"" << num(px(xa)) << "\" y1=\"" << num(py(ya)) << "\" x2=\"" << num(px(xb)) << "\" y2=\""
        << num(py(yb)) << "\" " << style << "/>\n";
  }

  void bar(std::size_t i, std::size_t count, double v, double sd, const std::string& label) {
    const double w = 400.0 / static_cast<double>(count);
    const double left = 60.0 + w * static_cast<double>(i) + 0.15 * w;
    const double top = std::min(py(v), py(0.0)), h = std::abs(py(v) - py(0.0));
    os_ << "<rect x=\"" << num(left) << "\" y=\"" << num(top) << "\" width=\"" << num(0.7 * w) << "\" height=\""
        << num(h) << "\" fill=\"steelblue\"><title>" << label << "</title></rect>\n";
    const double mid = left + 0.35 * w;
    os_ << "<line x1=\"" << num(mid) << "\" y1=\"" << num(py(v - sd)) << "\" x2=\"" << num(mid) << "\" y2=\""
        << num(py(v + sd)) << "\" stroke=\"black\"/>\n"
        << "<text x=\"" << num(mid) << "\" y=\"" << num(py(0.0) - 4.0) << "\" text-anchor=\"end\" font-size=\"9\" "
        << "transform=\"rotate(-90 " << num(mid) << ' ' << num(py(0.0) - 4.0) << ")\">" << label << "</text>\n";
  }

  std::string finish() {
    os_ << "</svg>\n";
    return os_.str();
  }

 private:
  double x0_, x1_, y0_, y1_;
  std::ostringstream os_;
};

std::pair<double, double> span_of(const std::vector<double>& v, bool include_zero = false) {
  double lo = include_zero ? 0.0 : std::numeric_limits<double>::infinity();
  double hi = include_zero ? 0.0 : -std::numeric_limits<double>::infinity();
  for (double x : v) {
    if (!std::isfinite(x)) continue;
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  if (!std::isfinite(lo)) return {0.0, 1.0};
  const double pad = hi > lo ? 0.05 * (hi - lo) : 0.5;
  return {lo - pad, hi + pad};
}

std::string scatter(const std::vector<LoadedRun>& runs, const std::string& title, const std::string& xlabel,
                    const std::function<double(const RunRecord&)>& x) {
  std::vector<double> xs, ys;
  for (const auto& r : runs) {
    xs.push_back(x(r.record));
    ys.push_back(r.record.test.r2);
  }
  const auto [xa, xb] = span_of(xs);
  const auto [ya, yb] = span_of(ys);
  Plot p(title, xlabel, "test R2", xa, xb, ya, yb);
  for (std::size_t i = 0; i < runs.size(); ++i) p.point(xs[i], ys[i], runs[i].name);
  return p.finish();
}

}  // namespace

std::vector<std::filesystem::path> write_report(const std::filesystem::path& root, const std::filesystem::path& out) {
  if (!std::filesystem::is_directory(root)) throw DataError(root.string() + ": not a directory");
  std::vector<std::filesystem::path> dirs;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
    if (e.is_regular_file() && e.path().filename() == "run.txt") dirs.push_back(e.path().parent_path());
  }
  if (dirs.empty()) throw DataError(root.string() + ": no run directories found");
  std::sort(dirs.begin(), dirs.end());

  std::vector<LoadedRun> runs;
  for (const auto& d : dirs) {
    auto rel = std::filesystem::relative(d, root).generic_string();
    runs.push_back({rel == "." ? d.filename().generic_string() : rel, read_run(d)});
  }
  std::filesystem::create_directories(out);
  std::vector<std::filesystem::path> written;
  auto emit = [&](const std::string& name, const std::string& text) {
    write_text(out / name, text);
    written.push_back(out / name);
  };

  {
    std::ostringstream os;
    os << "run\tvariant\tseed\tparameters\tseconds\tbest_epoch\tval_r2";
    for (const auto& [k, v] : runs.front().record.test.fields()) os << "\ttest_" << k;
    os << '\n';
    for (const auto& r : runs) {
      const auto& c = r.record.config;
      os << r.name << '\t' << variant_of(c) << '\t' << c.seed << '\t' << r.record.parameters << '\t'
         << format_double(r.record.seconds) << '\t' << r.record.best_epoch << '\t' << format_double(r.record.val.r2);
      for (const auto& [k, v] : r.record.test.fields()) os << '\t' << format_double(v);
      os << '\n';
    }
    emit("runs.tsv", os.str());
  }

  emit("params_vs_r2.svg", scatter(runs, "Parameters vs test R2", "parameters",
                                   [](const RunRecord& r) { return static_cast<double>(r.parameters); }));
  emit("time_vs_r2.svg",
       scatter(runs, "Training time vs test R2", "seconds", [](const RunRecord& r) { return r.seconds; }));

  {
    // Reliability of every run; the plot shows the best run by validation R2.
    std::ostringstream os;
    os << "run\tbin\tcount\tmean_pred\tmean_true\n";
    std::size_t best = 0;
    for (std::size_t i = 0; i < runs.size(); ++i) {
      const auto& rec = runs[i].record;
      if (rec.test_true.empty()) continue;
      const auto rel = eval::reliability_ece(rec.test_true, rec.test_pred);
      for (std::size_t b = 0; b < rel.counts.size(); ++b) {
        os << runs[i].name << '\t' << b << '\t' << rel.counts[b] << '\t' << format_double(rel.mean_pred[b]) << '\t'
           << format_double(rel.mean_true[b]) << '\n';
      }
      if (runs[best].record.test_true.empty() || rec.val.r2 > runs[best].record.val.r2) best = i;
    }
    emit("reliability.tsv", os.str());

    const auto& rec = runs[best].record;
    std::vector<double> means;
    eval::Reliability rel;
    if (!rec.test_true.empty()) {
      rel = eval::reliability_ece(rec.test_true, rec.test_pred);
      means = rel.mean_pred;
      means.insert(means.end(), rel.mean_true.begin(), rel.mean_true.end());
    }
    const auto [lo, hi] = span_of(means, true);
    Plot p("Reliability (" + runs[best].name + ")", "mean predicted days", "mean observed days", lo, hi, lo, hi);
    p.line(lo, lo, hi, hi, "stroke=\"gray\" stroke-dasharray=\"4 3\"");
    for (std::size_t b = 0; b < rel.counts.size(); ++b) p.point(rel.mean_pred[b], rel.mean_true[b]);
    emit("reliability.svg", p.finish());
  }

  {
    std::map<std::string, std::vector<eval::MetricReport>> groups;
    for (const auto& r : runs) groups[variant_of(r.record.config)].push_back(r.record.test);
    std::vector<std::string> order;
    if (groups.count("baseline")) order.push_back("baseline");
    for (const auto& [k, v] : groups) {
      if (k != "baseline") order.push_back(k);
    }

    std::ostringstream os;
    os << "variant\truns\tr2_mean\tr2_sd\tmse_mean\tmse_sd\tkappa_mean\tece_mean\n";
    std::vector<double> extent;
    std::vector<eval::AggregateReport> aggs;
    for (const auto& name : order) {
      const auto a = eval::aggregate_seeds(groups[name]);
      aggs.push_back(a);
      os << name << '\t' << a.runs << '\t' << format_double(a.mean.r2) << '\t' << format_double(a.std.r2) << '\t'
         << format_double(a.mean.mse) << '\t' << format_double(a.std.mse) << '\t' << format_double(a.mean.kappa)
         << '\t' << format_double(a.mean.ece) << '\n';
      extent.push_back(a.mean.r2 - a.std.r2);
      extent.push_back(a.mean.r2 + a.std.r2);
    }
    emit("ablation.tsv", os.str());

    const auto [lo, hi] = span_of(extent, true);
    Plot p("Mean test R2 by variant", "variant", "test R2", 0.0, 1.0, lo, hi);
    for (std::size_t i = 0; i < order.size(); ++i) {
      if (std::isfinite(aggs[i].mean.r2)) p.bar(i, order.size(), aggs[i].mean.r2, aggs[i].std.r2, order[i]);
    }
    emit("ablation.svg", p.finish());
  }
  return written;
}

}  // namespace s2g::harness
