#include <fstream>
#include <sstream>

#include "s2g/cli/harness.hpp"

namespace s2g::harness {

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  os << text;
  if (!os) throw DataError(path.string() + ": cannot write");
}

std::vector<std::vector<std::string>> read_tsv(const std::filesystem::path& path, std::size_t cols) {
  std::ifstream is(path);
  if (!is) throw DataError(path.string() + ": cannot open");
  std::vector<std::vector<std::string>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (lineno == 1 || line.empty()) continue;  // header
    std::vector<std::string> row;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, '\t')) row.push_back(cell);
    if (row.size() != cols) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(cols) +
                      " columns, got " + std::to_string(row.size()));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

double cell_double(const std::filesystem::path& path, const std::string& s) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::logic_error&) {
    pos = std::string::npos;
  }
  if (pos != s.size()) throw DataError(path.string() + ": bad number '" + s + "'");
  return v;
}

const std::string& need(const KeyValues& kv, const std::string& key, const std::filesystem::path& path) {
  auto it = kv.find(key);
  if (it == kv.end()) throw DataError(path.string() + ": missing key '" + key + "'");
  return it->second;
}

}  // namespace

void write_run(const std::filesystem::path& dir, const RunRecord& r) {
  std::filesystem::create_directories(dir);
  write_text(dir / "config.txt", config_text(r.config));
  write_text(dir / "val_metrics.txt", eval::to_key_values(r.val));
  write_text(dir / "test_metrics.txt", eval::to_key_values(r.test));

  std::ostringstream ep;
  ep << "epoch\ttrain_loss\tval_r2\n";
  for (const auto& e : r.epochs) {
    ep << e.epoch << '\t' << format_double(e.train_loss) << '\t' << format_double(e.val_r2) << '\n';
  }
  write_text(dir / "epochs.tsv", ep.str());

  std::ostringstream pr;
  pr << "y_true\ty_pred\n";
  for (std::size_t i = 0; i < r.test_true.size(); ++i) {
    pr << format_double(r.test_true[i]) << '\t' << format_double(r.test_pred[i]) << '\n';
  }
  write_text(dir / "test_predictions.tsv", pr.str());

  // Wall-clock lives apart from the metric files so those stay reproducible.
  KeyValues run;
  run["best_epoch"] = std::to_string(r.best_epoch);
  run["epochs"] = std::to_string(r.epochs.size());
  run["parameters"] = std::to_string(r.parameters);
  run["seconds"] = format_double(r.seconds);
  write_key_values(dir / "run.txt", run);
}

RunRecord read_run(const std::filesystem::path& dir) {
  RunRecord r;
  r.config = config_from_key_values(read_key_values(dir / "config.txt"));
  r.val = eval::from_key_values(read_key_values(dir / "val_metrics.txt"));
  r.test = eval::from_key_values(read_key_values(dir / "test_metrics.txt"));

  const auto run_path = dir / "run.txt";
  const auto run = read_key_values(run_path);
  try {
    r.best_epoch = std::stoul(need(run, "best_epoch", run_path));
    r.parameters = std::stoul(need(run, "parameters", run_path));
    r.seconds = std::stod(need(run, "seconds", run_path));
  } catch (const std::logic_error&) {
    throw DataError(run_path.string() + ": malformed value");
  }

  const auto ep_path = dir / "epochs.tsv";
  for (const auto& row : read_tsv(ep_path, 3)) {
    EpochLog e;
    e.epoch = static_cast<std::size_t>(cell_double(ep_path, row[0]));
    e.train_loss = cell_double(ep_path, row[1]);
    e.val_r2 = cell_double(ep_path, row[2]);
    r.epochs.push_back(e);
  }
  const auto pr_path = dir / "test_predictions.tsv";
  for (const auto& row : read_tsv(pr_path, 2)) {
    r.test_true.push_back(cell_double(pr_path, row[0]));
    r.test_pred.push_back(cell_double(pr_path, row[1]));
  }
  return r;
}

}  // namespace s2g::harness
