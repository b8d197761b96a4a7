#include "ltssl/sweep.hpp"

#include "ltssl/errors.hpp"
#include "ltssl/format.hpp"
#include "ltssl/rng.hpp"
#include "ltssl/trainer.hpp"

namespace ltssl {

std::size_t SweepGrid::size() const {
  if (axes.empty()) return 1;
  std::size_t n = 1;
  for (const auto& a : axes) n *= a.values.size();
  return n;
}

std::vector<std::pair<std::string, nlohmann::json>> SweepGrid::point(std::size_t i) const {
  std::vector<std::pair<std::string, nlohmann::json>> out(axes.size());
  for (std::size_t a = axes.size(); a-- > 0;) {
    const auto n = axes[a].values.size();
    out[a] = {axes[a].key, axes[a].values[i % n]};
    i /= n;
  }
  return out;
}

GridAxis default_axis(const std::string& name) {
  using nlohmann::json;
  GridAxis a{name, {}};
  if (name == "tau_e") {
    for (int i = 0; i <= 10; ++i) a.values.push_back(-11.0 + 0.5 * i);
  } else if (name == "temperature") {
    a.values = {0.5, 1.0, 1.5, 2.0, 4.0};
  } else if (name == "triplet_margin") {
    a.values = {0.1, 0.2, 0.3, 0.4};
  } else if (name == "lambda_u" || name == "lambda_ahtl") {
    a.values = {0.1, 0.5, 1.0, 1.5, 2.0, 4.0};
  } else {
    throw ConfigError("no default grid for '" + name + "'");
  }
  return a;
}

std::uint64_t derived_seed(std::uint64_t base_seed,
                           const std::vector<std::pair<std::string, nlohmann::json>>& point) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& [key, value] : point) {
    for (unsigned char c : key + "=" + value.dump() + ";") {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
  }
  return mix_seed({base_seed, static_cast<std::uint64_t>(StreamTag::kSweep), h});
}

std::vector<SweepRow> sweep(const TrainConfig& base, const SweepGrid& grid,
                            const DatasetSplit& split, const SweepRunner& runner,
                            std::ostream* progress) {
  for (const auto& a : grid.axes)
    if (a.values.empty()) throw ConfigError("sweep axis '" + a.key + "' has no values");
  const SweepRunner run = runner ? runner : [](const TrainConfig& c, const DatasetSplit& s) {
    return fit(c, s).report;
  };
  std::vector<SweepRow> rows;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    SweepRow row;
    row.point = grid.point(i);
    row.seed = derived_seed(base.seed, row.point);
    try {
      TrainConfig cfg = base;
      for (const auto& [key, value] : row.point) cfg.set(key, value);
      cfg.seed = row.seed;
      cfg.validate();
      row.report = run(cfg, split);
      row.ok = true;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    if (progress)
      *progress << "sweep point " << i + 1 << "/" << grid.size() << (row.ok ? " ok" : " failed: ")
                << row.error << std::endl;
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

std::string csv_value(const nlohmann::json& v) {
  if (v.is_number_float()) return fixed6(v.get<double>());
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

std::string csv_opt(const std::optional<double>& v) { return v ? fixed6(*v) : std::string(); }

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c == '\n' ? ' ' : c;
  }
  return out + "\"";
}

}  // namespace

void write_sweep_csv(std::ostream& os, const SweepGrid& grid, const std::vector<SweepRow>& rows) {
  for (const auto& a : grid.axes) os << a.key << ',';
  os << "seed,status,error,overall_accuracy,head_recall,tail_recall,pl_selected,pl_precision,"
        "pl_recall\n";
  for (const auto& r : rows) {
    for (const auto& [key, value] : r.point) os << csv_quote(csv_value(value)) << ',';
    os << r.seed << ',' << (r.ok ? "ok" : "failed") << ',' << csv_quote(r.error) << ',';
    if (r.report) {
      const auto& m = *r.report;
      os << fixed6(m.overall_accuracy) << ',' << csv_opt(m.head_recall) << ','
         << csv_opt(m.tail_recall) << ',';
      if (!m.pseudo_labels.empty()) {
        const auto& p = m.pseudo_labels.back();
        os << p.selected << ',' << csv_opt(p.precision) << ',' << csv_opt(p.recall);
      } else {
        os << ",,";
      }
    } else {
      os << ",,,,,";
    }
    os << '\n';
  }
}

}  // namespace ltssl
