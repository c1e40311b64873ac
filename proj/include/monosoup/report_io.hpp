#pragma once

// JSON (canonical) and CSV (flat) forms of every report. Field and column
// order is fixed; numbers use the shortest round-tripping representation.

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "monosoup/checkpoint_io.hpp"
#include "monosoup/diagnostics.hpp"
#include "monosoup/merge.hpp"
#include "monosoup/monosoup.hpp"

namespace monosoup {

using ojson = nlohmann::ordered_json;

enum class ReportFormat { Json, Csv };

/// ".csv" selects CSV, anything else JSON.
inline ReportFormat format_for_path(const std::filesystem::path& path) {
  return path.extension() == ".csv" ? ReportFormat::Csv : ReportFormat::Json;
}

namespace detail {

inline std::string num(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

inline double parse_num(const std::string& s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) fail(ErrorCode::InvalidArgument, "bad number '" + s + "'");
  return v;
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header) { row(header); }

  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out_ << ',';
      out_ << csv_field(cells[i]);
    }
    out_ << '\n';
  }

  [[nodiscard]] std::string str() const { return out_.str(); }

 private:
  std::ostringstream out_;
};

template <typename T>
T required(const ojson& j, const char* key) {
  if (!j.contains(key)) fail(ErrorCode::MalformedHeader, std::string("report is missing field '") + key + "'");
  return j.at(key).get<T>();
}

}  // namespace detail

// ---- edit report -----------------------------------------------------------

inline ojson to_json(const EditReport& r) {
  ojson doc;
  doc["rank_rule"] = r.rank_rule.to_string();
  doc["vector_policy"] = r.vector_policy;
  ojson totals = ojson::object();
  for (const auto& [status, n] : r.totals()) totals[std::string(to_string(status))] = n;
  doc["totals"] = totals;
  ojson layers = ojson::array();
  for (const auto& l : r.layers) {
    layers.push_back({{"name", l.name},
                      {"k", l.k},
                      {"r", l.r},
                      {"rho", l.rho},
                      {"cos2_alpha", l.cos2_alpha},
                      {"lambda_low", l.lambda_low},
                      {"lambda_high", l.lambda_high},
                      {"energy_total", l.energy_total},
                      {"status", to_string(l.status)}});
  }
  doc["layers"] = layers;
  return doc;
}

inline EditReport edit_report_from_json(const ojson& doc) {
  EditReport r;
  r.rank_rule = RankRule::parse(detail::required<std::string>(doc, "rank_rule"));
  if (doc.contains("vector_policy")) r.vector_policy = doc.at("vector_policy").get<std::string>();
  for (const auto& j : doc.at("layers")) {
    LayerEditReport l;
    l.name = detail::required<std::string>(j, "name");
    l.k = detail::required<int>(j, "k");
    l.r = detail::required<int>(j, "r");
    l.rho = detail::required<double>(j, "rho");
    l.cos2_alpha = detail::required<double>(j, "cos2_alpha");
    l.lambda_low = detail::required<double>(j, "lambda_low");
    l.lambda_high = detail::required<double>(j, "lambda_high");
    l.energy_total = detail::required<double>(j, "energy_total");
    l.status = parse_layer_status(detail::required<std::string>(j, "status"));
    r.layers.push_back(std::move(l));
  }
  return r;
}

inline std::string to_csv(const EditReport& r) {
  detail::CsvWriter w({"name", "k", "r", "rho", "cos2_alpha", "lambda_low", "lambda_high", "energy_total", "status"});
  for (const auto& l : r.layers) {
    w.row({l.name, std::to_string(l.k), std::to_string(l.r), detail::num(l.rho), detail::num(l.cos2_alpha),
           detail::num(l.lambda_low), detail::num(l.lambda_high), detail::num(l.energy_total),
           std::string(to_string(l.status))});
  }
  return w.str();
}

// ---- spectrum report -------------------------------------------------------

inline ojson to_json(const SpectrumReport& r) {
  ojson doc;
  doc["fractions"] = r.fractions;
  ojson layers = ojson::array();
  for (const auto& l : r.layers) {
    ojson j;
    j["name"] = l.name;
    j["rows"] = l.rows;
    j["cols"] = l.cols;
    j["degenerate"] = l.degenerate;
    j["energy_total"] = l.energy_total;
    if (!l.degenerate) {
      j["k_effective"] = l.k_effective;
      ojson kr = ojson::object();
      for (const auto& [frac, k] : l.k_at_R) kr[detail::num(frac)] = k;
      j["k_at_R"] = kr;
      j["rho_at_keff"] = l.rho_at_keff;
      j["cos2_alpha_at_keff"] = l.cos2_alpha_at_keff;
    }
    j["singulars"] = l.singulars;
    layers.push_back(std::move(j));
  }
  doc["layers"] = layers;
  return doc;
}

inline SpectrumReport spectrum_report_from_json(const ojson& doc) {
  SpectrumReport r;
  r.fractions = detail::required<std::vector<double>>(doc, "fractions");
  for (const auto& j : doc.at("layers")) {
    LayerSpectrum l;
    l.name = detail::required<std::string>(j, "name");
    l.rows = detail::required<int>(j, "rows");
    l.cols = detail::required<int>(j, "cols");
    l.degenerate = detail::required<bool>(j, "degenerate");
    l.energy_total = detail::required<double>(j, "energy_total");
    l.singulars = detail::required<std::vector<double>>(j, "singulars");
    if (!l.degenerate) {
      l.k_effective = detail::required<int>(j, "k_effective");
      for (const auto& [key, k] : j.at("k_at_R").items()) l.k_at_R[detail::parse_num(key)] = k.get<int>();
      l.rho_at_keff = detail::required<double>(j, "rho_at_keff");
      l.cos2_alpha_at_keff = detail::required<double>(j, "cos2_alpha_at_keff");
    }
    r.layers.push_back(std::move(l));
  }
  return r;
}

inline std::string to_csv(const SpectrumReport& r) {
  std::vector<std::string> header{"name", "rows", "cols", "degenerate", "energy_total", "k_effective",
                                  "rho_at_keff", "cos2_alpha_at_keff"};
  for (double f : r.fractions) header.push_back("k_at_R=" + detail::num(f));
  detail::CsvWriter w(header);
  for (const auto& l : r.layers) {
    std::vector<std::string> row{l.name, std::to_string(l.rows), std::to_string(l.cols),
                                 l.degenerate ? "1" : "0", detail::num(l.energy_total)};
    if (l.degenerate) {
      row.insert(row.end(), 3 + r.fractions.size(), "");
    } else {
      row.push_back(std::to_string(l.k_effective));
      row.push_back(detail::num(l.rho_at_keff));
      row.push_back(detail::num(l.cos2_alpha_at_keff));
      for (double f : r.fractions) row.push_back(std::to_string(l.k_at_R.at(f)));
    }
    w.row(row);
  }
  return w.str();
}

/// Long-format spectrum: one row per (layer, index, sigma).
inline std::string singulars_csv(const SpectrumReport& r) {
  detail::CsvWriter w({"layer", "index", "sigma"});
  for (const auto& l : r.layers) {
    for (std::size_t i = 0; i < l.singulars.size(); ++i) {
      w.row({l.name, std::to_string(i + 1), detail::num(l.singulars[i])});
    }
  }
  return w.str();
}

// ---- pairwise alignment ----------------------------------------------------

inline ojson to_json(const PairwiseAlignmentTable& t) {
  ojson doc;
  doc["ids"] = t.ids;
  doc["mean_cos"] = t.mean_cos;
  if (!t.histograms.empty()) {
    ojson hist = ojson::array();
    for (const auto& [pair, counts] : t.histograms) {
      hist.push_back({{"a", t.ids[pair.first]}, {"b", t.ids[pair.second]}, {"counts", counts}});
    }
    doc["histograms"] = hist;
  }
  return doc;
}

inline PairwiseAlignmentTable alignment_table_from_json(const ojson& doc) {
  PairwiseAlignmentTable t;
  t.ids = detail::required<std::vector<std::string>>(doc, "ids");
  t.mean_cos = detail::required<std::vector<std::vector<double>>>(doc, "mean_cos");
  if (doc.contains("histograms")) {
    auto index_of = [&](const std::string& id) {
      return static_cast<std::size_t>(std::find(t.ids.begin(), t.ids.end(), id) - t.ids.begin());
    };
    for (const auto& h : doc.at("histograms")) {
      t.histograms[{index_of(h.at("a")), index_of(h.at("b"))}] = h.at("counts").get<std::vector<std::size_t>>();
    }
  }
  return t;
}

inline std::string to_csv(const PairwiseAlignmentTable& t) {
  detail::CsvWriter w({"a", "b", "mean_cos"});
  for (std::size_t i = 0; i < t.ids.size(); ++i) {
    for (std::size_t j = i + 1; j < t.ids.size(); ++j) w.row({t.ids[i], t.ids[j], detail::num(t.mean_cos[i][j])});
  }
  return w.str();
}

// ---- λ distribution --------------------------------------------------------

inline ojson to_json(const std::vector<LambdaGroupStats>& groups) {
  ojson doc = ojson::array();
  auto stat = [](const Stat& s) { return ojson{{"mean", s.mean}, {"min", s.min}, {"max", s.max}}; };
  for (const auto& g : groups) {
    doc.push_back({{"group", g.group},
                   {"layers", g.layers},
                   {"lambda_high", stat(g.lambda_high)},
                   {"lambda_low", stat(g.lambda_low)},
                   {"gap", stat(g.gap)}});
  }
  return doc;
}

inline std::vector<LambdaGroupStats> lambda_stats_from_json(const ojson& doc) {
  auto stat = [](const ojson& j) {
    return Stat{j.at("mean").get<double>(), j.at("min").get<double>(), j.at("max").get<double>()};
  };
  std::vector<LambdaGroupStats> out;
  for (const auto& g : doc) {
    out.push_back({g.at("group").get<std::string>(), g.at("layers").get<std::size_t>(), stat(g.at("lambda_high")),
                   stat(g.at("lambda_low")), stat(g.at("gap"))});
  }
  return out;
}

inline std::string to_csv(const std::vector<LambdaGroupStats>& groups) {
  detail::CsvWriter w({"group", "layers", "lambda_high_mean", "lambda_high_min", "lambda_high_max", "lambda_low_mean",
                       "lambda_low_min", "lambda_low_max", "gap_mean", "gap_min", "gap_max"});
  for (const auto& g : groups) {
    w.row({g.group, std::to_string(g.layers), detail::num(g.lambda_high.mean), detail::num(g.lambda_high.min),
           detail::num(g.lambda_high.max), detail::num(g.lambda_low.mean), detail::num(g.lambda_low.min),
           detail::num(g.lambda_low.max), detail::num(g.gap.mean), detail::num(g.gap.min), detail::num(g.gap.max)});
  }
  return w.str();
}

// ---- truncation sweep ------------------------------------------------------

inline ojson to_json(const TruncationSweep& s) {
  ojson doc;
  ojson outputs = ojson::array();
  for (const auto& o : s.outputs) outputs.push_back({{"R", o.fraction}, {"path", o.path.string()}});
  doc["outputs"] = outputs;
  ojson rows = ojson::array();
  for (const auto& r : s.rows) {
    rows.push_back({{"R", r.fraction}, {"layer", r.layer}, {"k", r.k}, {"retained_energy", r.retained_energy}});
  }
  doc["rows"] = rows;
  return doc;
}

inline std::string to_csv(const TruncationSweep& s) {
  detail::CsvWriter w({"R", "layer", "k", "retained_energy"});
  for (const auto& r : s.rows) w.row({detail::num(r.fraction), r.layer, std::to_string(r.k), detail::num(r.retained_energy)});
  return w.str();
}

// ---- merge side reports ----------------------------------------------------

inline ojson to_json(const ModelStockResult& r) {
  ojson doc;
  ojson layers = ojson::array();
  for (const auto& [name, c] : r.alignment.per_layer) {
    const bool clamped = std::find(r.clamped_layers.begin(), r.clamped_layers.end(), name) != r.clamped_layers.end();
    layers.push_back({{"name", name}, {"cos_alpha", c}, {"lambda", r.lambdas.at(name)}, {"clamped", clamped}});
  }
  doc["mean_cos"] = r.alignment.mean;
  doc["layers"] = layers;
  return doc;
}

inline std::string to_csv(const ModelStockResult& r) {
  detail::CsvWriter w({"name", "cos_alpha", "lambda", "clamped"});
  for (const auto& [name, c] : r.alignment.per_layer) {
    const bool clamped = std::find(r.clamped_layers.begin(), r.clamped_layers.end(), name) != r.clamped_layers.end();
    w.row({name, detail::num(c), detail::num(r.lambdas.at(name)), clamped ? "1" : "0"});
  }
  return w.str();
}

inline ojson to_json(const SelectionResult& r) {
  ojson doc;
  doc["selected"] = r.selected;
  ojson trace = ojson::array();
  for (const auto& s : r.trace) trace.push_back({{"id", s.id}, {"score", s.score}, {"accepted", s.accepted}});
  doc["trace"] = trace;
  return doc;
}

inline std::string to_csv(const SelectionResult& r) {
  detail::CsvWriter w({"id", "score", "accepted"});
  for (const auto& s : r.trace) w.row({s.id, detail::num(s.score), s.accepted ? "1" : "0"});
  return w.str();
}

// ---- emission --------------------------------------------------------------

template <typename Doc>
std::string render_report(const Doc& doc, ReportFormat fmt) {
  if (fmt == ReportFormat::Csv) return to_csv(doc);
  return to_json(doc).dump(2) + "\n";
}

template <typename Doc>
void emit_report(const Doc& doc, ReportFormat fmt, const std::filesystem::path& path) {
  write_file_atomic(path, render_report(doc, fmt));
}

template <typename Doc>
void emit_report(const Doc& doc, const std::filesystem::path& path) {
  emit_report(doc, format_for_path(path), path);
}

inline ojson read_json_file(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path);
  try {
    return ojson::parse(reinterpret_cast<const char*>(bytes.data()),
                        reinterpret_cast<const char*>(bytes.data()) + bytes.size());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::MalformedHeader, "'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

}  // namespace monosoup
