#pragma once

// The monosoup command-line front end. `run` is the whole program minus
// main() so tests can drive it in-process.
//
// Exit codes: 0 success, 1 evaluator failure, 2 usage error, 3 schema or
// format error, 4 fatal numerical degeneracy.

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "monosoup/monosoup_all.hpp"
#include "monosoup/synthetic.hpp"

namespace monosoup::cli {

namespace fs = std::filesystem;

enum ExitCode : int {
  kOk = 0,
  kEvaluatorFailure = 1,
  kUsage = 2,
  kFormat = 3,
  kNumerical = 4,
};

inline int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument:
    case ErrorCode::OutOfRange:
    case ErrorCode::IndexOutOfRange:
    case ErrorCode::EmptyPool:
    case ErrorCode::UnknownBlockStructure:
      return kUsage;
    case ErrorCode::MalformedHeader:
    case ErrorCode::OffsetOverlap:
    case ErrorCode::UnsupportedDtype:
    case ErrorCode::IoFailure:
    case ErrorCode::SchemaMismatch:
    case ErrorCode::ShapeMismatch:
    case ErrorCode::SampleCountMismatch:
      return kFormat;
    case ErrorCode::NonFiniteInput:
    case ErrorCode::AllZeroSpectrum:
    case ErrorCode::DegenerateAngle:
      return kNumerical;
    case ErrorCode::EvaluatorFailure:
      return kEvaluatorFailure;
  }
  return kUsage;
}

inline std::shared_ptr<spdlog::logger> logger() {
  static std::shared_ptr<spdlog::logger> log = [] {
    auto l = spdlog::stderr_logger_mt("monosoup");
    l->set_pattern("[%l] %v");
    return l;
  }();
  return log;
}

inline void configure_logging() {
  auto level = spdlog::level::warn;
  if (const char* env = std::getenv("MONOSOUP_LOG")) {
    const std::string v = env;
    if (v == "error") level = spdlog::level::err;
    else if (v == "warn") level = spdlog::level::warn;
    else if (v == "info") level = spdlog::level::info;
    else if (v == "debug") level = spdlog::level::debug;
  }
  logger()->set_level(level);
}

/// Top-level subcommand names, used when a config file supplies "command".
inline const std::set<std::string>& top_level_commands() {
  static const std::set<std::string> names{"edit", "merge", "inspect", "sweep", "cka", "synth"};
  return names;
}

/// Folds `--config job.json` into the argument list. Every key in the file
/// becomes `--key value` unless the same flag is already on the command line
/// (flags override the file). "command" may hold the subcommand path as a
/// string or list when the command line omits it. Arrays repeat the flag;
/// booleans add a bare flag when true.
inline std::vector<std::string> expand_config(std::vector<std::string> args) {
  auto it = std::find(args.begin(), args.end(), "--config");
  if (it == args.end()) return args;
  if (std::next(it) == args.end()) fail(ErrorCode::InvalidArgument, "--config needs a path");
  const fs::path path = *std::next(it);
  args.erase(it, std::next(it, 2));

  nlohmann::json cfg;
  try {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::IoFailure, "cannot open config '" + path.string() + "'");
    cfg = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidArgument, "config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  if (!cfg.is_object()) fail(ErrorCode::InvalidArgument, "config must be a JSON object");

  std::set<std::string> given;
  for (const auto& a : args) {
    if (a.starts_with("--")) given.insert(a.substr(2, a.find('=') == std::string::npos ? std::string::npos : a.find('=') - 2));
  }
  const bool has_command = std::any_of(args.begin() + (args.empty() ? 0 : 1), args.end(),
                                       [](const std::string& a) { return top_level_commands().contains(a); });
  if (cfg.contains("command") && !has_command) {
    std::vector<std::string> words;
    if (cfg["command"].is_string()) words.push_back(cfg["command"].get<std::string>());
    else for (const auto& w : cfg["command"]) words.push_back(w.get<std::string>());
    args.insert(args.begin() + (args.empty() ? 0 : 1), words.begin(), words.end());
  }

  auto scalar = [](const nlohmann::json& v) -> std::string {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_integer()) return std::to_string(v.get<long long>());
    if (v.is_number()) {
      char buf[64];
      const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v.get<double>());
      return std::string(buf, ptr);
    }
    fail(ErrorCode::InvalidArgument, "unsupported config value " + v.dump());
  };
  for (const auto& [key, value] : cfg.items()) {
    if (key == "command" || given.contains(key)) continue;
    const std::string flag = "--" + key;
    if (value.is_boolean()) {
      if (value.get<bool>()) args.push_back(flag);
    } else if (value.is_array()) {
      for (const auto& v : value) {
        args.push_back(flag);
        args.push_back(scalar(v));
      }
    } else {
      args.push_back(flag);
      args.push_back(scalar(value));
    }
  }
  return args;
}

inline std::vector<double> parse_fraction_list(const std::vector<std::string>& items) {
  std::vector<double> out;
  for (const auto& item : items) {
    std::string_view rest = item;
    while (!rest.empty()) {
      const auto comma = rest.find(',');
      const auto tok = rest.substr(0, comma);
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (ec != std::errc{} || ptr != tok.data() + tok.size()) {
        fail(ErrorCode::InvalidArgument, "cannot parse fraction '" + std::string(tok) + "'");
      }
      out.push_back(v);
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
  }
  check_fractions(out);
  return out;
}

struct PoolManifest {
  std::optional<fs::path> pre;
  struct Entry {
    std::string id;
    fs::path path;
    nlohmann::json fields;
  };
  std::vector<Entry> entries;
};

/// Pool manifest: either an array of {id, path, score?, ...} or an object
/// {"pre": path?, "candidates": [...]}. Relative paths resolve against the
/// manifest's directory.
inline PoolManifest read_pool_manifest(const fs::path& path) {
  const auto doc = read_json_file(path);
  const auto base = path.parent_path();
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };
  PoolManifest m;
  const ojson* list = &doc;
  if (doc.is_object()) {
    if (doc.contains("pre")) m.pre = resolve(doc.at("pre").get<std::string>());
    if (!doc.contains("candidates")) fail(ErrorCode::InvalidArgument, "pool manifest lacks 'candidates'");
    list = &doc.at("candidates");
  }
  if (!list->is_array()) fail(ErrorCode::InvalidArgument, "pool manifest candidates must be an array");
  std::set<std::string> ids;
  for (const auto& e : *list) {
    if (!e.contains("id") || !e.contains("path")) fail(ErrorCode::InvalidArgument, "pool entry needs 'id' and 'path'");
    PoolManifest::Entry entry{e.at("id").get<std::string>(), resolve(e.at("path").get<std::string>()),
                              nlohmann::json::parse(e.dump())};
    if (!ids.insert(entry.id).second) fail(ErrorCode::InvalidArgument, "duplicate pool id '" + entry.id + "'");
    m.entries.push_back(std::move(entry));
  }
  if (m.entries.empty()) fail(ErrorCode::EmptyPool, "pool manifest lists no candidates");
  return m;
}

/// Ranking from manifest field `rank_by`, or nullopt when no entry has it.
inline std::optional<std::map<std::string, double>> manifest_ranking(const PoolManifest& m, const std::string& rank_by) {
  std::map<std::string, double> r;
  for (const auto& e : m.entries) {
    if (e.fields.contains(rank_by)) {
      if (!e.fields.at(rank_by).is_number()) fail(ErrorCode::InvalidArgument, "ranking field '" + rank_by + "' of '" + e.id + "' is not a number");
      r[e.id] = e.fields.at(rank_by).get<double>();
    }
  }
  if (r.empty()) return std::nullopt;
  if (r.size() != m.entries.size()) fail(ErrorCode::InvalidArgument, "ranking field '" + rank_by + "' missing on some pool entries");
  return r;
}

inline CandidatePool load_pool(const PoolManifest& m, const std::optional<fs::path>& pre_path) {
  CandidatePool pool;
  const auto pre = pre_path ? pre_path : m.pre;
  if (pre) pool.pre = read_archive(*pre);
  for (const auto& e : m.entries) {
    logger()->info("loading candidate {} from {}", e.id, e.path.string());
    pool.candidates.push_back({e.id, read_archive(e.path)});
  }
  return pool;
}

inline std::map<std::string, double> read_scores_file(const fs::path& path) {
  const auto doc = read_json_file(path);
  if (!doc.is_object()) fail(ErrorCode::InvalidArgument, "scores file must be a JSON object");
  std::map<std::string, double> out;
  for (const auto& [k, v] : doc.items()) {
    if (!v.is_number()) fail(ErrorCode::InvalidArgument, "score for '" + k + "' is not a number");
    out[k] = v.get<double>();
  }
  return out;
}

inline void log_report_summary(const EditReport& r) {
  const auto t = r.totals();
  logger()->info("edited {} layers, {} vectors passed through, {} degenerate", t.at(LayerStatus::Edited),
                 t.at(LayerStatus::PassThroughVector), t.at(LayerStatus::DegenerateZeroDelta));
}

inline int run(const std::vector<std::string>& raw_args) {
  configure_logging();
  std::vector<std::string> args;
  try {
    args = expand_config(raw_args);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  }

  CLI::App app{"Weight-space editing and merging of fine-tuned checkpoints"};
  app.name("monosoup");
  app.require_subcommand(1);
  app.fallthrough();
  unsigned threads = 0;
  app.add_option("--threads", threads, "Worker threads (default: available parallelism)")->check(CLI::PositiveNumber);
  auto par = [&] { return Parallelism{threads}; };

  std::function<int()> action;

  // ---- edit ------------------------------------------------------------------
  struct {
    std::string pre, out, report, rule = "effective", vectors = "pass";
    std::vector<std::string> ft;
    bool fail_on_degenerate = false;
  } edit;
  auto* edit_cmd = app.add_subcommand("edit", "Spectral re-weighting of a fine-tuned checkpoint");
  edit_cmd->add_option("--pre", edit.pre, "Pre-trained checkpoint")->required();
  edit_cmd->add_option("--ft", edit.ft, "Fine-tuned checkpoint (repeat to average several first)")->required();
  edit_cmd->add_option("--out", edit.out, "Edited checkpoint path")->required();
  edit_cmd->add_option("--rule", edit.rule, "effective | energy:<R>");
  edit_cmd->add_option("--vectors", edit.vectors, "pass | wise:<lambda> for rank-0/1 tensors");
  edit_cmd->add_option("--report", edit.report, "Per-layer report (.json or .csv)");
  edit_cmd->add_flag("--fail-on-degenerate", edit.fail_on_degenerate, "Exit 4 if any layer has a zero update");
  edit_cmd->callback([&] {
    action = [&] {
      EditOptions opts{RankRule::parse(edit.rule), VectorPolicy::parse(edit.vectors), par()};
      const Checkpoint pre = read_archive(edit.pre);
      Checkpoint ft;
      if (edit.ft.size() == 1) {
        ft = read_archive(edit.ft.front());
      } else {
        std::vector<Candidate> cands;
        for (std::size_t i = 0; i < edit.ft.size(); ++i) cands.push_back({"ft" + std::to_string(i), read_archive(edit.ft[i])});
        std::vector<const Candidate*> members;
        for (const auto& c : cands) members.push_back(&c);
        ft = uniform_soup(members);
        logger()->info("averaged {} fine-tuned checkpoints before editing", cands.size());
      }
      auto result = edit_checkpoint(pre, ft, opts);
      log_report_summary(result.report);
      if (edit.fail_on_degenerate && result.report.totals().at(LayerStatus::DegenerateZeroDelta) > 0) {
        for (const auto& l : result.report.layers) {
          if (l.status == LayerStatus::DegenerateZeroDelta) logger()->error("degenerate zero update in '{}'", l.name);
        }
        return static_cast<int>(kNumerical);
      }
      if (!edit.report.empty()) emit_report(result.report, edit.report);
      write_archive(result.edited, edit.out);
      return static_cast<int>(kOk);
    };
  });

  // ---- merge -----------------------------------------------------------------
  auto* merge_cmd = app.add_subcommand("merge", "Multi-checkpoint and interpolation baselines");
  merge_cmd->require_subcommand(1);

  struct {
    std::string pre, pool, out, report, rank_by = "score";
  } pooled;

  auto* uniform_cmd = merge_cmd->add_subcommand("uniform", "Elementwise mean of every pool candidate");
  uniform_cmd->add_option("--pool", pooled.pool, "Pool manifest")->required();
  uniform_cmd->add_option("--out", pooled.out, "Output checkpoint")->required();
  uniform_cmd->callback([&] {
    action = [&] {
      const auto manifest = read_pool_manifest(pooled.pool);
      std::vector<Candidate> cands;
      for (const auto& e : manifest.entries) cands.push_back({e.id, read_archive(e.path)});
      std::vector<const Candidate*> members;
      for (const auto& c : cands) members.push_back(&c);
      write_archive(uniform_soup(members), pooled.out);
      return static_cast<int>(kOk);
    };
  });

  struct {
    std::string pre, ft1, ft2, out, report;
  } stock;
  auto* stock_cmd = merge_cmd->add_subcommand("stock", "Model Stock merge of two fine-tuned checkpoints");
  stock_cmd->add_option("--pre", stock.pre)->required();
  stock_cmd->add_option("--ft1", stock.ft1)->required();
  stock_cmd->add_option("--ft2", stock.ft2)->required();
  stock_cmd->add_option("--out", stock.out)->required();
  stock_cmd->add_option("--report", stock.report, "Per-layer cosine and λ (.json or .csv)");
  stock_cmd->callback([&] {
    action = [&] {
      const auto pre = read_archive(stock.pre);
      const auto a = read_archive(stock.ft1);
      const auto b = read_archive(stock.ft2);
      auto res = model_stock(pre, a, b);
      for (const auto& name : res.clamped_layers) logger()->warn("layer '{}' has negative alignment; λ clamped to 0", name);
      logger()->info("mean layer cosine {}", res.alignment.mean);
      if (!stock.report.empty()) emit_report(res, stock.report);
      write_archive(res.merged, stock.out);
      return static_cast<int>(kOk);
    };
  });

  std::string scores_path, eval_cmd;
  auto* greedy_cmd = merge_cmd->add_subcommand("greedy", "Validation-based greedy soup");
  greedy_cmd->add_option("--pre", pooled.pre, "Pre-trained checkpoint (overrides the manifest)");
  greedy_cmd->add_option("--pool", pooled.pool)->required();
  greedy_cmd->add_option("--out", pooled.out)->required();
  greedy_cmd->add_option("--rank-by", pooled.rank_by, "Manifest field that orders candidates");
  greedy_cmd->add_option("--report", pooled.report, "Selection trace (.json or .csv)");
  auto* scores_opt = greedy_cmd->add_option("--scores", scores_path, "Scores file keyed by sorted id sets");
  auto* eval_opt = greedy_cmd->add_option("--eval-cmd", eval_cmd, "Command printing a score; {soup} and {ids} are substituted");
  scores_opt->excludes(eval_opt);
  greedy_cmd->callback([&] {
    action = [&]() -> int {
      if (scores_path.empty() && eval_cmd.empty()) fail(ErrorCode::InvalidArgument, "greedy needs --scores or --eval-cmd");
      const auto manifest = read_pool_manifest(pooled.pool);
      auto ranking = manifest_ranking(manifest, pooled.rank_by);
      std::map<std::string, double> scores;
      if (!scores_path.empty()) scores = read_scores_file(scores_path);
      if (!ranking && !scores.empty()) {
        std::map<std::string, double> singles;
        for (const auto& e : manifest.entries) {
          if (scores.contains(e.id)) singles[e.id] = scores.at(e.id);
        }
        if (singles.size() == manifest.entries.size()) ranking = singles;
      }
      if (!ranking) fail(ErrorCode::InvalidArgument, "no ranking: add '" + pooled.rank_by + "' to the manifest");
      CandidatePool pool = load_pool(manifest, pooled.pre.empty() ? std::nullopt : std::optional<fs::path>(pooled.pre));
      pool.ranking = ranking;
      const Evaluator eval = scores_path.empty()
                                 ? command_evaluator(eval_cmd, fs::path(pooled.out).parent_path().empty()
                                                                   ? fs::current_path()
                                                                   : fs::path(pooled.out).parent_path())
                                 : scores_table_evaluator(scores);
      auto res = greedy_soup(pool, eval);
      for (const auto& s : res.trace) logger()->info("{} score {} {}", s.id, s.score, s.accepted ? "kept" : "dropped");
      if (!pooled.report.empty()) emit_report(res, pooled.report);
      write_archive(res.soup, pooled.out);
      for (const auto& id : res.selected) std::cout << id << "\n";
      return kOk;
    };
  });

  double sfgs_delta = 0.0;
  auto* sfgs_cmd = merge_cmd->add_subcommand("sfgs", "Similarity-filtered greedy soup");
  sfgs_cmd->add_option("--pre", pooled.pre, "Pre-trained checkpoint (overrides the manifest)");
  sfgs_cmd->add_option("--pool", pooled.pool)->required();
  sfgs_cmd->add_option("--delta", sfgs_delta, "Inclusion threshold on mean cosine")->required();
  sfgs_cmd->add_option("--out", pooled.out)->required();
  sfgs_cmd->add_option("--rank-by", pooled.rank_by, "Manifest field that orders candidates");
  sfgs_cmd->add_option("--report", pooled.report, "Selection trace (.json or .csv)");
  sfgs_cmd->callback([&] {
    action = [&]() -> int {
      if (!(sfgs_delta >= -1.0 && sfgs_delta <= 1.0)) fail(ErrorCode::OutOfRange, "--delta must lie in [-1, 1]");
      const auto manifest = read_pool_manifest(pooled.pool);
      const auto ranking = manifest_ranking(manifest, pooled.rank_by);
      if (!ranking) fail(ErrorCode::InvalidArgument, "no ranking: add '" + pooled.rank_by + "' to the manifest");
      if (pooled.pre.empty() && !manifest.pre) fail(ErrorCode::InvalidArgument, "sfgs needs --pre or a manifest 'pre'");
      CandidatePool pool = load_pool(manifest, pooled.pre.empty() ? std::nullopt : std::optional<fs::path>(pooled.pre));
      pool.ranking = ranking;
      auto res = sfgs(pool, sfgs_delta, par());
      for (const auto& s : res.trace) logger()->info("{} mean cosine {} {}", s.id, s.score, s.accepted ? "kept" : "dropped");
      if (!pooled.report.empty()) emit_report(res, pooled.report);
      write_archive(res.soup, pooled.out);
      for (const auto& id : res.selected) std::cout << id << "\n";
      return kOk;
    };
  });

  struct {
    std::string pre, ft, out, block_map;
    double lambda = 0.5, alpha = 0.1, beta = 0.9;
  } single;
  auto* wise_cmd = merge_cmd->add_subcommand("wiseft", "Linear interpolation between pre-trained and fine-tuned");
  wise_cmd->add_option("--pre", single.pre)->required();
  wise_cmd->add_option("--ft", single.ft)->required();
  wise_cmd->add_option("--lambda", single.lambda, "Weight on the fine-tuned model")->required();
  wise_cmd->add_option("--out", single.out)->required();
  wise_cmd->callback([&] {
    action = [&] {
      if (!(single.lambda >= 0.0 && single.lambda <= 1.0)) fail(ErrorCode::OutOfRange, "--lambda must lie in [0, 1]");
      write_archive(wise_ft(read_archive(single.pre), read_archive(single.ft), single.lambda), single.out);
      return static_cast<int>(kOk);
    };
  });

  auto* lines_cmd = merge_cmd->add_subcommand("lines", "Depth-linear scaling of the task vector");
  lines_cmd->add_option("--pre", single.pre)->required();
  lines_cmd->add_option("--ft", single.ft)->required();
  lines_cmd->add_option("--alpha", single.alpha, "Scale of the shallowest block")->required();
  lines_cmd->add_option("--beta", single.beta, "Scale of the deepest block")->required();
  lines_cmd->add_option("--block-map", single.block_map, "JSON map tensor name -> block index");
  lines_cmd->add_option("--out", single.out)->required();
  lines_cmd->callback([&] {
    action = [&] {
      if (!(single.alpha >= 0.0 && single.alpha <= single.beta && single.beta <= 1.0)) {
        fail(ErrorCode::OutOfRange, "need 0 <= alpha <= beta <= 1");
      }
      const auto pre = read_archive(single.pre);
      const auto ft = read_archive(single.ft);
      std::optional<BlockAssignment> blocks;
      if (!single.block_map.empty()) {
        blocks = blocks_from_map(ft, nlohmann::json::parse(read_json_file(single.block_map).dump()));
      }
      write_archive(lines(pre, ft, single.alpha, single.beta, blocks), single.out);
      return static_cast<int>(kOk);
    };
  });

  // ---- inspect ---------------------------------------------------------------
  auto* inspect_cmd = app.add_subcommand("inspect", "Spectra, alignment and λ statistics");
  inspect_cmd->require_subcommand(1);

  struct {
    std::string pre, ft, pool, out, singulars_csv, report, group = "layer_index";
    std::vector<std::string> fractions{"0.5,0.7,0.8,0.9,0.95"};
    int bins = 50;
    bool histograms = false;
  } insp;
  auto* spec_cmd = inspect_cmd->add_subcommand("spectrum", "Per-layer singular spectra and rank statistics");
  spec_cmd->add_option("--pre", insp.pre)->required();
  spec_cmd->add_option("--ft", insp.ft)->required();
  spec_cmd->add_option("--R", insp.fractions, "Energy fractions (comma-separated)");
  spec_cmd->add_option("--out", insp.out, "Report (.json or .csv)")->required();
  spec_cmd->add_option("--singulars-csv", insp.singulars_csv, "Long-format singular values");
  spec_cmd->callback([&] {
    action = [&] {
      const auto rs = parse_fraction_list(insp.fractions);
      auto rep = spectrum_report(read_archive(insp.pre), read_archive(insp.ft), rs, par());
      emit_report(rep, insp.out);
      if (!insp.singulars_csv.empty()) write_file_atomic(insp.singulars_csv, singulars_csv(rep));
      return static_cast<int>(kOk);
    };
  });

  auto* align_cmd = inspect_cmd->add_subcommand("alignment", "Pairwise mean layer cosine across a pool");
  align_cmd->add_option("--pre", insp.pre, "Pre-trained checkpoint (overrides the manifest)");
  align_cmd->add_option("--pool", insp.pool)->required();
  align_cmd->add_option("--out", insp.out, "Table (.json or .csv)")->required();
  align_cmd->add_flag("--histograms", insp.histograms, "Include per-pair cosine histograms");
  align_cmd->add_option("--bins", insp.bins, "Histogram bins over [-1, 1]")->check(CLI::PositiveNumber);
  align_cmd->callback([&] {
    action = [&] {
      const auto manifest = read_pool_manifest(insp.pool);
      if (insp.pre.empty() && !manifest.pre) fail(ErrorCode::InvalidArgument, "alignment needs --pre or a manifest 'pre'");
      const auto pool = load_pool(manifest, insp.pre.empty() ? std::nullopt : std::optional<fs::path>(insp.pre));
      const auto table = pairwise_alignment(pool, insp.histograms ? std::optional<int>(insp.bins) : std::nullopt, par());
      emit_report(table, insp.out);
      return static_cast<int>(kOk);
    };
  });

  auto* lambdas_cmd = inspect_cmd->add_subcommand("lambdas", "λ statistics per group from an edit report");
  lambdas_cmd->add_option("--report", insp.report, "Edit report JSON")->required();
  lambdas_cmd->add_option("--group", insp.group, "layer_index | name_prefix")
      ->check(CLI::IsMember({"layer_index", "name_prefix"}));
  lambdas_cmd->add_option("--out", insp.out, "Statistics (.json or .csv); stdout when omitted");
  lambdas_cmd->callback([&] {
    action = [&] {
      const auto report = edit_report_from_json(read_json_file(insp.report));
      const auto stats = lambda_distribution(
          report, insp.group == "name_prefix" ? LambdaGrouping::NamePrefix : LambdaGrouping::LayerIndex);
      if (insp.out.empty()) std::cout << render_report(stats, ReportFormat::Json);
      else emit_report(stats, insp.out);
      return static_cast<int>(kOk);
    };
  });

  // ---- sweep -----------------------------------------------------------------
  auto* sweep_cmd = app.add_subcommand("sweep", "Parameter sweeps producing checkpoints for external evaluation");
  sweep_cmd->require_subcommand(1);
  struct {
    std::string pre, ft, out_dir, rows;
    std::vector<std::string> fractions;
  } sweep;
  auto* trunc_cmd = sweep_cmd->add_subcommand("truncate", "Keep only the top-energy directions of every update");
  trunc_cmd->add_option("--pre", sweep.pre)->required();
  trunc_cmd->add_option("--ft", sweep.ft)->required();
  trunc_cmd->add_option("--R", sweep.fractions, "Energy fractions (comma-separated)")->required();
  trunc_cmd->add_option("--out-dir", sweep.out_dir)->required();
  trunc_cmd->add_option("--rows", sweep.rows, "Plot data: R, layer, k, retained_energy (.csv or .json)");
  trunc_cmd->callback([&] {
    action = [&] {
      const auto rs = parse_fraction_list(sweep.fractions);
      const auto result = truncation_sweep(read_archive(sweep.pre), read_archive(sweep.ft), rs, sweep.out_dir, par());
      for (const auto& o : result.outputs) std::cout << format_fraction(o.fraction) << "\t" << o.path.string() << "\n";
      const auto rows_path = sweep.rows.empty() ? fs::path(sweep.out_dir) / "truncation_sweep.csv" : fs::path(sweep.rows);
      emit_report(result, rows_path);
      return static_cast<int>(kOk);
    };
  });

  // ---- cka -------------------------------------------------------------------
  struct {
    std::string x, y;
  } cka;
  auto* cka_cmd = app.add_subcommand("cka", "Linear CKA between two activation matrices");
  cka_cmd->add_option("--x", cka.x, "Archive with a 2-D tensor named 'activations'")->required();
  cka_cmd->add_option("--y", cka.y, "Archive with a 2-D tensor named 'activations'")->required();
  cka_cmd->callback([&] {
    action = [&] {
      auto load = [](const std::string& p) {
        const auto c = read_archive(p);
        auto it = c.tensors.find("activations");
        if (it == c.tensors.end() || it->second.rank() != 2) {
          fail(ErrorCode::MalformedHeader, "'" + p + "' has no 2-D tensor named 'activations'");
        }
        return to_matrix(it->second.to_f64(), {static_cast<Eigen::Index>(it->second.shape()[0]),
                                               static_cast<Eigen::Index>(it->second.shape()[1])});
      };
      std::cout << detail::num(linear_cka(load(cka.x), load(cka.y))) << "\n";
      return static_cast<int>(kOk);
    };
  });

  // ---- synth -----------------------------------------------------------------
  struct {
    std::string pre;
    std::vector<std::string> ft;
    int blocks = 2;
    std::int64_t width = 64;
    std::uint64_t seed = 0;
    std::string dtype = "F32";
  } synth;
  auto* synth_cmd = app.add_subcommand("synth", "Write a seeded synthetic ViT-shaped checkpoint family");
  synth_cmd->add_option("--pre", synth.pre, "Pre-trained output")->required();
  synth_cmd->add_option("--ft", synth.ft, "Fine-tuned output(s)")->required();
  synth_cmd->add_option("--blocks", synth.blocks)->check(CLI::PositiveNumber);
  synth_cmd->add_option("--width", synth.width)->check(CLI::PositiveNumber);
  synth_cmd->add_option("--seed", synth.seed);
  synth_cmd->add_option("--dtype", synth.dtype)->check(CLI::IsMember({"F16", "BF16", "F32", "F64"}));
  synth_cmd->callback([&] {
    action = [&] {
      const auto layout = synthetic::vit_layout(synth.blocks, synth.width, 8, 17, synth.width / 2 + 1);
      const auto pre = synthetic::random_checkpoint(layout, synth.seed, *parse_dtype(synth.dtype));
      write_archive(pre, synth.pre);
      for (std::size_t i = 0; i < synth.ft.size(); ++i) {
        write_archive(synthetic::fine_tune(pre, synth.seed + 1 + i), synth.ft[i]);
      }
      return static_cast<int>(kOk);
    };
  });

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  }

  try {
    return action ? action() : kUsage;
  } catch (const SchemaMismatchError& e) {
    logger()->error("{}", e.what());
    return exit_code_for(e.code());
  } catch (const Error& e) {
    logger()->error("{}", e.what());
    return exit_code_for(e.code());
  } catch (const nlohmann::json::exception& e) {
    logger()->error("malformed JSON input: {}", e.what());
    return kFormat;
  } catch (const std::bad_alloc&) {
    logger()->error("out of memory");
    return kNumerical;
  }
}

}  // namespace monosoup::cli
