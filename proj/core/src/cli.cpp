#include "ctgrpo/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>

#include "ctgrpo/checkpoint.hpp"
#include "ctgrpo/config.hpp"
#include "ctgrpo/error.hpp"
#include "ctgrpo/eval.hpp"
#include "ctgrpo/metrics.hpp"
#include "ctgrpo/png_io.hpp"
#include "ctgrpo/records.hpp"

namespace ctgrpo {

namespace fs = std::filesystem;

namespace {

/// Options shared by every subcommand.
struct Common {
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::size_t> threads;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "key=value config file (a run manifest works too)");
  app->add_option("--set", c.sets, "override one key, e.g. --set grpo.steps=200")->type_name("KEY=VALUE");
  app->add_option("--threads", c.threads, "worker threads (0 = all cores)");
}

/// Config file, then --set overrides, then dedicated flags.
RunConfig resolve(const Common& c, const KeyValues& flags) {
  RunConfig cfg;
  if (!c.config.empty()) cfg.apply(load_key_values(c.config));
  KeyValues sets;
  for (const auto& s : c.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects KEY=VALUE, got '" + s + "'");
    sets.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  cfg.apply(sets);
  cfg.apply(flags);
  if (c.threads) cfg.threads = *c.threads;
  cfg.validate();
  return cfg;
}

const std::string& need_path(const RunConfig& cfg, const std::string& name, const std::string& flag) {
  const auto it = cfg.paths.find(name);
  if (it == cfg.paths.end() || it->second.empty())
    throw ConfigError(flag + " (path." + name + ") is required");
  return it->second;
}

std::optional<std::string> opt_path(const RunConfig& cfg, const std::string& name) {
  const auto it = cfg.paths.find(name);
  if (it == cfg.paths.end() || it->second.empty()) return std::nullopt;
  return it->second;
}

void add_path_flag(KeyValues& flags, const std::string& name, const std::string& value) {
  if (!value.empty()) flags.emplace_back("path." + name, value);
}

fs::path manifest_for_file(const fs::path& out) { return fs::path(out.string() + ".manifest"); }

std::vector<QARecord> load_split(const std::string& path, Split split, const std::string& what) {
  const auto all = read_records(path);
  auto part = select_split(all, split);
  if (part.empty()) throw EmptyInput(path + " has no " + std::string(split_name(split)) + " records for " + what);
  return part;
}

PolicyParams initial_params(const RunConfig& cfg) {
  if (const auto in = opt_path(cfg, "checkpoint_in")) {
    auto p = load_checkpoint(*in);
    p.set_role(ParamRole::kTrainable);
    return p;
  }
  return PolicyParams::random_init(cfg.shape(), cfg.policy_seed);
}

int cmd_forge_synth(const RunConfig& cfg, std::ostream& log) {
  const fs::path dir = need_path(cfg, "out", "--out");
  fs::create_directories(dir);
  std::ofstream manifest(dir / "manifest.jsonl", std::ios::binary);
  if (!manifest) throw std::runtime_error("cannot write " + (dir / "manifest.jsonl").string());
  for (std::size_t i = 0; i < cfg.synth_cases; ++i) {
    const auto c = gen_case(case_seed(cfg.synth_seed, i), cfg.synth, patient_id_for(i));
    write_case(dir, c, manifest);
  }
  manifest.close();
  write_manifest(dir / "run_manifest.kv", cfg, "forge synth");
  log << "wrote " << cfg.synth_cases << " cases to " << dir.string() << "\n";
  return kExitOk;
}

int cmd_forge_build(const RunConfig& cfg, std::ostream& log, std::ostream& err) {
  const fs::path in = need_path(cfg, "in", "--in");
  const fs::path dir = need_path(cfg, "out", "--out");
  std::ifstream manifest(in / "manifest.jsonl");
  if (!manifest) throw InvalidInput("no manifest.jsonl in " + in.string());
  fs::create_directories(dir / "images");

  const ImageSink sink = [&](const QARecord& r, const RgbImage& img) { write_png(dir / r.image, img); };
  std::vector<QARecord> records;
  std::vector<std::string> warnings;
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    const auto c = read_case(in, line);
    auto res = process_case(c, cfg.forge, sink);
    for (auto& r : res.records) records.push_back(std::move(r));
    for (auto& w : res.warnings) warnings.push_back(std::move(w));
  }
  std::sort(records.begin(), records.end(), [](const QARecord& a, const QARecord& b) {
    return std::tie(a.patient_id, a.slice) < std::tie(b.patient_id, b.slice);
  });
  for (auto& w : split_dataset(records, cfg.split_ratio, cfg.split_seed)) warnings.push_back(std::move(w));
  write_records(dir / "records.jsonl", records);
  write_manifest(dir / "run_manifest.kv", cfg, "forge build");
  for (const auto& w : warnings) err << "warning: " << w << "\n";
  std::size_t train = 0;
  for (const auto& r : records) train += r.split == Split::kTrain;
  log << "wrote " << records.size() << " records (" << train << " train, " << records.size() - train
      << " test) to " << (dir / "records.jsonl").string() << "\n";
  return kExitOk;
}

int cmd_sft(const RunConfig& cfg, std::ostream& log) {
  const auto data = need_path(cfg, "data", "--data");
  const fs::path ckpt_out = need_path(cfg, "checkpoint_out", "--checkpoint-out");
  const auto train = load_split(data, Split::kTrain, "sft");
  const auto examples = sft_examples(train, cfg.sft_modes, cfg.query);
  PolicyParams params = initial_params(cfg);

  CsvWriter csv;
  if (const auto m = opt_path(cfg, "metrics")) csv = CsvWriter(*m, {"step", "epoch", "loss", "lr"});
  const auto report = sft_train(params, examples, cfg.sft, [&](const SftStepRecord& r) {
    if (csv.is_open())
      csv.row({std::to_string(r.step), std::to_string(r.epoch), format_double(r.loss), format_double(r.lr)});
  });
  save_checkpoint(ckpt_out, params);
  write_manifest(manifest_for_file(ckpt_out), cfg, "sft");
  log << "sft: " << report.steps << " steps, final epoch loss " << format_double(report.epoch_loss.back()) << "\n";
  return kExitOk;
}

int cmd_grpo(const RunConfig& cfg, std::ostream& log) {
  const auto data = need_path(cfg, "data", "--data");
  const fs::path ckpt_out = need_path(cfg, "checkpoint_out", "--checkpoint-out");
  const auto train = load_split(data, Split::kTrain, "grpo-train");
  const auto queries = queries_from_records(train, PromptMode::kWithThink, cfg.query);
  const PolicyParams init = initial_params(cfg);
  GrpoConfig gc = cfg.grpo;
  gc.threads = cfg.threads;

  CsvWriter csv;
  if (const auto m = opt_path(cfg, "metrics"))
    csv = CsvWriter(*m, {"step", "objective", "mean_reward", "format_rate", "accuracy", "mean_kl",
                         "mean_abs_ratio_dev", "clip_fraction"});
  const auto result = grpo_train(init, queries, gc, cfg.reward, [&](const StepMetrics& s) {
    if (!csv.is_open()) return;
    csv.row({std::to_string(s.step), format_double(s.objective), format_double(s.mean_reward),
             format_double(s.format_rate), format_double(s.accuracy), format_double(s.mean_kl),
             format_double(s.mean_abs_ratio_dev), format_double(s.clip_fraction)});
  });
  save_checkpoint(ckpt_out, result.params);
  write_manifest(manifest_for_file(ckpt_out), cfg, "grpo-train");
  const auto& last = result.history.back();
  log << "grpo: " << result.history.size() << " steps, last mean reward " << format_double(last.mean_reward)
      << ", format " << format_double(last.format_rate) << "\n";
  return kExitOk;
}

int cmd_eval(const RunConfig& cfg, std::ostream& log) {
  const auto data = need_path(cfg, "data", "--data");
  const auto ckpt = need_path(cfg, "checkpoint_in", "--checkpoint");
  const fs::path report_path = need_path(cfg, "report", "--report");
  const auto test = load_split(data, Split::kTest, "eval");
  const auto params = load_checkpoint(ckpt);
  const auto queries = queries_from_records(test, PromptMode::kWithThink, cfg.query);
  const auto rep = evaluate(params, queries, cfg.eval_mode, cfg.decode);
  write_eval_csv(report_path, rep);
  write_manifest(manifest_for_file(report_path), cfg, "eval");
  log << eval_mode_name(rep.mode) << ": accuracy " << format_double(rep.accuracy) << ", format "
      << format_double(rep.format_rate) << ", consistency " << format_double(rep.consistency_rate) << " over "
      << rep.samples << " items\n";
  return kExitOk;
}

int cmd_ablate(const RunConfig& cfg, std::ostream& log, std::ostream& err) {
  const auto data = need_path(cfg, "data", "--data");
  const fs::path out_path = need_path(cfg, "out", "--out");
  const auto grid_src = need_path(cfg, "grid", "--grid");
  const auto rows = grid_src == "default" ? default_reward_grid() : read_grid(grid_src);
  const auto all = read_records(data);
  const auto train = select_split(all, Split::kTrain);
  const auto test = select_split(all, Split::kTest);
  if (train.empty() || test.empty()) throw EmptyInput(data + " needs both train and test records for ablate");
  const auto x = cfg.experiment();

  const auto grid = run_ablation_grid(rows, train, test, x);
  write_ablation_csv(out_path, grid);
  write_manifest(manifest_for_file(out_path), cfg, "ablate");
  for (const auto& e : grid.rows) {
    if (e.ok)
      log << e.row.name << ": accuracy " << format_double(e.accuracy) << "\n";
    else
      err << "warning: row " << e.row.name << " failed: " << e.error << "\n";
  }
  if (grid.sft_inversion) err << "warning: SFT-only row scored below RL-without-SFT\n";

  if (const auto z = opt_path(cfg, "zoom_out")) {
    const auto zoom = run_zoom_ablation(train, test, x);
    CsvWriter csv(*z, {"variant", "accuracy"});
    csv.row({"zoom", format_double(zoom.with_zoom)});
    csv.row({"raw", format_double(zoom.without_zoom)});
    log << "zoom ablation: " << format_double(zoom.with_zoom) << " vs raw " << format_double(zoom.without_zoom)
        << "\n";
  }
  if (const auto c = opt_path(cfg, "cot_out")) {
    PolicyParams sft = PolicyParams::random_init(x.shape, x.init_seed);
    sft_train(sft, sft_examples(train, x.sft_modes, x.query), x.sft);
    const auto rl = grpo_train(sft, queries_from_records(train, PromptMode::kWithThink, x.query), x.grpo, x.weights);
    const auto cmp = compare_cot(sft, rl.params, queries_from_records(test, PromptMode::kWithThink, x.query), x.decode);
    write_cot_csv(*c, cmp);
    log << "cot: sft forced-think " << format_double(cmp.sft_forced.accuracy) << ", sft+rl "
        << format_double(cmp.rl_think.accuracy) << "\n";
  }
  return kExitOk;
}

std::vector<TokenId> tokens_from_json(const nlohmann::json& j, std::size_t lineno) {
  if (!j.is_array()) throw InvalidInput("line " + std::to_string(lineno) + ": tokens must be an array");
  std::vector<TokenId> tokens;
  for (const auto& t : j) {
    if (t.is_number_integer()) {
      const auto id = t.get<long long>();
      if (id < 0 || id >= static_cast<long long>(Vocab::size()))
        throw InvalidInput("line " + std::to_string(lineno) + ": token id " + std::to_string(id) + " out of range");
      tokens.push_back(static_cast<TokenId>(id));
    } else if (t.is_string()) {
      const auto id = Vocab::parse_symbol(t.get<std::string>());
      if (!id) throw InvalidInput("line " + std::to_string(lineno) + ": unknown token '" + t.get<std::string>() + "'");
      tokens.push_back(*id);
    } else {
      throw InvalidInput("line " + std::to_string(lineno) + ": tokens must be ids or symbols");
    }
  }
  return tokens;
}

int class_from_json(const nlohmann::json& j, std::size_t lineno) {
  if (j.is_number_integer()) {
    const auto k = j.get<long long>();
    if (k >= 0 && k < kNumClasses) return static_cast<int>(k);
  } else if (j.is_string()) {
    const auto s = j.get<std::string>();
    for (int k = 0; k < kNumClasses; ++k)
      if (s == class_symbol(k)) return k;
    if (const auto k = class_from_label(s)) return *k;
  }
  throw InvalidInput("line " + std::to_string(lineno) + ": gt must be a class index 0..6 or a class name");
}

int cmd_score_file(const RunConfig& cfg, std::ostream& log) {
  const auto in_path = need_path(cfg, "in", "--in");
  const fs::path out_path = need_path(cfg, "out", "--out");
  std::ifstream in(in_path);
  if (!in) throw InvalidInput("cannot open " + in_path);
  std::vector<std::string> lines;
  std::string line;
  std::size_t lineno = 0, scored = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw InvalidInput("line " + std::to_string(lineno) + ": " + e.what());
    }
    if (!j.contains("tokens") || !j.contains("gt"))
      throw InvalidInput("line " + std::to_string(lineno) + ": expected keys tokens and gt");
    const auto r = score_tokens(tokens_from_json(j["tokens"], lineno), class_from_json(j["gt"], lineno), cfg.reward);
    nlohmann::ordered_json o;
    o["format"] = r.format;
    o["validity"] = r.validity;
    o["correctness"] = r.correctness;
    o["total"] = r.total;
    lines.push_back(o.dump());
    ++scored;
  }
  std::ofstream o(out_path, std::ios::binary);
  if (!o) throw std::runtime_error("cannot write " + out_path.string());
  for (const auto& l : lines) o << l << "\n";
  log << "scored " << scored << " responses\n";
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"ctgrpo: synthetic CT lesion data, SFT and GRPO training, evaluation", "ctgrpo"};
  app.require_subcommand(1);

  Common common;
  KeyValues flags;
  std::string s_out, s_in, s_data, s_ckpt_in, s_ckpt_out, s_metrics, s_report, s_grid, s_cot, s_zoom, s_mode;
  std::optional<std::size_t> cases;
  std::optional<std::uint64_t> seed;

  auto* forge = app.add_subcommand("forge", "synthesize cohorts and build the QA dataset");
  forge->require_subcommand(1);
  auto* synth = forge->add_subcommand("synth", "generate synthetic CT cases");
  add_common(synth, common);
  synth->add_option("--cases", cases, "number of cases");
  synth->add_option("--seed", seed, "synthesis seed");
  synth->add_option("--out", s_out, "output directory")->required();
  auto* build = forge->add_subcommand("build", "extract lesions, augment, split");
  add_common(build, common);
  build->add_option("--in", s_in, "synthesized cohort directory")->required();
  build->add_option("--out", s_out, "dataset directory")->required();

  auto* sft = app.add_subcommand("sft", "supervised fine-tuning on the train split");
  add_common(sft, common);
  sft->add_option("--data", s_data, "records.jsonl");
  sft->add_option("--checkpoint-in", s_ckpt_in, "start from this checkpoint instead of a random init");
  sft->add_option("--checkpoint-out", s_ckpt_out, "where to write the trained checkpoint");
  sft->add_option("--metrics", s_metrics, "per-step CSV");

  auto* grpo = app.add_subcommand("grpo-train", "group relative policy optimization");
  add_common(grpo, common);
  grpo->add_option("--data", s_data, "records.jsonl");
  grpo->add_option("--checkpoint-in", s_ckpt_in, "initial (and reference) checkpoint");
  grpo->add_option("--checkpoint-out", s_ckpt_out, "where to write the trained checkpoint");
  grpo->add_option("--metrics", s_metrics, "per-step CSV");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  add_common(eval, common);
  eval->add_option("--checkpoint", s_ckpt_in, "checkpoint to evaluate");
  eval->add_option("--data", s_data, "records.jsonl");
  eval->add_option("--mode", s_mode, "with-think | without-think | forced-think");
  eval->add_option("--report", s_report, "report CSV");

  auto* ablate = app.add_subcommand("ablate", "reward ablation grid (plus zoom and reasoning comparisons)");
  add_common(ablate, common);
  ablate->add_option("--grid", s_grid, "grid CSV (name,sft,correctness,format,validity) or 'default'");
  ablate->add_option("--data", s_data, "records.jsonl");
  ablate->add_option("--out", s_out, "results CSV");
  ablate->add_option("--zoom-out", s_zoom, "zoom ablation CSV");
  ablate->add_option("--cot-out", s_cot, "reasoning comparison CSV");

  auto* score = app.add_subcommand("score-file", "score JSONL responses with the composite reward");
  add_common(score, common);
  score->add_option("--in", s_in, "JSONL with tokens and gt")->required();
  score->add_option("--out", s_out, "JSONL of reward breakdowns")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitInvalid;
  }
  add_path_flag(flags, "out", s_out);
  add_path_flag(flags, "in", s_in);
  add_path_flag(flags, "data", s_data);
  add_path_flag(flags, "checkpoint_in", s_ckpt_in);
  add_path_flag(flags, "checkpoint_out", s_ckpt_out);
  add_path_flag(flags, "metrics", s_metrics);
  add_path_flag(flags, "report", s_report);
  add_path_flag(flags, "grid", s_grid);
  add_path_flag(flags, "cot_out", s_cot);
  add_path_flag(flags, "zoom_out", s_zoom);
  if (cases) flags.emplace_back("synth.cases", std::to_string(*cases));
  if (seed) flags.emplace_back("synth.seed", std::to_string(*seed));
  if (!s_mode.empty()) flags.emplace_back("eval.mode", s_mode);

  // Status lines are diagnostics and go to `err`; data goes to the declared paths.
  try {
    const RunConfig cfg = resolve(common, flags);
    if (synth->parsed()) return cmd_forge_synth(cfg, err);
    if (build->parsed()) return cmd_forge_build(cfg, err, err);
    if (sft->parsed()) return cmd_sft(cfg, err);
    if (grpo->parsed()) return cmd_grpo(cfg, err);
    if (eval->parsed()) return cmd_eval(cfg, err);
    if (ablate->parsed()) return cmd_ablate(cfg, err, err);
    if (score->parsed()) return cmd_score_file(cfg, err);
    err << app.help();
    return kExitInvalid;
  } catch (const InvalidInput& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace ctgrpo
