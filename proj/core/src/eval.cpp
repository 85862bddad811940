#include "ctgrpo/eval.hpp"

#include <fstream>
#include <sstream>

#include "ctgrpo/error.hpp"
#include "ctgrpo/metrics.hpp"
#include "ctgrpo/parallel.hpp"
#include "ctgrpo/rng.hpp"
#include "ctgrpo/synth.hpp"

namespace ctgrpo {

std::string_view eval_mode_name(EvalMode m) {
  switch (m) {
    case EvalMode::kWithThink: return "with-think";
    case EvalMode::kWithoutThink: return "without-think";
    case EvalMode::kForcedThink: return "forced-think";
  }
  return "?";
}

EvalMode parse_eval_mode(std::string_view s) {
  if (s == "with-think") return EvalMode::kWithThink;
  if (s == "without-think") return EvalMode::kWithoutThink;
  if (s == "forced-think") return EvalMode::kForcedThink;
  throw InvalidInput("unknown eval mode '" + std::string(s) + "' (with-think, without-think, forced-think)");
}

std::vector<Query> prompt_for_mode(std::span<const Query> queries, EvalMode mode) {
  std::vector<Query> out(queries.begin(), queries.end());
  const PromptMode pm = mode == EvalMode::kWithThink ? PromptMode::kWithThink : PromptMode::kWithoutThink;
  for (auto& q : out) q.mode = pm;
  return out;
}

namespace {

SampleOptions sample_options(EvalMode mode, const DecodeSettings& decode, std::size_t index) {
  SampleOptions o;
  o.max_len = decode.max_len;
  o.temperature = decode.temperature;
  o.greedy = decode.greedy;
  o.seed = derive_seed({decode.seed, index});
  if (mode == EvalMode::kForcedThink) o.forced_prefix = {tok::kThinkOpen};
  return o;
}

struct Tally {
  std::size_t n = 0, correct = 0, formatted = 0, valid = 0, consistent = 0;
};

bool is_consistent(std::span<const TokenId> tokens, const ParsedResponse& p, const ThinkJudge& judge) {
  if (!p.think || !p.class_id) return false;
  const auto verdict = judge(tokens.subspan(p.think->first, p.think->second - p.think->first));
  return verdict && *verdict == *p.class_id;
}

EvalReport summarize(std::span<const Query> test, std::span<const std::vector<TokenId>> responses, EvalMode mode,
                     const DecodeSettings& decode) {
  Tally total;
  std::array<Tally, kNumClasses> per_class{};
  const ThinkJudge judge = judge_think;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const int gt = test[i].gt_class;
    if (gt < 0 || gt >= kNumClasses) throw InvalidInput("test item " + std::to_string(i) + " has invalid class");
    const auto p = parse_response(responses[i]);
    const auto r = score(p, gt);
    for (Tally* t : {&total, &per_class[gt]}) {
      ++t->n;
      t->correct += r.correctness;
      t->formatted += r.format;
      t->valid += r.validity;
      t->consistent += is_consistent(responses[i], p, judge);
    }
  }
  EvalReport rep;
  rep.mode = mode;
  rep.decode = decode;
  rep.samples = total.n;
  const double n = static_cast<double>(total.n);
  rep.accuracy = total.correct / n;
  rep.format_rate = total.formatted / n;
  rep.validity_rate = total.valid / n;
  rep.consistency_rate = total.consistent / n;
  for (int k = 0; k < kNumClasses; ++k) {
    rep.per_class_count[k] = per_class[k].n;
    rep.per_class_accuracy[k] = per_class[k].n ? static_cast<double>(per_class[k].correct) / per_class[k].n : 0.0;
  }
  return rep;
}

}  // namespace

Decoder policy_decoder(const PolicyParams& params, EvalMode mode, const DecodeSettings& decode) {
  return [&params, mode, decode](const Query& q, std::size_t index) {
    return sample(params, q, sample_options(mode, decode, index)).tokens;
  };
}

EvalReport evaluate(std::span<const Query> test, EvalMode mode, const Decoder& decoder,
                    const DecodeSettings& decode) {
  if (test.empty()) throw EmptyInput("evaluation needs at least one test item");
  const auto prompts = prompt_for_mode(test, mode);
  std::vector<std::vector<TokenId>> responses(prompts.size());
  for (std::size_t i = 0; i < prompts.size(); ++i) responses[i] = decoder(prompts[i], i);
  return summarize(prompts, responses, mode, decode);
}

EvalReport evaluate(const PolicyParams& params, std::span<const Query> test, EvalMode mode,
                    const DecodeSettings& decode) {
  if (test.empty()) throw EmptyInput("evaluation needs at least one test item");
  const auto prompts = prompt_for_mode(test, mode);
  std::vector<std::vector<TokenId>> responses(prompts.size());
  parallel_for(prompts.size(), default_threads(), [&](std::size_t i) {
    responses[i] = sample(params, prompts[i], sample_options(mode, decode, i)).tokens;
  });
  return summarize(prompts, responses, mode, decode);
}

double consistency(std::span<const Query> test, const Decoder& decoder, const ThinkJudge& judge) {
  if (test.empty()) throw EmptyInput("consistency needs at least one test item");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto tokens = decoder(test[i], i);
    hits += is_consistent(tokens, parse_response(tokens), judge);
  }
  return static_cast<double>(hits) / test.size();
}

double consistency(const PolicyParams& params, std::span<const Query> test, const DecodeSettings& decode,
                   EvalMode mode) {
  return evaluate(params, test, mode, decode).consistency_rate;
}

RewardWeights AblationRow::weights(const RewardWeights& base) const {
  RewardWeights w = base;
  if (!format) w.alpha = 0.0;
  if (!validity) w.beta_v = 0.0;
  if (!correctness) w.gamma = 0.0;
  return w;
}

std::vector<AblationRow> default_reward_grid() {
  return {
      {"sft-only", true, false, false, false},
      {"rl-only", false, true, true, true},
      {"sft-rl-no-validity", true, true, true, false},
      {"sft-rl-no-format", true, true, false, true},
      {"sft-rl-full", true, true, true, true},
  };
}

namespace {

bool parse_flag(const std::string& cell, const std::string& where) {
  if (cell == "1" || cell == "true" || cell == "yes") return true;
  if (cell == "0" || cell == "false" || cell == "no") return false;
  throw InvalidInput(where + ": expected 0/1, got '" + cell + "'");
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    cells.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
  }
  return cells;
}

}  // namespace

std::vector<AblationRow> read_grid(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open grid file " + path.string());
  std::vector<AblationRow> rows;
  std::string line;
  std::size_t lineno = 0;
  bool header = true;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto cells = split_csv(line);
    if (header) {
      header = false;
      if (!cells.empty() && cells[0] == "name") continue;
    }
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (cells.size() != 5) throw InvalidInput(where + ": expected name,sft,correctness,format,validity");
    rows.push_back({cells[0], parse_flag(cells[1], where), parse_flag(cells[2], where),
                    parse_flag(cells[3], where), parse_flag(cells[4], where)});
  }
  return rows;
}

AblationGrid run_ablation_grid(std::span<const AblationRow> rows, std::span<const QARecord> train,
                               std::span<const QARecord> test, const ExperimentConfig& cfg) {
  AblationGrid grid;
  if (rows.empty()) return grid;

  const PolicyParams init = PolicyParams::random_init(cfg.shape, cfg.init_seed);
  std::optional<PolicyParams> sft_params;
  auto sft_checkpoint = [&]() -> const PolicyParams& {
    if (!sft_params) {
      const auto examples = sft_examples(train, cfg.sft_modes, cfg.query);
      PolicyParams p = init;
      sft_train(p, examples, cfg.sft);
      sft_params = std::move(p);
    }
    return *sft_params;
  };
  const auto rl_queries = queries_from_records(train, PromptMode::kWithThink, cfg.query);
  const auto test_queries = queries_from_records(test, PromptMode::kWithThink, cfg.query);

  for (const auto& row : rows) {
    AblationEntry entry;
    entry.row = row;
    try {
      PolicyParams params = row.sft ? sft_checkpoint() : init;
      if (row.uses_rl()) params = grpo_train(params, rl_queries, cfg.grpo, row.weights(cfg.weights)).params;
      const auto rep = evaluate(params, test_queries, EvalMode::kWithThink, cfg.decode);
      entry.accuracy = rep.accuracy;
      entry.format_rate = rep.format_rate;
      entry.consistency = rep.consistency_rate;
      entry.ok = true;
    } catch (const std::exception& e) {
      entry.error = e.what();
    }
    grid.rows.push_back(std::move(entry));
  }

  const AblationEntry* sft_only = nullptr;
  const AblationEntry* rl_only = nullptr;
  for (const auto& e : grid.rows) {
    if (!e.ok) continue;
    if (e.row.sft && !e.row.uses_rl() && !sft_only) sft_only = &e;
    if (!e.row.sft && e.row.uses_rl() && !rl_only) rl_only = &e;
  }
  grid.sft_inversion = sft_only && rl_only && sft_only->accuracy < rl_only->accuracy;
  return grid;
}

void write_ablation_csv(const std::filesystem::path& path, const AblationGrid& grid) {
  CsvWriter csv(path, {"name", "sft", "correctness", "format", "validity", "accuracy", "format_rate",
                       "consistency", "status"});
  if (!csv.is_open()) throw std::runtime_error("cannot write " + path.string());
  auto flag = [](bool b) { return std::string(b ? "1" : "0"); };
  for (const auto& e : grid.rows) {
    std::string status = e.ok ? "ok" : "error: " + e.error;
    for (char& c : status)
      if (c == ',' || c == '\n') c = ' ';
    csv.row({e.row.name, flag(e.row.sft), flag(e.row.correctness), flag(e.row.format), flag(e.row.validity),
             e.ok ? format_double(e.accuracy) : "", e.ok ? format_double(e.format_rate) : "",
             e.ok ? format_double(e.consistency) : "", status});
  }
}

ZoomAblation run_zoom_ablation(std::span<const QARecord> train, std::span<const QARecord> test,
                               const ExperimentConfig& cfg) {
  const PolicyParams init = PolicyParams::random_init(cfg.shape, cfg.init_seed);
  auto run = [&](std::span<const QARecord> tr, std::span<const QARecord> te, std::size_t& steps) {
    PolicyParams p = init;
    const auto examples = sft_examples(tr, cfg.sft_modes, cfg.query);
    steps = sft_train(p, examples, cfg.sft).steps;
    const auto queries = queries_from_records(te, PromptMode::kWithoutThink, cfg.query);
    return evaluate(p, queries, EvalMode::kWithoutThink, cfg.decode).accuracy;
  };
  ZoomAblation out;
  std::size_t steps_raw = 0;
  out.with_zoom = run(train, test, out.sft_steps);
  const auto train_raw = without_zoom(train);
  const auto test_raw = without_zoom(test);
  out.without_zoom = run(train_raw, test_raw, steps_raw);
  if (steps_raw != out.sft_steps) throw std::logic_error("zoom ablation runs took different step counts");
  return out;
}

CotComparison compare_cot(const PolicyParams& sft_params, const PolicyParams& rl_params,
                          std::span<const Query> test, const DecodeSettings& decode) {
  CotComparison c;
  c.sft_direct = evaluate(sft_params, test, EvalMode::kWithoutThink, decode);
  c.sft_forced = evaluate(sft_params, test, EvalMode::kForcedThink, decode);
  c.rl_think = evaluate(rl_params, test, EvalMode::kWithThink, decode);
  return c;
}

void write_cot_csv(const std::filesystem::path& path, const CotComparison& cmp) {
  CsvWriter csv(path, {"model", "protocol", "metric", "value"});
  if (!csv.is_open()) throw std::runtime_error("cannot write " + path.string());
  csv.row({"sft", "forced-think", "accuracy", format_double(cmp.sft_forced.accuracy)});
  csv.row({"sft", "forced-think", "consistency", format_double(cmp.sft_forced.consistency_rate)});
  csv.row({"sft+rl", "with-think", "accuracy", format_double(cmp.rl_think.accuracy)});
  csv.row({"sft+rl", "with-think", "consistency", format_double(cmp.rl_think.consistency_rate)});
  csv.row({"sft", "without-think", "accuracy", format_double(cmp.sft_direct.accuracy)});
}

void write_eval_csv(const std::filesystem::path& path, const EvalReport& report) {
  CsvWriter csv(path, {"mode", "scope", "count", "accuracy", "format_rate", "validity_rate", "consistency_rate"});
  if (!csv.is_open()) throw std::runtime_error("cannot write " + path.string());
  const std::string mode(eval_mode_name(report.mode));
  csv.row({mode, "overall", std::to_string(report.samples), format_double(report.accuracy),
           format_double(report.format_rate), format_double(report.validity_rate),
           format_double(report.consistency_rate)});
  for (int k = 0; k < kNumClasses; ++k) {
    if (report.per_class_count[k] == 0) continue;
    csv.row({mode, std::string(class_symbol(k)), std::to_string(report.per_class_count[k]),
             format_double(report.per_class_accuracy[k]), "", "", ""});
  }
}

}  // namespace ctgrpo
