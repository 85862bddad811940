#include "ctgrpo/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "ctgrpo/metrics.hpp"
#include "ctgrpo/parallel.hpp"
#include "ctgrpo/rng.hpp"

namespace ctgrpo {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Value parsers throw std::invalid_argument with a short reason; the caller
// prefixes the key path.
template <typename T>
T parse_integer(const std::string& v) {
  T out{};
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end || v.empty()) throw std::invalid_argument("expected an integer, got '" + v + "'");
  return out;
}

double parse_real(const std::string& v) {
  std::size_t pos = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != v.size() || v.empty()) throw std::invalid_argument("expected a number, got '" + v + "'");
  return out;
}

bool parse_boolean(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw std::invalid_argument("expected true/false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

std::string bool_str(bool b) { return b ? "true" : "false"; }

std::string sft_modes_name(SftModes m) {
  switch (m) {
    case SftModes::kBoth: return "both";
    case SftModes::kWithThink: return "with-think";
    case SftModes::kWithoutThink: return "without-think";
  }
  return "?";
}

SftModes parse_sft_modes(const std::string& v) {
  if (v == "both") return SftModes::kBoth;
  if (v == "with-think") return SftModes::kWithThink;
  if (v == "without-think") return SftModes::kWithoutThink;
  throw std::invalid_argument("expected both, with-think or without-think, got '" + v + "'");
}

struct Entry {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

// Builders for the common field kinds. `ref` maps a config to the field.
template <typename T, typename Ref>
Entry integer(std::string key, Ref ref) {
  return {std::move(key), [ref](const RunConfig& c) { return std::to_string(ref(const_cast<RunConfig&>(c))); },
          [ref](RunConfig& c, const std::string& v) { ref(c) = parse_integer<T>(v); }};
}

template <typename Ref>
Entry real(std::string key, Ref ref) {
  return {std::move(key), [ref](const RunConfig& c) { return format_double(ref(const_cast<RunConfig&>(c))); },
          [ref](RunConfig& c, const std::string& v) { ref(c) = parse_real(v); }};
}

template <typename Ref>
Entry boolean(std::string key, Ref ref) {
  return {std::move(key), [ref](const RunConfig& c) { return bool_str(ref(const_cast<RunConfig&>(c))); },
          [ref](RunConfig& c, const std::string& v) { ref(c) = parse_boolean(v); }};
}

template <typename Ref>
Entry embedding_freeze(std::string key, Ref ref) {
  return {std::move(key),
          [ref](const RunConfig& c) {
            return bool_str(ref(const_cast<RunConfig&>(c)).is_frozen(ParamGroup::kEmbedding));
          },
          [ref](RunConfig& c, const std::string& v) {
            ref(c).frozen[static_cast<int>(ParamGroup::kEmbedding)] = parse_boolean(v);
          }};
}

const std::vector<std::string>& path_keys() {
  static const std::vector<std::string> keys = {
      "path.checkpoint_in", "path.checkpoint_out", "path.cot_out", "path.data", "path.grid",
      "path.in",            "path.metrics",        "path.out",     "path.report", "path.zoom_out"};
  return keys;
}

const std::vector<Entry>& registry() {
  static const std::vector<Entry> entries = [] {
    std::vector<Entry> e;
    // Master seed: handled before the other keys in apply().
    e.push_back(integer<std::uint64_t>("seed", [](RunConfig& c) -> auto& { return c.seed; }));

    e.push_back(integer<std::size_t>("synth.cases", [](RunConfig& c) -> auto& { return c.synth_cases; }));
    e.push_back(integer<std::uint64_t>("synth.seed", [](RunConfig& c) -> auto& { return c.synth_seed; }));
    e.push_back(integer<int>("synth.size", [](RunConfig& c) -> auto& { return c.synth.size; }));
    e.push_back(integer<int>("synth.min_slices", [](RunConfig& c) -> auto& { return c.synth.min_slices; }));
    e.push_back(integer<int>("synth.max_slices", [](RunConfig& c) -> auto& { return c.synth.max_slices; }));
    e.push_back(real("synth.distractor_prob", [](RunConfig& c) -> auto& { return c.synth.distractor_prob; }));
    e.push_back(real("synth.label_noise", [](RunConfig& c) -> auto& { return c.synth.label_noise; }));
    e.push_back({"synth.mixture",
                 [](const RunConfig& c) {
                   std::string s;
                   for (std::size_t k = 0; k < c.synth.mixture.size(); ++k)
                     s += (k ? "," : "") + format_double(c.synth.mixture[k]);
                   return s;
                 },
                 [](RunConfig& c, const std::string& v) {
                   const auto items = split_list(v);
                   if (items.size() != c.synth.mixture.size())
                     throw std::invalid_argument("expected " + std::to_string(kNumClasses) + " comma-separated weights");
                   for (std::size_t k = 0; k < items.size(); ++k) c.synth.mixture[k] = parse_real(items[k]);
                 }});

    e.push_back(integer<int>("forge.patch", [](RunConfig& c) -> auto& { return c.forge.patch; }));
    e.push_back(integer<int>("forge.border", [](RunConfig& c) -> auto& { return c.forge.border; }));
    e.push_back({"forge.border_color",
                 [](const RunConfig& c) {
                   const auto& b = c.forge.border_color;
                   return std::to_string(b[0]) + "," + std::to_string(b[1]) + "," + std::to_string(b[2]);
                 },
                 [](RunConfig& c, const std::string& v) {
                   const auto items = split_list(v);
                   if (items.size() != 3) throw std::invalid_argument("expected r,g,b");
                   for (int k = 0; k < 3; ++k) {
                     const int x = parse_integer<int>(items[k]);
                     if (x < 0 || x > 255) throw std::invalid_argument("channel out of 0..255");
                     c.forge.border_color[k] = static_cast<std::uint8_t>(x);
                   }
                 }});
    e.push_back(integer<std::size_t>("forge.min_area", [](RunConfig& c) -> auto& { return c.forge.min_area; }));
    e.push_back(integer<std::size_t>("forge.slice_cap", [](RunConfig& c) -> auto& { return c.forge.slice_cap; }));
    e.push_back(integer<int>("forge.connectivity", [](RunConfig& c) -> auto& { return c.forge.connectivity; }));
    e.push_back(boolean("forge.augment", [](RunConfig& c) -> auto& { return c.forge.augment; }));
    e.push_back(real("forge.split_ratio", [](RunConfig& c) -> auto& { return c.split_ratio; }));
    e.push_back(integer<std::uint64_t>("forge.split_seed", [](RunConfig& c) -> auto& { return c.split_seed; }));

    e.push_back(integer<std::size_t>("policy.dim", [](RunConfig& c) -> auto& { return c.policy_dim; }));
    e.push_back(integer<std::uint64_t>("policy.seed", [](RunConfig& c) -> auto& { return c.policy_seed; }));

    e.push_back(integer<int>("sft.epochs", [](RunConfig& c) -> auto& { return c.sft.epochs; }));
    e.push_back(real("sft.lr", [](RunConfig& c) -> auto& { return c.sft.lr; }));
    e.push_back(real("sft.warmup", [](RunConfig& c) -> auto& { return c.sft.warmup_ratio; }));
    e.push_back(integer<int>("sft.batch", [](RunConfig& c) -> auto& { return c.sft.batch_size; }));
    e.push_back(integer<std::uint64_t>("sft.seed", [](RunConfig& c) -> auto& { return c.sft.seed; }));
    e.push_back(embedding_freeze("sft.freeze_embedding", [](RunConfig& c) -> auto& { return c.sft.freeze; }));
    e.push_back({"sft.modes", [](const RunConfig& c) { return sft_modes_name(c.sft_modes); },
                 [](RunConfig& c, const std::string& v) { c.sft_modes = parse_sft_modes(v); }});

    e.push_back(integer<int>("grpo.group_size", [](RunConfig& c) -> auto& { return c.grpo.group_size; }));
    e.push_back(real("grpo.clip_delta", [](RunConfig& c) -> auto& { return c.grpo.clip_delta; }));
    e.push_back(real("grpo.kl_coeff", [](RunConfig& c) -> auto& { return c.grpo.kl_coeff; }));
    e.push_back(real("grpo.lr", [](RunConfig& c) -> auto& { return c.grpo.lr; }));
    e.push_back(integer<int>("grpo.steps", [](RunConfig& c) -> auto& { return c.grpo.steps; }));
    e.push_back(real("grpo.adv_epsilon", [](RunConfig& c) -> auto& { return c.grpo.adv_epsilon; }));
    e.push_back(integer<int>("grpo.queries_per_step", [](RunConfig& c) -> auto& { return c.grpo.queries_per_step; }));
    e.push_back(integer<std::uint64_t>("grpo.seed", [](RunConfig& c) -> auto& { return c.grpo.seed; }));
    e.push_back(boolean("grpo.token_level_ratio", [](RunConfig& c) -> auto& { return c.grpo.token_level_ratio; }));
    e.push_back(integer<int>("grpo.inner_updates", [](RunConfig& c) -> auto& { return c.grpo.inner_updates; }));
    e.push_back(integer<int>("grpo.max_len", [](RunConfig& c) -> auto& { return c.grpo.max_len; }));
    e.push_back(real("grpo.temperature", [](RunConfig& c) -> auto& { return c.grpo.temperature; }));
    e.push_back(embedding_freeze("grpo.freeze_embedding", [](RunConfig& c) -> auto& { return c.grpo.freeze; }));

    e.push_back(real("reward.alpha", [](RunConfig& c) -> auto& { return c.reward.alpha; }));
    e.push_back(real("reward.beta_v", [](RunConfig& c) -> auto& { return c.reward.beta_v; }));
    e.push_back(real("reward.gamma", [](RunConfig& c) -> auto& { return c.reward.gamma; }));

    e.push_back({"eval.mode", [](const RunConfig& c) { return std::string(eval_mode_name(c.eval_mode)); },
                 [](RunConfig& c, const std::string& v) { c.eval_mode = parse_eval_mode(v); }});
    e.push_back({"eval.decode", [](const RunConfig& c) { return std::string(c.decode.greedy ? "greedy" : "sample"); },
                 [](RunConfig& c, const std::string& v) {
                   if (v != "greedy" && v != "sample") throw std::invalid_argument("expected greedy or sample");
                   c.decode.greedy = v == "greedy";
                 }});
    e.push_back(integer<std::uint64_t>("eval.seed", [](RunConfig& c) -> auto& { return c.decode.seed; }));
    e.push_back(integer<int>("eval.max_len", [](RunConfig& c) -> auto& { return c.decode.max_len; }));
    e.push_back(real("eval.temperature", [](RunConfig& c) -> auto& { return c.decode.temperature; }));

    e.push_back(boolean("task.hide_global_intensity",
                        [](RunConfig& c) -> auto& { return c.query.hide_global_intensity; }));
    e.push_back(integer<std::size_t>("run.threads", [](RunConfig& c) -> auto& { return c.threads; }));

    for (const auto& k : path_keys()) {
      e.push_back({k,
                   [k](const RunConfig& c) {
                     const auto it = c.paths.find(k.substr(5));
                     return it == c.paths.end() ? std::string() : it->second;
                   },
                   [k](RunConfig& c, const std::string& v) {
                     if (v.empty())
                       c.paths.erase(k.substr(5));
                     else
                       c.paths[k.substr(5)] = v;
                   }});
    }
    std::sort(e.begin(), e.end(), [](const Entry& a, const Entry& b) { return a.key < b.key; });
    return e;
  }();
  return entries;
}

const Entry* find_entry(const std::string& key) {
  const auto& reg = registry();
  const auto it = std::lower_bound(reg.begin(), reg.end(), key,
                                   [](const Entry& e, const std::string& k) { return e.key < k; });
  return it != reg.end() && it->key == key ? &*it : nullptr;
}

void derive_seeds(RunConfig& c) {
  c.synth_seed = derive_seed({c.seed, 1});
  c.split_seed = derive_seed({c.seed, 2});
  c.policy_seed = derive_seed({c.seed, 3});
  c.sft.seed = derive_seed({c.seed, 4});
  c.grpo.seed = derive_seed({c.seed, 5});
  c.decode.seed = derive_seed({c.seed, 6});
}

}  // namespace

KeyValues parse_key_values(const std::string& text, const std::string& source) {
  KeyValues out;
  std::stringstream ss(text);
  std::string line;
  std::size_t lineno = 0;
  std::string errors;
  while (std::getline(ss, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      errors += source + ":" + std::to_string(lineno) + ": expected key=value\n";
      continue;
    }
    std::string key = trim(t.substr(0, eq));
    if (key.rfind("resolved.", 0) == 0) key = key.substr(9);
    out.emplace_back(std::move(key), trim(t.substr(eq + 1)));
  }
  if (!errors.empty()) throw ConfigError(errors.substr(0, errors.size() - 1));
  return out;
}

KeyValues load_key_values(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_key_values(ss.str(), path.string());
}

void RunConfig::apply(const KeyValues& kv) {
  std::string errors;
  auto fail = [&](const std::string& key, const std::string& why) { errors += key + ": " + why + "\n"; };
  // The master seed fans out to every subsystem seed first, so explicit
  // per-subsystem seeds in the same batch win regardless of order.
  for (const auto& [key, value] : kv) {
    if (key != "seed") continue;
    try {
      seed = parse_integer<std::uint64_t>(value);
      derive_seeds(*this);
    } catch (const std::exception& e) {
      fail(key, e.what());
    }
  }
  for (const auto& [key, value] : kv) {
    if (key == "seed") continue;
    const Entry* entry = find_entry(key);
    if (!entry) {
      fail(key, "unknown key");
      continue;
    }
    try {
      entry->set(*this, value);
    } catch (const std::exception& e) {
      fail(key, e.what());
    }
  }
  if (!errors.empty()) throw ConfigError(errors.substr(0, errors.size() - 1));
}

void RunConfig::validate() const {
  std::string errors;
  auto check = [&](const std::string& section, const std::function<void()>& fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      errors += section + ": " + e.what() + "\n";
    }
  };
  check("synth", [&] { synth.validate(); });
  check("forge", [&] { forge.validate(synth.size, synth.size); });
  check("sft", [&] { sft.validate(); });
  check("grpo", [&] { grpo.validate(); });
  check("reward", [&] { reward.validate(); });
  if (synth_cases == 0) errors += "synth.cases: must be positive\n";
  if (!(split_ratio > 0.0 && split_ratio < 1.0)) errors += "forge.split_ratio: must lie in (0, 1)\n";
  if (policy_dim == 0) errors += "policy.dim: must be positive\n";
  if (decode.max_len <= 0) errors += "eval.max_len: must be positive\n";
  if (!(decode.temperature > 0.0)) errors += "eval.temperature: must be positive\n";
  if (!errors.empty()) throw ConfigError(errors.substr(0, errors.size() - 1));
}

KeyValues RunConfig::resolved() const {
  KeyValues out;
  for (const auto& e : registry()) out.emplace_back(e.key, e.get(*this));
  return out;
}

std::vector<std::string> RunConfig::known_keys() const {
  std::vector<std::string> keys;
  for (const auto& e : registry()) keys.push_back(e.key);
  return keys;
}

PolicyShape RunConfig::shape() const {
  PolicyShape s;
  s.dim = policy_dim;
  return s;
}

std::size_t RunConfig::effective_threads() const { return threads == 0 ? default_threads() : threads; }

ExperimentConfig RunConfig::experiment() const {
  ExperimentConfig x;
  x.shape = shape();
  x.init_seed = policy_seed;
  x.sft = sft;
  x.sft_modes = sft_modes;
  x.grpo = grpo;
  x.grpo.threads = threads;
  x.weights = reward;
  x.decode = decode;
  x.query = query;
  return x;
}

void write_manifest(const std::filesystem::path& path, const RunConfig& cfg, const std::string& command) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write manifest " + path.string());
  out << "# ctgrpo " << command << "\n";
  for (const auto& [k, v] : cfg.resolved()) out << "resolved." << k << "=" << v << "\n";
}

}  // namespace ctgrpo
