// Copyright 2026 The lorascore Authors
// SPDX-License-Identifier: Apache-2.0

#include "config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>
#include <vector>

#include "lorascore/error.hpp"
#include "lorascore/serialize.hpp"

namespace lorascore::cli {
namespace {

namespace pt = boost::property_tree;

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double to_double(const std::string& key, const std::string& s) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ValidationError("config " + key + ": '" + s + "' is not a number");
  }
}

std::uint64_t to_uint(const std::string& key, const std::string& s) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw ValidationError("config " + key + ": '" + s + "' is not a non-negative integer");
  }
  return v;
}

bool to_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ValidationError("config " + key + ": '" + s + "' is not a boolean");
}

// One table drives both directions so parse and serialize cannot drift.
struct Field {
  std::string key;  // section.name
  std::function<std::string(RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

std::vector<Field> fields() {
  std::vector<Field> f;
  auto num = [&](std::string key, std::function<double&(RunConfig&)> ref) {
    f.push_back({key, [ref](RunConfig& c) { return fmt_double(ref(c)); },
                 [ref, key](RunConfig& c, const std::string& s) { ref(c) = to_double(key, s); }});
  };
  auto count = [&](std::string key, std::function<std::size_t&(RunConfig&)> ref) {
    f.push_back({key, [ref](RunConfig& c) { return std::to_string(ref(c)); },
                 [ref, key](RunConfig& c, const std::string& s) { ref(c) = to_uint(key, s); }});
  };
  auto u64 = [&](std::string key, std::function<std::uint64_t&(RunConfig&)> ref) {
    f.push_back({key, [ref](RunConfig& c) { return std::to_string(ref(c)); },
                 [ref, key](RunConfig& c, const std::string& s) { ref(c) = to_uint(key, s); }});
  };
  auto flag = [&](std::string key, std::function<bool&(RunConfig&)> ref) {
    f.push_back({key, [ref](RunConfig& c) -> std::string { return ref(c) ? "true" : "false"; },
                 [ref, key](RunConfig& c, const std::string& s) { ref(c) = to_bool(key, s); }});
  };
  auto text = [&](std::string key, std::function<std::string&(RunConfig&)> ref) {
    f.push_back({key, [ref](RunConfig& c) { return ref(c); },
                 [ref](RunConfig& c, const std::string& s) { ref(c) = s; }});
  };

  count("model.n_layers", [](RunConfig& c) -> std::size_t& { return c.model.n_layers; });
  count("model.hidden_size", [](RunConfig& c) -> std::size_t& { return c.model.hidden_size; });
  count("model.intermediate_size", [](RunConfig& c) -> std::size_t& { return c.model.intermediate_size; });
  count("model.n_heads", [](RunConfig& c) -> std::size_t& { return c.model.n_heads; });
  count("model.max_context", [](RunConfig& c) -> std::size_t& { return c.model.max_context; });
  num("model.rope_base", [](RunConfig& c) -> double& { return c.model.rope_base; });
  num("model.norm_eps", [](RunConfig& c) -> double& { return c.model.norm_eps; });
  num("model.init_std", [](RunConfig& c) -> double& { return c.model.init_std; });
  u64("model.seed", [](RunConfig& c) -> std::uint64_t& { return c.model_seed; });
  flag("model.quantize", [](RunConfig& c) -> bool& { return c.quantize; });
  count("model.quant_block", [](RunConfig& c) -> std::size_t& { return c.quant_block; });
  count("model.vocab_limit", [](RunConfig& c) -> std::size_t& { return c.vocab_limit; });

  num("train.learning_rate", [](RunConfig& c) -> double& { return c.train.learning_rate; });
  count("train.epochs", [](RunConfig& c) -> std::size_t& { return c.train.epochs; });
  count("train.batch_size", [](RunConfig& c) -> std::size_t& { return c.train.batch_size; });
  count("train.context_cap", [](RunConfig& c) -> std::size_t& { return c.train.context_cap; });
  count("train.rank", [](RunConfig& c) -> std::size_t& { return c.train.rank; });
  num("train.alpha", [](RunConfig& c) -> double& { return c.train.alpha; });
  u64("train.seed", [](RunConfig& c) -> std::uint64_t& { return c.train.seed; });
  num("train.weight_decay", [](RunConfig& c) -> double& { return c.train.weight_decay; });
  flag("train.optimizer_8bit", [](RunConfig& c) -> bool& { return c.train.optimizer_8bit; });
  flag("train.shuffle", [](RunConfig& c) -> bool& { return c.train.shuffle; });
  text("train.model_family", [](RunConfig& c) -> std::string& { return c.train.model_family; });

  text("data.item", [](RunConfig& c) -> std::string& { return c.item; });
  text("data.path", [](RunConfig& c) -> std::string& { return c.data; });
  text("data.registry", [](RunConfig& c) -> std::string& { return c.registry; });
  text("data.split_manifest", [](RunConfig& c) -> std::string& { return c.split_manifest; });
  count("data.fold", [](RunConfig& c) -> std::size_t& { return c.fold; });
  u64("data.split_seed", [](RunConfig& c) -> std::uint64_t& { return c.split_seed; });
  count("data.demo_train", [](RunConfig& c) -> std::size_t& { return c.demo_train; });
  count("data.demo_dev", [](RunConfig& c) -> std::size_t& { return c.demo_dev; });
  count("data.demo_test", [](RunConfig& c) -> std::size_t& { return c.demo_test; });

  text("run.name", [](RunConfig& c) -> std::string& { return c.name; });
  num("run.baseline_seconds", [](RunConfig& c) -> double& { return c.baseline_seconds; });
  return f;
}

}  // namespace

RunConfig parse_config(std::string_view text) {
  pt::ptree tree;
  std::istringstream in{std::string(text)};
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ParseError(e.line(), e.message());
  }
  const auto table = fields();
  std::map<std::string, const Field*> by_key;
  for (const auto& f : table) by_key[f.key] = &f;
  RunConfig c;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw ValidationError("config key '" + section + "' must be inside a section");
    }
    for (const auto& [name, value] : body) {
      const std::string key = section + "." + name;
      const auto it = by_key.find(key);
      if (it == by_key.end()) throw ValidationError("unknown config key '" + key + "'");
      it->second->set(c, value.data());
    }
  }
  return c;
}

RunConfig load_config(const std::string& path) { return parse_config(io::read_file(path)); }

std::string serialize_config(const RunConfig& config) {
  RunConfig c = config;  // getters hand out references
  std::string out;
  std::string section;
  for (const auto& f : fields()) {
    const auto dot = f.key.find('.');
    const std::string s = f.key.substr(0, dot);
    if (s != section) {
      if (!section.empty()) out += "\n";
      out += "[" + s + "]\n";
      section = s;
    }
    out += f.key.substr(dot + 1) + " = " + f.get(c) + "\n";
  }
  return out;
}

}  // namespace lorascore::cli
