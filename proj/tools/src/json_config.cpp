#include "json_config.hpp"

#include <algorithm>
#include <charconv>

#include <nlohmann/json.hpp>

namespace geoslomo::cli {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string dashed(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return key;
}

std::string snake(std::string key) {
  std::replace(key.begin(), key.end(), '-', '_');
  return key;
}

std::string scalar_text(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number() || v.is_null()) return v.dump();
  throw CLI::ConversionError("config values must be scalars or arrays of scalars, got " + v.dump());
}

ordered_json typed(const std::string& s) {
  if (s == "true") return true;
  if (s == "false") return false;
  double d = 0.0;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, d);
  if (ec == std::errc() && ptr == end && !s.empty()) {
    long long i = 0;
    auto [iptr, iec] = std::from_chars(s.data(), end, i);
    if (iec == std::errc() && iptr == end) return i;
    return d;
  }
  return s;
}

std::vector<std::string> split_default(std::string s) {
  if (s.size() >= 2 && s.front() == '[' && s.back() == ']') {
    s = s.substr(1, s.size() - 2);
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= s.size() && !s.empty()) {
      const auto comma = s.find(',', start);
      out.push_back(s.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    return out;
  }
  if (s.empty()) return {};
  return {s};
}

ordered_json section(const CLI::App* app) {
  ordered_json j = ordered_json::object();
  for (const CLI::Option* opt : app->get_options()) {
    if (!opt->get_configurable() || opt->get_lnames().empty()) continue;
    const std::string& name = opt->get_lnames().front();
    if (name == "help" || name == "config") continue;
    const auto values = opt->count() ? opt->results() : split_default(opt->get_default_str());
    const bool many = opt->get_items_expected_max() > 1;
    if (values.empty()) {
      j[snake(name)] = many ? ordered_json::array() : ordered_json(nullptr);
    } else if (many) {
      ordered_json arr = ordered_json::array();
      for (const auto& v : values) arr.push_back(typed(v));
      j[snake(name)] = arr;
    } else {
      j[snake(name)] = typed(values.back());
    }
  }
  return j;
}

}  // namespace

std::string JsonConfig::to_config(const CLI::App* app, bool, bool, std::string) const {
  ordered_json j = section(app);
  for (const CLI::App* sub : app->get_subcommands()) j[sub->get_name()] = section(sub);
  return j.dump(2);
}

std::vector<CLI::ConfigItem> JsonConfig::from_config(std::istream& input) const {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(input);
  } catch (const nlohmann::json::exception& e) {
    throw CLI::ConversionError(std::string("config file is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw CLI::ConversionError("config file must hold a JSON object");

  std::vector<CLI::ConfigItem> items;
  auto add = [&items](std::vector<std::string> parents, const std::string& key, const nlohmann::json& value) {
    if (value.is_null()) return;
    CLI::ConfigItem item;
    item.parents = std::move(parents);
    item.name = dashed(key);
    if (value.is_array()) {
      for (const auto& v : value) item.inputs.push_back(scalar_text(v));
    } else {
      item.inputs.push_back(scalar_text(value));
    }
    items.push_back(std::move(item));
  };
  for (const auto& [key, value] : j.items()) {
    const bool is_command = std::find(commands_.begin(), commands_.end(), key) != commands_.end();
    if (value.is_object()) {
      if (!is_command) throw CLI::ConversionError("unknown config section '" + key + "'");
      if (key != active_) continue;
      for (const auto& [k, v] : value.items()) {
        if (v.is_object()) throw CLI::ConversionError("nested section '" + key + "." + k + "' is not supported");
        add({key}, k, v);
      }
    } else {
      add({}, key, value);
    }
  }
  return items;
}

}  // namespace geoslomo::cli
