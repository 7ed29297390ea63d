#include "ddpolab/config.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace ddpolab {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

template <typename T, typename Fn>
T parse_number(const std::string& value, int line, const Fn& fn) {
  try {
    std::size_t used = 0;
    T v = fn(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(line, "cannot parse value \"" + value + "\"");
  }
}

int parse_int(const std::string& v, int line) {
  return parse_number<int>(v, line, [](const std::string& s, std::size_t* used) {
    return std::stoi(s, used);
  });
}

std::uint64_t parse_u64(const std::string& v, int line) {
  if (!v.empty() && v[0] == '-') throw ConfigError(line, "cannot parse value \"" + v + "\"");
  return parse_number<std::uint64_t>(v, line, [](const std::string& s, std::size_t* used) {
    return std::stoull(s, used);
  });
}

double parse_double(const std::string& v, int line) {
  return parse_number<double>(v, line, [](const std::string& s, std::size_t* used) {
    return std::stod(s, used);
  });
}

bool parse_bool(const std::string& v, int line) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(line, "cannot parse boolean \"" + v + "\" (use true/false)");
}

std::string format_double(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(lineno, "expected key=value, got \"" + line + "\"");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));

    if (key == "seed") cfg.seed = parse_u64(value, lineno);
    else if (key == "data_dir") cfg.data_dir = value;
    else if (key == "out_dir") cfg.out_dir = value;
    else if (key == "profile") {
      if (value != "table1" && value != "balanced") {
        throw ConfigError(lineno, "profile must be table1 or balanced");
      }
      cfg.profile = value;
    } else if (key == "T") cfg.T = parse_int(value, lineno);
    else if (key == "beta_min") cfg.beta_min = parse_double(value, lineno);
    else if (key == "beta_max") cfg.beta_max = parse_double(value, lineno);
    else if (key == "diffusion_epochs") cfg.diffusion_epochs = parse_int(value, lineno);
    else if (key == "diffusion_batch") cfg.diffusion_batch = parse_int(value, lineno);
    else if (key == "diffusion_lr") cfg.diffusion_lr = parse_double(value, lineno);
    else if (key == "classifier_epochs") cfg.classifier_epochs = parse_int(value, lineno);
    else if (key == "classifier_batch") cfg.classifier_batch = parse_int(value, lineno);
    else if (key == "classifier_lr") cfg.classifier_lr = parse_double(value, lineno);
    else if (key == "per_prompt") cfg.per_prompt = parse_int(value, lineno);
    else if (key == "rounds") cfg.rounds = parse_int(value, lineno);
    else if (key == "clip_eps") cfg.clip_eps = parse_double(value, lineno);
    else if (key == "ddpo_lr") cfg.ddpo_lr = parse_double(value, lineno);
    else if (key == "minibatch") cfg.minibatch = parse_int(value, lineno);
    else if (key == "max_epochs") cfg.max_epochs = parse_int(value, lineno);
    else if (key == "stop_tol") cfg.stop_tol = parse_double(value, lineno);
    else if (key == "stop_window") cfg.stop_window = parse_int(value, lineno);
    else if (key == "normalize_advantages") cfg.normalize_advantages = parse_bool(value, lineno);
    else if (key == "kl_limit") cfg.kl_limit = parse_double(value, lineno);
    else if (key == "samples") cfg.samples = parse_int(value, lineno);
    else if (key == "threads") cfg.threads = parse_int(value, lineno);
    else if (key == "prompt") {
      try {
        cfg.prompts.push_back(parse_prompt(value));
      } catch (const PromptError& ex) {
        throw ConfigError(lineno, ex.what());
      }
    } else {
      throw ConfigError(lineno, "unknown key \"" + key + "\"");
    }
  }
  return cfg;
}

RunConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str());
  } catch (const ConfigError& ex) {
    throw std::runtime_error(path + ": " + ex.what());
  }
}

std::string serialize_config(const RunConfig& cfg) {
  std::ostringstream out;
  out << "seed=" << cfg.seed << "\n";
  out << "data_dir=" << cfg.data_dir << "\n";
  out << "out_dir=" << cfg.out_dir << "\n";
  out << "profile=" << cfg.profile << "\n";
  out << "T=" << cfg.T << "\n";
  out << "beta_min=" << format_double(cfg.beta_min) << "\n";
  out << "beta_max=" << format_double(cfg.beta_max) << "\n";
  out << "diffusion_epochs=" << cfg.diffusion_epochs << "\n";
  out << "diffusion_batch=" << cfg.diffusion_batch << "\n";
  out << "diffusion_lr=" << format_double(cfg.diffusion_lr) << "\n";
  out << "classifier_epochs=" << cfg.classifier_epochs << "\n";
  out << "classifier_batch=" << cfg.classifier_batch << "\n";
  out << "classifier_lr=" << format_double(cfg.classifier_lr) << "\n";
  out << "per_prompt=" << cfg.per_prompt << "\n";
  out << "rounds=" << cfg.rounds << "\n";
  out << "clip_eps=" << format_double(cfg.clip_eps) << "\n";
  out << "ddpo_lr=" << format_double(cfg.ddpo_lr) << "\n";
  out << "minibatch=" << cfg.minibatch << "\n";
  out << "max_epochs=" << cfg.max_epochs << "\n";
  out << "stop_tol=" << format_double(cfg.stop_tol) << "\n";
  out << "stop_window=" << cfg.stop_window << "\n";
  out << "normalize_advantages=" << (cfg.normalize_advantages ? "true" : "false") << "\n";
  out << "kl_limit=" << format_double(cfg.kl_limit) << "\n";
  out << "samples=" << cfg.samples << "\n";
  out << "threads=" << cfg.threads << "\n";
  for (const AttributeVector& p : cfg.prompts) {
    out << "prompt=" << format_prompt(p) << "\n";
  }
  return out.str();
}

void save_config_file(const RunConfig& cfg, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << serialize_config(cfg);
  if (!out) throw std::runtime_error("write failed for " + path);
}

}  // namespace ddpolab
