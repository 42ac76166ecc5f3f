#include "plte/config.hpp"

#include <fstream>
#include <functional>
#include <map>

namespace plte {

void Config::resolve() {
  model.encoder.attn_dropout = train.dropout_encoder;
  model.dropout_embed_gru = train.dropout_embed_gru;
  model.gru_hidden = train.gru_hidden;
  model.encoder.validate();
  require(train.learning_rate > 0 && train.lr_decay >= 0 && train.l2_lambda >= 0,
          "config: rates must be positive");
  require(train.batch_size >= 1 && train.epochs >= 0, "config: batch_size >= 1 required");
  require(train.dropout_embed_gru >= 0 && train.dropout_embed_gru < 1 &&
              train.dropout_encoder >= 0 && train.dropout_encoder < 1,
          "config: dropout must lie in [0, 1)");
}

namespace {

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::runtime_error("config: bad boolean '" + v + "' for " + key);
}

}  // namespace

Config load_config_file(const std::string& path) {
  Config cfg;
  std::ifstream in(path);
  require(in.good(), "config: cannot open '" + path + "'");

  std::map<std::string, std::function<void(const std::string&)>> setters = {
      {"d_model", [&](const std::string& v) { cfg.model.encoder.d_model = std::stol(v); }},
      {"heads", [&](const std::string& v) { cfg.model.encoder.heads = std::stol(v); }},
      {"layers", [&](const std::string& v) { cfg.model.encoder.layers = std::stol(v); }},
      {"d_k", [&](const std::string& v) { cfg.model.encoder.d_k = std::stol(v); }},
      {"d_v", [&](const std::string& v) { cfg.model.encoder.d_v = std::stol(v); }},
      {"d_r", [&](const std::string& v) { cfg.model.encoder.d_r = std::stol(v); }},
      {"use_lasa", [&](const std::string& v) { cfg.model.encoder.use_lasa = parse_bool(v, "use_lasa"); }},
      {"use_porous", [&](const std::string& v) { cfg.model.encoder.use_porous = parse_bool(v, "use_porous"); }},
      {"use_residual", [&](const std::string& v) { cfg.model.encoder.use_residual = parse_bool(v, "use_residual"); }},
      {"use_layernorm", [&](const std::string& v) { cfg.model.encoder.use_layernorm = parse_bool(v, "use_layernorm"); }},
      {"d_char", [&](const std::string& v) { cfg.model.d_char = std::stol(v); }},
      {"d_bigram", [&](const std::string& v) { cfg.model.d_bigram = std::stol(v); }},
      {"d_word", [&](const std::string& v) { cfg.model.d_word = std::stol(v); }},
      {"max_len", [&](const std::string& v) { cfg.model.max_len = std::stol(v); }},
      {"scheme", [&](const std::string& v) { cfg.model.scheme = tag_scheme_from_string(v); }},
      {"learning_rate", [&](const std::string& v) { cfg.train.learning_rate = std::stod(v); }},
      {"lr_decay", [&](const std::string& v) { cfg.train.lr_decay = std::stod(v); }},
      {"l2_lambda", [&](const std::string& v) { cfg.train.l2_lambda = std::stod(v); }},
      {"epochs", [&](const std::string& v) { cfg.train.epochs = std::stoi(v); }},
      {"batch_size", [&](const std::string& v) { cfg.train.batch_size = std::stoi(v); }},
      {"dropout_embed_gru", [&](const std::string& v) { cfg.train.dropout_embed_gru = std::stod(v); }},
      {"dropout_encoder", [&](const std::string& v) { cfg.train.dropout_encoder = std::stod(v); }},
      {"seed", [&](const std::string& v) { cfg.train.seed = std::stoull(v); }},
      {"gru_hidden", [&](const std::string& v) { cfg.train.gru_hidden = std::stol(v); }},
      {"clip_norm", [&](const std::string& v) { cfg.train.clip_norm = std::stod(v); }},
  };

  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    auto trim = [](std::string s) {
      std::size_t a = s.find_first_not_of(" \t");
      if (a == std::string::npos) return std::string();
      std::size_t b = s.find_last_not_of(" \t");
      return s.substr(a, b - a + 1);
    };
    std::string stripped = trim(line);
    if (stripped.empty()) continue;
    std::size_t eq = stripped.find('=');
    require(eq != std::string::npos,
            "config: " + path + ":" + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(stripped.substr(0, eq));
    std::string value = trim(stripped.substr(eq + 1));
    auto it = setters.find(key);
    require(it != setters.end(),
            "config: " + path + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
    try {
      it->second(value);
    } catch (const std::exception& e) {
      throw std::runtime_error("config: " + path + ":" + std::to_string(lineno) + ": bad value '" +
                               value + "' for " + key + " (" + e.what() + ")");
    }
  }
  return cfg;
}

void apply_ablation(Config& cfg, const std::string& mode) {
  if (mode.empty() || mode == "none") return;
  if (mode == "no-lasa") {
    cfg.model.encoder.use_lasa = false;
    return;
  }
  if (mode == "no-porous") {
    cfg.model.encoder.use_porous = false;
    return;
  }
  throw std::runtime_error("unknown ablation '" + mode + "' (expected no-lasa, no-porous, none)");
}

}  // namespace plte
