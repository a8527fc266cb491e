#include "config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace ocor {

namespace {

const std::set<std::string> &known_keys() {
  static const std::set<std::string> keys = {
      // model
      "depth", "embed_dim", "heads", "char_len", "conv_width_first",
      "conv_kernel", "mlp_hidden", "max_len_nl", "max_len_code", "dropout",
      // training
      "epochs", "negatives", "learning_rate", "batch_size", "seed",
      "checkpoint_interval", "patience", "out_dir", "dev_corpus", "dev_cases",
      // evaluation
      "lambda"};
  return keys;
}

std::string trim(const std::string &s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

int parse_int(const std::map<std::string, std::string> &kv,
              const std::string &key, int fallback) {
  auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  try {
    size_t pos = 0;
    int v = std::stoi(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception &) {
    throw std::runtime_error("config: key '" + key +
                             "' is not an integer: " + it->second);
  }
}

uint64_t parse_u64(const std::map<std::string, std::string> &kv,
                   const std::string &key, uint64_t fallback) {
  auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  try {
    size_t pos = 0;
    unsigned long long v = std::stoull(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("trailing");
    return static_cast<uint64_t>(v);
  } catch (const std::exception &) {
    throw std::runtime_error("config: key '" + key +
                             "' is not a non-negative integer: " + it->second);
  }
}

double parse_double(const std::map<std::string, std::string> &kv,
                    const std::string &key, double fallback) {
  auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  try {
    size_t pos = 0;
    double v = std::stod(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception &) {
    throw std::runtime_error("config: key '" + key +
                             "' is not a number: " + it->second);
  }
}

std::string get_string(const std::map<std::string, std::string> &kv,
                       const std::string &key, const std::string &fallback) {
  auto it = kv.find(key);
  return it == kv.end() ? fallback : it->second;
}

// Shortest decimal form that parses back to exactly the same double, so
// rendered configs stay readable and round-trip losslessly.
std::string format_double(double v) {
  for (int precision = 1; precision <= 17; ++precision) {
    std::ostringstream os;
    os.precision(precision);
    os << v;
    if (std::stod(os.str()) == v) return os.str();
  }
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

std::map<std::string, std::string> parse_config_text(const std::string &text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const size_t eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error("config line " + std::to_string(line_no) +
                               ": expected 'key = value', got: " + stripped);
    }
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (key.empty()) {
      throw std::runtime_error("config line " + std::to_string(line_no) +
                               ": empty key");
    }
    if (!known_keys().count(key)) {
      throw std::runtime_error("config line " + std::to_string(line_no) +
                               ": unknown key '" + key + "'");
    }
    kv[key] = value;
  }
  return kv;
}

std::map<std::string, std::string> parse_config_file(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_config_text(buf.str());
  } catch (const std::runtime_error &e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

void ModelConfig::validate() const {
  if (depth < 1) throw std::invalid_argument("config: depth must be >= 1");
  if (embed_dim < 2 || embed_dim % 2 != 0) {
    throw std::invalid_argument("config: embed_dim must be even and >= 2");
  }
  if (heads < 1 || embed_dim % heads != 0) {
    throw std::invalid_argument(
        "config: heads must divide embed_dim (embed_dim=" +
        std::to_string(embed_dim) + ", heads=" + std::to_string(heads) + ")");
  }
  if (char_len < 1) throw std::invalid_argument("config: char_len must be >= 1");
  if (conv_width_first < 1) {
    throw std::invalid_argument("config: conv_width_first must be >= 1");
  }
  if (conv_kernel < 1 || conv_kernel % 2 == 0) {
    throw std::invalid_argument("config: conv_kernel must be odd and >= 1");
  }
  if (mlp_hidden < 1) {
    throw std::invalid_argument("config: mlp_hidden must be >= 1");
  }
  if (max_len_nl < 1 || max_len_code < 1) {
    throw std::invalid_argument("config: sequence caps must be >= 1");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) {
    throw std::invalid_argument("config: dropout must be in [0,1)");
  }
}

std::string ModelConfig::to_text() const {
  std::ostringstream os;
  os << "depth = " << depth << "\n";
  os << "embed_dim = " << embed_dim << "\n";
  os << "heads = " << heads << "\n";
  os << "char_len = " << char_len << "\n";
  os << "conv_width_first = " << conv_width_first << "\n";
  os << "conv_kernel = " << conv_kernel << "\n";
  os << "mlp_hidden = " << mlp_hidden << "\n";
  os << "max_len_nl = " << max_len_nl << "\n";
  os << "max_len_code = " << max_len_code << "\n";
  os << "dropout = " << format_double(dropout) << "\n";
  return os.str();
}

ModelConfig ModelConfig::from_text(const std::string &text) {
  ModelConfig cfg;
  cfg.apply(parse_config_text(text));
  cfg.validate();
  return cfg;
}

void ModelConfig::apply(const std::map<std::string, std::string> &kv) {
  depth = parse_int(kv, "depth", depth);
  embed_dim = parse_int(kv, "embed_dim", embed_dim);
  heads = parse_int(kv, "heads", heads);
  char_len = parse_int(kv, "char_len", char_len);
  conv_width_first = parse_int(kv, "conv_width_first", conv_width_first);
  conv_kernel = parse_int(kv, "conv_kernel", conv_kernel);
  mlp_hidden = parse_int(kv, "mlp_hidden", mlp_hidden);
  max_len_nl = parse_int(kv, "max_len_nl", max_len_nl);
  max_len_code = parse_int(kv, "max_len_code", max_len_code);
  dropout = parse_double(kv, "dropout", dropout);
}

uint64_t ModelConfig::hash() const {
  uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : to_text()) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

void TrainConfig::validate() const {
  if (epochs < 0) throw std::invalid_argument("config: epochs must be >= 0");
  if (negatives < 1) {
    throw std::invalid_argument("config: negatives must be >= 1");
  }
  if (!(learning_rate > 0.0)) {
    throw std::invalid_argument("config: learning_rate must be > 0");
  }
  if (batch_size < 1) {
    throw std::invalid_argument("config: batch_size must be >= 1");
  }
  if (checkpoint_interval < 0) {
    throw std::invalid_argument("config: checkpoint_interval must be >= 0");
  }
  if (patience < 1) throw std::invalid_argument("config: patience must be >= 1");
}

void TrainConfig::apply(const std::map<std::string, std::string> &kv) {
  epochs = parse_int(kv, "epochs", epochs);
  negatives = parse_int(kv, "negatives", negatives);
  learning_rate = parse_double(kv, "learning_rate", learning_rate);
  batch_size = parse_int(kv, "batch_size", batch_size);
  seed = parse_u64(kv, "seed", seed);
  checkpoint_interval = parse_int(kv, "checkpoint_interval", checkpoint_interval);
  patience = parse_int(kv, "patience", patience);
  out_dir = get_string(kv, "out_dir", out_dir);
  dev_corpus = get_string(kv, "dev_corpus", dev_corpus);
  dev_cases = get_string(kv, "dev_cases", dev_cases);
}

void RunConfig::apply(const std::map<std::string, std::string> &kv) {
  model.apply(kv);
  train.apply(kv);
  lambda = parse_double(kv, "lambda", lambda);
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw std::invalid_argument("config: lambda must be in [0,1]");
  }
}

std::string RunConfig::to_text() const {
  std::ostringstream os;
  os << model.to_text();
  os << "epochs = " << train.epochs << "\n";
  os << "negatives = " << train.negatives << "\n";
  os << "learning_rate = " << format_double(train.learning_rate) << "\n";
  os << "batch_size = " << train.batch_size << "\n";
  os << "seed = " << train.seed << "\n";
  os << "checkpoint_interval = " << train.checkpoint_interval << "\n";
  os << "patience = " << train.patience << "\n";
  if (!train.out_dir.empty()) os << "out_dir = " << train.out_dir << "\n";
  if (!train.dev_corpus.empty()) {
    os << "dev_corpus = " << train.dev_corpus << "\n";
  }
  if (!train.dev_cases.empty()) os << "dev_cases = " << train.dev_cases << "\n";
  os << "lambda = " << format_double(lambda) << "\n";
  return os.str();
}

}  // namespace ocor
