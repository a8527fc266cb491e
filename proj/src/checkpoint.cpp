#include "checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace ocor {

namespace {

constexpr char kMagic[8] = {'O', 'C', 'O', 'R', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

void put_u32(std::ostream &out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char *>(b), 4);
}

void put_u64(std::ostream &out, uint64_t v) {
  put_u32(out, static_cast<uint32_t>(v));
  put_u32(out, static_cast<uint32_t>(v >> 32));
}

void put_f32(std::ostream &out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

uint32_t get_u32(std::istream &in, const std::string &path) {
  unsigned char b[4];
  in.read(reinterpret_cast<char *>(b), 4);
  if (!in) throw std::runtime_error("checkpoint: truncated file " + path);
  return static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 |
         static_cast<uint32_t>(b[2]) << 16 | static_cast<uint32_t>(b[3]) << 24;
}

uint64_t get_u64(std::istream &in, const std::string &path) {
  const uint64_t lo = get_u32(in, path);
  const uint64_t hi = get_u32(in, path);
  return lo | hi << 32;
}

float get_f32(std::istream &in, const std::string &path) {
  const uint32_t bits = get_u32(in, path);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

std::string get_blob(std::istream &in, uint32_t len, const std::string &path) {
  std::string s(len, '\0');
  in.read(s.data(), len);
  if (!in) throw std::runtime_error("checkpoint: truncated file " + path);
  return s;
}

CheckpointHeader read_header(std::istream &in, const std::string &path) {
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) {
    throw std::runtime_error("checkpoint: " + path + " is not a checkpoint file");
  }
  const uint32_t version = get_u32(in, path);
  if (version != kVersion) {
    throw std::runtime_error("checkpoint: " + path + " has unsupported version " +
                             std::to_string(version));
  }
  CheckpointHeader header;
  header.config_hash = get_u64(in, path);
  header.step_count = static_cast<int64_t>(get_u64(in, path));
  const uint32_t config_len = get_u32(in, path);
  header.config_text = get_blob(in, config_len, path);
  return header;
}

}  // namespace

void save_checkpoint(const std::string &path, const ModelConfig &config,
                     const ParamStore &params, int64_t step_count) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
  out.write(kMagic, 8);
  put_u32(out, kVersion);
  put_u64(out, config.hash());
  put_u64(out, static_cast<uint64_t>(step_count));
  const std::string config_text = config.to_text();
  put_u32(out, static_cast<uint32_t>(config_text.size()));
  out.write(config_text.data(),
            static_cast<std::streamsize>(config_text.size()));
  put_u32(out, static_cast<uint32_t>(params.items().size()));
  for (const auto &[name, t] : params.items()) {
    put_u32(out, static_cast<uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(out, static_cast<uint32_t>(t.shape().size()));
    for (int e : t.shape()) put_u32(out, static_cast<uint32_t>(e));
    for (int64_t i = 0; i < t.numel(); ++i) {
      put_f32(out, static_cast<float>(t.data()[i]));
    }
  }
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

CheckpointHeader load_checkpoint_header(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  return read_header(in, path);
}

CheckpointHeader load_checkpoint(const std::string &path, ParamStore &params) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  CheckpointHeader header = read_header(in, path);
  const ModelConfig embedded = ModelConfig::from_text(header.config_text);
  if (embedded.hash() != header.config_hash) {
    throw std::runtime_error("checkpoint: " + path +
                             " config hash does not match its config text");
  }
  const uint32_t n_params = get_u32(in, path);
  if (n_params != params.items().size()) {
    throw std::runtime_error(
        "checkpoint: " + path + " holds " + std::to_string(n_params) +
        " parameters, model expects " + std::to_string(params.items().size()));
  }
  for (uint32_t pi = 0; pi < n_params; ++pi) {
    const uint32_t name_len = get_u32(in, path);
    const std::string name = get_blob(in, name_len, path);
    const uint32_t rank = get_u32(in, path);
    std::vector<int> shape;
    for (uint32_t r = 0; r < rank; ++r) {
      shape.push_back(static_cast<int>(get_u32(in, path)));
    }
    if (!params.contains(name)) {
      throw std::runtime_error("checkpoint: " + path +
                               " has unexpected parameter " + name);
    }
    Tensor &t = params.get(name);
    if (t.shape() != shape) {
      throw std::runtime_error("checkpoint: " + path + " parameter " + name +
                               " has a mismatched shape");
    }
    for (int64_t i = 0; i < t.numel(); ++i) {
      t.data()[i] = static_cast<double>(get_f32(in, path));
    }
  }
  return header;
}

}  // namespace ocor
