#include "ddpolab/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "ddpolab/models.hpp"

namespace ddpolab::nn {

namespace {

constexpr char kMagic[8] = {'D', 'D', 'P', 'O', 'L', 'A', 'B', '1'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
}

struct Reader {
  const std::vector<std::uint8_t>& bytes;
  std::size_t pos = 0;

  void need(std::size_t n, const char* what) const {
    if (pos + n > bytes.size()) {
      throw CheckpointError(CheckpointErrorKind::Truncated,
                            std::string("checkpoint truncated while reading ") + what);
    }
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = bytes[pos] | (bytes[pos + 1] << 8) | (bytes[pos + 2] << 16) |
                      (static_cast<std::uint32_t>(bytes[pos + 3]) << 24);
    pos += 4;
    return v;
  }
  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(bytes.data() + pos), n);
    pos += n;
    return s;
  }
};

}  // namespace

void CheckpointMeta::set(const std::string& key, const std::string& value) {
  for (auto& [k, v] : items) {
    if (k == key) {
      v = value;
      return;
    }
  }
  items.emplace_back(key, value);
}

bool CheckpointMeta::has(const std::string& key) const {
  for (const auto& [k, v] : items) {
    if (k == key) return true;
  }
  return false;
}

const std::string& CheckpointMeta::get(const std::string& key) const {
  for (const auto& [k, v] : items) {
    if (k == key) return v;
  }
  throw std::invalid_argument("checkpoint metadata has no key \"" + key + "\"");
}

std::vector<std::uint8_t> checkpoint_save(const ModelParams& params, const CheckpointMeta& meta) {
  CheckpointMeta full = meta;
  full.set("arch", params.arch);
  full.set("revision", std::to_string(params.revision));

  std::string meta_text;
  for (const auto& [k, v] : full.items) {
    meta_text += k;
    meta_text += '=';
    meta_text += v;
    meta_text += '\n';
  }

  std::vector<std::uint8_t> out;
  out.insert(out.end(), kMagic, kMagic + 8);
  put_u32(out, static_cast<std::uint32_t>(meta_text.size()));
  out.insert(out.end(), meta_text.begin(), meta_text.end());

  for (const auto& e : params.entries) {
    put_u32(out, static_cast<std::uint32_t>(e.name.size()));
    out.insert(out.end(), e.name.begin(), e.name.end());
    put_u32(out, static_cast<std::uint32_t>(e.value.rank()));
    for (int a = 0; a < e.value.rank(); ++a) {
      put_u32(out, static_cast<std::uint32_t>(e.value.extent(a)));
    }
    for (std::size_t i = 0; i < e.value.size(); ++i) {
      put_u32(out, std::bit_cast<std::uint32_t>(e.value[i]));
    }
  }
  return out;
}

std::pair<ModelParams, CheckpointMeta> checkpoint_load(const std::vector<std::uint8_t>& bytes,
                                                       const std::string& expected_arch) {
  Reader r{bytes};
  r.need(8, "magic");
  if (std::memcmp(bytes.data(), kMagic, 8) != 0) {
    throw CheckpointError(CheckpointErrorKind::BadMagic,
                          "not a DDPOLAB1 checkpoint (bad magic bytes)");
  }
  r.pos = 8;

  const std::uint32_t meta_len = r.u32("metadata length");
  const std::string meta_text = r.str(meta_len, "metadata block");
  CheckpointMeta meta;
  std::size_t line_start = 0;
  while (line_start < meta_text.size()) {
    std::size_t nl = meta_text.find('\n', line_start);
    if (nl == std::string::npos) nl = meta_text.size();
    const std::string line = meta_text.substr(line_start, nl - line_start);
    line_start = nl + 1;
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw CheckpointError(CheckpointErrorKind::Truncated,
                            "metadata line without '=': \"" + line + "\"");
    }
    meta.set(line.substr(0, eq), line.substr(eq + 1));
  }
  if (!meta.has("arch")) {
    throw CheckpointError(CheckpointErrorKind::ShapeMismatch,
                          "checkpoint metadata missing \"arch\"");
  }

  ModelParams params;
  params.arch = meta.get("arch");
  if (meta.has("revision")) {
    params.revision = std::stoull(meta.get("revision"));
  }

  while (r.pos < bytes.size()) {
    const std::uint32_t name_len = r.u32("tensor name length");
    const std::string name = r.str(name_len, "tensor name");
    const std::uint32_t rank = r.u32("tensor rank");
    std::vector<int> shape;
    std::size_t numel = 1;
    for (std::uint32_t a = 0; a < rank; ++a) {
      const std::uint32_t ext = r.u32("tensor extent");
      if (ext == 0 || ext > (1u << 24)) {
        throw CheckpointError(CheckpointErrorKind::ShapeMismatch,
                              "tensor \"" + name + "\" has invalid extent " +
                                  std::to_string(ext));
      }
      shape.push_back(static_cast<int>(ext));
      numel *= ext;
    }
    Tensor t = Tensor::zeros(shape);
    r.need(numel * 4, ("data of tensor \"" + name + "\"").c_str());
    for (std::size_t i = 0; i < numel; ++i) {
      t[i] = std::bit_cast<float>(r.u32("tensor data"));
    }
    params.entries.push_back({name, std::move(t)});
  }

  if (!expected_arch.empty() && params.arch != expected_arch) {
    throw CheckpointError(CheckpointErrorKind::ShapeMismatch,
                          "checkpoint is for \"" + params.arch + "\", expected \"" +
                              expected_arch + "\"");
  }
  try {
    validate_params(params);
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(CheckpointErrorKind::ShapeMismatch, e.what());
  }
  return {std::move(params), std::move(meta)};
}

void save_checkpoint_file(const std::string& path, const ModelParams& params,
                          const CheckpointMeta& meta) {
  const std::vector<std::uint8_t> bytes = checkpoint_save(params, meta);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open checkpoint file for writing: " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for checkpoint file: " + path);
}

std::pair<ModelParams, CheckpointMeta> load_checkpoint_file(const std::string& path,
                                                            const std::string& expected_arch) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint file: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return checkpoint_load(bytes, expected_arch);
}

}  // namespace ddpolab::nn
