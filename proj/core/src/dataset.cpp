#include "ddpolab/dataset.hpp"

#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "ddpolab/rng.hpp"

namespace ddpolab {

using nn::Tensor;

namespace fs = std::filesystem;

int DatasetManifest::split_total(Split s) const {
  int n = 0;
  for (int c : counts[static_cast<int>(s)]) n += c;
  return n;
}

std::uint64_t DatasetManifest::split_seed(Split s) const {
  return stage_seed(seed, std::string("data/") + kSplitNames[static_cast<int>(s)]);
}

void DatasetManifest::validate() const {
  if (version != 1) {
    throw std::invalid_argument("dataset manifest version " + std::to_string(version) +
                                " unsupported");
  }
  for (const auto& split : counts) {
    for (int c : split) {
      if (c < 0) throw std::invalid_argument("dataset manifest has a negative cell count");
    }
  }
}

std::array<AttributeVector, 2> held_out_combos() {
  return {AttributeVector::make(true, false, true, true, false),
          AttributeVector::make(false, true, false, true, false)};
}

namespace {

struct SplitTargets {
  int mel, nv;
  std::array<int, kNumArtifacts> artifacts;
};

// One tenth of the reference split sizes, rounded.
constexpr SplitTargets kTrainTargets{275, 925, {451, 130, 20, 161}};
constexpr SplitTargets kValTargets{45, 167, {80, 23, 3, 31}};
constexpr SplitTargets kTestTargets{54, 196, {99, 26, 4, 34}};

std::array<int, kNumPrompts> build_cells(const SplitTargets& tgt, bool hold_out) {
  const double n = tgt.mel + tgt.nv;
  double p[kNumArtifacts];
  for (int k = 0; k < kNumArtifacts; ++k) p[k] = tgt.artifacts[k] / n;

  const auto held = held_out_combos();
  std::array<int, kNumPrompts> cells{};
  for (int idx = 0; idx < kNumPrompts; ++idx) {
    const AttributeVector a = AttributeVector::from_index(idx);
    const int mask = idx & 15;
    if (mask == 0) continue;  // filled below from the row remainder
    if (hold_out && (a == held[0] || a == held[1])) continue;
    double prob = 1.0;
    for (int k = 0; k < kNumArtifacts; ++k) {
      prob *= a.artifact(k) ? p[k] : 1.0 - p[k];
    }
    const int row_n = a.is_mel() ? tgt.mel : tgt.nv;
    int c = static_cast<int>(std::llround(row_n * prob));
    if (c >= 1) c = std::max(c, 2);  // no near-empty cells
    cells[idx] = c;
  }

  // lift single-artifact cells until each artifact marginal reaches target
  for (int k = 0; k < kNumArtifacts; ++k) {
    int actual = 0;
    for (int idx = 0; idx < kNumPrompts; ++idx) {
      if (AttributeVector::from_index(idx).artifact(k)) actual += cells[idx];
    }
    int deficit = tgt.artifacts[k] - actual;
    if (deficit <= 0) continue;
    const int mel_share = static_cast<int>(std::llround(deficit * tgt.mel / n));
    cells[1 << k] += mel_share;
    cells[16 + (1 << k)] += deficit - mel_share;
  }

  // no-artifact cells absorb the remainder so disease rows sum exactly
  for (int d = 0; d < 2; ++d) {
    const int row_n = d == 0 ? tgt.mel : tgt.nv;
    int used = 0;
    for (int m = 1; m < 16; ++m) used += cells[d * 16 + m];
    const int rest = row_n - used;
    if (rest < 2) {
      throw std::logic_error("dataset profile leaves no room for the plain cell");
    }
    cells[d * 16] = rest;
  }
  return cells;
}

std::string counts_line(const std::array<int, kNumPrompts>& cells) {
  std::string s;
  for (int i = 0; i < kNumPrompts; ++i) {
    if (i) s += ',';
    s += std::to_string(cells[i]);
  }
  return s;
}

std::array<int, kNumPrompts> parse_counts(const std::string& text, const std::string& where) {
  std::array<int, kNumPrompts> cells{};
  std::stringstream ss(text);
  std::string item;
  int i = 0;
  while (std::getline(ss, item, ',')) {
    if (i >= kNumPrompts) throw std::runtime_error(where + ": more than 32 cell counts");
    try {
      cells[i++] = std::stoi(item);
    } catch (const std::exception&) {
      throw std::runtime_error(where + ": bad cell count \"" + item + "\"");
    }
  }
  if (i != kNumPrompts) {
    throw std::runtime_error(where + ": expected 32 cell counts, got " + std::to_string(i));
  }
  return cells;
}

void put_f32(std::string& out, float v) {
  const std::uint32_t u = std::bit_cast<std::uint32_t>(v);
  out.push_back(static_cast<char>(u & 0xff));
  out.push_back(static_cast<char>((u >> 8) & 0xff));
  out.push_back(static_cast<char>((u >> 16) & 0xff));
  out.push_back(static_cast<char>((u >> 24) & 0xff));
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path);
}

}  // namespace

DatasetManifest table1_manifest(std::uint64_t seed) {
  DatasetManifest m;
  m.seed = seed;
  m.profile = "table1";
  m.counts[0] = build_cells(kTrainTargets, true);
  m.counts[1] = build_cells(kValTargets, false);
  m.counts[2] = build_cells(kTestTargets, false);
  return m;
}

DatasetManifest balanced_manifest(std::uint64_t seed) {
  DatasetManifest m;
  m.seed = seed;
  m.profile = "balanced";
  for (int idx = 0; idx < kNumPrompts; ++idx) {
    m.counts[0][idx] = 125;
    m.counts[1][idx] = 25;
    m.counts[2][idx] = 25;
  }
  return m;
}

const Dataset& DatasetBundle::split(Split s) const {
  switch (s) {
    case Split::Train: return train;
    case Split::Val: return val;
    default: return test;
  }
}

DatasetBundle generate_dataset(const DatasetManifest& manifest) {
  manifest.validate();
  DatasetBundle bundle;
  bundle.manifest = manifest;
  for (int si = 0; si < 3; ++si) {
    const Split s = static_cast<Split>(si);
    Dataset& ds = si == 0 ? bundle.train : si == 1 ? bundle.val : bundle.test;
    ds.samples.reserve(manifest.split_total(s));
    const std::uint64_t base = manifest.split_seed(s);
    std::uint64_t idx = 0;
    for (int cell = 0; cell < kNumPrompts; ++cell) {
      const AttributeVector attrs = AttributeVector::from_index(cell);
      for (int j = 0; j < manifest.counts[si][cell]; ++j) {
        ds.samples.push_back(render_sample(sample_seed(base, idx++), attrs));
      }
    }
  }
  return bundle;
}

void write_images_f32(const std::string& path, const std::vector<Tensor>& images) {
  std::string bytes;
  bytes.reserve(images.size() * kImageSize * kImageSize * 4);
  for (const auto& img : images) {
    if (img.size() != static_cast<std::size_t>(kImageSize) * kImageSize) {
      throw std::invalid_argument("write_images_f32: image is not 1x16x16");
    }
    for (std::size_t i = 0; i < img.size(); ++i) put_f32(bytes, img[i]);
  }
  write_file(path, bytes);
}

std::vector<Tensor> read_images_f32(const std::string& path) {
  const std::string bytes = read_file(path);
  const std::size_t record = static_cast<std::size_t>(kImageSize) * kImageSize * 4;
  if (bytes.size() % record != 0) {
    throw std::runtime_error(path + ": size is not a multiple of one 16x16 float record");
  }
  std::vector<Tensor> out;
  out.reserve(bytes.size() / record);
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    Tensor img({1, kImageSize, kImageSize});
    for (std::size_t i = 0; i < img.size(); ++i) {
      const std::uint32_t u = static_cast<std::uint8_t>(bytes[pos]) |
                              (static_cast<std::uint8_t>(bytes[pos + 1]) << 8) |
                              (static_cast<std::uint8_t>(bytes[pos + 2]) << 16) |
                              (static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes[pos + 3]))
                               << 24);
      img[i] = std::bit_cast<float>(u);
      pos += 4;
    }
    out.push_back(std::move(img));
  }
  return out;
}

void write_labels_u8(const std::string& path, const std::vector<AttributeVector>& labels) {
  std::string bytes;
  bytes.reserve(labels.size() * kNumAttributes);
  for (const auto& a : labels) {
    for (auto b : a.bits) bytes.push_back(static_cast<char>(b));
  }
  write_file(path, bytes);
}

std::vector<AttributeVector> read_labels_u8(const std::string& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() % kNumAttributes != 0) {
    throw std::runtime_error(path + ": size is not a multiple of 6 label bytes");
  }
  std::vector<AttributeVector> out(bytes.size() / kNumAttributes);
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (int k = 0; k < kNumAttributes; ++k) {
      out[i].bits[k] = static_cast<std::uint8_t>(bytes[i * kNumAttributes + k]);
    }
  }
  return out;
}

void make_dataset(const DatasetManifest& manifest, const std::string& dir) {
  const DatasetBundle bundle = generate_dataset(manifest);
  fs::create_directories(dir);

  std::string meta;
  meta += "version=" + std::to_string(manifest.version) + "\n";
  meta += "seed=" + std::to_string(manifest.seed) + "\n";
  meta += "profile=" + manifest.profile + "\n";
  for (int si = 0; si < 3; ++si) {
    meta += std::string(kSplitNames[si]) + ".counts=" + counts_line(manifest.counts[si]) + "\n";
  }
  write_file(dir + "/manifest.txt", meta);

  for (int si = 0; si < 3; ++si) {
    const Dataset& ds = bundle.split(static_cast<Split>(si));
    const std::string sub = dir + "/" + kSplitNames[si];
    fs::create_directories(sub);
    std::vector<Tensor> images;
    std::vector<AttributeVector> labels;
    images.reserve(ds.samples.size());
    labels.reserve(ds.samples.size());
    for (const auto& s : ds.samples) {
      images.push_back(s.image);
      labels.push_back(s.label);
    }
    write_images_f32(sub + "/images.f32", images);
    write_labels_u8(sub + "/labels.u8", labels);
  }
}

DatasetManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  DatasetManifest m;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected key=value");
    }
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    const std::string where = path + ":" + std::to_string(lineno);
    if (key == "version") {
      m.version = std::stoi(value);
    } else if (key == "seed") {
      m.seed = std::stoull(value);
    } else if (key == "profile") {
      m.profile = value;
    } else if (key == "train.counts") {
      m.counts[0] = parse_counts(value, where);
    } else if (key == "val.counts") {
      m.counts[1] = parse_counts(value, where);
    } else if (key == "test.counts") {
      m.counts[2] = parse_counts(value, where);
    } else {
      throw std::runtime_error(where + ": unknown manifest key \"" + key + "\"");
    }
  }
  m.validate();
  return m;
}

DatasetBundle load_dataset(const std::string& dir) {
  DatasetBundle bundle;
  bundle.manifest = load_manifest(dir + "/manifest.txt");
  for (int si = 0; si < 3; ++si) {
    const Split s = static_cast<Split>(si);
    Dataset& ds = si == 0 ? bundle.train : si == 1 ? bundle.val : bundle.test;
    const std::string sub = dir + "/" + kSplitNames[si];
    auto images = read_images_f32(sub + "/images.f32");
    auto labels = read_labels_u8(sub + "/labels.u8");
    if (images.size() != labels.size()) {
      throw std::runtime_error(sub + ": image and label counts differ");
    }
    const std::uint64_t base = bundle.manifest.split_seed(s);
    ds.samples.resize(images.size());
    for (std::size_t i = 0; i < images.size(); ++i) {
      ds.samples[i] = {std::move(images[i]), labels[i], sample_seed(base, i)};
    }
  }
  return bundle;
}

void write_sample_dump(const std::string& dir, const std::vector<Tensor>& images,
                       const std::vector<AttributeVector>& labels) {
  if (images.size() != labels.size()) {
    throw std::invalid_argument("write_sample_dump: image and label counts differ");
  }
  fs::create_directories(dir);
  write_images_f32(dir + "/images.f32", images);
  write_labels_u8(dir + "/labels.u8", labels);
  std::string prompts;
  for (const auto& a : labels) {
    prompts += format_prompt(a);
    prompts += '\n';
  }
  write_file(dir + "/prompts.txt", prompts);
}

std::pair<std::vector<Tensor>, std::vector<AttributeVector>> read_sample_dump(
    const std::string& dir) {
  auto images = read_images_f32(dir + "/images.f32");
  auto labels = read_labels_u8(dir + "/labels.u8");
  if (images.size() != labels.size()) {
    throw std::runtime_error(dir + ": image and label counts differ");
  }
  return {std::move(images), std::move(labels)};
}

}  // namespace ddpolab
