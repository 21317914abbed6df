// SPDX-License-Identifier: Apache-2.0
#include "platoon/checkpoint.hpp"

#include <json.hpp>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace platoon {
namespace {

constexpr char kMagic[8] = {'P', 'L', 'T', 'N', 'Q', 'N', 'E', 'T'};

template <typename T>
void put(std::string& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  auto raw = std::bit_cast<std::array<char, sizeof(T)>>(value);
  if constexpr (std::endian::native == std::endian::big) std::reverse(raw.begin(), raw.end());
  out.append(raw.data(), raw.size());
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    std::array<char, sizeof(T)> raw{};
    take(raw.data(), raw.size());
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw.begin(), raw.end());
    return std::bit_cast<T>(raw);
  }

  void take(char* dst, std::size_t n) {
    if (pos_ + n > bytes_.size()) throw CheckpointError("checkpoint truncated");
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }

  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.nets.empty()) throw CheckpointError("checkpoint has no networks");
  const QNetShape shape = ckpt.nets.front().shape;
  for (const auto& net : ckpt.nets) {
    if (!(net.shape == shape)) throw CheckpointError("checkpoint networks differ in shape");
  }
  nlohmann::json meta = nlohmann::json::parse(ckpt.metadata_json);
  meta["algo"] = ckpt.algo;
  const std::string meta_text = meta.dump();

  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointFormatVersion);
  put<std::uint64_t>(out, ckpt.scenario_hash);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(shape.input_dim));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(shape.hidden));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(shape.n_actions));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.nets.size()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(meta_text.size()));
  out += meta_text;
  for (const auto& net : ckpt.nets) {
    net.for_each([&](std::string_view, const Tensor2& t) {
      for (Eigen::Index i = 0; i < t.size(); ++i) put<double>(out, t.data()[i]);
    });
  }
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  Reader in(bytes);
  char magic[8];
  in.take(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError("not a platoon checkpoint (bad magic)");
  }
  const auto version = in.get<std::uint32_t>();
  if (version != kCheckpointFormatVersion) {
    throw CheckpointError("unsupported checkpoint format version " + std::to_string(version));
  }
  Checkpoint ckpt;
  ckpt.scenario_hash = in.get<std::uint64_t>();
  QNetShape shape;
  shape.input_dim = in.get<std::uint32_t>();
  shape.hidden = in.get<std::uint32_t>();
  shape.n_actions = in.get<std::uint32_t>();
  const auto n_nets = in.get<std::uint32_t>();
  const auto meta_len = in.get<std::uint32_t>();
  std::string meta_text(meta_len, '\0');
  in.take(meta_text.data(), meta_len);
  try {
    const auto meta = nlohmann::json::parse(meta_text);
    ckpt.algo = meta.at("algo").get<std::string>();
    auto rest = meta;
    rest.erase("algo");
    ckpt.metadata_json = rest.dump();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint metadata: ") + e.what());
  }
  for (std::uint32_t n = 0; n < n_nets; ++n) {
    QNetParams net = QNetParams::zeros(shape);
    net.for_each([&](std::string_view, Tensor2& t) {
      for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = in.get<double>();
    });
    ckpt.nets.push_back(std::move(net));
  }
  if (!in.at_end()) throw CheckpointError("trailing bytes after checkpoint payload");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::string bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("short write to " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return decode_checkpoint(ss.str());
}

}  // namespace platoon
