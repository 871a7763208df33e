#pragma once

// Versioned binary checkpoint for a QNetwork (plus optional Adam state) and
// its JSON sidecar.
//
// Binary layout, all integers and floats little-endian:
//   "DEDDQNW\0"                 magic, 8 bytes
//   u32 format version          kCheckpointFormatVersion
//   u32 feature layout version  kFeatureLayoutVersion
//   u32 n, n bytes              strategy ordinal table, comma separated
//   u32 k, k x u32              layer sizes (input .. output)
//   per layer: weights row-major (out x in) f64, then bias f64
//   u32 has_adam; if 1: u64 step, f64 lr, beta1, beta2, eps, then first and
//     second moments in parameter order
//   u64 checksum                FNV-1a over every preceding byte
//
// The sidecar "<path>.json" records the same versions plus run metadata
// (dim_max, config hash, Adam hyperparameters).

#include <algorithm>
#include <array>
#include <iterator>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "dedqn/de.hpp"
#include "dedqn/errors.hpp"
#include "dedqn/features.hpp"
#include "dedqn/neural.hpp"

namespace dedqn {

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;
inline constexpr std::array<char, 8> kCheckpointMagic = {'D', 'E', 'D', 'D', 'Q', 'N', 'W', '\0'};

inline std::string strategy_table() {
  std::string s;
  for (auto st : kAllStrategies) {
    if (!s.empty()) s += ',';
    s += to_string(st);
  }
  return s;
}

struct CheckpointInfo {
  std::uint32_t feature_layout_version = kFeatureLayoutVersion;
  std::string strategies = strategy_table();
  std::size_t dim_max = 0;
  std::string config_hash;
  nlohmann::json extra = nlohmann::json::object();
};

struct Checkpoint {
  QNetwork net;
  std::optional<AdamState> adam;
  CheckpointInfo info;
};

inline std::filesystem::path sidecar_path(const std::filesystem::path& p) {
  auto s = p;
  s += ".json";
  return s;
}

namespace detail {

class ByteWriter {
 public:
  void u32(std::uint32_t v) {
    for (int k = 0; k < 4; ++k) bytes_.push_back(static_cast<char>((v >> (8 * k)) & 0xFF));
  }
  void u64(std::uint64_t v) {
    for (int k = 0; k < 8; ++k) bytes_.push_back(static_cast<char>((v >> (8 * k)) & 0xFF));
  }
  void f64(double d) { u64(std::bit_cast<std::uint64_t>(d)); }
  void raw(const char* p, std::size_t n) { bytes_.insert(bytes_.end(), p, p + n); }
  void matrix(const Eigen::MatrixXd& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) f64(m(r, c));
  }
  void vector(const Eigen::VectorXd& v) {
    for (Eigen::Index k = 0; k < v.size(); ++k) f64(v[k]);
  }
  const std::vector<char>& bytes() const { return bytes_; }

 private:
  std::vector<char> bytes_;
};

class ByteReader {
 public:
  ByteReader(const std::vector<char>& b, std::string where) : b_(b), where_(std::move(where)) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b_[pos_++])) << (8 * k);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int k = 0; k < 8; ++k) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b_[pos_++])) << (8 * k);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s(b_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  void matrix(Eigen::MatrixXd& m) {
    need(static_cast<std::size_t>(m.size()) * 8);
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = f64();
  }
  void vector(Eigen::VectorXd& v) {
    need(static_cast<std::size_t>(v.size()) * 8);
    for (Eigen::Index k = 0; k < v.size(); ++k) v[k] = f64();
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > b_.size())
      throw DataError(where_ + ": truncated checkpoint (needed " + std::to_string(n) + " bytes at offset " +
                      std::to_string(pos_) + ")");
  }
  const std::vector<char>& b_;
  std::string where_;
  std::size_t pos_ = 0;
};

inline std::uint64_t checksum(const char* p, std::size_t n) {
  return fnv1a(std::string_view(p, n));
}

}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& path, const QNetwork& net, const AdamState* adam,
                            const CheckpointInfo& info) {
  detail::ByteWriter w;
  w.raw(kCheckpointMagic.data(), kCheckpointMagic.size());
  w.u32(kCheckpointFormatVersion);
  w.u32(info.feature_layout_version);
  w.u32(static_cast<std::uint32_t>(info.strategies.size()));
  w.raw(info.strategies.data(), info.strategies.size());
  w.u32(static_cast<std::uint32_t>(net.sizes().size()));
  for (auto s : net.sizes()) w.u32(static_cast<std::uint32_t>(s));
  for (const auto& L : net.layers()) {
    w.matrix(L.weights);
    w.vector(L.bias);
  }
  w.u32(adam ? 1u : 0u);
  if (adam) {
    w.u64(adam->step);
    w.f64(adam->config.learning_rate);
    w.f64(adam->config.beta1);
    w.f64(adam->config.beta2);
    w.f64(adam->config.epsilon);
    for (const auto* set : {&adam->m, &adam->v})
      for (const auto& L : set->layers) {
        w.matrix(L.weights);
        w.vector(L.bias);
      }
  }
  w.u64(detail::checksum(w.bytes().data(), w.bytes().size()));

  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write checkpoint '" + path.string() + "'");
    out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
    if (!out) throw DataError("failed writing checkpoint '" + path.string() + "'");
  }

  nlohmann::json side = info.extra;
  side["format_version"] = kCheckpointFormatVersion;
  side["feature_layout_version"] = info.feature_layout_version;
  side["strategies"] = info.strategies;
  side["dim_max"] = info.dim_max;
  side["config_hash"] = info.config_hash;
  side["layer_sizes"] = net.sizes();
  if (adam) {
    side["adam"] = {{"learning_rate", adam->config.learning_rate},
                    {"beta1", adam->config.beta1},
                    {"beta2", adam->config.beta2},
                    {"epsilon", adam->config.epsilon},
                    {"step", adam->step}};
  }
  std::ofstream js(sidecar_path(path), std::ios::trunc);
  if (!js) throw DataError("cannot write checkpoint sidecar '" + sidecar_path(path).string() + "'");
  js << side.dump(2) << "\n";
}

inline void save_weights(const QNetwork& net, const std::filesystem::path& path) {
  save_checkpoint(path, net, nullptr, CheckpointInfo{});
}

/// Loads and validates a checkpoint. Rejects truncated or corrupted files,
/// and any feature-layout or strategy-table version other than the current one.
inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path.string() + "'");
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string where = path.string();
  if (bytes.size() < kCheckpointMagic.size() + 8) throw DataError(where + ": truncated checkpoint");
  if (!std::equal(kCheckpointMagic.begin(), kCheckpointMagic.end(), bytes.begin()))
    throw DataError(where + ": not a checkpoint (bad magic)");

  detail::ByteReader r(bytes, where);
  r.str(kCheckpointMagic.size());
  const auto format = r.u32();
  if (format != kCheckpointFormatVersion)
    throw DataError(where + ": checkpoint format version " + std::to_string(format) + ", expected " +
                    std::to_string(kCheckpointFormatVersion));
  Checkpoint ck;
  ck.info.feature_layout_version = r.u32();
  const auto slen = r.u32();
  ck.info.strategies = r.str(slen);
  if (ck.info.feature_layout_version != kFeatureLayoutVersion)
    throw DataError(where + ": feature layout version " + std::to_string(ck.info.feature_layout_version) +
                    " does not match " + std::to_string(kFeatureLayoutVersion));
  if (ck.info.strategies != strategy_table())
    throw DataError(where + ": strategy table '" + ck.info.strategies + "' does not match '" + strategy_table() + "'");

  const auto nsizes = r.u32();
  if (nsizes < 2 || nsizes > 64) throw DataError(where + ": implausible layer count " + std::to_string(nsizes));
  std::vector<std::size_t> sizes;
  for (std::uint32_t k = 0; k < nsizes; ++k) {
    const auto s = r.u32();
    if (s == 0 || s > (1u << 20)) throw DataError(where + ": implausible layer size " + std::to_string(s));
    sizes.push_back(s);
  }
  ck.net = QNetwork(sizes);
  for (auto& L : ck.net.layers()) {
    r.matrix(L.weights);
    r.vector(L.bias);
  }
  const auto has_adam = r.u32();
  if (has_adam > 1) throw DataError(where + ": corrupt optimizer flag");
  if (has_adam) {
    AdamState a = AdamState::for_network(ck.net);
    a.step = r.u64();
    a.config.learning_rate = r.f64();
    a.config.beta1 = r.f64();
    a.config.beta2 = r.f64();
    a.config.epsilon = r.f64();
    for (auto* set : {&a.m, &a.v})
      for (auto& L : set->layers) {
        r.matrix(L.weights);
        r.vector(L.bias);
      }
    ck.adam = std::move(a);
  }
  const std::size_t body = r.pos();
  const auto stored = r.u64();
  if (r.pos() != bytes.size()) throw DataError(where + ": trailing bytes after checkpoint");
  if (stored != detail::checksum(bytes.data(), body)) throw DataError(where + ": checksum mismatch");

  const auto side = sidecar_path(path);
  if (std::filesystem::exists(side)) {
    std::ifstream js(side);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(js);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(side.string() + ": " + e.what());
    }
    if (j.value("feature_layout_version", 0u) != ck.info.feature_layout_version ||
        j.value("strategies", std::string{}) != ck.info.strategies)
      throw DataError(side.string() + ": sidecar versions disagree with the checkpoint");
    ck.info.dim_max = j.value("dim_max", std::size_t{0});
    ck.info.config_hash = j.value("config_hash", std::string{});
    ck.info.extra = std::move(j);
  }
  return ck;
}

inline QNetwork load_weights(const std::filesystem::path& path) { return load_checkpoint(path).net; }

}  // namespace dedqn
