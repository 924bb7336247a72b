#pragma once

// Self-describing binary checkpoints.
//
//   "NPDE" | u32 version | 32-byte config hash | sections...
//   section = u32 name length | name | u64 element count | f64 payload
//
// Integers and doubles are little-endian regardless of host byte order.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "npde/training.hpp"

namespace npde {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  Digest config_hash{};
  TrainState state;
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline void put_section(std::string& out, const std::string& name, std::span<const double> data) {
  put_u32(out, static_cast<std::uint32_t>(name.size()));
  out += name;
  put_u64(out, data.size());
  for (double d : data) put_u64(out, std::bit_cast<std::uint64_t>(d));
}

class Reader {
 public:
  explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}
  [[nodiscard]] bool done() const { return pos_ == bytes_.size(); }
  std::string take(std::size_t n) {
    if (bytes_.size() - pos_ < n) throw Error(ErrorKind::truncated, "checkpoint is truncated");
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint64_t uint(int width) {
    const std::string s = take(width);
    std::uint64_t v = 0;
    for (int i = width - 1; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(s[i]);
    return v;
  }

 private:
  std::string bytes_;
  std::size_t pos_ = 0;
};

template <class Tag>
void put_tree(std::string& out, const std::string& prefix, const ParameterTree<Tag>& t) {
  for (std::size_t l = 0; l < t.layout.n_layers(); ++l) {
    put_section(out, fmt::format("{}{}.weight", prefix, l), t.weight(l));
    put_section(out, fmt::format("{}{}.bias", prefix, l), t.bias(l));
  }
}

}  // namespace detail

inline std::string checkpoint_bytes(const Checkpoint& c) {
  const auto& s = c.state;
  std::string out = "NPDE";
  detail::put_u32(out, kCheckpointVersion);
  out.append(reinterpret_cast<const char*>(c.config_hash.data()), c.config_hash.size());
  std::vector<double> sizes(s.net.layout.sizes().begin(), s.net.layout.sizes().end());
  detail::put_section(out, "layers.sizes", sizes);
  detail::put_tree(out, "layer.", s.net);
  detail::put_tree(out, "adam.m.", s.adam.m);
  detail::put_tree(out, "adam.v.", s.adam.v);
  const auto& a = s.adam.config;
  const std::vector<double> hyper{a.learning_rate, a.beta1, a.beta2, a.epsilon};
  detail::put_section(out, "adam.hyper", hyper);
  const double t = static_cast<double>(s.adam.t);
  detail::put_section(out, "adam.t", std::span(&t, 1));
  detail::put_tree(out, "grads.", s.grads);
  detail::put_section(out, "history.loss", s.history.loss);
  const double epoch = s.epoch;
  detail::put_section(out, "train.epoch", std::span(&epoch, 1));
  detail::put_section(out, "end", {});
  return out;
}

inline void checkpoint_save(const std::string& path, const Checkpoint& c) {
  const std::string bytes = checkpoint_bytes(c);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw Error(ErrorKind::io, "cannot write checkpoint '" + path + "'");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw Error(ErrorKind::io, "short write to checkpoint '" + path + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw Error(ErrorKind::io, "cannot finalize checkpoint '" + path + "'");
}

inline Checkpoint checkpoint_parse(std::string bytes, const Digest* expected_hash = nullptr) {
  detail::Reader r(std::move(bytes));
  if (r.take(4) != "NPDE") throw Error(ErrorKind::format, "not a checkpoint (bad magic)");
  const auto version = static_cast<std::uint32_t>(r.uint(4));
  if (version != kCheckpointVersion)
    throw Error(ErrorKind::version_mismatch,
                fmt::format("checkpoint version {} (expected {})", version, kCheckpointVersion));
  Checkpoint c;
  const std::string h = r.take(32);
  std::memcpy(c.config_hash.data(), h.data(), 32);
  if (expected_hash && *expected_hash != c.config_hash)
    throw Error(ErrorKind::hash_mismatch, "checkpoint was written under a different configuration");

  std::map<std::string, std::vector<double>> sections;
  bool ended = false;
  while (!r.done()) {
    const auto name_len = r.uint(4);
    if (name_len > 4096) throw Error(ErrorKind::format, "checkpoint section name too long");
    std::string name = r.take(name_len);
    const auto count = r.uint(8);
    if (count > (1ull << 40)) throw Error(ErrorKind::format, "checkpoint section too large");
    std::vector<double> data(count);
    for (auto& d : data) d = std::bit_cast<double>(r.uint(8));
    if (name == "end") {
      ended = true;
      break;
    }
    if (!sections.emplace(std::move(name), std::move(data)).second)
      throw Error(ErrorKind::format, "duplicate checkpoint section");
  }
  if (!ended) throw Error(ErrorKind::truncated, "checkpoint is truncated (no end marker)");
  if (!r.done()) throw Error(ErrorKind::format, "trailing bytes after checkpoint end marker");

  auto take = [&](const std::string& name) -> std::vector<double>& {
    auto it = sections.find(name);
    if (it == sections.end()) throw Error(ErrorKind::format, "checkpoint lacks section '" + name + "'");
    return it->second;
  };
  std::vector<int> sizes;
  for (double d : take("layers.sizes")) sizes.push_back(static_cast<int>(d));
  const MlpLayout layout(sizes);
  auto fill = [&](auto& tree, const std::string& prefix) {
    tree = std::decay_t<decltype(tree)>(layout);
    for (std::size_t l = 0; l < layout.n_layers(); ++l) {
      for (const char* part : {"weight", "bias"}) {
        const auto& v = take(fmt::format("{}{}.{}", prefix, l, part));
        auto dst = std::string_view(part) == "weight" ? tree.weight(l) : tree.bias(l);
        if (v.size() != dst.size()) throw Error(ErrorKind::format, "checkpoint section has the wrong length");
        std::copy(v.begin(), v.end(), dst.begin());
      }
    }
  };
  auto& s = c.state;
  fill(s.net, "layer.");
  fill(s.adam.m, "adam.m.");
  fill(s.adam.v, "adam.v.");
  fill(s.grads, "grads.");
  const auto& hyper = take("adam.hyper");
  if (hyper.size() != 4) throw Error(ErrorKind::format, "bad adam.hyper section");
  s.adam.config = AdamConfig{hyper[0], hyper[1], hyper[2], hyper[3]};
  const auto& t = take("adam.t");
  const auto& epoch = take("train.epoch");
  if (t.size() != 1 || epoch.size() != 1) throw Error(ErrorKind::format, "bad scalar section");
  s.adam.t = static_cast<std::uint64_t>(t[0]);
  s.epoch = static_cast<int>(epoch[0]);
  s.history.loss = take("history.loss");
  if (static_cast<int>(s.history.loss.size()) != s.epoch)
    throw Error(ErrorKind::format, "checkpoint loss history does not match its epoch");
  return c;
}

inline Checkpoint checkpoint_load(const std::string& path, const Digest* expected_hash = nullptr) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::io, "cannot open checkpoint '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return checkpoint_parse(ss.str(), expected_hash);
}

}  // namespace npde
