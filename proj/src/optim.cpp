// Copyright 2026 The htseq Authors
// SPDX-License-Identifier: Apache-2.0

#include "htseq/optim.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "htseq/error.hpp"

namespace htseq {

ad::Tensor& ParameterStore::add(std::string name, ad::Tensor tensor) {
  if (contains(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  tensor.set_requires_grad(true);
  items_.emplace_back(std::move(name), std::move(tensor));
  return items_.back().second;
}

ad::Tensor& ParameterStore::get(const std::string& name) {
  for (auto& [n, t] : items_)
    if (n == name) return t;
  throw ConfigError("unknown parameter '" + name + "'");
}

const ad::Tensor& ParameterStore::get(const std::string& name) const {
  for (const auto& [n, t] : items_)
    if (n == name) return t;
  throw ConfigError("unknown parameter '" + name + "'");
}

bool ParameterStore::contains(const std::string& name) const {
  for (const auto& [n, t] : items_)
    if (n == name) return true;
  return false;
}

void ParameterStore::remove_prefix(const std::string& prefix) {
  std::erase_if(items_, [&](const auto& item) { return item.first.rfind(prefix, 0) == 0; });
}

void ParameterStore::zero_grad() {
  for (auto& [n, t] : items_) t.clear_grad();
}

std::size_t ParameterStore::total_size() const {
  std::size_t total = 0;
  for (const auto& [n, t] : items_) total += t.numel();
  return total;
}

std::vector<std::vector<double>> ParameterStore::snapshot() const {
  std::vector<std::vector<double>> out;
  out.reserve(items_.size());
  for (const auto& [n, t] : items_) out.emplace_back(t.data().begin(), t.data().end());
  return out;
}

void ParameterStore::restore(const std::vector<std::vector<double>>& values) {
  if (values.size() != items_.size()) throw ShapeError("snapshot does not match parameter count");
  for (std::size_t i = 0; i < items_.size(); ++i) {
    auto data = items_[i].second.data();
    if (values[i].size() != data.size()) throw ShapeError("snapshot size mismatch for '" + items_[i].first + "'");
    std::copy(values[i].begin(), values[i].end(), data.begin());
  }
}

void Adam::step(ParameterStore& params) {
  ++step_;
  for (auto& [name, tensor] : params.items()) {
    if (!tensor.requires_grad() || !tensor.has_grad()) continue;
    const auto g = tensor.grad();
    for (double gi : g)
      if (!std::isfinite(gi)) throw NumericError("non-finite gradient in parameter '" + name + "'");
    auto& mom = moments_[name];
    if (mom.m.size() != g.size()) {
      mom.m.assign(g.size(), 0.0);
      mom.v.assign(g.size(), 0.0);
      mom.count = 0;
    }
    ++mom.count;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(mom.count));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(mom.count));
    auto w = tensor.data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      mom.m[i] = config_.beta1 * mom.m[i] + (1.0 - config_.beta1) * g[i];
      mom.v[i] = config_.beta2 * mom.v[i] + (1.0 - config_.beta2) * g[i] * g[i];
      const double mhat = mom.m[i] / c1;
      const double vhat = mom.v[i] / c2;
      w[i] -= config_.lr * mhat / (std::sqrt(vhat) + config_.eps);
    }
  }
}

namespace {

constexpr char kMagic[8] = {'H', 'T', 'S', 'Q', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put_le(std::string& out, T value) {
  static_assert(std::is_integral_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double value) { put_le(out, std::bit_cast<std::uint64_t>(value)); }

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
      value |= static_cast<T>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += sizeof(T);
    return value;
  }
  double get_f64() { return std::bit_cast<double>(get<std::uint64_t>()); }
  std::string get_bytes(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw ParseError("checkpoint truncated", 0);
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string checkpoint_bytes(const ParameterStore& params) {
  std::string out(kMagic, sizeof(kMagic));
  put_le<std::uint32_t>(out, kVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.items().size()));
  for (const auto& [name, tensor] : params.items()) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.shape().size()));
    for (auto dim : tensor.shape()) put_le<std::uint64_t>(out, dim);
    for (double v : tensor.data()) put_f64(out, v);
  }
  return out;
}

std::vector<std::pair<std::string, ad::Tensor>> parse_checkpoint(const std::string& bytes) {
  Reader in(bytes);
  if (in.get_bytes(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) throw ParseError("not a checkpoint", 0);
  if (auto version = in.get<std::uint32_t>(); version != kVersion)
    throw ParseError("unsupported checkpoint version " + std::to_string(version), 0);
  const auto count = in.get<std::uint32_t>();
  std::vector<std::pair<std::string, ad::Tensor>> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    auto name = in.get_bytes(in.get<std::uint32_t>());
    const auto rank = in.get<std::uint32_t>();
    ad::Shape shape;
    for (std::uint32_t r = 0; r < rank; ++r) shape.push_back(static_cast<std::size_t>(in.get<std::uint64_t>()));
    std::vector<double> values(ad::shape_numel(shape));
    for (double& v : values) v = in.get_f64();
    out.emplace_back(std::move(name), ad::Tensor::from(std::move(shape), std::move(values)));
  }
  if (!in.done()) throw ParseError("trailing bytes after checkpoint", 0);
  return out;
}

void save_checkpoint(const ParameterStore& params, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out << checkpoint_bytes(params);
}

std::vector<std::pair<std::string, ad::Tensor>> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_checkpoint(buffer.str());
}

void load_checkpoint(ParameterStore& params, const std::filesystem::path& path) {
  auto stored = read_checkpoint(path);
  if (stored.size() != params.items().size())
    throw ShapeError("checkpoint holds " + std::to_string(stored.size()) + " tensors, model expects " +
                     std::to_string(params.items().size()));
  for (auto& [name, tensor] : stored) {
    auto& target = params.get(name);
    if (target.shape() != tensor.shape())
      throw ShapeError("checkpoint tensor '" + name + "' has shape " + ad::shape_string(tensor.shape()) +
                       ", model expects " + ad::shape_string(target.shape()));
    std::copy(tensor.data().begin(), tensor.data().end(), target.data().begin());
  }
}

}  // namespace htseq
