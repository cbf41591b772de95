// SPDX-License-Identifier: Apache-2.0
#include "s2pg/diffcore/parameter_store.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace s2pg::ad {

std::size_t ParameterStore::add(std::string name, Shape shape, std::vector<double> init,
                                bool trainable) {
  if (contains(name)) throw InputError("duplicate parameter name '" + name + "'");
  const std::size_t n = numel(shape);
  if (init.size() != n) {
    throw DimensionError("parameter '" + name + "' init length " + std::to_string(init.size()) +
                         " does not match shape " + to_string(shape));
  }
  Entry e{std::move(name), std::move(shape), data_.size(), trainable};
  data_.insert(data_.end(), init.begin(), init.end());
  entries_.push_back(std::move(e));
  return entries_.size() - 1;
}

bool ParameterStore::contains(std::string_view name) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.name == name; });
}

std::size_t ParameterStore::index(std::string_view name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].name == name) return i;
  throw InputError("unknown parameter '" + std::string(name) + "'");
}

std::span<const double> ParameterStore::values(std::size_t i) const {
  const auto& e = entries_.at(i);
  return std::span<const double>(data_).subspan(e.offset, numel(e.shape));
}

std::span<double> ParameterStore::values(std::size_t i) {
  const auto& e = entries_.at(i);
  return std::span<double>(data_).subspan(e.offset, numel(e.shape));
}

Tensor ParameterStore::tensor(std::size_t i) const {
  auto v = values(i);
  return Tensor::constant(entries_.at(i).shape, std::vector<double>(v.begin(), v.end()));
}

void ParameterStore::unflatten(std::span<const double> flat) {
  if (flat.size() != data_.size()) {
    throw DimensionError("unflatten: expected " + std::to_string(data_.size()) + " values, got " +
                         std::to_string(flat.size()));
  }
  std::copy(flat.begin(), flat.end(), data_.begin());
}

namespace {
std::vector<std::size_t> offsets_of(const ParameterStore& s) {
  std::vector<std::size_t> out(s.count());
  for (std::size_t i = 0; i < s.count(); ++i) out[i] = s.offset(i);
  return out;
}
}  // namespace

ParameterView ParameterStore::bind(Tape& tape) const {
  std::vector<Tensor> ts;
  ts.reserve(entries_.size());
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    Tensor t = tensor(i);
    ts.push_back(entries_[i].trainable ? tape.watch(t) : t);
  }
  return ParameterView(std::move(ts), offsets_of(*this), data_.size());
}

ParameterView ParameterStore::constants() const {
  std::vector<Tensor> ts;
  ts.reserve(entries_.size());
  for (std::size_t i = 0; i < entries_.size(); ++i) ts.push_back(tensor(i));
  return ParameterView(std::move(ts), offsets_of(*this), data_.size());
}

ParameterView ParameterStore::view_of(const Tensor& flat) const {
  if (flat.rank() != 1 || flat.size() != data_.size()) {
    throw DimensionError("view_of: flat tensor must be a vector of length " +
                         std::to_string(data_.size()));
  }
  std::vector<Tensor> ts;
  ts.reserve(entries_.size());
  for (const auto& e : entries_) {
    ts.push_back(reshape(slice(flat, 0, e.offset, e.offset + numel(e.shape)), e.shape));
  }
  return ParameterView(std::move(ts), offsets_of(*this), data_.size());
}

bool ParameterStore::same_layout(const ParameterStore& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name != other.entries_[i].name || entries_[i].shape != other.entries_[i].shape)
      return false;
  }
  return true;
}

std::vector<double> ParameterView::gradient() const {
  std::vector<double> out(flat_size_, 0.0);
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    const auto& node = tensors_[i].node();
    if (node->grad.empty()) continue;
    std::copy(node->grad.begin(), node->grad.end(), out.begin() + static_cast<long>(offsets_[i]));
  }
  return out;
}

ParameterView ParameterView::detached() const {
  std::vector<Tensor> ts;
  ts.reserve(tensors_.size());
  for (const auto& t : tensors_) ts.push_back(detach(t));
  return ParameterView(std::move(ts), offsets_, flat_size_);
}

std::vector<double> gradient(const Tensor& loss, const ParameterView& params) {
  backward(loss);
  return params.gradient();
}

// ---- checkpoints ------------------------------------------------------------------

namespace {
constexpr const char* kMagic = "s2pg-checkpoint 1";

void write_le(std::ostream& os, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xFFu);
  os.write(reinterpret_cast<const char*>(bytes), 8);
}

double read_le(std::istream& is) {
  unsigned char bytes[8];
  is.read(reinterpret_cast<char*>(bytes), 8);
  if (!is) throw InputError("checkpoint truncated");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}
}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParameterStore& store) {
  nlohmann::json manifest;
  manifest["dtype"] = "f64";
  manifest["byte_order"] = "little";
  manifest["count"] = store.flat_size();
  manifest["params"] = nlohmann::json::array();
  for (std::size_t i = 0; i < store.count(); ++i) {
    manifest["params"].push_back({{"name", store.name(i)},
                                  {"shape", store.shape(i)},
                                  {"offset", store.offset(i)},
                                  {"trainable", store.trainable(i)}});
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("cannot open checkpoint for writing: " + path.string());
  os << kMagic << '\n' << manifest.dump() << '\n';
  for (double v : store.flatten()) write_le(os, v);
  if (!os) throw InputError("failed writing checkpoint: " + path.string());
}

ParameterStore load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open checkpoint: " + path.string());
  std::string magic, header;
  std::getline(is, magic);
  if (magic != kMagic) throw InputError("not an s2pg checkpoint: " + path.string());
  std::getline(is, header);
  const auto manifest = nlohmann::json::parse(header);
  if (manifest.at("dtype") != "f64" || manifest.at("byte_order") != "little") {
    throw InputError("unsupported checkpoint encoding");
  }
  const std::size_t count = manifest.at("count").get<std::size_t>();
  std::vector<double> flat(count);
  for (auto& v : flat) v = read_le(is);

  ParameterStore store;
  for (const auto& p : manifest.at("params")) {
    Shape shape = p.at("shape").get<Shape>();
    const std::size_t off = p.at("offset").get<std::size_t>();
    const std::size_t n = numel(shape);
    if (off + n > count) throw InputError("checkpoint manifest out of range");
    store.add(p.at("name").get<std::string>(), shape,
              std::vector<double>(flat.begin() + static_cast<long>(off),
                                  flat.begin() + static_cast<long>(off + n)),
              p.value("trainable", true));
  }
  if (store.flat_size() != count) throw InputError("checkpoint manifest does not cover payload");
  return store;
}

}  // namespace s2pg::ad
