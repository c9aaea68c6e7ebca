#include "stgormer/params.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <sstream>

#include "stgormer/io_util.hpp"

namespace stg {

ad::Var ParameterStore::add(const std::string& path, NdArray init) {
  if (index_.count(path)) throw std::invalid_argument("duplicate parameter path " + path);
  index_.emplace(path, entries_.size());
  NdArray grad(init.shape(), 0.0);
  auto var = ad::leaf(std::move(init), true);
  entries_.push_back(Parameter{path, var, std::move(grad)});
  return var;
}

const ad::Var& ParameterStore::get(const std::string& path) const {
  auto it = index_.find(path);
  if (it == index_.end()) throw std::out_of_range("no parameter " + path);
  return entries_[it->second].var;
}

std::size_t ParameterStore::num_scalars() const {
  std::size_t n = 0;
  for (const auto& p : entries_) n += p.var.value().size();
  return n;
}

const NdArray& ParameterStore::grad(const std::string& path) const {
  auto it = index_.find(path);
  if (it == index_.end()) throw std::out_of_range("no parameter " + path);
  return entries_[it->second].grad;
}

void ParameterStore::backward(const ad::Var& loss) {
  for (auto& p : entries_) p.var.node()->grad = NdArray();
  ad::backward(loss);
  for (auto& p : entries_) p.grad = p.var.grad();
  has_gradients_ = true;
}

void ParameterStore::copy_values_from(const ParameterStore& other) {
  if (other.entries_.size() != entries_.size()) throw std::invalid_argument("parameter stores differ in size");
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& src = other.entries_[i];
    if (src.path != entries_[i].path || src.var.shape() != entries_[i].var.shape())
      throw std::invalid_argument("parameter mismatch at " + src.path);
    entries_[i].var.node()->value = src.var.value();
  }
}

std::vector<NdArray> ParameterStore::snapshot() const {
  std::vector<NdArray> out;
  out.reserve(entries_.size());
  for (const auto& p : entries_) out.push_back(p.var.value());
  return out;
}

void ParameterStore::restore(const std::vector<NdArray>& values) {
  if (values.size() != entries_.size()) throw std::invalid_argument("snapshot size mismatch");
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (values[i].shape() != entries_[i].var.shape()) throw std::invalid_argument("snapshot shape mismatch");
    entries_[i].var.node()->value = values[i];
  }
}

NdArray Initializer::weight(std::size_t fan_in, std::size_t fan_out) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return uniform(Shape{fan_in, fan_out}, -bound, bound);
}

NdArray Initializer::normal(Shape shape, double stddev) {
  NdArray out(std::move(shape));
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& v : out.data()) v = dist(rng_);
  return out;
}

NdArray Initializer::uniform(Shape shape, double lo, double hi) {
  NdArray out(std::move(shape));
  std::uniform_real_distribution<double> dist(lo, hi);
  for (auto& v : out.data()) v = dist(rng_);
  return out;
}

namespace {

void put_le(std::ostream& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(bits >> (8 * i));
  out.write(reinterpret_cast<const char*>(buf), 8);
}

double get_le(std::istream& in) {
  unsigned char buf[8];
  if (!in.read(reinterpret_cast<char*>(buf), 8)) throw std::runtime_error("checkpoint truncated");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace

void write_parameters(std::ostream& out, const ParameterStore& store) {
  out << "parameters " << store.size() << "\n";
  for (const auto& p : store.entries()) {
    out << p.path << " " << p.var.value().rank();
    for (auto d : p.var.shape()) out << " " << d;
    out << "\n";
  }
  out << "data\n";
  for (const auto& p : store.entries())
    for (double v : p.var.value().data()) put_le(out, v);
}

void read_parameters(std::istream& in, ParameterStore& store) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("checkpoint: missing parameter manifest");
  auto head = detail::split(line, ' ');
  if (head.size() != 2 || head[0] != "parameters") throw std::runtime_error("checkpoint: bad manifest header");
  auto count = detail::parse_long(head[1]);
  if (!count || *count != static_cast<long long>(store.size()))
    throw std::runtime_error("checkpoint: parameter count " + head[1] + " does not match model (" +
                             std::to_string(store.size()) + ")");
  for (auto& p : store.entries()) {
    if (!std::getline(in, line)) throw std::runtime_error("checkpoint: manifest truncated");
    auto f = detail::split(line, ' ');
    if (f.size() < 2 || f[0] != p.path) throw std::runtime_error("checkpoint: expected parameter " + p.path);
    Shape shape;
    for (std::size_t i = 2; i < f.size(); ++i) shape.push_back(static_cast<std::size_t>(std::stoull(f[i])));
    if (shape != p.var.shape())
      throw std::runtime_error("checkpoint: shape mismatch for " + p.path + ": " + shape_str(shape) + " vs " +
                               shape_str(p.var.shape()));
  }
  if (!std::getline(in, line) || line != "data") throw std::runtime_error("checkpoint: missing data marker");
  for (auto& p : store.entries()) {
    NdArray v(p.var.shape());
    for (auto& x : v.data()) x = get_le(in);
    p.var.node()->value = std::move(v);
  }
}

}  // namespace stg
