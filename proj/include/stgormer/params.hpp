#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "stgormer/autograd.hpp"

namespace stg {

struct Parameter {
  std::string path;
  ad::Var var;
  NdArray grad;
};

/// Named trainable tensors, in registration order. Paths are dotted
/// ("blocks.0.attn.wq") and unique.
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;
  ParameterStore(ParameterStore&&) = default;
  ParameterStore& operator=(ParameterStore&&) = default;

  ad::Var add(const std::string& path, NdArray init);
  const ad::Var& get(const std::string& path) const;
  bool contains(const std::string& path) const { return index_.count(path) != 0; }

  std::vector<Parameter>& entries() noexcept { return entries_; }
  const std::vector<Parameter>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t num_scalars() const;

  /// Writable view of a parameter's value. Only valid between training steps.
  NdArray& value(std::size_t i) { return entries_.at(i).var.node()->value; }
  const NdArray& grad(const std::string& path) const;

  /// Fills every gradient slot with d(loss)/d(parameter); unused parameters get zeros.
  void backward(const ad::Var& loss);
  bool has_gradients() const noexcept { return has_gradients_; }
  void consume_gradients() noexcept { has_gradients_ = false; }

  /// Copies values from another store with identical paths and shapes.
  void copy_values_from(const ParameterStore& other);
  std::vector<NdArray> snapshot() const;
  void restore(const std::vector<NdArray>& values);

 private:
  std::vector<Parameter> entries_;
  std::unordered_map<std::string, std::size_t> index_;
  bool has_gradients_ = false;
};

/// Seeded initialisation policy for weights, biases and embedding tables.
class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}

  /// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
  NdArray weight(std::size_t fan_in, std::size_t fan_out);
  NdArray normal(Shape shape, double stddev);
  NdArray uniform(Shape shape, double lo, double hi);

 private:
  std::mt19937_64 rng_;
};

/// Parameter manifest (text) followed by raw little-endian float64 values.
void write_parameters(std::ostream& out, const ParameterStore& store);
/// Restores values into a store with the same paths and shapes, in order.
void read_parameters(std::istream& in, ParameterStore& store);

}  // namespace stg
