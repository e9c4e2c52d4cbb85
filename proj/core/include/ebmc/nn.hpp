#pragma once

// Named parameters, per-step bindings onto a tape, two-layer perceptrons and
// the SGD optimizer.

#include <cstddef>
#include <array>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ebmc/autodiff.hpp"

namespace ebmc::nn {

enum class ParamGroup { Encoder, Shared, Specific, Teacher, Enhancer, Fusion };

const char* to_string(ParamGroup group);

class ParamStore {
 public:
  std::size_t add(std::string name, ad::Tensor value, ParamGroup group);

  std::size_t size() const { return entries_.size(); }
  const std::string& name(std::size_t i) const { return entries_[i].name; }
  ParamGroup group(std::size_t i) const { return entries_[i].group; }
  const ad::Tensor& value(std::size_t i) const { return entries_[i].value; }
  ad::Tensor& value(std::size_t i) { return entries_[i].value; }

  /// Index of a named parameter, or size() if absent.
  std::size_t find(const std::string& name) const;
  std::size_t count_scalars() const;

 private:
  struct Entry {
    std::string name;
    ad::Tensor value;
    ParamGroup group;
  };
  std::vector<Entry> entries_;
};

/// Parameter view for one forward pass. Trainable entries are tape variables;
/// the rest are read straight from the store and receive no gradient.
class Bindings {
 public:
  Bindings() = default;
  Bindings(const Bindings&) = delete;
  Bindings& operator=(const Bindings&) = delete;
  Bindings(Bindings&&) = default;
  Bindings& operator=(Bindings&&) = default;

  static Bindings constant(const ParamStore& store);
  static Bindings on_tape(const ParamStore& store, ad::Tape& tape,
                          const std::function<bool(ParamGroup)>& trainable);

  /// Constant bindings in which entry `index` reads `value` (which may be a
  /// tape variable) instead of the store. Throws DimensionError on a shape
  /// mismatch.
  static Bindings substitute(const ParamStore& store, std::size_t index, const ad::Tensor& value);

  /// Detached copy of the listed bound values (others stay unbound); usable
  /// on any other tape.
  Bindings detached(std::span<const std::size_t> indices) const;

  const ad::Tensor& operator[](std::size_t i) const { return *view_[i]; }
  bool trainable(std::size_t i) const { return slot_[i] != kNone; }
  std::size_t size() const { return view_.size(); }

 private:
  static constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  std::vector<ad::Tensor> owned_;
  std::vector<std::size_t> slot_;
  std::vector<const ad::Tensor*> view_;
};

struct Linear {
  std::size_t weight = 0;  // in x out
  std::size_t bias = 0;    // 1 x out

  ad::Tensor forward(const Bindings& params, const ad::Tensor& x) const;
};

/// in -> tanh(hidden) -> out.
struct Mlp {
  Linear hidden;
  Linear output;

  ad::Tensor forward(const Bindings& params, const ad::Tensor& x) const;
  std::array<std::size_t, 4> parameters() const { return {hidden.weight, hidden.bias, output.weight, output.bias}; }
  /// Also returns the hidden activation.
  ad::Tensor forward(const Bindings& params, const ad::Tensor& x, ad::Tensor& hidden_out) const;

  /// Glorot-uniform weights, zero biases. Names are "<prefix>.l1.w" etc.
  static Mlp create(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t hidden,
                    std::size_t out, ParamGroup group, std::mt19937_64& rng);
};

/// Plain SGD with optional heavy-ball momentum.
class Sgd {
 public:
  Sgd(double learning_rate, double momentum);

  /// Applies the gradients held by the trainable bindings to the store.
  void step(ParamStore& store, const Bindings& bound);

 private:
  double learning_rate_;
  double momentum_;
  std::vector<std::vector<double>> velocity_;
};

}  // namespace ebmc::nn
