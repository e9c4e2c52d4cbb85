#include "ebmc/nn.hpp"

#include <cmath>

#include "ebmc/errors.hpp"

namespace ebmc::nn {

const char* to_string(ParamGroup group) {
  switch (group) {
    case ParamGroup::Encoder: return "encoder";
    case ParamGroup::Shared: return "shared";
    case ParamGroup::Specific: return "specific";
    case ParamGroup::Teacher: return "teacher";
    case ParamGroup::Enhancer: return "enhancer";
    case ParamGroup::Fusion: return "fusion";
  }
  return "unknown";
}

std::size_t ParamStore::add(std::string name, ad::Tensor value, ParamGroup group) {
  if (find(name) != size()) throw ContractError("duplicate parameter name '" + name + "'");
  entries_.push_back({std::move(name), std::move(value), group});
  return entries_.size() - 1;
}

std::size_t ParamStore::find(const std::string& name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].name == name) return i;
  return entries_.size();
}

std::size_t ParamStore::count_scalars() const {
  std::size_t total = 0;
  for (const auto& e : entries_) total += e.value.size();
  return total;
}

Bindings Bindings::constant(const ParamStore& store) {
  Bindings b;
  b.slot_.assign(store.size(), kNone);
  b.view_.reserve(store.size());
  for (std::size_t i = 0; i < store.size(); ++i) b.view_.push_back(&store.value(i));
  return b;
}

Bindings Bindings::on_tape(const ParamStore& store, ad::Tape& tape,
                           const std::function<bool(ParamGroup)>& trainable) {
  Bindings b;
  b.slot_.assign(store.size(), kNone);
  b.owned_.reserve(store.size());
  for (std::size_t i = 0; i < store.size(); ++i) {
    if (!trainable(store.group(i))) continue;
    b.slot_[i] = b.owned_.size();
    b.owned_.push_back(tape.variable(store.value(i)));
  }
  b.view_.reserve(store.size());
  for (std::size_t i = 0; i < store.size(); ++i) {
    b.view_.push_back(b.slot_[i] == kNone ? &store.value(i) : &b.owned_[b.slot_[i]]);
  }
  return b;
}

Bindings Bindings::substitute(const ParamStore& store, std::size_t index, const ad::Tensor& value) {
  const auto& current = store.value(index);
  if (current.rows() != value.rows() || current.cols() != value.cols())
    throw DimensionError("substitute " + store.name(index) + ": " + value.shape_string() + " vs " +
                         current.shape_string());
  Bindings b = constant(store);
  b.owned_.push_back(value);
  b.view_[index] = &b.owned_.front();
  return b;
}

Bindings Bindings::detached(std::span<const std::size_t> indices) const {
  Bindings b;
  b.slot_.assign(view_.size(), kNone);
  b.view_.assign(view_.size(), nullptr);
  b.owned_.reserve(indices.size());
  for (std::size_t i : indices) b.owned_.push_back(view_.at(i)->detach());
  for (std::size_t k = 0; k < indices.size(); ++k) b.view_[indices[k]] = &b.owned_[k];
  return b;
}

ad::Tensor Linear::forward(const Bindings& params, const ad::Tensor& x) const {
  return ad::add_row(ad::matmul(x, params[weight]), params[bias]);
}

ad::Tensor Mlp::forward(const Bindings& params, const ad::Tensor& x) const {
  return output.forward(params, ad::tanh(hidden.forward(params, x)));
}

ad::Tensor Mlp::forward(const Bindings& params, const ad::Tensor& x, ad::Tensor& hidden_out) const {
  hidden_out = ad::tanh(hidden.forward(params, x));
  return output.forward(params, hidden_out);
}

namespace {

Linear make_linear(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t out, ParamGroup group,
                   std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  std::vector<double> w(in * out);
  for (double& v : w) v = dist(rng);
  Linear layer;
  layer.weight = store.add(prefix + ".w", ad::Tensor(in, out, std::move(w)), group);
  layer.bias = store.add(prefix + ".b", ad::Tensor(1, out, 0.0), group);
  return layer;
}

}  // namespace

Mlp Mlp::create(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t hidden, std::size_t out,
                ParamGroup group, std::mt19937_64& rng) {
  Mlp mlp;
  mlp.hidden = make_linear(store, prefix + ".l1", in, hidden, group, rng);
  mlp.output = make_linear(store, prefix + ".l2", hidden, out, group, rng);
  return mlp;
}

Sgd::Sgd(double learning_rate, double momentum) : learning_rate_(learning_rate), momentum_(momentum) {
  if (!(learning_rate >= 0.0)) throw ContractError("learning rate must be non-negative");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ContractError("momentum must lie in [0, 1)");
}

void Sgd::step(ParamStore& store, const Bindings& bound) {
  if (velocity_.size() != store.size()) velocity_.assign(store.size(), {});
  for (std::size_t i = 0; i < store.size(); ++i) {
    if (!bound.trainable(i)) continue;
    const auto grad = bound[i].grad();
    if (!grad) continue;
    auto values = store.value(i).mutable_data();
    const auto g = grad->data();
    if (momentum_ > 0.0) {
      auto& v = velocity_[i];
      if (v.size() != values.size()) v.assign(values.size(), 0.0);
      for (std::size_t j = 0; j < values.size(); ++j) {
        v[j] = momentum_ * v[j] + g[j];
        values[j] -= learning_rate_ * v[j];
      }
    } else {
      for (std::size_t j = 0; j < values.size(); ++j) values[j] -= learning_rate_ * g[j];
    }
  }
}

}  // namespace ebmc::nn
