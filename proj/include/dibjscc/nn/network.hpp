#pragma once

#include <memory>
#include <utility>

#include "dibjscc/hash.hpp"
#include "dibjscc/nn/conv.hpp"
#include "dibjscc/nn/layers.hpp"

namespace dibjscc::nn {

// Layer pipeline. The descriptor (a JSON array of layer descriptors) is
// self-describing: from_descriptor(descriptor()) reconstructs the same
// topology, and parameters() exposes the weights in a stable order for
// serialization and checksums.
class Sequential {
 public:
  Sequential() = default;
  Sequential(Sequential&&) = default;
  Sequential& operator=(Sequential&&) = default;
  Sequential(const Sequential&) = delete;
  Sequential& operator=(const Sequential&) = delete;

  Sequential& add(std::unique_ptr<Layer> layer) {
    layers_.push_back(std::move(layer));
    return *this;
  }

  bool empty() const { return layers_.empty(); }
  std::size_t depth() const { return layers_.size(); }

  Tensor forward(const Tensor& x, bool train = false) {
    Tensor h = x;
    for (auto& l : layers_) h = l->forward(h, train);
    return h;
  }

  // Propagates grad_out through the pipeline; parameter gradients accumulate
  // into each layer's grad buffers. Returns the gradient w.r.t. the input.
  Tensor backward(const Tensor& grad_out) {
    Tensor g = grad_out;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
      g = (*it)->backward(g);
    }
    return g;
  }

  std::vector<ParamView> parameters() {
    std::vector<ParamView> out;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      layers_[i]->collect_params("layer" + std::to_string(i), out);
    }
    return out;
  }

  void zero_grad() {
    for (auto& p : parameters()) p.grad->fill(0.0);
  }

  void init(Rng& rng) {
    for (auto& l : layers_) l->init(rng);
  }

  std::size_t param_count() {
    std::size_t n = 0;
    for (auto& p : parameters()) n += p.value->size();
    return n;
  }

  json descriptor() const {
    json j = json::array();
    for (const auto& l : layers_) j.push_back(l->descriptor());
    return j;
  }

  // SHA-256 over the raw parameter bytes in declaration order; used for the
  // bitwise freeze contracts.
  std::string checksum() {
    Sha256 h;
    for (auto& p : parameters()) {
      h.update_values(p.value->data(), p.value->size());
    }
    return h.hex();
  }

  static Sequential from_descriptor(const json& desc);

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

inline std::unique_ptr<Layer> layer_from_descriptor(const json& d) {
  const std::string kind = d.at("kind").get<std::string>();
  if (kind == "dense") {
    return std::make_unique<Dense>(d.at("in").get<std::size_t>(),
                                   d.at("out").get<std::size_t>());
  }
  if (kind == "conv") {
    return std::make_unique<Conv2d>(d.at("in").get<std::size_t>(),
                                    d.at("out").get<std::size_t>(),
                                    d.at("k").get<std::size_t>(),
                                    d.at("s").get<std::size_t>(),
                                    d.at("p").get<std::size_t>());
  }
  if (kind == "convt") {
    return std::make_unique<ConvTranspose2d>(d.at("in").get<std::size_t>(),
                                             d.at("out").get<std::size_t>(),
                                             d.at("k").get<std::size_t>(),
                                             d.at("s").get<std::size_t>(),
                                             d.at("p").get<std::size_t>());
  }
  if (kind == "relu") return std::make_unique<ReLU>();
  if (kind == "lrelu") return std::make_unique<LeakyReLU>(d.at("slope").get<double>());
  if (kind == "sigmoid") return std::make_unique<Sigmoid>(d.at("floor").get<double>());
  if (kind == "tanh") return std::make_unique<Tanh>();
  if (kind == "softmax") return std::make_unique<Softmax>();
  if (kind == "flatten") return std::make_unique<Flatten>();
  if (kind == "reshape") {
    return std::make_unique<Reshape>(d.at("c").get<std::size_t>(),
                                     d.at("h").get<std::size_t>(),
                                     d.at("w").get<std::size_t>());
  }
  throw config_error("unknown layer kind in descriptor: " + kind);
}

inline Sequential Sequential::from_descriptor(const json& desc) {
  if (!desc.is_array()) throw config_error("network descriptor must be an array");
  Sequential net;
  for (const auto& d : desc) net.add(layer_from_descriptor(d));
  return net;
}

}  // namespace dibjscc::nn
