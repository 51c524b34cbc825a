#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "dibjscc/errors.hpp"
#include "dibjscc/models.hpp"
#include "dibjscc/nn/adam.hpp"
#include "dibjscc/nn/network.hpp"
#include "dibjscc/objectives.hpp"
#include "dibjscc/rng.hpp"
#include "dibjscc/tensor.hpp"

namespace dibjscc {

// Evaluates a network over dim-0 slices so large sets never materialize a
// giant activation workspace.
inline Tensor forward_chunked(nn::Sequential& net, const Tensor& x,
                              std::size_t chunk = 512) {
  std::size_t n = x.dim(0);
  if (n <= chunk) return net.forward(x, false);
  Tensor out;
  for (std::size_t start = 0; start < n; start += chunk) {
    std::size_t stop = std::min(n, start + chunk);
    std::vector<std::size_t> idx(stop - start);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = start + i;
    Tensor part = net.forward(take_rows(x, idx), false);
    if (start == 0) {
      std::vector<std::size_t> shape = part.shape();
      shape[0] = n;
      out = Tensor(shape);
    }
    std::size_t stride = part.size() / part.dim(0);
    std::copy(part.data(), part.data() + part.size(),
              out.data() + start * stride);
  }
  return out;
}

inline std::vector<int> argmax_rows(const Tensor& probs) {
  if (probs.rank() != 2) throw input_error("argmax_rows: need 2-D tensor");
  std::vector<int> out;
  out.reserve(probs.dim(0));
  for (std::size_t i = 0; i < probs.dim(0); ++i) {
    const double* r = row(probs, i);
    out.push_back(
        int(std::max_element(r, r + probs.dim(1)) - r));
  }
  return out;
}

inline double accuracy_against(const std::vector<int>& predicted,
                               const std::vector<int>& labels) {
  if (predicted.size() != labels.size() || labels.empty()) {
    throw input_error("accuracy: size mismatch or empty");
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (predicted[i] == labels[i]) ++hits;
  }
  return double(hits) / double(labels.size());
}

// Argmax accuracy of a softmax network on a labeled set.
inline double classification_accuracy(nn::Sequential& net, const Tensor& x,
                                      const std::vector<int>& labels) {
  return accuracy_against(argmax_rows(forward_chunked(net, x)), labels);
}

// Cross-entropy training of any softmax-headed network. Returns the mean
// training loss of the final epoch. Deterministic given seed.
inline double train_softmax_classifier(nn::Sequential& net, const Tensor& x,
                                       const std::vector<int>& labels,
                                       int epochs, std::size_t batch_size,
                                       double lr, std::uint64_t seed) {
  std::size_t n = x.dim(0);
  if (labels.size() != n || n == 0) {
    throw input_error("classifier training: label/sample count mismatch");
  }
  if (epochs < 1 || batch_size == 0 || !(lr > 0.0)) {
    throw config_error("classifier training: bad epochs/batch/lr");
  }
  nn::Adam opt(net.parameters(), lr);
  Rng shuffle_rng(derive_seed(seed, "classifier-shuffle"));
  double last_epoch_loss = 0.0;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::vector<std::size_t> order = shuffle_rng.permutation(n);
    double loss_sum = 0.0;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < n; start += batch_size) {
      std::size_t stop = std::min(n, start + batch_size);
      std::vector<std::size_t> idx(order.begin() + start,
                                   order.begin() + stop);
      Tensor xb = take_rows(x, idx);
      std::vector<int> lb(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) lb[i] = labels[idx[i]];

      opt.zero_grad();
      Tensor probs = net.forward(xb, true);
      double loss = cross_entropy(probs, lb);
      if (!std::isfinite(loss)) {
        throw numeric_error("classifier training: non-finite loss at epoch " +
                            std::to_string(epoch));
      }
      net.backward(cross_entropy_grad(probs, lb));
      opt.step();
      loss_sum += loss;
      ++steps;
    }
    last_epoch_loss = loss_sum / double(steps);
  }
  return last_epoch_loss;
}

// Builds, trains, and scores one probe. Linear probes answer "is this
// information linearly readable from the code"; the MLP variant bounds what
// a shallow nonlinear readout can extract.
struct ProbeResult {
  double train_accuracy = 0.0;
  double eval_accuracy = 0.0;
  double final_train_loss = 0.0;
};

inline ProbeResult fit_probe(const Tensor& x_train,
                             const std::vector<int>& labels_train,
                             const Tensor& x_eval,
                             const std::vector<int>& labels_eval, int classes,
                             bool linear, std::uint64_t seed, int epochs = 60,
                             double lr = 5e-3) {
  nn::Sequential probe =
      linear ? make_linear_probe(x_train.dim(1), classes)
             : make_mlp_classifier(x_train.dim(1), classes, 64);
  Rng init(derive_seed(seed, "probe-init"));
  probe.init(init);
  ProbeResult out;
  out.final_train_loss = train_softmax_classifier(
      probe, x_train, labels_train, epochs, 128, lr, derive_seed(seed, "probe-train"));
  out.train_accuracy = classification_accuracy(probe, x_train, labels_train);
  out.eval_accuracy = classification_accuracy(probe, x_eval, labels_eval);
  return out;
}

}  // namespace dibjscc
