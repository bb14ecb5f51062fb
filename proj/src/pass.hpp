#pragma once

// Batched forward / backward / forward-over-reverse passes shared by the
// gradient and Hessian-vector-product paths. Internal to the library.

#include <vector>

#include "netspectra/nn.hpp"

namespace netspectra::detail {

struct ForwardCache {
  std::vector<MatrixXd> pre;  // pre-activations z_l, one per layer (S x width)
  std::vector<MatrixXd> act;  // act[0] = inputs, act[l+1] = relu(pre[l]) for hidden
  MatrixXd probs;             // softmax of the last pre-activation
};

void softmax_rows(const MatrixXd& logits, MatrixXd& probs);

void forward_pass(const Network& net, const MatrixXd& inputs, ForwardCache& cache);

/// Gradient of the mean cross-entropy (no penalty term), flat layout.
VectorXd backward_pass(const Network& net, const ForwardCache& cache, const VectorXi& labels);

/// H v of the mean cross-entropy via the forward-over-reverse trick.
VectorXd hvp_pass(const Network& net, const ForwardCache& cache, const VectorXi& labels,
                  const VectorXd& v);

}  // namespace netspectra::detail
