//
// Copyright 2026 The lastmile Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#ifndef LASTMILE_GRADIENTS_HPP_
#define LASTMILE_GRADIENTS_HPP_

// Batch gradient accumulation. Each item is differentiated on its own tape
// and the per-item gradients are summed in item order, so the result is the
// same bit pattern whatever the worker count.

#include <cmath>
#include <exception>
#include <string>
#include <thread>
#include <vector>

#include "lastmile/autodiff.hpp"
#include "lastmile/error.hpp"
#include "lastmile/seqmodel.hpp"

namespace lastmile {

namespace detail {

inline void flatten_grads(const ModelParams& p, std::vector<Real>& out) {
  out.assign(p.num_values(), 0.0);
  std::size_t off = 0;
  for (const auto& [name, t] : p.named()) {
    if (t->has_grad())
      std::copy(t->grad().begin(), t->grad().end(), out.begin() + static_cast<std::ptrdiff_t>(off));
    off += t->size();
  }
}

inline void store_grads(ModelParams& p, const std::vector<Real>& flat) {
  std::size_t off = 0;
  for (auto& [name, t] : p.named()) {
    auto& g = t->node()->grad;
    g.assign(flat.begin() + static_cast<std::ptrdiff_t>(off),
             flat.begin() + static_cast<std::ptrdiff_t>(off + t->size()));
    off += t->size();
  }
}

template <class LossFn>
Real item_gradient(ModelParams& p, std::size_t i, LossFn& fn, std::vector<Real>& flat) {
  p.zero_grad();
  ad::Tape<Real> tape;
  ad::TapeScope<Real> scope(tape);
  Tensor loss = fn(static_cast<const ModelParams&>(p), i);
  const Real value = loss.item();
  if (!std::isfinite(value))
    throw NumericError("non-finite loss at batch item " + std::to_string(i));
  tape.backward(loss);
  flatten_grads(p, flat);
  return value;
}

}  // namespace detail

// Sets the gradient of every parameter to sum_i d loss_i / d params and
// returns sum_i loss_i. `fn(params, i)` builds item i's scalar loss on the
// active tape.
template <class LossFn>
Real accumulate_gradients(ModelParams& params, std::size_t items, LossFn&& fn,
                          unsigned threads = 1) {
  std::vector<Real> total(params.num_values(), 0.0);
  Real loss_sum = 0;
  if (threads <= 1 || items <= 1) {
    std::vector<Real> flat;
    for (std::size_t i = 0; i < items; ++i) {
      loss_sum += detail::item_gradient(params, i, fn, flat);
      for (std::size_t k = 0; k < total.size(); ++k) total[k] += flat[k];
    }
  } else {
    const std::size_t workers = std::min<std::size_t>(threads, items);
    std::vector<std::vector<Real>> slots(items);
    std::vector<Real> losses(items, 0.0);
    std::vector<std::exception_ptr> errors(workers);
    {
      std::vector<std::jthread> pool;
      for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
          try {
            ModelParams replica = params;
            for (std::size_t i = w; i < items; i += workers)
              losses[i] = detail::item_gradient(replica, i, fn, slots[i]);
          } catch (...) {
            errors[w] = std::current_exception();
          }
        });
      }
    }
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
    for (std::size_t i = 0; i < items; ++i) {
      loss_sum += losses[i];
      for (std::size_t k = 0; k < total.size(); ++k) total[k] += slots[i][k];
    }
  }
  detail::store_grads(params, total);
  return loss_sum;
}

}  // namespace lastmile

#endif  // LASTMILE_GRADIENTS_HPP_
