#pragma once

#include <span>
#include <vector>

#include "rilm/tensor.hpp"

namespace rilm {

// Minimum number of frames a CTC alignment of label needs: one per token
// plus one blank between each pair of equal neighbours.
std::size_t ctc_min_frames(std::span<const int> label);

// Negative log-likelihood of label under per-frame softmax(logits[T,V]),
// summed over all blank-interleaved alignments (forward-backward). The
// gradient flows to logits. Throws when T < ctc_min_frames(label).
Tensor ctc_loss(const Tensor& logits, std::span<const int> label, int blank = 0);

// log p(label | x) from per-frame log-probabilities [T*V], forward pass only.
double ctc_log_likelihood(std::span<const double> log_probs, std::size_t frames,
                          std::size_t vocab, std::span<const int> label, int blank = 0);

double log_add(double a, double b);

}  // namespace rilm
