// Copyright 2026 The Kascade Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "kascade/types.hpp"

namespace kascade {

AttentionMatrix::AttentionMatrix(std::size_t seq_len, bool causal)
    : seq_len_(seq_len),
      causal_(causal),
      data_(causal ? seq_len * (seq_len + 1) / 2 : seq_len * seq_len, 0.0) {}

}  // namespace kascade
