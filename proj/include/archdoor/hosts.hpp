// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "archdoor/graph.hpp"

namespace archdoor::hosts {

/// Fully connected ReLU network ending in softmax.
///
/// `widths` lists layer widths from input to classes (at least two entries). When
/// `sample_shape` has rank > 1 the input is [B, ...sample_shape] and is flattened
/// first; its element count must equal widths[0].
///
/// Tags: the input is raw-input, the last linear is logits, the softmax is
/// output-probabilities. Metadata "latent" names the last hidden activation and
/// "path" lists every hidden activation from input to output, comma separated.
GraphIR make_mlp(const std::vector<std::size_t>& widths, std::uint64_t seed, Shape sample_shape = {});

/// Hidden activations recorded in metadata "path", in data-flow order.
std::vector<std::string> relay_path(const GraphIR& host);

/// Number of linear layers.
std::size_t depth(const GraphIR& host);

}  // namespace archdoor::hosts
