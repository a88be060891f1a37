// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <string_view>

#include <json.hpp>

#include "archdoor/graph.hpp"

namespace archdoor {

using Json = nlohmann::json;

inline constexpr int kGraphFormatVersion = 1;

/// Canonical text form of a graph: sorted keys, nodes by id, params by name,
/// shortest round-trip decimals, two-space indentation, trailing newline.
std::string serialize(const GraphIR& graph);

/// Parses a graph document. Throws kMalformedDocument, kUnknownOp or
/// kVersionMismatch. The result is structurally parsed but not validated.
GraphIR deserialize(std::string_view text);

Json graph_to_json(const GraphIR& graph);
GraphIR graph_from_json(const Json& doc);

Json tensor_to_json(const Tensor& t);
Tensor tensor_from_json(const Json& doc);

/// Dumps with the canonical layout used by every document in the toolkit.
std::string canonical_dump(const Json& doc);

/// Parses text into JSON, mapping syntax errors to kMalformedDocument.
Json parse_document(std::string_view text);

/// Checks the "format" and "version" header of a document.
void check_header(const Json& doc, std::string_view format, int version);

}  // namespace archdoor
