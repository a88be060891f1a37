// SPDX-License-Identifier: Apache-2.0
#include "archdoor/ops.hpp"

#include <array>

namespace archdoor {
namespace {

constexpr AttrSpec kPowAttrs[] = {{"exponent", AttrType::kInt}};
constexpr AttrSpec kReduceAttrs[] = {{"axes", AttrType::kIntList}, {"keepdim", AttrType::kInt}};
constexpr AttrSpec kAxisAttrs[] = {{"axis", AttrType::kInt}};
constexpr AttrSpec kPoolAttrs[] = {{"kernel", AttrType::kIntList}, {"stride", AttrType::kIntList}};
constexpr AttrSpec kAdaptiveAttrs[] = {{"output_size", AttrType::kIntList}};
constexpr AttrSpec kSliceAttrs[] = {
    {"starts", AttrType::kIntList}, {"steps", AttrType::kIntList}, {"stops", AttrType::kIntList}};
constexpr AttrSpec kReshapeAttrs[] = {{"shape", AttrType::kIntList}};

constexpr int kSecondSlot[] = {1};
constexpr int kLinearSlots[] = {1, 2};

constexpr std::span<const AttrSpec> kNone{};
constexpr std::span<const int> kNoSlots{};

const std::array<OpSignature, 30> kTable = {{
    {OpKind::kIdentity, "identity", 1, 1, kNone, false, kNoSlots},
    {OpKind::kSign, "sign", 1, 1, kNone, true, kNoSlots},
    {OpKind::kRelu, "relu", 1, 1, kNone, true, kNoSlots},
    {OpKind::kRelu6, "relu6", 1, 1, kNone, true, kNoSlots},
    {OpKind::kSigmoid, "sigmoid", 1, 1, kNone, true, kNoSlots},
    {OpKind::kLogSigmoid, "logsigmoid", 1, 1, kNone, true, kNoSlots},
    {OpKind::kExp, "exp", 1, 1, kNone, true, kNoSlots},
    {OpKind::kCos, "cos", 1, 1, kNone, true, kNoSlots},
    {OpKind::kTrunc, "trunc", 1, 1, kNone, true, kNoSlots},
    {OpKind::kNeg, "neg", 1, 1, kNone, false, kNoSlots},
    {OpKind::kPow, "pow", 1, 1, kPowAttrs, true, kNoSlots},
    {OpKind::kAdd, "add", 2, 2, kNone, false, kNoSlots},
    {OpKind::kSub, "sub", 2, 2, kNone, false, kNoSlots},
    {OpKind::kMul, "mul", 2, 2, kNone, false, kNoSlots},
    {OpKind::kDiv, "div", 2, 2, kNone, true, kNoSlots},
    {OpKind::kMax, "max", 2, 2, kNone, true, kNoSlots},
    {OpKind::kMin, "min", 2, 2, kNone, true, kNoSlots},
    {OpKind::kAmax, "amax", 1, 1, kReduceAttrs, true, kNoSlots},
    {OpKind::kAmin, "amin", 1, 1, kReduceAttrs, true, kNoSlots},
    {OpKind::kSum, "sum", 1, 1, kReduceAttrs, false, kNoSlots},
    {OpKind::kSoftmax, "softmax", 1, 1, kAxisAttrs, true, kNoSlots},
    {OpKind::kMaxPool2d, "maxpool2d", 1, 1, kPoolAttrs, true, kNoSlots},
    {OpKind::kAvgPool2d, "avgpool2d", 1, 1, kPoolAttrs, false, kNoSlots},
    {OpKind::kAdaptiveMaxPool2d, "adaptive_maxpool2d", 1, 1, kAdaptiveAttrs, true, kNoSlots},
    {OpKind::kMatMul, "matmul", 2, 2, kNone, false, kSecondSlot},
    {OpKind::kLinear, "linear", 3, 3, kNone, false, kLinearSlots},
    {OpKind::kConv1x1, "conv1x1", 2, 2, kNone, false, kSecondSlot},
    {OpKind::kConcat, "concat", 1, -1, kAxisAttrs, false, kNoSlots},
    {OpKind::kSlice, "slice", 1, 1, kSliceAttrs, false, kNoSlots},
    {OpKind::kReshape, "reshape", 1, 1, kReshapeAttrs, false, kNoSlots},
}};

}  // namespace

const OpSignature& signature(OpKind kind) { return kTable[static_cast<std::size_t>(kind)]; }

std::optional<OpKind> op_from_name(std::string_view name) {
  for (const auto& sig : kTable)
    if (sig.name == name) return sig.kind;
  return std::nullopt;
}

std::string_view op_name(OpKind kind) { return signature(kind).name; }

std::span<const OpSignature> all_ops() { return kTable; }

bool is_elementwise_unary(OpKind kind) {
  return static_cast<int>(kind) <= static_cast<int>(OpKind::kPow);
}

bool is_elementwise_binary(OpKind kind) {
  return static_cast<int>(kind) >= static_cast<int>(OpKind::kAdd) &&
         static_cast<int>(kind) <= static_cast<int>(OpKind::kMin);
}

}  // namespace archdoor
