#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "txt/errors.hpp"
#include "txt/tensor.hpp"

namespace txt {

// Reserved vocabulary ids, shared by items and every context field.
inline constexpr std::int32_t kPadId = 0;
inline constexpr std::int32_t kUnkId = 1;

// Ordered context feature ids, one per configured context field.
using ContextVector = std::vector<std::int32_t>;

// One training instance: right-padded item prefix, its mask, the context
// ids, and the next-item label.
struct OrderExample {
  std::vector<std::int32_t> input_ids;
  Mask mask;
  ContextVector ctx;
  std::int32_t label = -1;
};

// Enforces the type invariants: matching lengths, at least one real item,
// real positions forming a contiguous prefix, label outside PAD/UNK.
inline void validate_example(const OrderExample& ex) {
  if (ex.input_ids.empty() || ex.input_ids.size() != ex.mask.size())
    throw ContractError("example ids/mask length mismatch");
  if (!ex.mask[0]) throw ContractError("example has no real input item");
  bool padded = false;
  for (std::size_t i = 0; i < ex.mask.size(); ++i) {
    if (ex.mask[i] && padded)
      throw ContractError("real positions are not a contiguous prefix");
    if (!ex.mask[i]) {
      padded = true;
      if (ex.input_ids[i] != kPadId)
        throw ContractError("padded position holds a non-PAD id");
    }
  }
  if (ex.label == kPadId || ex.label == kUnkId || ex.label < 0)
    throw ContractError("label must be a real item id, got " + std::to_string(ex.label));
}

}  // namespace txt
