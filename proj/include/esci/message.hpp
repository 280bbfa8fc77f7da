#pragma once

// Messages exchanged between neighbors, one payload type per level:
//
//   L1  x_a, P_a                         autonomous estimate and bound
//   L2  x_a, P_a, HtRinvH                plus the sender's information matrix
//   L3  x_pred, P_pred, HtRinvz, HtRinvH prediction and raw measurement information
//
// The text record produced by serialize() is lossless:
//
//   message <level> <sender>
//   <field> <rows> <cols> <row-major values...>
//   ...
//   end

#include "esci/model.hpp"

#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace esci {

struct L1Payload {
    Vector x_a;
    SpdMatrix p_a;
};

struct L2Payload {
    Vector x_a;
    SpdMatrix p_a;
    SpdMatrix info_matrix;
};

struct L3Payload {
    Vector x_pred;
    SpdMatrix p_pred;
    Vector info_vector;
    SpdMatrix info_matrix;
};

struct Message {
    std::size_t sender = 0;
    std::variant<L1Payload, L2Payload, L3Payload> payload;

    Level level() const;
    /// Field names in wire order.
    std::vector<std::string> field_names() const;
};

/// Wire field names for a level.
std::vector<std::string> level_fields(Level level);

std::string serialize(const Message& message);
/// Throws FormatError on malformed input or a field set that does not match the level.
Message deserialize(std::string_view text);

}  // namespace esci
