#pragma once

#include <string>
#include <string_view>

namespace modlens {

enum class OpKind { Add, Mul };

std::string to_string(OpKind op);
OpKind op_kind_from_string(std::string_view s); // throws ConfigError on anything else

} // namespace modlens
