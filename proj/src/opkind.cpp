#include "modlens/opkind.hpp"

#include "modlens/errors.hpp"

namespace modlens {

std::string to_string(OpKind op) {
    return op == OpKind::Add ? "add" : "mul";
}

OpKind op_kind_from_string(std::string_view s) {
    if (s == "add") return OpKind::Add;
    if (s == "mul") return OpKind::Mul;
    throw ConfigError("unknown operation kind: " + std::string(s));
}

} // namespace modlens
