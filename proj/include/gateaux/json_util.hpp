#pragma once

#include "gateaux/common.hpp"

#include <json.hpp>

#include <initializer_list>
#include <string>

namespace gateaux {

/// Throws E naming the first key of `j` that is not in `allowed`.
template <class E = InvalidParameter>
void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed, const std::string& what)
{
    if (!j.is_object()) throw E(what + " must be a JSON object");
    for (const auto& item : j.items()) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || item.key() == a;
        if (!ok) throw E("unknown key '" + item.key() + "' in " + what);
    }
}

}  // namespace gateaux
