#pragma once

#include <json.hpp>

#include <optional>
#include <string>

namespace ltssl {

/// Fixed-point with six decimals ("%.6f"); the one float format used by every
/// CSV, JSON-lines and JSON report the tool writes.
std::string fixed6(double v);

/// fixed6, or `null` when absent or non-finite.
std::string json_number(std::optional<double> v);

/// Serializes with stable key order (insertion order of ordered_json),
/// two-space indentation and fixed6 floats.
std::string dump_json(const nlohmann::ordered_json& j);

}  // namespace ltssl
