#pragma once

#include <string>
#include <string_view>

namespace authlm {

/// Porter (1980) suffix-stripping stemmer, all five steps, matching the
/// author's reference C implementation (including its "bli" -> "ble" and
/// "logi" -> "log" step-2 rules). Input is expected in lowercase ASCII;
/// words of length <= 2 are returned unchanged.
std::string porter_stem(std::string_view word);

}  // namespace authlm
