#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace lac {

/// A prompt with a programmatically checkable continuation.
struct SuiteItem {
    std::string prompt;
    std::string expected;
};

/// "copy": "abcd=" -> "abcd".  "sorted": "dbca>" -> "abcd".
/// Strings are lowercase, 4 to 6 bytes, drawn from Xoshiro256(seed).
std::vector<SuiteItem> make_suite(std::string_view name, std::uint64_t seed, std::size_t count = 16);
const std::vector<std::string>& suite_names();

/// Percentage (0..100) of expected bytes reproduced at the same position.
double score_suite(const std::vector<SuiteItem>& items, const std::vector<std::string>& outputs);

}  // namespace lac
