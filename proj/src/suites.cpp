#include "lac/suites.hpp"

#include <algorithm>

#include "lac/error.hpp"
#include "lac/rng.hpp"

namespace lac {

const std::vector<std::string>& suite_names() {
    static const std::vector<std::string> names{"copy", "sorted"};
    return names;
}

std::vector<SuiteItem> make_suite(std::string_view name, std::uint64_t seed, std::size_t count) {
    const bool copy = name == "copy";
    if (!copy && name != "sorted") throw ConfigError("unknown suite '" + std::string(name) + "'");
    Xoshiro256 rng(seed);
    std::vector<SuiteItem> items;
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t len = 4 + rng.below(3);
        std::string s;
        for (std::size_t k = 0; k < len; ++k) s.push_back(static_cast<char>('a' + rng.below(26)));
        if (copy) {
            items.push_back({s + "=", s});
        } else {
            std::string sorted = s;
            std::sort(sorted.begin(), sorted.end());
            items.push_back({s + ">", sorted});
        }
    }
    return items;
}

double score_suite(const std::vector<SuiteItem>& items, const std::vector<std::string>& outputs) {
    if (items.size() != outputs.size()) throw ConfigError("score_suite: item/output count mismatch");
    std::size_t total = 0, hits = 0;
    for (std::size_t i = 0; i < items.size(); ++i) {
        const std::string& want = items[i].expected;
        total += want.size();
        for (std::size_t k = 0; k < want.size() && k < outputs[i].size(); ++k) hits += want[k] == outputs[i][k];
    }
    return total ? 100.0 * static_cast<double>(hits) / static_cast<double>(total) : 0.0;
}

}  // namespace lac
