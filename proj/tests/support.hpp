#pragma once

#include "proxbo/rng.hpp"
#include "proxbo/sequence.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace testing {

inline proxbo::Sequence random_sequence(std::size_t length, std::size_t v, proxbo::Rng& rng) {
    std::vector<proxbo::Residue> r(length);
    for (auto& x : r) x = static_cast<proxbo::Residue>(rng.uniform_index(v));
    return proxbo::Sequence(std::move(r));
}

inline proxbo::Sequence constant_sequence(std::size_t length, proxbo::Residue value = 0) {
    return proxbo::Sequence(std::vector<proxbo::Residue>(length, value));
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("proxbo_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace testing
