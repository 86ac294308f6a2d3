#ifndef ECGFUSE_TESTS_HELPERS_HPP
#define ECGFUSE_TESTS_HELPERS_HPP

#include "ecgfuse/core.hpp"

#include <filesystem>
#include <string>

namespace testing_util {

inline ecgfuse::Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed,
                                     const std::string& stream = "test") {
    auto g = ecgfuse::RngStream(seed, stream).engine();
    ecgfuse::Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = ecgfuse::normal(g);
    return m;
}

inline ecgfuse::EcgRecord make_record(ecgfuse::Matrix leads, int label, std::string id) {
    return {std::move(leads), {label, "class" + std::to_string(label)}, std::move(id)};
}

inline double max_abs(const ecgfuse::Matrix& m) { return m.cwiseAbs().maxCoeff(); }

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("ecgfuse_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace testing_util

#endif
