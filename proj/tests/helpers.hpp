#pragma once

#include <doctest.h>

#include <filesystem>
#include <random>
#include <string>

#include "scoper/errors.hpp"

namespace testutil {

// Asserts that `fn` throws a PipelineError carrying exactly `code`.
template <typename Fn>
void expect_error(scoper::ErrorCode code, Fn&& fn) {
    try {
        fn();
        FAIL_CHECK("expected " << scoper::error_code_name(code) << ", nothing was thrown");
    } catch (const scoper::PipelineError& e) {
        CHECK_MESSAGE(e.code() == code, e.what());
    }
}

// Unique scratch directory, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& label) {
        static std::mt19937_64 rng{std::random_device{}()};
        path_ = std::filesystem::temp_directory_path() /
                ("scoper-test-" + label + "-" + std::to_string(rng()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

inline std::filesystem::path source_dir() { return SCOPER_SOURCE_DIR; }

} // namespace testutil
