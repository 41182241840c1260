#pragma once

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <sys/wait.h>
#include <unistd.h>

#include "evocollapse/fitness.hpp"
#include "evocollapse/model.hpp"

namespace testsupport {

namespace fs = std::filesystem;

inline fs::path data_dir() { return fs::path(EVOCOLLAPSE_TEST_DATA); }
inline fs::path calibration_file() { return data_dir() / "calibration.txt"; }
inline fs::path cli_binary() { return fs::path(EVOCOLLAPSE_CLI); }

/// The reference toy: L=8, d_model=64, 4 heads, d_ff=128.
inline evocollapse::ModelConfig toy_config(evocollapse::Index n_layers = 8, evocollapse::Index d_model = 64) {
    evocollapse::ModelConfig c;
    c.n_layers = n_layers;
    c.d_model = d_model;
    c.n_heads = 4;
    c.d_ff = 2 * d_model;
    c.max_seq_len = 64;
    return c;
}

inline evocollapse::Model toy_model(evocollapse::Index n_layers = 8, std::uint64_t seed = 1,
                                    evocollapse::Index d_model = 64) {
    return evocollapse::init_random<float>(toy_config(n_layers, d_model), seed);
}

inline evocollapse::CalibrationSet toy_calibration(std::size_t n = 64, std::size_t max_len = 64,
                                                   std::uint64_t seed = 7) {
    return evocollapse::load_calibration(calibration_file(), n, max_len, seed);
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<int> counter{0};
        path_ = fs::temp_directory_path() /
                ("evocollapse-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const noexcept { return path_; }
    fs::path operator/(const std::string& s) const { return path_ / s; }

private:
    fs::path path_;
};

inline std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Runs the CLI with `args`; stderr goes to `err_file` when given. Returns the exit status.
inline int run_cli(const std::string& args, const fs::path& err_file = {}) {
    std::string cmd = "\"" + cli_binary().string() + "\" " + args + " > /dev/null";
    cmd += err_file.empty() ? " 2>/dev/null" : " 2> \"" + err_file.string() + "\"";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace testsupport
