#pragma once

// Runs the command-line binary and compares output directories.

#include <activereg/csv.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <map>
#include <string>

namespace activereg::testing {

namespace fs = std::filesystem;

inline int run_cli(const std::string& args) {
    const std::string cmd = std::string("\"") + ACTIVEREG_CLI + "\" " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

inline fs::path scratch_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("activereg_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

/// File name to contents, leaving out the run report with its wall times.
inline std::map<std::string, std::string> snapshot(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::directory_iterator(dir)) {
        const std::string name = e.path().filename().string();
        if (name == "run_report.json") continue;
        out[name] = read_text(e.path());
    }
    return out;
}

}  // namespace activereg::testing
