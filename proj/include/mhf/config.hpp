#pragma once

#include <stdexcept>
#include <string>

#include "mhf/model.hpp"

namespace mhf {

// Malformed or inconsistent configuration. The CLI maps it to exit code 2.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct LoadedConfig {
    Bundle bundle;
    bool example = false;  // loss and measure both of the worked-example kind
};

// n_override > 0 replaces grid.n. Relative sample paths resolve against base_dir.
[[nodiscard]] LoadedConfig parse_config(const std::string& json_text, const std::string& base_dir,
                                        int n_override = 0);

[[nodiscard]] LoadedConfig load_config(const std::string& path, int n_override = 0);

constexpr int kDefaultGridN = 1200;

}  // namespace mhf
