#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "obr/detector.hpp"
#include "obr/error.hpp"
#include "obr/reader.hpp"
#include "obr/synth.hpp"
#include "obr/trainer.hpp"

namespace obr {

/// Every tunable, grouped by module. Defaults are the "paper" preset.
struct Config {
    std::string preset = "paper";
    DetectorConfig detector;
    AugmentationPolicy augment;
    TrainSchedule train;
    PageGeometry geometry;
    SynthOptions synth;
    int inference_width = 864;
    ReaderOptions reader;

    void validate() const;  // throws ConfigError
};

class ConfigError : public InputError {
public:
    using InputError::InputError;
};

// "paper" or "desk"; anything else throws ConfigError.
Config preset_config(std::string_view name);

using ConfigValue = std::variant<bool, double, std::string, std::vector<double>>;

/// Sets one "section.key"; the value must have the key's type and range.
void apply_setting(Config& config, std::string_view section, std::string_view key, const ConfigValue& value);

/// TOML-style text:
///   # comment
///   preset = "desk"          (top level only, applied first)
///   [train]
///   learning_rate = 1e-3
///   stage_epochs = [50, 50, 50]
/// Unknown sections or keys are errors, reported as "<source>:<line>: section.key: reason".
Config parse_config(std::string_view text, std::string_view source = "<config>");
Config load_config(const std::filesystem::path& path);

// Parses "section.key=value" overrides, same value syntax as the file.
void apply_override(Config& config, std::string_view assignment);

// Round-trips through parse_config.
std::string format_config(const Config& config);

}  // namespace obr
