#pragma once

#include "amp/collapse_lab.hpp"
#include "amp/trainer.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace amp {

/// Minimal TOML-style config file: [section] headers, key = value lines,
/// # comments. Values are integers, floats, booleans, or quoted strings.
/// Insertion order is preserved so dumps are stable.
class ConfigFile {
public:
    ConfigFile() = default;

    static ConfigFile parse(const std::string& text);
    static ConfigFile parse_file(const std::string& path);

    bool has(const std::string& section, const std::string& key) const;
    std::string get_string(const std::string& section, const std::string& key,
                           const std::string& fallback) const;
    double get_double(const std::string& section, const std::string& key,
                      double fallback) const;
    std::int64_t get_int(const std::string& section, const std::string& key,
                         std::int64_t fallback) const;
    std::uint64_t get_uint(const std::string& section, const std::string& key,
                           std::uint64_t fallback) const;

    void set(const std::string& section, const std::string& key, const std::string& value);
    void set_double(const std::string& section, const std::string& key, double value);
    void set_int(const std::string& section, const std::string& key, std::int64_t value);
    void set_uint(const std::string& section, const std::string& key, std::uint64_t value);

    std::string dump() const;

private:
    using Section = std::pair<std::string, std::vector<std::pair<std::string, std::string>>>;
    std::vector<Section> sections_;

    const std::string* find(const std::string& section, const std::string& key) const;
};

/// Merged view of everything a run needs. Defaults follow the standard
/// recipe (K=10, lambda=1e-4, gamma1=gamma2=0.01, batch 32, cosine lr
/// 1e-3 -> 1e-5); file values override defaults, flags override both.
struct CliConfig {
    SyntheticSpec data;
    int depth = 16; // feature dimension D
    TrainingConfig train;

    /// Applies [data]/[model]/[train]/[loss] sections over current values.
    void apply(const ConfigFile& file);

    /// Effective-config dump, suitable for run-config.toml.
    ConfigFile to_file() const;
};

} // namespace amp
