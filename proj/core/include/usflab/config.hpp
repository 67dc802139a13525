#pragma once

#include <map>
#include <optional>
#include <string>

#include "usflab/error.hpp"

namespace usflab {

/// Sectioned key/value configuration text:
///   [section]
///   key = value    ; comments start with '#' or ';'
class ConfigFile {
public:
    ConfigFile() = default;
    static ConfigFile parse_file(const std::string& path);
    static ConfigFile parse_string(const std::string& text);

    std::optional<std::string> get(const std::string& section, const std::string& key) const;
    std::string get_or(const std::string& section, const std::string& key,
                       const std::string& fallback) const;
    double get_double_or(const std::string& section, const std::string& key,
                         double fallback) const;
    std::size_t get_size_or(const std::string& section, const std::string& key,
                            std::size_t fallback) const;

    void set(const std::string& section, const std::string& key, const std::string& value);

private:
    std::map<std::string, std::map<std::string, std::string>> sections_;
};

} // namespace usflab
