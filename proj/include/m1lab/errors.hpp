#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace m1lab {

/// Schema or value error in a configuration, tagged with the offending field path.
class ConfigError : public std::invalid_argument {
public:
    ConfigError(std::string field, const std::string& message)
        : std::invalid_argument(field + ": " + message), field_(std::move(field)) {}

    [[nodiscard]] const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

}  // namespace m1lab
