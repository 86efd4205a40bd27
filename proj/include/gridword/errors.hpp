#pragma once

#include <stdexcept>
#include <string>

namespace gridword {

struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error("shape error: " + msg) {}
};

struct MaskError : std::runtime_error {
    explicit MaskError(const std::string& msg) : std::runtime_error("invalid mask: " + msg) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error("config error: " + msg) {}
};

struct VocabError : std::runtime_error {
    explicit VocabError(const std::string& msg) : std::runtime_error("vocabulary error: " + msg) {}
};

struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& msg) : std::runtime_error("validation error: " + msg) {}
};

struct VersionError : std::runtime_error {
    explicit VersionError(const std::string& msg) : std::runtime_error("version error: " + msg) {}
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error("numeric error: " + msg) {}
};

struct GenerationError : std::runtime_error {
    explicit GenerationError(const std::string& msg) : std::runtime_error("generation error: " + msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error("io error: " + msg) {}
};

}  // namespace gridword
