#include "twa/errors.hpp"

#include <utility>

namespace twa {

ParseError::ParseError(std::size_t line, const std::string& what)
    : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

ValidationError::ValidationError(std::string path, const std::string& what)
    : Error(path + ": " + what), path_(std::move(path)) {}

} // namespace twa
