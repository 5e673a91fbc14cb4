#pragma once

#include <stdexcept>
#include <string>

namespace iqa {

// All recoverable failures in the library throw this.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace iqa
