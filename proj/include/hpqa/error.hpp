#pragma once

#include <stdexcept>
#include <string>

namespace hpqa {

// Bad inputs: malformed configs, streams, specs. CLI maps this to exit code 1.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Anything that goes wrong after inputs were accepted. CLI exit code 2.
class RuntimeFault : public std::runtime_error {
public:
    explicit RuntimeFault(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace hpqa
