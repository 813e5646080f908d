#pragma once

#include <stdexcept>
#include <string>

namespace fimap {

// Base for every failure raised by the pipeline. Messages carry the
// condition index or region id when one is involved.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class RegistrationError : public Error {
public:
    RegistrationError(int condition_index, const std::string& what)
        : Error(what), condition_index_(condition_index) {}

    int condition_index() const noexcept { return condition_index_; }

private:
    int condition_index_;
};

} // namespace fimap
