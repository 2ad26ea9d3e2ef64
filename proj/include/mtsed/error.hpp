#pragma once

#include <stdexcept>
#include <string>

namespace mtsed {

/// Malformed or inconsistent case document. `where()` names the offending
/// line or field path when known.
class CaseError : public std::runtime_error
{
public:
    explicit CaseError(const std::string& what, std::string where = {})
        : std::runtime_error(where.empty() ? what : where + ": " + what)
        , where_(std::move(where))
    {}

    const std::string& where() const noexcept { return where_; }

private:
    std::string where_;
};

class DimensionError : public std::invalid_argument
{
public:
    using std::invalid_argument::invalid_argument;
};

/// Non-finite value detected while integrating.
class DivergenceError : public std::runtime_error
{
public:
    DivergenceError(const std::string& what, int bus, std::string field)
        : std::runtime_error(what), bus_(bus), field_(std::move(field))
    {}

    int bus() const noexcept { return bus_; }
    const std::string& field() const noexcept { return field_; }

private:
    int bus_;
    std::string field_;
};

inline void require_dim(bool ok, const char* what)
{
    if (!ok)
        throw DimensionError(what);
}

} // namespace mtsed
