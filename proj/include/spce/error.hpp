#pragma once

#include <stdexcept>
#include <string>

namespace spce {

/// A specification object (urn, box, table, kernel, config) violates its invariants.
class InvalidSpec : public std::invalid_argument {
public:
    explicit InvalidSpec(const std::string& what) : std::invalid_argument(what) {}
};

/// An estimator was asked for a value it has no data for.
class UndefinedEstimate : public std::domain_error {
public:
    explicit UndefinedEstimate(const std::string& what) : std::domain_error(what) {}
};

class DimensionMismatch : public std::invalid_argument {
public:
    explicit DimensionMismatch(const std::string& what) : std::invalid_argument(what) {}
};

} // namespace spce
