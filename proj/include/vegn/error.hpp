#pragma once

#include <stdexcept>
#include <string>

namespace vegn {

// Error classes surfaced by the CLI as machine-parsable tokens.
enum class ErrorKind {
    dimension,
    contract,
    stale_tape,
    empty_neighborhood,
    numerical_degeneracy,
    non_finite,
    divergence,
    bounds,
    referential,
    duplication,
    schema,
    parse,
    io,
    integrity,
    incompatibility,
    degenerate_metric,
    capability,
    state_corruption,
};

inline const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::dimension: return "dimension";
        case ErrorKind::contract: return "contract";
        case ErrorKind::stale_tape: return "stale-tape";
        case ErrorKind::empty_neighborhood: return "empty-neighborhood";
        case ErrorKind::numerical_degeneracy: return "numerical-degeneracy";
        case ErrorKind::non_finite: return "non-finite";
        case ErrorKind::divergence: return "divergence";
        case ErrorKind::bounds: return "bounds";
        case ErrorKind::referential: return "referential";
        case ErrorKind::duplication: return "duplication";
        case ErrorKind::schema: return "schema";
        case ErrorKind::parse: return "parse";
        case ErrorKind::io: return "io";
        case ErrorKind::integrity: return "integrity";
        case ErrorKind::incompatibility: return "incompatibility";
        case ErrorKind::degenerate_metric: return "degenerate-metric";
        case ErrorKind::capability: return "capability";
        case ErrorKind::state_corruption: return "state-corruption";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace vegn
