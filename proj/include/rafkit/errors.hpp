#pragma once

#include <stdexcept>
#include <string>

namespace raf {

// Failure categories, one per CLI exit code (2=usage, 3=data, 4=retrieval,
// 5=numeric, 6=io).
enum class ErrorCategory { Usage = 2, Data = 3, Retrieval = 4, Numeric = 5, Io = 6 };

class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, std::string name, const std::string& detail)
        : std::runtime_error(name + ": " + detail),
          category_(category),
          name_(std::move(name)) {}

    ErrorCategory category() const noexcept { return category_; }
    const std::string& name() const noexcept { return name_; }

private:
    ErrorCategory category_;
    std::string name_;
};

inline Error usage_error(const std::string& detail) {
    return Error(ErrorCategory::Usage, "UsageError", detail);
}
inline Error dimension_mismatch(const std::string& detail) {
    return Error(ErrorCategory::Data, "DimensionMismatch", detail);
}
inline Error non_finite_feature(const std::string& detail) {
    return Error(ErrorCategory::Data, "NonFiniteFeature", detail);
}
inline Error duplicate_key(const std::string& detail) {
    return Error(ErrorCategory::Data, "DuplicateKey", detail);
}
inline Error bad_magic(const std::string& detail) {
    return Error(ErrorCategory::Data, "BadMagic", detail);
}
inline Error version_mismatch(const std::string& detail) {
    return Error(ErrorCategory::Data, "VersionMismatch", detail);
}
inline Error truncated_file(const std::string& detail) {
    return Error(ErrorCategory::Data, "TruncatedFile", detail);
}
inline Error empty_bank(const std::string& detail) {
    return Error(ErrorCategory::Retrieval, "EmptyBank", detail);
}
inline Error insufficient_candidates(const std::string& detail) {
    return Error(ErrorCategory::Retrieval, "InsufficientCandidates", detail);
}
inline Error degenerate_set(const std::string& detail) {
    return Error(ErrorCategory::Numeric, "DegenerateSet", detail);
}
inline Error non_positive_bandwidth(const std::string& detail) {
    return Error(ErrorCategory::Numeric, "NonPositiveBandwidth", detail);
}
inline Error too_few_samples(const std::string& detail) {
    return Error(ErrorCategory::Numeric, "TooFewSamples", detail);
}
inline Error bad_component_count(const std::string& detail) {
    return Error(ErrorCategory::Numeric, "BadComponentCount", detail);
}
inline Error bad_probability(const std::string& detail) {
    return Error(ErrorCategory::Numeric, "BadProbability", detail);
}
inline Error shape_mismatch(const std::string& detail) {
    return Error(ErrorCategory::Data, "ShapeMismatch", detail);
}
inline Error diverged_loss(const std::string& detail) {
    return Error(ErrorCategory::Numeric, "DivergedLoss", detail);
}
inline Error config_invalid(const std::string& detail) {
    return Error(ErrorCategory::Usage, "ConfigInvalid", detail);
}
inline Error unknown_identity(const std::string& detail) {
    return Error(ErrorCategory::Data, "UnknownIdentity", detail);
}
inline Error io_error(const std::string& detail) {
    return Error(ErrorCategory::Io, "IoError", detail);
}
inline Error non_finite_weights(const std::string& detail) {
    return Error(ErrorCategory::Numeric, "NonFiniteWeights", detail);
}

}  // namespace raf
