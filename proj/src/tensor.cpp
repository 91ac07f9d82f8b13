#include "xlf5/tensor.hpp"

#include <cmath>
#include <sstream>

#include "xlf5/errors.hpp"

namespace xlf5 {

Tensor::Tensor(std::vector<int64_t> shape) : shape_(std::move(shape)) {
    numel_ = 1;
    for (int64_t d : shape_) {
        if (d < 0) fail(ErrorCode::shape_error, "negative dimension");
        numel_ *= d;
    }
    data_.assign(size_t(numel_), 0.0f);
}

Tensor Tensor::full(std::vector<int64_t> shape, float value) {
    Tensor t(std::move(shape));
    t.fill(value);
    return t;
}

Tensor Tensor::randn(std::vector<int64_t> shape, Rng& rng, float stddev) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = stddev * rng.normalf();
    return t;
}

bool Tensor::all_finite() const {
    for (float v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

void Tensor::fill(float value) {
    for (float& v : data_) v = value;
}

Tensor Tensor::reshaped(std::vector<int64_t> shape) const {
    Tensor t;
    t.shape_ = std::move(shape);
    t.numel_ = 1;
    for (int64_t d : t.shape_) t.numel_ *= d;
    if (t.numel_ != numel_)
        fail(ErrorCode::shape_error, "reshape changes element count");
    t.data_ = data_;
    return t;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
    os << "]";
    return os.str();
}

const char* error_code_name(ErrorCode c) {
    switch (c) {
        case ErrorCode::invalid_input: return "InvalidInput";
        case ErrorCode::config_mismatch: return "ConfigMismatch";
        case ErrorCode::parse_error: return "ParseError";
        case ErrorCode::validation_error: return "ValidationError";
        case ErrorCode::empty_after_sanitize: return "EmptyAfterSanitize";
        case ErrorCode::no_eligible_boundary: return "NoEligibleBoundary";
        case ErrorCode::invalid_boundary: return "InvalidBoundary";
        case ErrorCode::invalid_rate: return "InvalidRate";
        case ErrorCode::invalid_dataset: return "InvalidDataset";
        case ErrorCode::shape_error: return "ShapeError";
        case ErrorCode::invalid_mask: return "InvalidMask";
        case ErrorCode::invalid_coefficient: return "InvalidCoefficient";
        case ErrorCode::diverged: return "DivergedError";
        case ErrorCode::text_overflow: return "TextOverflow";
        case ErrorCode::degenerate_split: return "DegenerateSplit";
        case ErrorCode::duration_out_of_range: return "DurationOutOfRange";
        case ErrorCode::config_error: return "ConfigError";
        case ErrorCode::usage_error: return "UsageError";
        case ErrorCode::io_error: return "IoError";
    }
    return "Error";
}

}  // namespace xlf5
