#pragma once

#include <stdexcept>
#include <string>

namespace sleepnet {

enum class ErrorCode {
    // edf
    EdfTruncatedHeader,
    EdfBadField,
    EdfSizeMismatch,
    EdfUnsupported,
    EdfUnknownChannel,
    EdfDuplicateChannel,
    TalMissingTerminator,
    TalBadNumber,
    // epochs
    UnrecognizedLabel,
    AnnotationMisaligned,
    AnnotationPastEnd,
    DegenerateEpoch,
    EmptyDataset,
    StoreBadMagic,
    StoreVersion,
    StoreTruncated,
    // kernels / net
    ShapeMismatch,
    NonFinite,
    InvalidArgument,
    ModelBadMagic,
    ModelVersion,
    ModelTruncated,
    ModelShapeMismatch,
    // train / adapt / quant
    MissingCache,
    EmptyTrainingSet,
    FoldCount,
    EmptyAdaptSet,
    EmptyCalibration,
    // metrics
    LengthMismatch,
    EmptyMatrix,
    // budget
    ProfileError,
    // stream
    StreamGap,
    StreamOverflow,
    // misc
    IoError,
};

/// Every library failure is thrown as an Error carrying a machine-readable code.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

/// Process exit status for an error, grouped by the module that raised it.
int exit_status(ErrorCode code) noexcept;

const char* error_name(ErrorCode code) noexcept;

}  // namespace sleepnet
