#include "sleepnet/error.hpp"

namespace sleepnet {

int exit_status(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::EdfTruncatedHeader:
        case ErrorCode::EdfBadField:
        case ErrorCode::EdfSizeMismatch:
        case ErrorCode::EdfUnsupported:
        case ErrorCode::EdfUnknownChannel:
        case ErrorCode::EdfDuplicateChannel:
        case ErrorCode::TalMissingTerminator:
        case ErrorCode::TalBadNumber:
            return 10;
        case ErrorCode::UnrecognizedLabel:
        case ErrorCode::AnnotationMisaligned:
        case ErrorCode::AnnotationPastEnd:
        case ErrorCode::DegenerateEpoch:
        case ErrorCode::EmptyDataset:
        case ErrorCode::StoreBadMagic:
        case ErrorCode::StoreVersion:
        case ErrorCode::StoreTruncated:
            return 11;
        case ErrorCode::ShapeMismatch:
        case ErrorCode::NonFinite:
        case ErrorCode::InvalidArgument:
            return 12;
        case ErrorCode::ModelBadMagic:
        case ErrorCode::ModelVersion:
        case ErrorCode::ModelTruncated:
        case ErrorCode::ModelShapeMismatch:
            return 13;
        case ErrorCode::MissingCache:
        case ErrorCode::EmptyTrainingSet:
        case ErrorCode::FoldCount:
            return 14;
        case ErrorCode::EmptyAdaptSet:
            return 15;
        case ErrorCode::EmptyCalibration:
            return 16;
        case ErrorCode::ProfileError:
            return 17;
        case ErrorCode::LengthMismatch:
        case ErrorCode::EmptyMatrix:
            return 18;
        case ErrorCode::StreamGap:
        case ErrorCode::StreamOverflow:
            return 19;
        case ErrorCode::IoError:
            return 20;
    }
    return 1;
}

const char* error_name(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::EdfTruncatedHeader: return "edf-truncated-header";
        case ErrorCode::EdfBadField: return "edf-bad-field";
        case ErrorCode::EdfSizeMismatch: return "edf-size-mismatch";
        case ErrorCode::EdfUnsupported: return "edf-unsupported";
        case ErrorCode::EdfUnknownChannel: return "edf-unknown-channel";
        case ErrorCode::EdfDuplicateChannel: return "edf-duplicate-channel";
        case ErrorCode::TalMissingTerminator: return "tal-missing-terminator";
        case ErrorCode::TalBadNumber: return "tal-bad-number";
        case ErrorCode::UnrecognizedLabel: return "unrecognized-label";
        case ErrorCode::AnnotationMisaligned: return "annotation-misaligned";
        case ErrorCode::AnnotationPastEnd: return "annotation-past-end";
        case ErrorCode::DegenerateEpoch: return "degenerate-epoch";
        case ErrorCode::EmptyDataset: return "empty-dataset";
        case ErrorCode::StoreBadMagic: return "store-bad-magic";
        case ErrorCode::StoreVersion: return "store-version";
        case ErrorCode::StoreTruncated: return "store-truncated";
        case ErrorCode::ShapeMismatch: return "shape-mismatch";
        case ErrorCode::NonFinite: return "non-finite";
        case ErrorCode::InvalidArgument: return "invalid-argument";
        case ErrorCode::ModelBadMagic: return "model-bad-magic";
        case ErrorCode::ModelVersion: return "model-version";
        case ErrorCode::ModelTruncated: return "model-truncated";
        case ErrorCode::ModelShapeMismatch: return "model-shape-mismatch";
        case ErrorCode::MissingCache: return "missing-cache";
        case ErrorCode::EmptyTrainingSet: return "empty-training-set";
        case ErrorCode::FoldCount: return "fold-count";
        case ErrorCode::EmptyAdaptSet: return "empty-adapt-set";
        case ErrorCode::EmptyCalibration: return "empty-calibration";
        case ErrorCode::LengthMismatch: return "length-mismatch";
        case ErrorCode::EmptyMatrix: return "empty-matrix";
        case ErrorCode::ProfileError: return "profile-error";
        case ErrorCode::StreamGap: return "stream-gap";
        case ErrorCode::StreamOverflow: return "stream-overflow";
        case ErrorCode::IoError: return "io-error";
    }
    return "unknown";
}

}  // namespace sleepnet
