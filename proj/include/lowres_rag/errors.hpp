#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace lowres_rag {

// Exit-code families used by the CLI: config/usage errors exit 1, data
// errors exit 2, remote-backend errors exit 3.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class DataError : public Error {
public:
    using Error::Error;
};

class RemoteError : public Error {
public:
    using Error::Error;
};

// --- resource parsing -----------------------------------------------------

class MalformedRecord : public DataError {
public:
    MalformedRecord(std::size_t line_no, const std::string& why)
        : DataError("malformed record at line " + std::to_string(line_no) + ": " + why),
          line_no_(line_no) {}
    std::size_t line_no() const noexcept { return line_no_; }

private:
    std::size_t line_no_;
};

class EmptyHeadword : public DataError {
public:
    explicit EmptyHeadword(std::size_t line_no)
        : DataError("empty headword at line " + std::to_string(line_no)), line_no_(line_no) {}
    std::size_t line_no() const noexcept { return line_no_; }

private:
    std::size_t line_no_;
};

class MissingReference : public DataError {
public:
    explicit MissingReference(std::size_t line_no)
        : DataError("record at line " + std::to_string(line_no) + " has no reference translation"),
          line_no_(line_no) {}
    std::size_t line_no() const noexcept { return line_no_; }

private:
    std::size_t line_no_;
};

class DuplicateDocId : public DataError {
public:
    explicit DuplicateDocId(const std::string& id) : DataError("duplicate document id: " + id) {}
};

// --- embedding / retrieval ------------------------------------------------

class DimensionMismatch : public DataError {
public:
    DimensionMismatch(std::size_t a, std::size_t b)
        : DataError("dimension mismatch: " + std::to_string(a) + " vs " + std::to_string(b)) {}
};

class RemoteUnavailable : public RemoteError {
public:
    explicit RemoteUnavailable(const std::string& what) : RemoteError("remote unavailable: " + what) {}
};

class RemoteRejected : public RemoteError {
public:
    RemoteRejected(int status, const std::string& body_excerpt)
        : RemoteError("remote rejected request (HTTP " + std::to_string(status) + "): " + body_excerpt),
          status_(status) {}
    int status() const noexcept { return status_; }

private:
    int status_;
};

// --- prompt / pipeline ----------------------------------------------------

class UnresolvedDocId : public DataError {
public:
    explicit UnresolvedDocId(const std::string& id) : DataError("unresolved document id: " + id) {}
};

class InvalidTemplate : public ConfigError {
public:
    using ConfigError::ConfigError;
};

// Wraps a failure inside one stage of the translation chain.
class StageError : public Error {
public:
    StageError(std::string stage, const std::string& what, int exit_code)
        : Error(stage + ": " + what), stage_(std::move(stage)), exit_code_(exit_code) {}
    const std::string& stage() const noexcept { return stage_; }
    int exit_code() const noexcept { return exit_code_; }

private:
    std::string stage_;
    int exit_code_;
};

// --- lora -----------------------------------------------------------------

class ShapeMismatch : public DataError {
public:
    using DataError::DataError;
};

class InvalidRank : public DataError {
public:
    using DataError::DataError;
};

class NonFiniteLoss : public DataError {
public:
    explicit NonFiniteLoss(std::size_t step)
        : DataError("loss became non-finite at step " + std::to_string(step)) {}
};

class CorruptAdapterFile : public DataError {
public:
    using DataError::DataError;
};

// --- metrics --------------------------------------------------------------

class EmptyReferences : public DataError {
public:
    EmptyReferences() : DataError("BLEU needs at least one reference") {}
};

class AlignmentMismatch : public DataError {
public:
    using DataError::DataError;
};

}  // namespace lowres_rag
