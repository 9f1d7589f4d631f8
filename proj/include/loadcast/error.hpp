#pragma once

#include <stdexcept>
#include <string>

namespace loadcast {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad input: violated precondition, malformed file, bad config.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// A requested point, version or record does not exist.
class NotFoundError : public Error {
public:
    using Error::Error;
};

/// Stored bytes failed checksum or structural validation.
class IntegrityError : public Error {
public:
    using Error::Error;
};

/// Filesystem or backing-store failure.
class StorageError : public Error {
public:
    using Error::Error;
};

/// Upstream returned something that is not a usable grid (or an error grid).
class ProtocolError : public Error {
public:
    using Error::Error;
};

/// Upstream could not be reached after all retries.
class NetworkError : public Error {
public:
    using Error::Error;
};

/// Training loss became NaN or infinite.
class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what, int epoch) : Error(what), epoch_(epoch) {}
    int epoch() const noexcept { return epoch_; }

private:
    int epoch_;
};

}  // namespace loadcast
