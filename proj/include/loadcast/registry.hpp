#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "loadcast/pipeline.hpp"

namespace loadcast {

/// Current on-disk format version; see docs/model_format.md.
inline constexpr std::uint32_t kModelFormatVersion = 1;

/// Canonical little-endian encoding of a record, checksum included.
std::vector<std::byte> encode_record(const ModelRecord& record);

/// Throws IntegrityError on a bad magic, version, length or checksum.
ModelRecord decode_record(std::span<const std::byte> bytes);

/// FNV-1a 64 of the body, as stored in the trailer.
std::uint64_t payload_checksum(const ModelRecord& record);

struct VersionInfo {
    std::uint32_t version = 0;
    Timestamp created_at = 0;
    double headline_mse = 0.0;  ///< overall test MSE, original units
};

/// Versioned model store, one directory per point:
///
///   <root>/<sanitized point>/point.id     original id
///                           /v000001.lcm   one file per version
///                           /LATEST        latest version number
///                           /.lock         advisory write lock
///
/// Files appear by rename only, so readers never see a partial record.
/// Puts for one point serialize on the lock; different points do not contend.
class Registry {
public:
    explicit Registry(std::filesystem::path root);

    const std::filesystem::path& root() const noexcept { return root_; }

    /// Assigns version = 1 + highest existing (1 for a new point), writes it
    /// atomically, and returns it. `record.version` is overwritten.
    std::uint32_t put(ModelRecord record) const;

    ModelRecord get_latest(const PointId& point) const;
    ModelRecord get_version(const PointId& point, std::uint32_t version) const;
    bool contains(const PointId& point) const;

    /// Ascending by version. Throws NotFoundError for an unknown point.
    std::vector<VersionInfo> list(const PointId& point) const;
    std::vector<PointId> points() const;

    /// Deletes all but the newest `keep` versions and stray temporary files.
    /// Returns the number of versions removed.
    std::size_t prune(const PointId& point, std::size_t keep) const;

    std::filesystem::path point_dir(const PointId& point) const;

private:
    std::vector<std::uint32_t> versions(const PointId& point) const;
    ModelRecord load(const PointId& point, std::uint32_t version) const;

    std::filesystem::path root_;
};

}  // namespace loadcast
