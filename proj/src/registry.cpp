#include "loadcast/registry.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "loadcast/checksum.hpp"
#include "loadcast/error.hpp"

namespace loadcast {

namespace fs = std::filesystem;

namespace {

constexpr std::array<char, 8> kMagic{'L', 'C', 'M', 'O', 'D', 'E', 'L', '\0'};
constexpr std::size_t kHeaderSize = kMagic.size() + 4 + 8;
constexpr std::size_t kTrailerSize = 8;

class Writer {
public:
    void u8(std::uint8_t v) { out_.push_back(static_cast<std::byte>(v)); }
    void u32(std::uint32_t v) { put_le(v); }
    void u64(std::uint64_t v) { put_le(v); }
    void i64(std::int64_t v) { put_le(static_cast<std::uint64_t>(v)); }
    void f64(double v) { put_le(std::bit_cast<std::uint64_t>(v)); }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        for (char c : s) out_.push_back(static_cast<std::byte>(c));
    }
    /// Row-major regardless of Eigen's storage order.
    void matrix(const lstm::Matrix& m) {
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c) f64(m(r, c));
    }
    void vector(const lstm::Vector& v) {
        for (Eigen::Index k = 0; k < v.size(); ++k) f64(v(k));
    }
    std::vector<std::byte>& bytes() { return out_; }

private:
    template <class T>
    void put_le(T v) {
        for (std::size_t k = 0; k < sizeof(T); ++k) out_.push_back(static_cast<std::byte>((v >> (8 * k)) & 0xFF));
    }
    std::vector<std::byte> out_;
};

class Reader {
public:
    explicit Reader(std::span<const std::byte> in) : in_(in) {}

    std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)[0]); }
    std::uint32_t u32() { return get_le<std::uint32_t>(); }
    std::uint64_t u64() { return get_le<std::uint64_t>(); }
    std::int64_t i64() { return static_cast<std::int64_t>(get_le<std::uint64_t>()); }
    double f64() { return std::bit_cast<double>(get_le<std::uint64_t>()); }
    std::string str() {
        const std::uint32_t n = u32();
        const auto b = take(n);
        return std::string(reinterpret_cast<const char*>(b.data()), b.size());
    }
    lstm::Matrix matrix(std::uint32_t rows, std::uint32_t cols) {
        need(static_cast<std::uint64_t>(rows) * cols * 8);
        lstm::Matrix m(rows, cols);
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = f64();
        return m;
    }
    lstm::Vector vector(std::uint32_t n) {
        need(static_cast<std::uint64_t>(n) * 8);
        lstm::Vector v(n);
        for (Eigen::Index k = 0; k < v.size(); ++k) v(k) = f64();
        return v;
    }
    bool done() const { return pos_ == in_.size(); }

private:
    void need(std::uint64_t n) const {
        if (n > in_.size() - pos_) throw IntegrityError("model record truncated");
    }
    std::span<const std::byte> take(std::uint64_t n) {
        need(n);
        auto out = in_.subspan(pos_, static_cast<std::size_t>(n));
        pos_ += static_cast<std::size_t>(n);
        return out;
    }
    template <class T>
    T get_le() {
        const auto b = take(sizeof(T));
        T v = 0;
        for (std::size_t k = 0; k < sizeof(T); ++k) v |= static_cast<T>(static_cast<std::uint8_t>(b[k])) << (8 * k);
        return v;
    }
    std::span<const std::byte> in_;
    std::size_t pos_ = 0;
};

std::vector<std::byte> encode_body(const ModelRecord& r) {
    Writer w;
    w.str(r.point.str());
    w.u32(r.version);
    w.i64(r.created_at);
    w.u8(static_cast<std::uint8_t>(r.feature_mode));

    const auto& t = r.train_config;
    w.u32(static_cast<std::uint32_t>(t.epochs));
    w.f64(t.learning_rate);
    w.u8(static_cast<std::uint8_t>(t.optimizer));
    w.f64(t.beta1);
    w.f64(t.beta2);
    w.f64(t.epsilon);
    w.u32(static_cast<std::uint32_t>(t.batch_size));
    w.u32(static_cast<std::uint32_t>(t.lookback));
    w.f64(t.grad_clip_norm);
    w.u64(t.seed);
    w.u32(static_cast<std::uint32_t>(t.hidden_dim));
    w.u32(static_cast<std::uint32_t>(t.horizon));

    w.u32(static_cast<std::uint32_t>(r.split.train_months));
    w.u32(static_cast<std::uint32_t>(r.split.test_months));
    w.i64(r.split.boundary);

    for (double m : r.scaler.mean) w.f64(m);
    for (double s : r.scaler.stddev) w.f64(s);
    w.i64(r.scaler.fit_start);
    w.i64(r.scaler.fit_end);

    const auto& p = r.model.lstm;
    w.u32(static_cast<std::uint32_t>(p.input_dim()));
    w.u32(static_cast<std::uint32_t>(p.hidden_dim()));
    for (const auto& g : p.gates) {
        w.matrix(g.input);
        w.matrix(g.recurrent);
        w.vector(g.bias);
    }
    w.u32(static_cast<std::uint32_t>(r.model.head.horizon()));
    w.matrix(r.model.head.weight);
    w.vector(r.model.head.bias);

    const auto& m = r.metrics;
    w.u64(m.pairs);
    w.f64(m.mse_scaled);
    w.f64(m.mse_original);
    w.u32(static_cast<std::uint32_t>(m.step_mse_scaled.size()));
    for (double v : m.step_mse_scaled) w.f64(v);
    for (double v : m.step_mse_original) w.f64(v);
    w.f64(m.final_train_mse);
    w.f64(m.final_test_mse);
    return std::move(w.bytes());
}

ModelRecord decode_body(std::span<const std::byte> body) {
    Reader in(body);
    ModelRecord r;
    try {
        r.point = PointId(in.str());
    } catch (const ValidationError&) {
        throw IntegrityError("model record has an empty point id");
    }
    r.version = in.u32();
    r.created_at = in.i64();
    const std::uint8_t mode = in.u8();
    if (mode > 1) throw IntegrityError("model record has unknown feature mode " + std::to_string(mode));
    r.feature_mode = static_cast<FeatureMode>(mode);

    auto& t = r.train_config;
    t.epochs = static_cast<int>(in.u32());
    t.learning_rate = in.f64();
    const std::uint8_t opt = in.u8();
    if (opt > 1) throw IntegrityError("model record has unknown optimizer " + std::to_string(opt));
    t.optimizer = static_cast<lstm::Optimizer>(opt);
    t.beta1 = in.f64();
    t.beta2 = in.f64();
    t.epsilon = in.f64();
    t.batch_size = static_cast<int>(in.u32());
    t.lookback = static_cast<int>(in.u32());
    t.grad_clip_norm = in.f64();
    t.seed = in.u64();
    t.hidden_dim = static_cast<int>(in.u32());
    t.horizon = static_cast<int>(in.u32());

    r.split.train_months = static_cast<int>(in.u32());
    r.split.test_months = static_cast<int>(in.u32());
    r.split.boundary = in.i64();

    for (double& m : r.scaler.mean) m = in.f64();
    for (double& s : r.scaler.stddev) s = in.f64();
    r.scaler.fit_start = in.i64();
    r.scaler.fit_end = in.i64();

    const std::uint32_t d = in.u32();
    const std::uint32_t h = in.u32();
    if (d == 0 || h == 0) throw IntegrityError("model record has zero LSTM dimensions");
    for (auto& g : r.model.lstm.gates) {
        g.input = in.matrix(h, d);
        g.recurrent = in.matrix(h, h);
        g.bias = in.vector(h);
    }
    const std::uint32_t k = in.u32();
    if (k == 0) throw IntegrityError("model record has zero horizon");
    r.model.head.weight = in.matrix(k, h);
    r.model.head.bias = in.vector(k);

    auto& m = r.metrics;
    m.pairs = in.u64();
    m.mse_scaled = in.f64();
    m.mse_original = in.f64();
    const std::uint32_t steps = in.u32();
    const lstm::Vector scaled = in.vector(steps);
    const lstm::Vector original = in.vector(steps);
    m.step_mse_scaled.assign(scaled.data(), scaled.data() + scaled.size());
    m.step_mse_original.assign(original.data(), original.data() + original.size());
    m.final_train_mse = in.f64();
    m.final_test_mse = in.f64();
    if (!in.done()) throw IntegrityError("model record has trailing bytes");
    return r;
}

std::string version_file(std::uint32_t version) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "v%06u.lcm", version);
    return buf;
}

std::optional<std::uint32_t> parse_version_file(const std::string& name) {
    if (name.size() != 11 || name[0] != 'v' || name.substr(7) != ".lcm") return std::nullopt;
    std::uint32_t v = 0;
    for (std::size_t i = 1; i < 7; ++i) {
        if (name[i] < '0' || name[i] > '9') return std::nullopt;
        v = v * 10 + static_cast<std::uint32_t>(name[i] - '0');
    }
    return v;
}

std::vector<std::byte> read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFoundError("cannot open " + path.string());
    std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::vector<std::byte> out(raw.size());
    std::memcpy(out.data(), raw.data(), raw.size());
    return out;
}

void fsync_path(const fs::path& path, int flags) {
    const int fd = ::open(path.c_str(), flags);
    if (fd < 0) return;
    ::fsync(fd);
    ::close(fd);
}

/// Temp file + fsync + rename + directory fsync.
void write_atomically(const fs::path& target, std::span<const std::byte> bytes) {
    static std::atomic<unsigned> counter{0};
    const fs::path tmp = target.parent_path() / (".tmp-" + target.filename().string() + "-" +
                                                 std::to_string(::getpid()) + "-" + std::to_string(counter++));
    const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
    if (fd < 0) throw StorageError("cannot create " + tmp.string() + ": " + std::strerror(errno));
    std::size_t written = 0;
    while (written < bytes.size()) {
        const ssize_t n = ::write(fd, bytes.data() + written, bytes.size() - written);
        if (n < 0) {
            if (errno == EINTR) continue;
            const std::string err = std::strerror(errno);
            ::close(fd);
            ::unlink(tmp.c_str());
            throw StorageError("write to " + tmp.string() + " failed: " + err);
        }
        written += static_cast<std::size_t>(n);
    }
    if (::fsync(fd) != 0 || ::close(fd) != 0) {
        ::unlink(tmp.c_str());
        throw StorageError("flush of " + tmp.string() + " failed");
    }
    if (::rename(tmp.c_str(), target.c_str()) != 0) {
        const std::string err = std::strerror(errno);
        ::unlink(tmp.c_str());
        throw StorageError("rename to " + target.string() + " failed: " + err);
    }
    fsync_path(target.parent_path(), O_RDONLY | O_DIRECTORY);
}

/// Exclusive flock on the point's lock file for the guard's lifetime.
class PointLock {
public:
    explicit PointLock(const fs::path& file) {
        fd_ = ::open(file.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
        if (fd_ < 0) throw StorageError("cannot open lock " + file.string() + ": " + std::strerror(errno));
        while (::flock(fd_, LOCK_EX) != 0) {
            if (errno != EINTR) {
                ::close(fd_);
                throw StorageError("cannot lock " + file.string());
            }
        }
    }
    ~PointLock() {
        ::flock(fd_, LOCK_UN);
        ::close(fd_);
    }
    PointLock(const PointLock&) = delete;
    PointLock& operator=(const PointLock&) = delete;

private:
    int fd_ = -1;
};

}  // namespace

std::vector<std::byte> encode_record(const ModelRecord& record) {
    const std::vector<std::byte> body = encode_body(record);
    Writer w;
    for (char c : kMagic) w.u8(static_cast<std::uint8_t>(c));
    w.u32(kModelFormatVersion);
    w.u64(body.size());
    auto& out = w.bytes();
    out.insert(out.end(), body.begin(), body.end());
    w.u64(fnv1a64(body));
    return std::move(out);
}

ModelRecord decode_record(std::span<const std::byte> bytes) {
    if (bytes.size() < kHeaderSize + kTrailerSize) throw IntegrityError("model record too short");
    if (std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0) throw IntegrityError("bad model record magic");
    Reader header(bytes.subspan(kMagic.size(), 12));
    const std::uint32_t format = header.u32();
    if (format != kModelFormatVersion)
        throw IntegrityError("unsupported model format version " + std::to_string(format));
    const std::uint64_t body_len = header.u64();
    if (body_len != bytes.size() - kHeaderSize - kTrailerSize) throw IntegrityError("model record length mismatch");
    const auto body = bytes.subspan(kHeaderSize, static_cast<std::size_t>(body_len));
    Reader trailer(bytes.subspan(kHeaderSize + body.size()));
    if (trailer.u64() != fnv1a64(body)) throw IntegrityError("model record checksum mismatch");
    return decode_body(body);
}

std::uint64_t payload_checksum(const ModelRecord& record) { return fnv1a64(encode_body(record)); }

Registry::Registry(fs::path root) : root_(std::move(root)) {}

fs::path Registry::point_dir(const PointId& point) const { return root_ / point.sanitized(); }

std::vector<std::uint32_t> Registry::versions(const PointId& point) const {
    std::vector<std::uint32_t> out;
    const fs::path dir = point_dir(point);
    std::error_code ec;
    if (!fs::is_directory(dir, ec)) return out;
    for (const auto& entry : fs::directory_iterator(dir, ec))
        if (auto v = parse_version_file(entry.path().filename().string())) out.push_back(*v);
    std::sort(out.begin(), out.end());
    return out;
}

std::uint32_t Registry::put(ModelRecord record) const {
    const fs::path dir = point_dir(record.point);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw StorageError("cannot create " + dir.string() + ": " + ec.message());

    PointLock lock(dir / ".lock");
    if (!fs::exists(dir / "point.id")) {
        const std::string& id = record.point.str();
        write_atomically(dir / "point.id", std::as_bytes(std::span(id.data(), id.size())));
    }
    const auto existing = versions(record.point);
    record.version = existing.empty() ? 1 : existing.back() + 1;
    write_atomically(dir / version_file(record.version), encode_record(record));
    const std::string latest = std::to_string(record.version) + "\n";
    write_atomically(dir / "LATEST", std::as_bytes(std::span(latest.data(), latest.size())));
    return record.version;
}

ModelRecord Registry::load(const PointId& point, std::uint32_t version) const {
    const fs::path file = point_dir(point) / version_file(version);
    std::error_code ec;
    if (!fs::exists(file, ec))
        throw NotFoundError("no version " + std::to_string(version) + " for point " + point.str());
    ModelRecord r;
    try {
        r = decode_record(read_file(file));
    } catch (const IntegrityError& e) {
        throw IntegrityError(file.string() + ": " + e.what());
    }
    if (r.point != point || r.version != version)
        throw IntegrityError(file.string() + ": record identifies as " + r.point.str() + " v" +
                             std::to_string(r.version));
    return r;
}

ModelRecord Registry::get_latest(const PointId& point) const {
    // The directory listing is authoritative; LATEST can lag after a crash
    // between the version rename and the pointer update.
    const auto all = versions(point);
    if (all.empty()) throw NotFoundError("no model for point " + point.str());
    return load(point, all.back());
}

ModelRecord Registry::get_version(const PointId& point, std::uint32_t version) const { return load(point, version); }

bool Registry::contains(const PointId& point) const { return !versions(point).empty(); }

std::vector<VersionInfo> Registry::list(const PointId& point) const {
    const auto all = versions(point);
    if (all.empty()) throw NotFoundError("no model for point " + point.str());
    std::vector<VersionInfo> out;
    for (std::uint32_t v : all) {
        const ModelRecord r = load(point, v);
        out.push_back({v, r.created_at, r.metrics.mse_original});
    }
    return out;
}

std::vector<PointId> Registry::points() const {
    std::vector<PointId> out;
    std::error_code ec;
    if (!fs::is_directory(root_, ec)) return out;
    for (const auto& entry : fs::directory_iterator(root_, ec)) {
        if (!entry.is_directory()) continue;
        std::ifstream in(entry.path() / "point.id");
        std::string id((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        if (!id.empty()) out.emplace_back(id);
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::size_t Registry::prune(const PointId& point, std::size_t keep) const {
    const fs::path dir = point_dir(point);
    if (!fs::is_directory(dir)) throw NotFoundError("no model for point " + point.str());
    PointLock lock(dir / ".lock");
    const auto all = versions(point);
    std::size_t removed = 0;
    for (std::size_t i = 0; i + keep < all.size(); ++i) {
        fs::remove(dir / version_file(all[i]));
        ++removed;
    }
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.path().filename().string().rfind(".tmp-", 0) == 0) fs::remove(entry.path());
    return removed;
}

}  // namespace loadcast
