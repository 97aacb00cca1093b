#include "dig/collector.hpp"

#include "dig/spectral.hpp"
#include "dig/transport/topic.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace dig {
namespace store {

namespace {

bool safe_char(char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
           (c >= '0' && c <= '9') || c == '_' || c == '.' || c == '-';
}

std::string encode_level(std::string_view level) {
    // "." and ".." would collide with path navigation, force-encode them
    bool dot_only = level == "." || level == "..";
    std::string out;
    for (char c : level) {
        if (safe_char(c) && !(dot_only && c == '.')) {
            out.push_back(c);
        } else {
            char buf[4];
            std::snprintf(buf, sizeof buf, "%%%02x", uint8_t(c));
            out += buf;
        }
    }
    if (out.empty()) out = "%00";   // empty level still needs a directory name
    return out;
}

std::optional<std::string> decode_level(std::string_view enc) {
    std::string out;
    for (std::size_t i = 0; i < enc.size(); ++i) {
        if (enc[i] == '%') {
            if (i + 2 >= enc.size()) return std::nullopt;
            auto hex = [](char c) -> int {
                if (c >= '0' && c <= '9') return c - '0';
                if (c >= 'a' && c <= 'f') return c - 'a' + 10;
                return -1;
            };
            int hi = hex(enc[i + 1]), lo = hex(enc[i + 2]);
            if (hi < 0 || lo < 0) return std::nullopt;
            char c = char(hi * 16 + lo);
            if (c != '\0') out.push_back(c);
            i += 2;
        } else {
            out.push_back(enc[i]);
        }
    }
    return out;
}

} // namespace

std::filesystem::path topic_to_path(const std::filesystem::path& root,
                                    std::string_view topic) {
    auto levels = transport::split_levels(topic);
    std::filesystem::path p = root;
    for (std::size_t i = 0; i < levels.size(); ++i) {
        std::string enc = encode_level(levels[i]);
        if (i + 1 == levels.size()) enc += ".dat";
        p /= enc;
    }
    return p;
}

std::optional<std::string> path_to_topic(const std::filesystem::path& root,
                                         const std::filesystem::path& file) {
    auto rel = std::filesystem::relative(file, root);
    std::string topic;
    auto it = rel.begin();
    for (; it != rel.end(); ++it) {
        std::string part = it->string();
        bool last = std::next(it) == rel.end();
        if (last) {
            if (!part.ends_with(".dat")) return std::nullopt;
            part = part.substr(0, part.size() - 4);
        }
        auto dec = decode_level(part);
        if (!dec) return std::nullopt;
        if (!topic.empty()) topic.push_back('/');
        topic += *dec;
    }
    return topic;
}

namespace {

struct FileHeader {
    uint32_t record_size = 0;
    uint8_t flags = 0;
};

std::optional<FileHeader> read_header(std::ifstream& in) {
    char buf[kHeaderSize];
    in.read(buf, kHeaderSize);
    if (!in || std::memcmp(buf, kMagic, 8) != 0) return std::nullopt;
    FileHeader h;
    uint32_t rs = 0;
    for (int i = 3; i >= 0; --i) rs = (rs << 8) | uint8_t(buf[8 + i]);
    h.record_size = rs;
    h.flags = uint8_t(buf[12]);
    return h;
}

int64_t record_time(const uint8_t* rec) {
    uint64_t t = 0;
    for (int i = 7; i >= 0; --i) t = (t << 8) | rec[i];
    return int64_t(t);
}

double record_value(const uint8_t* rec) {
    uint64_t bits = 0;
    for (int i = 7; i >= 0; --i) bits = (bits << 8) | rec[8 + i];
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

} // namespace

TopicWriter::TopicWriter(const std::filesystem::path& root, const std::string& topic,
                         std::size_t record_size, int fsync_every)
    : record_size_(record_size), fsync_every_(fsync_every) {
    auto path = topic_to_path(root, topic);
    std::filesystem::create_directories(path.parent_path());
    bool existed = std::filesystem::exists(path);
    // no O_APPEND: pwrite on an O_APPEND fd ignores its offset on Linux,
    // which would turn the dirty-flag update into a corrupting append
    fd_ = ::open(path.c_str(), O_RDWR | O_CREAT, 0644);
    if (fd_ < 0) throw std::runtime_error("cannot open store file: " + path.string());
    if (!existed || std::filesystem::file_size(path) < kHeaderSize) {
        uint8_t hdr[kHeaderSize] = {};
        std::memcpy(hdr, kMagic, 8);
        for (int i = 0; i < 4; ++i) hdr[8 + i] = uint8_t(record_size_ >> (8 * i));
        if (::write(fd_, hdr, kHeaderSize) != ssize_t(kHeaderSize))
            throw std::runtime_error("cannot write store header");
    } else {
        // resuming an existing file: pick up last timestamp and dirty flag
        std::ifstream in(path, std::ios::binary);
        auto h = read_header(in);
        if (!h || h->record_size != record_size_)
            throw std::runtime_error("store file record size mismatch: " +
                                     path.string());
        dirty_ = h->flags & 1;
        auto size = std::filesystem::file_size(path);
        std::size_t n = (size - kHeaderSize) / record_size_;
        if (n > 0) {
            in.seekg(std::streamoff(kHeaderSize + (n - 1) * record_size_));
            std::vector<uint8_t> rec(record_size_);
            in.read(reinterpret_cast<char*>(rec.data()), std::streamsize(record_size_));
            if (in) last_t_ns_ = record_time(rec.data());
        }
        // drop any torn trailing record from a previous crash
        if (::ftruncate(fd_, off_t(kHeaderSize + n * record_size_)) != 0)
            throw std::runtime_error("store truncate failed: " + path.string());
    }
    ::lseek(fd_, 0, SEEK_END);
}

TopicWriter::~TopicWriter() {
    if (fd_ >= 0) ::close(fd_);
}

void TopicWriter::mark_dirty() {
    if (dirty_) return;
    dirty_ = true;
    uint8_t flag = 1;
    if (::pwrite(fd_, &flag, 1, 12) != 1)
        throw std::runtime_error("store dirty-flag update failed");
}

void TopicWriter::append_bytes(int64_t t_ns, const uint8_t* data, std::size_t size) {
    if (size != record_size_)
        throw std::invalid_argument("record size mismatch on append");
    if (t_ns < last_t_ns_) mark_dirty();
    last_t_ns_ = std::max(last_t_ns_, t_ns);
    if (::write(fd_, data, size) != ssize_t(size))
        throw std::runtime_error("store append failed");
    if (fsync_every_ > 0 && ++since_sync_ >= fsync_every_) {
        ::fsync(fd_);
        since_sync_ = 0;
    }
}

void TopicWriter::append_scalar(int64_t t_ns, double value) {
    uint8_t rec[kScalarRecordSize];
    uint64_t t = uint64_t(t_ns);
    uint64_t bits;
    std::memcpy(&bits, &value, 8);
    for (int i = 0; i < 8; ++i) {
        rec[i] = uint8_t(t >> (8 * i));
        rec[8 + i] = uint8_t(bits >> (8 * i));
    }
    append_bytes(t_ns, rec, sizeof rec);
}

void TopicWriter::append_raw(int64_t t_ns, std::span<const uint8_t> record) {
    append_bytes(t_ns, record.data(), record.size());
}

void TopicWriter::sync() {
    if (fd_ >= 0) ::fsync(fd_);
}

std::vector<std::string> list_topics(const std::filesystem::path& root) {
    std::vector<std::string> out;
    if (!std::filesystem::exists(root)) return out;
    for (auto& e : std::filesystem::recursive_directory_iterator(root)) {
        if (!e.is_regular_file()) continue;
        if (auto t = path_to_topic(root, e.path())) out.push_back(*t);
    }
    std::sort(out.begin(), out.end());
    return out;
}

namespace {

void query_file(const std::filesystem::path& file, const std::string& topic,
                int64_t t0, int64_t t1, std::vector<Record>& out) {
    std::ifstream in(file, std::ios::binary);
    if (!in) return;
    auto h = read_header(in);
    if (!h || h->record_size == 0) return;
    auto fsize = std::filesystem::file_size(file);
    std::size_t n = (fsize - kHeaderSize) / h->record_size;
    if (n == 0) return;
    bool dirty = h->flags & 1;
    std::vector<uint8_t> rec(h->record_size);

    auto read_at = [&](std::size_t idx) -> int64_t {
        in.seekg(std::streamoff(kHeaderSize + idx * h->record_size));
        in.read(reinterpret_cast<char*>(rec.data()), std::streamsize(h->record_size));
        return record_time(rec.data());
    };

    // out-of-order arrivals are bounded to a 1 s merge window
    constexpr int64_t kMergeWindowNs = 1'000'000'000;
    int64_t seek_t0 = dirty ? (t0 > INT64_MIN + kMergeWindowNs ? t0 - kMergeWindowNs
                                                               : INT64_MIN)
                            : t0;
    int64_t t1_pad = t1 > INT64_MAX - kMergeWindowNs ? INT64_MAX
                                                     : t1 + kMergeWindowNs;

    // first record with t >= seek_t0 (sorted prefix assumption; dirty files
    // are padded by the merge window)
    std::size_t lo = 0, hi = n;
    while (lo < hi) {
        std::size_t mid = (lo + hi) / 2;
        if (read_at(mid) < seek_t0)
            lo = mid + 1;
        else
            hi = mid;
    }
    std::vector<Record> local;
    for (std::size_t i = lo; i < n; ++i) {
        int64_t t = read_at(i);
        if (!dirty && t > t1) break;
        if (dirty && t > t1_pad) break;
        if (t < t0 || t > t1) continue;
        Record r;
        r.topic = topic;
        r.t_ns = t;
        if (h->record_size == kScalarRecordSize) {
            r.value = record_value(rec.data());
        } else {
            r.raw = rec;
        }
        local.push_back(std::move(r));
    }
    if (dirty)
        std::stable_sort(local.begin(), local.end(),
                         [](const Record& a, const Record& b) { return a.t_ns < b.t_ns; });
    out.insert(out.end(), std::make_move_iterator(local.begin()),
               std::make_move_iterator(local.end()));
}

} // namespace

std::vector<Record> query(const std::filesystem::path& root,
                          const std::string& topic_pattern, int64_t t0_ns,
                          int64_t t1_ns) {
    if (t0_ns > t1_ns) throw std::invalid_argument("query: t0 must be <= t1");
    transport::TopicFilter filter(topic_pattern);
    std::vector<Record> out;
    for (const auto& topic : list_topics(root)) {
        if (!filter.matches(topic)) continue;
        query_file(topic_to_path(root, topic), topic, t0_ns, t1_ns, out);
    }
    std::stable_sort(out.begin(), out.end(), [](const Record& a, const Record& b) {
        if (a.t_ns != b.t_ns) return a.t_ns < b.t_ns;
        return a.topic < b.topic;
    });
    return out;
}

} // namespace store

std::size_t export_csv(const std::filesystem::path& root, const std::string& topic,
                       int64_t t0_ns, int64_t t1_ns,
                       const std::filesystem::path& out_path) {
    auto records = store::query(root, topic, t0_ns, t1_ns);
    for (const auto& r : records)
        if (r.is_spectrogram())
            throw UnsupportedFormat("export_csv: spectrogram topic, use export-psd");
    std::ofstream out(out_path);
    if (!out) throw std::runtime_error("cannot write " + out_path.string());
    out << "t_ns,value\n";
    char buf[64];
    for (const auto& r : records) {
        std::snprintf(buf, sizeof buf, "%lld,%.17g\n",
                      static_cast<long long>(r.t_ns), r.value);
        out << buf;
    }
    return records.size();
}

std::size_t export_psd_csv(const std::filesystem::path& root,
                           const std::string& topic, int64_t t0_ns, int64_t t1_ns,
                           const std::filesystem::path& out_path) {
    auto records = store::query(root, topic, t0_ns, t1_ns);
    std::ofstream out(out_path);
    if (!out) throw std::runtime_error("cannot write " + out_path.string());
    out << "f_hz,psd_db\n";
    std::size_t windows = 0;
    char buf[64];
    for (const auto& r : records) {
        if (!r.is_spectrogram())
            throw UnsupportedFormat("export_psd: scalar topic, use export");
        auto rec = parse_spectrogram_record(r.raw);
        out << "# t_ns=" << r.t_ns << "\n";
        double df = rec.fs_hz / double(kFftLen);
        for (std::size_t k = 0; k < rec.bins_db.size(); ++k) {
            std::snprintf(buf, sizeof buf, "%.6f,%.6f\n", k * df, rec.bins_db[k]);
            out << buf;
        }
        ++windows;
    }
    return windows;
}

Collector::Collector(CollectorConfig cfg) : cfg_(std::move(cfg)) {}

Collector::~Collector() { stop(); }

void Collector::start() {
    std::filesystem::create_directories(cfg_.store_root);
    // fail fast on an unwritable root
    auto probe = cfg_.store_root / ".writable";
    {
        std::ofstream test(probe);
        if (!test) throw std::runtime_error("store root not writable: " +
                                            cfg_.store_root.string());
    }
    std::filesystem::remove(probe);

    client_.connect(cfg_.broker_host, cfg_.broker_port,
                    {.client_id = "collector"});
    for (const auto& f : cfg_.filters) {
        client_.subscribe(f, [this](const std::string& topic,
                                    std::span<const uint8_t> payload) {
            on_message(topic, payload);
        });
    }
}

void Collector::stop() {
    client_.close();
    std::lock_guard lk(mu_);
    for (auto& [t, w] : writers_) w->sync();
}

void Collector::on_message(const std::string& topic,
                           std::span<const uint8_t> payload) {
    std::size_t record_size;
    int64_t t_ns;
    if (payload.size() == kSpectrogramRecordSize) {
        record_size = kSpectrogramRecordSize;
        uint64_t t = 0;
        for (int i = 7; i >= 0; --i) t = (t << 8) | payload[i];
        t_ns = int64_t(t);
    } else if (payload.size() == store::kScalarRecordSize) {
        record_size = store::kScalarRecordSize;
        uint64_t t = 0;
        for (int i = 7; i >= 0; --i) t = (t << 8) | payload[i];
        t_ns = int64_t(t);
    } else {
        std::lock_guard lk(mu_);
        ++dropped_;   // unknown payload shape
        return;
    }

    std::lock_guard lk(mu_);
    if (quarantined_[topic]) {
        ++dropped_;
        return;
    }
    try {
        auto it = writers_.find(topic);
        if (it == writers_.end()) {
            it = writers_.emplace(topic, std::make_unique<store::TopicWriter>(
                                             cfg_.store_root, topic, record_size,
                                             cfg_.fsync_every))
                     .first;
        }
        it->second->append_raw(t_ns, payload);
        ++stored_;
    } catch (const std::exception&) {
        // quarantine this topic, keep the rest flowing
        quarantined_[topic] = true;
        writers_.erase(topic);
        ++dropped_;
    }
}

uint64_t Collector::stored_count() const {
    std::lock_guard lk(mu_);
    return stored_;
}

uint64_t Collector::dropped_count() const {
    std::lock_guard lk(mu_);
    return dropped_;
}

} // namespace dig
