#pragma once

#include "dig/transport/client.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace dig {

// On-disk per-topic store. Each topic maps to one append-only file:
//   16-byte header: "DIGSTOR1" + u32 record_size + u8 flags + 3 reserved
//   then fixed-size records (16-byte scalar or 4112-byte spectrogram),
// little-endian throughout. flags bit0 = dirty (out-of-order appends seen).
namespace store {

inline constexpr char kMagic[9] = "DIGSTOR1";
inline constexpr std::size_t kHeaderSize = 16;
inline constexpr std::size_t kScalarRecordSize = 16;

// Bijective topic<->path mapping: '/' nests directories, every level is
// percent-encoded outside [A-Za-z0-9_.-], leaf gets a ".dat" suffix.
std::filesystem::path topic_to_path(const std::filesystem::path& root,
                                    std::string_view topic);
std::optional<std::string> path_to_topic(const std::filesystem::path& root,
                                         const std::filesystem::path& file);

struct Record {
    std::string topic;
    int64_t t_ns = 0;
    double value = 0.0;             // scalar topics
    std::vector<uint8_t> raw;       // spectrogram topics, 4112 bytes verbatim
    bool is_spectrogram() const { return !raw.empty(); }
};

class TopicWriter {
public:
    TopicWriter(const std::filesystem::path& root, const std::string& topic,
                std::size_t record_size, int fsync_every = 0);
    ~TopicWriter();

    void append_scalar(int64_t t_ns, double value);
    void append_raw(int64_t t_ns, std::span<const uint8_t> record);
    void sync();

    bool dirty() const { return dirty_; }

private:
    void append_bytes(int64_t t_ns, const uint8_t* data, std::size_t size);
    void mark_dirty();

    int fd_ = -1;
    std::size_t record_size_;
    int fsync_every_;
    int since_sync_ = 0;
    int64_t last_t_ns_ = INT64_MIN;
    bool dirty_ = false;
};

// All records with t in [t0, t1] from topics matching the pattern, merged in
// timestamp order (ties broken by topic name). Seeks via binary search on
// clean files; dirty files get a bounded sort window.
std::vector<Record> query(const std::filesystem::path& root,
                          const std::string& topic_pattern, int64_t t0_ns,
                          int64_t t1_ns);

std::vector<std::string> list_topics(const std::filesystem::path& root);

} // namespace store

struct UnsupportedFormat : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// "t_ns,value" rows, %.17g floats; returns the row count (header excluded).
std::size_t export_csv(const std::filesystem::path& root, const std::string& topic,
                       int64_t t0_ns, int64_t t1_ns,
                       const std::filesystem::path& out_path);

// Spectrogram topics: per window a "# t_ns=..." marker then "f_hz,psd_db"
// rows. Returns number of windows.
std::size_t export_psd_csv(const std::filesystem::path& root,
                           const std::string& topic, int64_t t0_ns, int64_t t1_ns,
                           const std::filesystem::path& out_path);

struct CollectorConfig {
    std::string broker_host = "127.0.0.1";
    uint16_t broker_port = 0;
    std::vector<std::string> filters;
    std::filesystem::path store_root;
    int fsync_every = 0;   // records between fsyncs; 0 disables
};

// Subscribes and persists. One writer per topic; per-topic write errors
// quarantine that topic, others continue.
class Collector {
public:
    explicit Collector(CollectorConfig cfg);
    ~Collector();

    void start();
    void stop();

    uint64_t stored_count() const;
    uint64_t dropped_count() const;   // local write failures

private:
    void on_message(const std::string& topic, std::span<const uint8_t> payload);

    CollectorConfig cfg_;
    transport::Client client_;
    mutable std::mutex mu_;
    std::map<std::string, std::unique_ptr<store::TopicWriter>> writers_;
    std::map<std::string, bool> quarantined_;
    uint64_t stored_ = 0;
    uint64_t dropped_ = 0;
};

} // namespace dig
